"""Goodness-of-fit testing for sequence generators via discretized history embeddings."""

from renal.errors import (
    DataFormatError,
    DegenerateDataError,
    DivergenceError,
    InsufficientDataError,
    InvalidInputError,
    RenalError,
    ThinningBoundError,
)
from renal.sequence import ObservationSequence

__version__ = "0.1.0"
