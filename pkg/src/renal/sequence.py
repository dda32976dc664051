"""Time-ordered observation sequences."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from renal.errors import InvalidInputError

Kind = Literal["regular", "event"]


@dataclass(frozen=True, eq=False)
class ObservationSequence:
    """A strictly time-ordered sequence of ``d``-dimensional observations.

    For ``kind="event"`` the value rows are event features; the generators in
    this package store the inter-event time in column 0 followed by any
    location coordinates.
    """

    timestamps: np.ndarray
    values: np.ndarray
    kind: Kind = "regular"

    def __post_init__(self):
        t = np.array(self.timestamps, dtype=np.float64).reshape(-1)
        v = np.array(self.values, dtype=np.float64)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[0] != t.shape[0]:
            raise InvalidInputError(
                f"values must have one row per timestamp, got {v.shape} for {t.shape[0]} timestamps"
            )
        if self.kind not in ("regular", "event"):
            raise InvalidInputError(f"unknown sequence kind {self.kind!r}")
        if t.shape[0] < 2:
            raise InvalidInputError("a sequence needs at least 2 observations")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(v))):
            raise InvalidInputError("timestamps and values must be finite")
        gaps = np.diff(t)
        bad = np.flatnonzero(gaps <= 0)
        if bad.size:
            i = int(bad[0])
            raise InvalidInputError(
                f"timestamps not strictly increasing at index {i + 1} ({t[i]!r} -> {t[i + 1]!r})"
            )
        if self.kind == "regular":
            # absolute slack covers rounding in large timestamps
            tol = 1e-9 * abs(gaps[0]) + 8 * np.finfo(float).eps * np.max(np.abs(t))
            if np.max(np.abs(gaps - gaps[0])) > tol:
                raise InvalidInputError("regular sequences must be equally spaced")
        t.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "timestamps", t)
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.timestamps.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    def steps(self) -> np.ndarray:
        """Elapsed time attached to each observation.

        ``steps()[i] = t[i] - t[i-1]``; the first entry repeats the first gap.
        """
        gaps = np.diff(self.timestamps)
        return np.concatenate([gaps[:1], gaps])

    def window(self, start: int, length: int) -> ObservationSequence:
        return ObservationSequence(
            self.timestamps[start:start + length],
            self.values[start:start + length],
            self.kind,
        )

    def same_as(self, other: ObservationSequence) -> bool:
        return (
            self.kind == other.kind
            and np.array_equal(self.timestamps, other.timestamps)
            and np.array_equal(self.values, other.values)
        )
