"""CSV reading and writing for observation sequences.

The format is a header ``t,x1,...,xd`` followed by one row per observation.
Floats are written with ``repr`` so every value reads back bit for bit.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from renal.errors import DataFormatError, InvalidInputError
from renal.sequence import ObservationSequence


def save_csv(seq: ObservationSequence, path) -> None:
    header = ["t"] + [f"x{j + 1}" for j in range(seq.d)]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for t, row in zip(seq.timestamps.tolist(), seq.values.tolist()):
            w.writerow([repr(t)] + [repr(v) for v in row])


def _parse_header(row) -> int:
    names = [c.strip() for c in row]
    d = len(names) - 1
    if d < 1 or names[0] != "t" or names[1:] != [f"x{j + 1}" for j in range(d)]:
        raise DataFormatError(f"expected header t,x1,...,xd, got {','.join(names)!r}", line=1)
    return d


def load_csv(path, kind: str = "regular") -> ObservationSequence:
    """Parse a CSV file into a validated sequence.

    Errors carry the 1-based line (header is line 1) and column of the
    offending field.
    """
    path = Path(path)
    try:
        fh = open(path, encoding="utf-8", newline="")
    except OSError as exc:
        raise DataFormatError(f"cannot read {path}: {exc.strerror}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataFormatError(f"{path} is empty", line=1)
        d = _parse_header(header)
        rows = []
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != d + 1:
                raise DataFormatError(f"expected {d + 1} fields, found {len(row)}", line=line)
            parsed = []
            for col, field in enumerate(row, start=1):
                try:
                    v = float(field)
                except ValueError:
                    raise DataFormatError(f"malformed number {field!r}", line=line, column=col) from None
                if not math.isfinite(v):
                    raise DataFormatError(f"non-finite number {field!r}", line=line, column=col)
                parsed.append(v)
            rows.append((line, parsed))
    if len(rows) < 2:
        raise DataFormatError(f"{path} holds {len(rows)} data row(s); at least 2 are needed")
    data = np.array([r for _, r in rows], dtype=np.float64)
    t = data[:, 0]
    bad = np.flatnonzero(np.diff(t) <= 0)
    if bad.size:
        i = int(bad[0]) + 1
        what = "duplicate" if t[i] == t[i - 1] else "decreasing"
        raise DataFormatError(
            f"{what} timestamp {float(t[i])!r} after {float(t[i - 1])!r}; timestamps must strictly increase",
            line=rows[i][0],
            column=1,
        )
    try:
        return ObservationSequence(t, data[:, 1:], kind)
    except InvalidInputError as exc:
        raise DataFormatError(str(exc)) from exc
