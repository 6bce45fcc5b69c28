"""Input/output records stored as CSV with header ``u,y``."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from ..errors import InputError

SCHEMA = "CSV with header 'u,y' and one numeric row per sample"


def load_io_csv(path, min_rows: int = 1):
    """Read an input/output record.

    Returns
    -------
    u, y : ndarray, shape (n,)
    """
    path = Path(path)
    if not path.is_file():
        raise InputError(f"data file {path} not found; expected {SCHEMA}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        if header != ["u", "y"]:
            raise InputError(f"{path}: header is {header}; expected {SCHEMA}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                raise InputError(f"{path}:{lineno}: non-numeric value; expected {SCHEMA}") from None
            if len(rows[-1]) != 2:
                raise InputError(f"{path}:{lineno}: expected 2 columns; {SCHEMA}")
    if len(rows) < min_rows:
        raise InputError(f"{path}: {len(rows)} rows, need at least {min_rows}; expected {SCHEMA}")
    data = np.array(rows, dtype=float).reshape(-1, 2)
    if not np.all(np.isfinite(data)):
        raise InputError(f"{path}: non-finite values")
    return data[:, 0], data[:, 1]


def write_csv(path_or_file, header, columns) -> None:
    """Write equal-length columns with a header row (``"-"`` for stdout-like objects)."""
    cols = [list(np.asarray(c).ravel()) for c in columns]
    if any(len(c) != len(cols[0]) for c in cols):
        raise InputError("columns must have equal length")

    def emit(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(*cols):
            w.writerow([v if isinstance(v, str) else repr(float(v)) for v in row])

    if hasattr(path_or_file, "write"):
        emit(path_or_file)
    else:
        with open(path_or_file, "w", newline="") as fh:
            emit(fh)
