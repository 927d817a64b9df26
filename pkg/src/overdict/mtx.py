"""Plain-text matrix serialization ("MTX1").

The format is deliberately minimal so files stay diffable and portable:

* UTF-8 text.
* First line: ``rows cols`` (two base-10 integers, single space).
* Then ``rows`` lines, each holding ``cols`` space-separated decimal floats.

Floats are written with 17 significant digits, which makes the write/read
cycle exact for IEEE-754 binary64 values.
"""

from __future__ import annotations

import os

import numpy as np

__all__ = ["save_matrix", "load_matrix", "format_float"]


def format_float(value: float) -> str:
    """Render ``value`` with enough digits to round-trip a 64-bit float."""
    return format(float(value), ".17g")


def save_matrix(path: str | os.PathLike, matrix: np.ndarray) -> None:
    """Write a 2-D float array to ``path``.

    Parameters
    ----------
    path : str or path-like
        Destination file. Parent directory must exist.
    matrix : ndarray of shape (rows, cols)
        Real matrix; values must be finite.
    """
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D array, got ndim={m.ndim}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix contains non-finite entries")
    rows, cols = m.shape
    lines = [f"{rows} {cols}"]
    for r in range(rows):
        lines.append(" ".join(format_float(v) for v in m[r]))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_matrix(path: str | os.PathLike) -> np.ndarray:
    """Read a matrix written by :func:`save_matrix`.

    Returns
    -------
    ndarray of shape (rows, cols), dtype float64.

    Raises
    ------
    ValueError
        If the header is malformed or any row has the wrong arity.
    """
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError(f"{path}: malformed header {header!r}")
        rows, cols = int(header[0]), int(header[1])
        if rows < 0 or cols < 0:
            raise ValueError(f"{path}: negative dimensions in header")
        out = np.empty((rows, cols), dtype=np.float64)
        for r in range(rows):
            parts = fh.readline().split()
            if len(parts) != cols:
                raise ValueError(
                    f"{path}: row {r} has {len(parts)} entries, expected {cols}"
                )
            out[r] = [float(p) for p in parts]
    return out
