"""CSV input and output for sample matrices."""
from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .errors import ParseError, RaggedRows


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def load_samples(path) -> np.ndarray:
    """Read an ``n x d`` matrix from CSV, one observation per row.

    A first row containing any non-numeric field is treated as a header.
    Blank lines are skipped.

    Raises
    ------
    ParseError
        A field after the header is not a number (message carries the line number).
    RaggedRows
        A row has a different number of fields than the first data row.
    """
    rows = []
    width = None
    with open(path, newline="") as fh:
        for lineno, fields in enumerate(csv.reader(fh), start=1):
            fields = [f.strip() for f in fields]
            if not fields or fields == [""]:
                continue
            if lineno == 1 and not all(_is_number(f) for f in fields):
                continue
            if width is None:
                width = len(fields)
            elif len(fields) != width:
                raise RaggedRows(f"expected {width} fields, found {len(fields)}", line=lineno)
            try:
                rows.append([float(f) for f in fields])
            except ValueError:
                bad = next(f for f in fields if not _is_number(f))
                raise ParseError(f"non-numeric field {bad!r}", line=lineno) from None
    if not rows:
        raise ParseError(f"no numeric rows in {Path(path).name}")
    return np.array(rows, dtype=float)


def save_samples(path, matrix) -> None:
    """Write a matrix as headerless CSV with 17 significant digits, enough for an exact round trip."""
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    np.savetxt(path, matrix, fmt="%.17g", delimiter=",")


def json_safe(obj):
    """Recursively replace non-finite floats by ``None`` and numpy scalars by Python ones."""
    if isinstance(obj, dict):
        return {str(k): json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [json_safe(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return json_safe(obj.tolist())
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj
