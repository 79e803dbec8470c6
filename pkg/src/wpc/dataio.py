"""CSV input and JSON output helpers."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Any

import numpy as np
from numpy.typing import NDArray

from .exceptions import DimensionError, ParseError
from .factor import ObservationPanel

__all__ = ["read_panel_csv", "read_matrix_csv", "write_matrix_csv", "to_jsonable", "dumps_json"]


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def read_matrix_csv(path: str | Path) -> NDArray[np.float64]:
    """Read a rectangular numeric CSV (rows = units, columns = periods).

    A single header row is skipped when any of its cells is non-numeric.
    Row and column numbers in errors are one-based file positions.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [(k + 1, row) for k, row in enumerate(csv.reader(fh)) if any(c.strip() for c in row)]
    if rows and not all(_is_number(c) for c in rows[0][1]):
        rows = rows[1:]
    if not rows:
        raise ParseError(f"{path}: no numeric rows")
    width = len(rows[0][1])
    data = np.empty((len(rows), width))
    for k, (lineno, row) in enumerate(rows):
        if len(row) != width:
            raise ParseError(f"{path}: row {lineno} has {len(row)} fields, expected {width}", row=lineno)
        for j, cell in enumerate(row):
            try:
                data[k, j] = float(cell)
            except ValueError:
                raise ParseError(
                    f"{path}: non-numeric cell {cell!r} at row {lineno}, column {j + 1}", row=lineno, column=j + 1
                ) from None
    if not np.all(np.isfinite(data)):
        bad = np.argwhere(~np.isfinite(data))[0]
        raise ParseError(
            f"{path}: non-finite value at row {rows[bad[0]][0]}, column {bad[1] + 1}",
            row=rows[bad[0]][0],
            column=int(bad[1]) + 1,
        )
    return data


def read_panel_csv(path: str | Path) -> ObservationPanel:
    """Read an ``N x T`` panel; ``N`` and ``T`` must both be at least 2."""
    data = read_matrix_csv(path)
    try:
        return ObservationPanel(data)
    except DimensionError as exc:
        raise ParseError(f"{path}: {exc}") from None


def write_matrix_csv(path: str | Path, M: NDArray[np.float64]) -> None:
    """Write a matrix with round-trip exact float formatting and no header."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for row in np.atleast_2d(M):
            writer.writerow([repr(float(v)) for v in row])


def to_jsonable(obj: Any) -> Any:
    """Convert arrays and numpy scalars to JSON types; non-finite floats become ``None``."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def dumps_json(obj: Any) -> str:
    """JSON text; floats use Python's shortest round-trip repr (lossless)."""
    return json.dumps(to_jsonable(obj), indent=2, allow_nan=False)
