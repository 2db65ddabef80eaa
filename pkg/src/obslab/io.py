"""Field, CSV, and raster serialization.

Field files are a small self-describing binary, little-endian throughout:

========  =======================================
bytes     content
========  =======================================
8         magic ``OBSGRID1``
4         dimension (uint32)
4 * n     nodes per axis (uint32)
8 * n     lower corner per axis (float64)
8 * n     upper corner per axis (float64)
8 * N     node values, row-major (float64)
========  =======================================

Round-trips are bit-exact, which the regression tests rely on. Rasters are
binary PGM (P5), 8-bit, field values scaled min -> max; no timestamps or
other ambient metadata are written anywhere in this module.
"""

from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np

from .grid import GridError, GridSpec, ScalarField

MAGIC = b"OBSGRID1"


class FieldFormatError(GridError):
    """Malformed field file."""


def write_field(path, field: ScalarField) -> None:
    grid = field.grid
    n = grid.dimension
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", n))
        fh.write(struct.pack(f"<{n}I", *grid.nodes_per_axis))
        fh.write(struct.pack(f"<{n}d", *grid.lower))
        fh.write(struct.pack(f"<{n}d", *grid.upper))
        fh.write(np.ascontiguousarray(field.values, dtype="<f8").tobytes())


def read_field(path) -> ScalarField:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != MAGIC:
            raise FieldFormatError(f"bad magic {magic!r} in {path}")
        (n,) = struct.unpack("<I", fh.read(4))
        if n not in (1, 2, 3):
            raise FieldFormatError(f"bad dimension {n} in {path}")
        nodes = struct.unpack(f"<{n}I", fh.read(4 * n))
        lower = struct.unpack(f"<{n}d", fh.read(8 * n))
        upper = struct.unpack(f"<{n}d", fh.read(8 * n))
        grid = GridSpec(lower=lower, upper=upper, nodes_per_axis=nodes)
        count = int(np.prod(nodes))
        raw = fh.read(8 * count)
        if len(raw) != 8 * count:
            raise FieldFormatError(f"truncated field file {path}")
        values = np.frombuffer(raw, dtype="<f8").reshape(grid.shape)
    return ScalarField(grid, values)


def write_csv(path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_format_cell(cell) for cell in row])


def _format_cell(cell):
    if isinstance(cell, float):
        return repr(cell)
    if isinstance(cell, (np.floating,)):
        return repr(float(cell))
    if isinstance(cell, (np.integer,)):
        return int(cell)
    return cell


def write_json(path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_pgm(path, values: np.ndarray) -> None:
    """8-bit binary PGM of a 2D array, min -> 0, max -> 255."""
    values = np.asarray(values, dtype=float)
    if values.ndim != 2:
        raise GridError(f"PGM raster needs a 2D array, got shape {values.shape}")
    lo = float(np.nanmin(values))
    hi = float(np.nanmax(values))
    span = hi - lo
    if span <= 0.0:
        scaled = np.zeros_like(values)
    else:
        scaled = (values - lo) / span * 255.0
    data = np.clip(np.nan_to_num(scaled, nan=0.0), 0, 255).astype(np.uint8)
    height, width = data.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{width} {height}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def ensure_directory(path) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    return path
