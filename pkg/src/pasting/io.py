"""Binary ``VF01`` field files and plot-ready CSV export.

Layout: magic ``b"VF01"``, ``u8`` dim, ``u8`` kind (0 scalar, 1 vector),
``u32`` n, ``f64`` L (all little endian), then the ``f64`` raster in C order;
vector fields store the per-axis face arrays one after another.
"""
from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .grid import GridSpec, ScalarGrid, VectorGrid

MAGIC = b"VF01"
_HEADER = struct.Struct("<4sBBId")


class FieldFormatError(ValueError):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


def write_field(field, path) -> None:
    spec = field.spec
    if isinstance(field, ScalarGrid):
        kind, payload = 0, field.values
    elif isinstance(field, VectorGrid):
        kind, payload = 1, field.components
    else:
        raise TypeError(f"cannot serialize {type(field).__name__}")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, spec.dim, kind, spec.n, spec.L))
        fh.write(np.ascontiguousarray(payload, dtype="<f8").tobytes())


def read_field(path):
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise FieldFormatError("truncated", f"{path}: {len(data)} bytes, header needs {_HEADER.size}")
    magic, dim, kind, n, L = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FieldFormatError("bad_magic", f"{path}: magic {magic!r}")
    if kind not in (0, 1):
        raise FieldFormatError("bad_kind", f"{path}: kind byte {kind}")
    try:
        spec = GridSpec(dim, n, L)
    except ValueError as exc:
        raise FieldFormatError("bad_header", str(exc)) from None
    count = n**dim * (dim if kind == 1 else 1)
    body = data[_HEADER.size:]
    if len(body) != 8 * count:
        code = "truncated" if len(body) < 8 * count else "dimension_mismatch"
        raise FieldFormatError(code, f"{path}: payload {len(body)} bytes, expected {8 * count}")
    arr = np.frombuffer(body, dtype="<f8").astype(np.float64)
    if not np.all(np.isfinite(arr)):
        raise FieldFormatError("non_finite", f"{path}: payload has NaN/inf")
    if kind == 0:
        return ScalarGrid(spec, arr.reshape(spec.shape))
    return VectorGrid(spec, arr.reshape((dim,) + spec.shape))


def write_csv(field, path) -> None:
    """One row per cell: center coordinates, then the field values.

    Vector components are averaged from the two faces bracketing the cell.
    """
    spec = field.spec
    coords = [c.ravel() for c in spec.centers()]
    names = ["x", "y", "z"][: spec.dim]
    if isinstance(field, ScalarGrid):
        cols, labels = [field.values.ravel()], ["value"]
    else:
        cols = [
            0.5 * (field.components[a] + np.roll(field.components[a], 1, axis=a)).ravel()
            for a in range(spec.dim)
        ]
        labels = [f"v{name}" for name in names]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names + labels)
        for row in zip(*coords, *cols):
            w.writerow([repr(float(x)) for x in row])


def mask_to_grid(spec: GridSpec, mask) -> ScalarGrid:
    return ScalarGrid(spec, np.asarray(mask, dtype=float))
