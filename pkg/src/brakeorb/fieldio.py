"""Binary field files (BRKORB1) with a JSON sidecar."""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import DimensionError, FormatError
from .grids import Field2D, Grid1D, Grid2D, Path1D

MAGIC = b"BRKORB1\0"
VERSION = 1
_HEADER = struct.Struct("<8sIIQQ4d")


def sidecar_path(path):
    path = Path(path)
    return path.with_name(path.name + ".json")


def _grid_json(obj):
    if isinstance(obj, Field2D):
        g = obj.grid
        return {"kind": "Field2D", "L": g.L, "Y": g.Y, "nx": g.nx, "ny": g.ny, "m": obj.m}
    g = obj.grid
    return {"kind": "Path1D", "lo": g.lo, "hi": g.hi, "n": g.n, "m": obj.m}


def save_field(path, obj, provenance=None):
    """Write a Path1D or Field2D and its sidecar; returns the sidecar path."""
    path = Path(path)
    if isinstance(obj, Field2D):
        g = obj.grid
        nx, ny, meta = g.nx, g.ny, (0.0, g.L / 4.0, -g.Y, g.Y)
    elif isinstance(obj, Path1D):
        g = obj.grid
        nx, ny, meta = g.n, 0, (g.lo, g.hi, 0.0, 0.0)
    else:
        raise TypeError("expected Path1D or Field2D")
    values = np.ascontiguousarray(obj.values, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, obj.m, nx, ny, *meta))
        fh.write(values.tobytes(order="C"))
    side = sidecar_path(path)
    doc = {"grid": _grid_json(obj), "provenance": provenance or {}}
    side.write_text(json.dumps(doc, indent=2, sort_keys=True))
    return side


def load_field(path, check_sidecar=True):
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, m, nx, ny, x_lo, x_hi, y_lo, y_hi = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    count = nx * (ny if ny else 1) * m
    body = raw[_HEADER.size:]
    if len(body) != 8 * count:
        raise FormatError(f"{path}: expected {8 * count} data bytes, found {len(body)}")
    values = np.frombuffer(body, dtype="<f8").astype(float)
    if ny == 0:
        obj = Path1D(Grid1D(x_lo, x_hi, nx), values.reshape(nx, m))
    else:
        obj = Field2D(Grid2D(4.0 * x_hi, y_hi, nx, ny), values.reshape(nx, ny, m))
    if check_sidecar:
        side = sidecar_path(path)
        if side.exists():
            want = json.loads(side.read_text()).get("grid", {})
            have = _grid_json(obj)
            for key, val in have.items():
                if key in want and want[key] != val:
                    raise DimensionError(f"sidecar {key}={want[key]!r} differs from file {val!r}")
    return obj


def load_sidecar(path):
    side = sidecar_path(path)
    return json.loads(side.read_text()) if side.exists() else {}
