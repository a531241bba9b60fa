import json

import numpy as np
import pytest

from brakeorb import Field2D, Grid1D, Grid2D, Path1D, load_field, save_field
from brakeorb.errors import DimensionError, FormatError
from brakeorb.fieldio import MAGIC, sidecar_path


def test_field2d_round_trip_is_bit_exact(tmp_path, rng):
    f = Field2D(Grid2D.from_spacing(20.0, 5.0, 0.25, 0.5), rng.standard_normal((21, 21, 2)))
    save_field(tmp_path / "f.bin", f, {"note": "random"})
    g = load_field(tmp_path / "f.bin")
    assert g.grid == f.grid
    assert g.values.tobytes() == f.values.tobytes()


def test_path_round_trip_and_header(tmp_path, rng):
    p = Path1D(Grid1D(-3.0, 3.0, 40), rng.standard_normal((40, 1)))
    save_field(tmp_path / "p.bin", p)
    raw = (tmp_path / "p.bin").read_bytes()
    assert raw[:8] == MAGIC == b"BRKORB1\0"
    assert int.from_bytes(raw[8:12], "little") == 1
    q = load_field(tmp_path / "p.bin")
    assert q.grid == p.grid and np.array_equal(q.values, p.values)


def test_truncated_file(tmp_path, rng):
    p = Path1D(Grid1D(0.0, 1.0, 20), rng.standard_normal((20, 2)))
    save_field(tmp_path / "p.bin", p)
    raw = (tmp_path / "p.bin").read_bytes()
    (tmp_path / "p.bin").write_bytes(raw[:-8])
    with pytest.raises(FormatError):
        load_field(tmp_path / "p.bin")
    (tmp_path / "p.bin").write_bytes(raw[:20])
    with pytest.raises(FormatError):
        load_field(tmp_path / "p.bin")


def test_bad_magic_and_version(tmp_path, rng):
    p = Path1D(Grid1D(0.0, 1.0, 20), rng.standard_normal((20, 1)))
    save_field(tmp_path / "p.bin", p)
    raw = bytearray((tmp_path / "p.bin").read_bytes())
    (tmp_path / "v.bin").write_bytes(bytes(raw[:8]) + (2).to_bytes(4, "little") + bytes(raw[12:]))
    with pytest.raises(FormatError):
        load_field(tmp_path / "v.bin", check_sidecar=False)
    raw[0:8] = b"NOTMAGIC"
    (tmp_path / "m.bin").write_bytes(bytes(raw))
    with pytest.raises(FormatError):
        load_field(tmp_path / "m.bin", check_sidecar=False)


def test_sidecar_grid_mismatch(tmp_path, rng):
    f = Field2D(Grid2D.from_spacing(20.0, 5.0, 0.25, 0.5), rng.standard_normal((21, 21, 2)))
    save_field(tmp_path / "f.bin", f)
    side = sidecar_path(tmp_path / "f.bin")
    doc = json.loads(side.read_text())
    doc["grid"]["ny"] = 42
    side.write_text(json.dumps(doc))
    with pytest.raises(DimensionError):
        load_field(tmp_path / "f.bin")
