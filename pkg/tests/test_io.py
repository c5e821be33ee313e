import json

import numpy as np
import pytest

from bllab.grid import Field, Grid
from bllab.io import dump_state, read_fields, write_fields


def test_round_trip(tmp_path, grid, rng):
    a = rng.normal(size=(grid.n_x, grid.n_y))
    b = Field(grid, rng.normal(size=(grid.n_x, grid.n_z)), "layer")
    path = write_fields(tmp_path / "f.bin", {"a": a, "b": b}, grid=grid, meta={"t": 0.5})
    manifest, out = read_fields(path)
    assert np.array_equal(out["a"], a) and np.array_equal(out["b"], b.values)
    assert manifest["meta"] == {"t": 0.5}
    assert manifest["fields"][1]["dims"] == ["z", "x"]
    assert Grid(**{k: v for k, v in manifest["grid"].items()
                   if k in ("n_x", "n_y", "n_z", "Y_max", "Z_max")}).n_y == grid.n_y


def test_layout_is_little_endian_x_fastest(tmp_path):
    a = np.arange(6, dtype=float).reshape(2, 3)      # (n_x, n_y)
    path = write_fields(tmp_path / "f.bin", {"a": a})
    raw = path.read_bytes()
    header, data = raw.split(b"\n", 1)
    assert json.loads(header)["fields"][0]["shape"] == [3, 2]
    assert np.array_equal(np.frombuffer(data, "<f8"), [0, 3, 1, 4, 2, 5])


def test_rejects_wrong_rank(tmp_path):
    with pytest.raises(ValueError, match="two-dimensional"):
        write_fields(tmp_path / "f.bin", {"a": np.zeros(4)})


def test_rejects_foreign_file(tmp_path):
    p = tmp_path / "f.bin"
    p.write_bytes(b'{"format": "other"}\n')
    with pytest.raises(ValueError, match="not a field dump"):
        read_fields(p)


def test_dump_state(tmp_path, grid):
    from bllab.euler import EulerState
    s = EulerState.from_vorticity(grid, np.zeros((grid.n_x, grid.n_y)), t=0.25)
    manifest, out = read_fields(dump_state(s, tmp_path))
    assert set(out) == {"u", "v", "omega"}
    assert manifest["meta"]["t"] == 0.25
