from __future__ import annotations

import json

import numpy as np
import pytest

from robinscatter import io
from robinscatter.errors import ConfigurationError, ContractError
from robinscatter.grid import Disk, GridSpec2D


def test_grid_rejects_non_power_of_two():
    with pytest.raises(ConfigurationError):
        GridSpec2D((0, 0), (1, 1), (100, 128))
    with pytest.raises(ConfigurationError):
        GridSpec2D((0, 0), (1, 2), (64, 64))


def test_grid_geometry():
    g = GridSpec2D.centered(2.0, 64)
    assert g.h == pytest.approx(4.0 / 64)
    x, y = g.axes()
    assert x[0] == -2.0 and x[-1] == pytest.approx(2.0 - g.h)
    assert g.frequencies()[0][1, 0] == pytest.approx(2 * np.pi / 4.0)
    assert GridSpec2D.from_dict(g.to_dict()) == g


def test_disk_distance_and_margin():
    d = Disk((1.0, 0.0), 0.5)
    assert d.distance([2.0, 0.0]) == pytest.approx(0.5)
    assert d.distance([1.0, 0.1]) == 0.0
    with pytest.raises(ConfigurationError):
        GridSpec2D.centered(1.0, 64).check_disk(Disk(radius=1.0))


def test_field_roundtrip(tmp_path):
    g = GridSpec2D.centered(1.0, 16)
    v = np.random.default_rng(0).standard_normal(g.shape + (3,))
    p = io.write_field(tmp_path / "f.rscf", g, v, 0.5, 7, {"note": "x"})
    g2, v2, meta = io.read_field(p)
    assert g2 == g
    assert np.array_equal(v, v2)
    assert meta["seed"] == 7 and meta["epsilon"] == 0.5
    assert meta["sha256"] == io.sha256_file(p)
    raw = p.read_bytes()
    assert raw[:4] == b"RSCF"


def test_field_container_is_little_endian_row_major(tmp_path):
    g = GridSpec2D.centered(1.0, 8)
    v = np.arange(64, dtype=float).reshape(8, 8)
    p = io.write_field(tmp_path / "f.rscf", g, v)
    data = np.frombuffer(p.read_bytes()[io._HEADER.size:], dtype="<f8")
    assert np.array_equal(data, np.arange(64.0))


def test_corrupt_container_rejected(tmp_path):
    p = tmp_path / "bad.rscf"
    p.write_bytes(b"XXXX" + bytes(200))
    with pytest.raises(ContractError):
        io.read_field(p)
    p.write_bytes(b"RS")
    with pytest.raises(ContractError):
        io.read_field(p)


def test_dataset_roundtrip(tmp_path):
    pts = np.array([[1.5, 0, 0.5], [0, -2, 1.0]])
    p = io.write_dataset(tmp_path / "d.csv", pts, np.array([1e-6, 2e-6]), np.array([1e-8, 0.0]),
                         {"seed": 3})
    q, n0, se, meta = io.read_dataset(p)
    assert np.array_equal(q, pts) and n0[1] == 2e-6 and se[0] == 1e-8
    assert meta["meta"]["seed"] == 3
    assert p.read_text().splitlines()[0] == "x1,x2,x3,n0,stderr"


def test_manifest_hashes(tmp_path):
    a = tmp_path / "a.json"
    io.write_json(a, {"b": 1, "a": [1.0, float("nan")]})
    m = io.Manifest()
    m.add("a", a, "synth")
    out = m.write(tmp_path / "manifest.json")
    d = json.loads(out.read_text())
    assert d["artifacts"]["a"]["sha256"] == io.sha256_file(a)
    assert list(json.loads(a.read_text())) == ["a", "b"]
