from __future__ import annotations

import json

import numpy as np
import pytest

from robinscatter import io
from robinscatter.cli import main
from robinscatter.errors import AssumptionViolation, ConfigurationError
from robinscatter.pipeline import PipelineConfig, parse_config_text, run_pipeline

SMALL = """
stage = synth
stage = measure
grid.n = 128
point = 1.5, 0.0, 0.5   # exterior
point = 0.0, -1.8, 0.8
band.K = 12
"""


def test_parse_and_defaults():
    cfg = PipelineConfig.from_text(SMALL)
    assert cfg.stages == ["synth", "measure"]
    assert cfg["point"] == [(1.5, 0.0, 0.5), (0.0, -1.8, 0.8)]
    assert cfg.p == pytest.approx(1.5)
    assert "workers" not in cfg.canonical_text()
    assert PipelineConfig.from_text(cfg.canonical_text()).values == cfg.values


def test_config_errors():
    with pytest.raises(ConfigurationError, match="unknown key"):
        parse_config_text("nope = 1")
    with pytest.raises(ConfigurationError, match="key = value"):
        parse_config_text("just words")
    with pytest.raises(ConfigurationError, match="3 numbers"):
        PipelineConfig.from_text("point = 1, 2")
    with pytest.raises(ConfigurationError, match="stage"):
        PipelineConfig.from_text("stage = bake")
    with pytest.raises(ConfigurationError, match="point"):
        PipelineConfig.from_text("stage = measure")


def test_assumption_messages():
    with pytest.raises(AssumptionViolation, match=r"\(A4\) violated: p ≤ ε \+ 1/2"):
        PipelineConfig.from_text("p = 0.8")
    with pytest.raises(AssumptionViolation, match=r"\(A3\) violated: U′ ∩ D ≠ ∅"):
        PipelineConfig.from_text("point = 0.2, 0.1, 0.5")
    with pytest.raises(AssumptionViolation, match=r"\(A2\)"):
        PipelineConfig.from_text("epsilon = 0")
    with pytest.raises(AssumptionViolation, match=r"\(A5\)"):
        PipelineConfig.from_text("anisotropy = constant\nanisotropy.matrix = 1, 1, 2")


def test_empty_stage_list_writes_nothing(tmp_path):
    cfg = PipelineConfig.from_text(f"output = {tmp_path / 'run'}")
    status, manifest = run_pipeline(cfg)
    assert status == 0 and manifest.entries == {}
    assert not (tmp_path / "run").exists()


def test_small_run_is_worker_independent(tmp_path):
    hashes = []
    for w in (1, 3):
        cfg = PipelineConfig.from_text(SMALL, {"output": str(tmp_path / f"w{w}"), "workers": str(w)})
        _, manifest = run_pipeline(cfg)
        hashes.append(manifest.hashes())
    assert hashes[0] == hashes[1]
    pts, n0, se, meta = io.read_dataset(tmp_path / "w1" / "dataset.csv")
    assert pts.shape == (2, 3) and np.all(n0 > 0)


def test_stage_outputs_accumulate(tmp_path):
    out = tmp_path / "run"
    base = {"output": str(out)}
    run_pipeline(PipelineConfig.from_text(SMALL, base), ["synth"])
    _, manifest = run_pipeline(PipelineConfig.from_text(SMALL, base), ["measure"])
    names = set(manifest.entries)
    assert {"anisotropy", "realization", "dataset"} <= names
    on_disk = json.loads((out / "manifest.json").read_text())["artifacts"]
    assert set(on_disk) == names


def test_cli_keys_and_errors(capsys, tmp_path):
    assert main(["keys"]) == 0
    assert "band.K" in capsys.readouterr().out
    assert main(["measure", "--set", "point=0.1,0,0.5", "--output", str(tmp_path)]) == 2
    err = capsys.readouterr().err
    assert err.startswith("error: (A3) violated")
    assert main(["pipeline", "--set", "p=0.9"]) == 2
    assert "(A4)" in capsys.readouterr().err


def test_cli_runs_stage(capsys, tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text(SMALL)
    assert main(["-v", "synth", "--config", str(cfg), "--output", str(tmp_path / "o"), "--seed", "4"]) == 0
    hashes = json.loads(capsys.readouterr().out)
    assert "realization" in hashes
    _, _, meta = io.read_field(tmp_path / "o" / "realization.rscf")
    assert meta["seed"] == 4
