import csv
import json
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ippal import cli, export
from ippal.cli import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, main

TINY = """\
missions = 1
budget = 20.0
n_test = 8
seeds = [{seed}]
objective = "entropy"

[terrain]
width_m = 40
height_m = 40

[model]
max_epochs = 5

[planner]
kind = "local"
"""


def write_cfg(tmp_path, text=None, name="exp.toml", seed=0):
    p = tmp_path / name
    p.write_text(text if text is not None else TINY.format(seed=seed))
    return p


def files_under(root):
    return sorted(p.relative_to(root).as_posix() for p in root.rglob("*") if p.is_file())


def test_missing_config_exit_2(tmp_path, capsys):
    p = tmp_path / "nope.toml"
    assert main(["run", "--config", str(p), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert str(p) in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_invalid_config_is_line_precise(tmp_path, capsys):
    p = write_cfg(tmp_path, "missions = 1\n[terrain]\nn_classes = \"four\"\n")
    assert main(["run", "--config", str(p), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert f"{p}:3" in capsys.readouterr().err


def test_run_writes_exactly_the_manifest(tmp_path):
    out = tmp_path / "out"
    assert main(["--quiet", "run", "--config", str(write_cfg(tmp_path)), "--out", str(out)]) == EXIT_OK
    declared = json.loads((out / "manifest.json").read_text())["files"]
    assert files_under(out) == sorted(declared + ["manifest.json"])
    assert "local_entropy_0.csv" in declared and "local_entropy_0_trace.csv" in declared
    with open(out / "local_entropy_0.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0][:6] == ["mission", "images_labeled", "miou", "acc", "f1", "ece"]
    assert rows[0][-1] == "wallclock_s" and len(rows) == 2
    assert b"\r\n" not in (out / "local_entropy_0.csv").read_bytes()


def test_run_is_byte_deterministic(tmp_path):
    cfg = write_cfg(tmp_path)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["--quiet", "run", "--config", str(cfg), "--out", str(a)]) == EXIT_OK
    assert main(["--quiet", "run", "--config", str(cfg), "--out", str(b)]) == EXIT_OK
    assert files_under(a) == files_under(b)
    for f in files_under(a):
        assert (a / f).read_bytes() == (b / f).read_bytes(), f


def test_seed_flag_and_env_default(tmp_path, monkeypatch):
    monkeypatch.setenv("IPPAL_OUT", str(tmp_path / "env"))
    assert main(["--quiet", "run", "--config", str(write_cfg(tmp_path)), "--seed", "7"]) == EXIT_OK
    assert (tmp_path / "env" / "local_entropy_7.csv").is_file()
    assert not (tmp_path / "env" / "local_entropy_0.csv").exists()


def test_config_not_mutated(tmp_path):
    p = write_cfg(tmp_path)
    before = p.read_bytes()
    main(["--quiet", "run", "--config", str(p), "--out", str(tmp_path / "o")])
    assert p.read_bytes() == before


def test_benchmark_cell_count(tmp_path):
    head, _, tables = TINY.format(seed=0).partition("[terrain]")
    text = head.replace("seeds = [0]", "seeds = [0, 1]") + 'planners = ["local", "coverage"]\nobjectives = ["entropy", "novelty", "bayes_mc_dropout"]\n\n[terrain]' + tables
    out = tmp_path / "bench"
    assert main(["--quiet", "benchmark", "--config", str(write_cfg(tmp_path, text)), "--out", str(out), "--jobs", "2"]) == EXIT_OK
    with open(out / "summary.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 2 * 3 * 2
    assert {(r["planner"], r["objective"], r["seed"]) for r in rows} == {
        (p, o, str(s)) for p in ("local", "coverage") for o in ("entropy", "novelty", "bayes_mc_dropout") for s in (0, 1)
    }
    assert len(list((out / "cells").iterdir())) == 12
    for r in rows:
        # a single mission: the AUC of a one-point curve is that point
        assert float(r["auc_miou"]) == pytest.approx(float(r["final_miou"]))


def test_export_maps_empty_dir(tmp_path):
    assert main(["export-maps", str(tmp_path)]) == EXIT_OK
    assert list(tmp_path.iterdir()) == []


def test_export_maps_round_trip_and_idempotent(tmp_path):
    out = tmp_path / "run"
    assert main(["--quiet", "run", "--config", str(write_cfg(tmp_path)), "--out", str(out)]) == EXIT_OK
    assert main(["export-maps", str(out)]) == EXIT_OK
    manifest = json.loads((out / "maps" / "manifest.json").read_text())["rasters"]
    assert manifest
    for entry in manifest:
        q = export.read_pgm(out / "maps" / entry["file"])
        orig = np.load(out / "snapshots" / entry["file"].replace(".pgm", ".npy"))
        back = export.dequantize16(q, entry["scale"], entry["offset"])
        assert np.max(np.abs(back - orig)) <= entry["scale"] + 1e-12
    snap = {f: (out / f).stat().st_mtime_ns for f in files_under(out)}
    content = {f: (out / f).read_bytes() for f in files_under(out)}
    assert main(["export-maps", str(out)]) == EXIT_OK
    assert {f: (out / f).stat().st_mtime_ns for f in files_under(out)} == snap
    assert {f: (out / f).read_bytes() for f in files_under(out)} == content


def test_export_maps_corrupt_layer(tmp_path, capsys):
    layer = tmp_path / "snapshots" / "x_y_0" / "m000" / "uncertainty.npy"
    layer.parent.mkdir(parents=True)
    layer.write_bytes(b"garbage")
    assert main(["export-maps", str(tmp_path)]) == EXIT_RUNTIME
    assert "uncertainty" in capsys.readouterr().err


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10_000), span=st.floats(1e-6, 1e6), offset=st.floats(-1e3, 1e3))
def test_quantisation_error_within_one_lsb(seed, span, offset):
    a = offset + span * np.random.default_rng(seed).random((7, 9))
    q, scale, off = export.quantize16(a)
    assert q.min() >= 0 and q.max() <= 65535
    assert np.max(np.abs(export.dequantize16(q, scale, off) - a)) <= scale * (1 + 1e-9)


def test_console_entry_point(tmp_path):
    env = dict(os.environ, IPPAL_OUT=str(tmp_path / "o"))
    r = subprocess.run([sys.executable, "-m", "ippal.cli", "run", "--config", str(tmp_path / "none.toml")], capture_output=True, text=True, env=env)
    assert r.returncode == EXIT_CONFIG


def test_jobs_must_be_positive(tmp_path):
    assert cli.main(["run", "--config", str(write_cfg(tmp_path)), "--jobs", "0"]) == EXIT_CONFIG
