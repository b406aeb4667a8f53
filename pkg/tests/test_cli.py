"""Command line: outputs, exit codes and determinism."""

import csv
import json

import pytest

from pointer_states.cli import main

FAST = {"times": [0.5, 1.0], "propagator": {"dt": 1e-3, "mode": "exact_linear"}}


def _write(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def _run(tmp_path, command, cfg=None, out="out", extra=()):
    args = [command, "--out", str(tmp_path / out)]
    if cfg is not None:
        args += ["--config", _write(tmp_path, cfg, f"{out}.json")]
    return main(args + list(extra))


def _rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_analytic_outputs(tmp_path):
    assert _run(tmp_path, "analytic", {**FAST, "times": [0.0, 1.0], "params": {"lambda": 0.3}}) == 0
    out = tmp_path / "out"
    kernels = json.loads((out / "kernels.json").read_text())
    assert [k["t"] for k in kernels["kernels"]] == [0.0, 1.0]
    assert set(kernels["kernels"][1]["blocks"]) == {"uu", "dd", "ud", "du"}
    rows = _rows(out / "evaluations.csv")
    assert rows[0] == ["t", "Q", "r", "block", "re", "im"]
    assert len(rows) == 1 + 2 * 4 * 9
    summary = json.loads((out / "analytic_summary.json").read_text())
    assert summary["pass"] and summary["diagnostics"][1]["coherence_factor"] == pytest.approx(0.286504796860)


def test_analytic_eigenstate_records_deltas(tmp_path):
    cfg = {**FAST, "state": {"kind": "position", "z0": 0.5}}
    assert _run(tmp_path, "analytic", cfg) == 0
    kernels = json.loads((tmp_path / "out" / "kernels.json").read_text())
    ud = kernels["kernels"][0]["blocks"]["ud"]["partial_ft"]
    assert len(ud["deltas"]) == 1
    assert ud["provenance"][0] == "initial:position(z0=0.5)"


def test_evolve_outputs(tmp_path):
    assert _run(tmp_path, "evolve", FAST) == 0
    out = tmp_path / "out"
    pos = _rows(out / "trajectory_position.csv")
    mom = _rows(out / "trajectory_momentum.csv")
    assert pos[0] == ["t", "z", "density_up", "density_down"]
    assert mom[0] == ["t", "p", "density_up", "density_down"]
    assert len(pos) == 1 + 2 * 4096
    reports = _rows(out / "reports.csv")
    assert len(reports) == 3
    assert json.loads((out / "evolve_summary.json").read_text())["pass"]


def test_compare_passes_and_fails_on_tolerance(tmp_path):
    cfg = {**FAST, "params": {"lambda": 0.3}}
    assert _run(tmp_path, "compare", cfg, out="a") == 0
    rows = _rows(tmp_path / "a" / "residuals.csv")
    assert rows[0][-1] == "abs_residual"
    assert len(rows) == 1 + 2 * 4 * 9
    assert max(float(r[-1]) for r in rows[1:]) < 1e-5
    assert _run(tmp_path, "compare", cfg, out="b", extra=["--tolerance", "1e-30"]) == 1


def test_compare_requires_gaussian(tmp_path):
    assert _run(tmp_path, "compare", {**FAST, "state": {"kind": "momentum", "k": 0, "regularization": 5}}) == 2


def test_sweep_threads_are_deterministic(tmp_path):
    cfg = {**FAST, "sweep": {"epsilon": [0.5, 1.0], "sigma": [1.0], "lambda": [0.0, 0.5],
                             "variant": ["full", "interaction_only"]}}
    assert _run(tmp_path, "sweep", cfg, out="one", extra=["--threads", "1"]) == 0
    assert _run(tmp_path, "sweep", cfg, out="four", extra=["--threads", "4", "--seed", "7"]) == 0
    a = (tmp_path / "one" / "reports.csv").read_bytes()
    b = (tmp_path / "four" / "reports.csv").read_bytes()
    assert a == b
    assert len(_rows(tmp_path / "one" / "reports.csv")) == 1 + 8 * 2


@pytest.mark.parametrize("command", ["analytic", "evolve", "compare"])
def test_repeat_runs_are_byte_identical(tmp_path, command):
    assert _run(tmp_path, command, FAST, out="x") == 0
    assert _run(tmp_path, command, FAST, out="y") == 0
    for f in sorted(p.name for p in (tmp_path / "x").iterdir()):
        assert (tmp_path / "x" / f).read_bytes() == (tmp_path / "y" / f).read_bytes(), f


@pytest.mark.parametrize(
    "cfg",
    [
        {"unknown_key": 1},
        {"times": [1.0, 0.5]},
        {"times": [0.33333]},
        {"state": {"kind": "wigner"}},
        {"variant": "kinetic_only"},
        {"grid": {"n_points": 1000}},
        {"amplitudes": {"a": 1, "b": 1}},
        {"params": {"mass": -1}},
        {"state": {"kind": "position", "z0": 0}},
    ],
)
def test_invalid_config_exit_code(tmp_path, cfg):
    assert _run(tmp_path, "evolve", cfg) == 2


def test_unreadable_config(tmp_path):
    assert main(["evolve", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["evolve", "--config", str(bad), "--out", str(tmp_path)]) == 2


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["analytic", "--out", str(blocker / "sub")]) == 2


def test_boundary_guard_exit_code(tmp_path):
    cfg = {"grid": {"n_points": 1024, "length": 20.0}, "times": [4.0], "propagator": {"dt": 1e-3}}
    assert _run(tmp_path, "evolve", cfg) == 3


def test_amplitudes_accept_complex_pairs(tmp_path):
    cfg = {**FAST, "amplitudes": {"a": 0.6, "b": [0.0, 0.8]}}
    assert _run(tmp_path, "evolve", cfg) == 0


def test_sweep_is_order_independent(tmp_path):
    a = {**FAST, "sweep": {"epsilon": [0.5, 1.0], "sigma": [1.0, 1.5], "variant": ["full", "interaction_only"]}}
    b = {**FAST, "sweep": {"epsilon": [1.0, 0.5], "sigma": [1.5, 1.0], "variant": ["interaction_only", "full"]}}
    assert _run(tmp_path, "sweep", a, out="a", extra=["--threads", "3"]) == 0
    assert _run(tmp_path, "sweep", b, out="b", extra=["--threads", "2"]) == 0
    assert (tmp_path / "a" / "reports.csv").read_bytes() == (tmp_path / "b" / "reports.csv").read_bytes()
