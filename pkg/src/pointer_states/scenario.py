"""Scenario configs and the analytic / evolve / compare / sweep / classify
pipelines behind the command line."""

from __future__ import annotations

import copy
import csv
import dataclasses
import io
import itertools
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional


from .core import (
    Block,
    GaussianPacket,
    GridError,
    GridSpec,
    HamiltonianVariant,
    ModelParams,
    MomentumEigenstate,
    NumericalGuardError,
    PositionEigenstate,
    SpinAmplitudes,
)
from .diagnostics import (
    DEFAULT_THRESHOLD,
    DEFAULT_TREND_TOLERANCE,
    DELTA_SCHEDULE,
    PLANE_WAVE_SCHEDULE,
    CorrelationReport,
    analytic_gaussian_report,
    classify_preferred_state,
    correlation_report,
    fmt,
    round12,
)
from .kernels import (
    NotIntegrableError,
    catalog_closed_form,
    coherence_factor,
    initial_kernel,
    separations,
)
from .propagator import (
    PropagatorConfig,
    PropagatorMode,
    convergence_gate,
    evolve_trajectory,
    init_field,
    marginals,
    numeric_partial_ft_sample,
)

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ASSERTION = 1
EXIT_CONFIG = 2
EXIT_GUARD = 3


class ConfigError(ValueError):
    pass


DEFAULT_CONFIG: dict = {
    "params": {"lambda": 0.0, "epsilon": 1.0, "mass": 1.0, "hbar": 1.0},
    "state": {"kind": "gaussian", "sigma": 1.0},
    "amplitudes": {"a": 1 / math.sqrt(2), "b": 1 / math.sqrt(2)},
    "variant": "full",
    "grid": {"n_points": 4096, "length": 80.0, "center": 0.0},
    "propagator": {"dt": 1e-3, "mode": "split_step"},
    "times": [0.5, 1.0, 2.0],
    "tolerance": 1e-5,
    "outputs": {"dir": "out"},
    "compare": {"Q": [-0.5, 0.0, 0.5], "r": [-0.3, 0.0, 0.3]},
    "sweep": {"epsilon": [0.5, 1.0], "lambda": [0.0], "sigma": [1.0], "variant": ["full", "interaction_only"]},
    "classify": {
        "threshold": DEFAULT_THRESHOLD,
        "trend_tolerance": DEFAULT_TREND_TOLERANCE,
        "gaussian": {"sigma": 1.0, "t": 2.0, "grid": {"n_points": 4096, "length": 80.0}},
        "momentum_eigenstate": {"k": 0.0, "t": 1.0, "schedule": list(PLANE_WAVE_SCHEDULE),
                                "grid": {"n_points": 16384, "length": 256.0}},
        "position_eigenstate": {"z0": 0.0, "t": 1.0, "schedule": list(DELTA_SCHEDULE),
                                "grid": {"n_points": 16384, "length": 256.0}},
        "expect": {
            "gaussian": {"full": [True, True], "interaction_only": [False, True]},
            "momentum_eigenstate": {"full": [False, True], "interaction_only": [False, True]},
            "position_eigenstate": {"full": [False, False], "interaction_only": [False, False]},
        },
    },
}

_KNOWN_KEYS = set(DEFAULT_CONFIG) | {"units"}


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict) and key not in ("state", "expect"):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _complex(value) -> complex:
    if isinstance(value, (list, tuple)):
        if len(value) != 2:
            raise ConfigError("complex values are [re, im]")
        return complex(float(value[0]), float(value[1]))
    return complex(float(value))


def parse_state(entry: dict):
    kind = entry.get("kind")
    try:
        if kind == "gaussian":
            return GaussianPacket(float(entry.get("sigma", 1.0))), None
        if kind in ("momentum", "momentum_eigenstate"):
            reg = entry.get("regularization")
            return MomentumEigenstate(float(entry.get("k", 0.0))), None if reg is None else float(reg)
        if kind in ("position", "position_eigenstate"):
            reg = entry.get("regularization")
            return PositionEigenstate(float(entry.get("z0", 0.0))), None if reg is None else float(reg)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid state: {exc}") from exc
    raise ConfigError(f"unknown state kind {kind!r}")


def _grid(spec: dict) -> GridSpec:
    try:
        return GridSpec(int(spec.get("n_points", 4096)), float(spec.get("length", 80.0)), float(spec.get("center", 0.0)))
    except (GridError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid grid: {exc}") from exc


@dataclass(frozen=True)
class Scenario:
    params: ModelParams
    state: Any
    regularization: Optional[float]
    amplitudes: SpinAmplitudes
    variant: HamiltonianVariant
    grid: GridSpec
    propagator: PropagatorConfig
    times: tuple
    out_dir: Path
    tolerance: float
    raw: dict = field(repr=False, default_factory=dict)

    @classmethod
    def from_dict(cls, data: Optional[dict] = None, out_dir: Optional[str] = None) -> "Scenario":
        data = data or {}
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(data) - _KNOWN_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = _merge(DEFAULT_CONFIG, data)
        try:
            p = cfg["params"]
            units = cfg.get("units") or {}
            params = ModelParams(
                lam=float(p.get("lambda", 0.0)),
                epsilon=float(p.get("epsilon", 1.0)),
                mass=float(units.get("mass", p.get("mass", 1.0))),
                hbar=float(units.get("hbar", p.get("hbar", 1.0))),
            )
            amps = SpinAmplitudes(_complex(cfg["amplitudes"]["a"]), _complex(cfg["amplitudes"]["b"]))
            variant = HamiltonianVariant(cfg["variant"])
            prop = PropagatorConfig(float(cfg["propagator"]["dt"]), PropagatorMode(cfg["propagator"]["mode"]))
            times = tuple(float(t) for t in cfg["times"])
            tolerance = float(cfg["tolerance"])
        except ConfigError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid config: {exc}") from exc
        if not times or any(t < 0 for t in times) or any(b <= a for a, b in zip(times, times[1:])):
            raise ConfigError("times must be non-empty, non-negative and strictly increasing")
        for t in times:
            try:
                prop.steps_for(t)
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
        state, reg = parse_state(cfg["state"])
        out = Path(out_dir if out_dir is not None else cfg["outputs"]["dir"])
        return cls(params, state, reg, amps, variant, _grid(cfg["grid"]), prop, times, out, tolerance, cfg)

    @classmethod
    def load(cls, path: Optional[str], out_dir: Optional[str] = None) -> "Scenario":
        if path is None:
            return cls.from_dict({}, out_dir)
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data, out_dir)

    def with_tolerance(self, tolerance: float) -> "Scenario":
        if not tolerance > 0:
            raise ConfigError("tolerance must be positive")
        return dataclasses.replace(self, tolerance=float(tolerance))

    def prepare_output(self) -> Path:
        try:
            self.out_dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"output directory {self.out_dir} not writable: {exc}") from exc
        if not os.access(self.out_dir, os.W_OK):
            raise ConfigError(f"output directory {self.out_dir} not writable")
        return self.out_dir

    def describe(self) -> dict:
        p = self.params
        return {
            "params": {"lambda": round12(p.lam), "epsilon": round12(p.epsilon), "mass": round12(p.mass), "hbar": round12(p.hbar)},
            "state": self.raw["state"],
            "variant": self.variant.value,
            "times": [round12(t) for t in self.times],
        }


# ---------------------------------------------------------------------------
# Writers
# ---------------------------------------------------------------------------


def _write_csv(path: Path, header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    path.write_text(buf.getvalue())


def _write_json(path: Path, obj):
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


@dataclass
class RunResult:
    exit_code: int
    summary: dict


# ---------------------------------------------------------------------------
# Pipelines
# ---------------------------------------------------------------------------


def run_analytic(sc: Scenario) -> RunResult:
    out = sc.prepare_output()
    records, evals, diags, failures = [], [], [], []
    Qs = [float(q) for q in sc.raw["compare"]["Q"]]
    rs = [float(r) for r in sc.raw["compare"]["r"]]
    k0 = initial_kernel(sc.state)
    for t in sc.times:
        entry = {"t": round12(t), "blocks": {}}
        for block in Block:
            kern = catalog_closed_form(sc.state, sc.variant, "partial_ft", block, t, sc.params)
            reps = {"partial_ft": kern.to_record()}
            for rep in ("position", "momentum"):
                try:
                    reps[rep] = catalog_closed_form(sc.state, sc.variant, rep, block, t, sc.params).to_record()
                except NotIntegrableError as exc:
                    reps[rep] = {"error": str(exc)}
            entry["blocks"][block.value] = reps
            if t == 0 and (kern.smooth.coefficients != k0.smooth.coefficients or kern.deltas != k0.deltas):
                failures.append(f"t=0 kernel for {block.value} differs from the initial kernel")
            if not kern.deltas:
                for Q in Qs:
                    for r in rs:
                        v = complex(kern.evaluate(Q, r))
                        evals.append([fmt(t), fmt(Q), fmt(r), block.value, fmt(v.real), fmt(v.imag)])
        records.append(entry)
        diag = {"t": round12(t)}
        dz, dp = separations(sc.params, t)
        diag["z_separation"], diag["p_separation"] = round12(dz), round12(dp)
        if isinstance(sc.state, GaussianPacket):
            cf = coherence_factor(sc.state.sigma, sc.params, t, sc.variant)
            od = abs(catalog_closed_form(sc.state, sc.variant, "partial_ft", Block.UP_DOWN, t, sc.params).evaluate(0.0, 0.0))
            diag["coherence_factor"] = round12(cf)
            if abs(cf - od) > 1e-12:
                failures.append(f"coherence factor mismatch at t={t}: {cf} vs {od}")
            diag["report"] = analytic_gaussian_report(sc.state.sigma, sc.params, t, sc.variant, sc.amplitudes).to_dict()
        diags.append(diag)
    _write_json(out / "kernels.json", {"scenario": sc.describe(), "kernels": records})
    _write_csv(out / "evaluations.csv", ["t", "Q", "r", "block", "re", "im"], evals)
    summary = {"scenario": sc.describe(), "diagnostics": diags, "failures": failures, "pass": not failures}
    _write_json(out / "analytic_summary.json", summary)
    return RunResult(EXIT_ASSERTION if failures else EXIT_OK, summary)


def _initial_field(sc: Scenario):
    try:
        return init_field(sc.state, sc.grid, sc.regularization)
    except NumericalGuardError:
        raise
    except ValueError as exc:
        raise ConfigError(f"cannot build initial state: {exc}") from exc


def run_evolve(sc: Scenario) -> RunResult:
    out = sc.prepare_output()
    f0 = _initial_field(sc)
    snaps = evolve_trajectory(f0, sc.params, sc.variant, sc.propagator, sc.times)
    pos_rows, mom_rows, rep_rows, failures = [], [], [], []
    n0 = f0.norms()
    drift = 0.0
    for f in snaps:
        m = marginals(f)
        for z, a, b in zip(m.z, m.position[0], m.position[1]):
            pos_rows.append([fmt(f.time), fmt(z), fmt(a), fmt(b)])
        for p, a, b in zip(m.p, m.momentum[0], m.momentum[1]):
            mom_rows.append([fmt(f.time), fmt(p), fmt(a), fmt(b)])
        rep_rows.append(correlation_report(f, sc.amplitudes).csv_row())
        drift = max(drift, *(abs(a - b) for a, b in zip(f.norms(), n0)))
    if drift >= 1e-10:
        failures.append(f"norm drift {drift:.3e} >= 1e-10")
    _write_csv(out / "trajectory_position.csv", ["t", "z", "density_up", "density_down"], pos_rows)
    _write_csv(out / "trajectory_momentum.csv", ["t", "p", "density_up", "density_down"], mom_rows)
    _write_csv(out / "reports.csv", CorrelationReport.csv_header(), rep_rows)
    summary = {"scenario": sc.describe(), "norm_drift_below_1e-10": drift < 1e-10,
               "failures": failures, "pass": not failures}
    _write_json(out / "evolve_summary.json", summary)
    return RunResult(EXIT_ASSERTION if failures else EXIT_OK, summary)


def run_compare(sc: Scenario) -> RunResult:
    out = sc.prepare_output()
    if not isinstance(sc.state, GaussianPacket):
        raise ConfigError("compare needs a gaussian state (pointwise analytic kernels)")
    f0 = _initial_field(sc)
    gate = convergence_gate(f0, sc.params, sc.variant, sc.propagator, sc.times[-1])
    snaps = evolve_trajectory(f0, sc.params, sc.variant, sc.propagator, sc.times)
    Qs = [float(q) for q in sc.raw["compare"]["Q"]]
    rs = [float(r) for r in sc.raw["compare"]["r"]]
    rows, worst = [], 0.0
    for f in snaps:
        for block in Block:
            kern = catalog_closed_form(sc.state, sc.variant, "partial_ft", block, f.time, sc.params)
            for Q in Qs:
                for r in rs:
                    a = complex(kern.evaluate(Q, r))
                    n = numeric_partial_ft_sample(f, block, Q, r)
                    res = abs(a - n)
                    worst = max(worst, res)
                    rows.append([fmt(f.time), fmt(Q), fmt(r), block.value, fmt(a.real), fmt(a.imag),
                                 fmt(n.real), fmt(n.imag), fmt(res)])
    _write_csv(out / "residuals.csv",
               ["t", "Q", "r", "block", "analytic_re", "analytic_im", "numeric_re", "numeric_im", "abs_residual"], rows)
    passed = worst < sc.tolerance
    summary = {
        "scenario": sc.describe(),
        "max_abs_residual_below_tolerance": passed,
        "tolerance": round12(sc.tolerance),
        "n_samples": len(rows),
        "max_abs_residual": round12(worst),
        "convergence_gate_max_change": round12(max(gate.values())),
        "pass": passed,
    }
    _write_json(out / "compare_summary.json", summary)
    return RunResult(EXIT_OK if passed else EXIT_ASSERTION, summary)


def _sweep_point(sc: Scenario, variant: str, sigma: float, eps: float, lam: float):
    params = ModelParams(lam=lam, epsilon=eps, mass=sc.params.mass, hbar=sc.params.hbar)
    var = HamiltonianVariant(variant)
    try:
        f0 = init_field(GaussianPacket(sigma), sc.grid)
    except NumericalGuardError:
        raise
    except ValueError as exc:
        raise ConfigError(f"sweep sigma={sigma}: {exc}") from exc
    rows = []
    for f in evolve_trajectory(f0, params, var, sc.propagator, sc.times):
        rep = correlation_report(f, sc.amplitudes)
        ana = analytic_gaussian_report(sigma, params, f.time, var, sc.amplitudes)
        key = (variant, sigma, eps, lam, f.time)
        rows.append((key, rep, ana))
    return rows


def run_sweep(sc: Scenario, threads: int = 1) -> RunResult:
    out = sc.prepare_output()
    sw = sc.raw["sweep"]
    try:
        variants = [HamiltonianVariant(v).value for v in sw.get("variant", [sc.variant.value])]
        sigmas = [float(s) for s in sw.get("sigma", [getattr(sc.state, "sigma", 1.0)])]
        epsilons = [float(e) for e in sw.get("epsilon", [sc.params.epsilon])]
        lambdas = [float(x) for x in sw.get("lambda", [sc.params.lam])]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid sweep block: {exc}") from exc
    points = list(itertools.product(variants, sigmas, epsilons, lambdas))
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        results = list(pool.map(lambda pt: _sweep_point(sc, *pt), points))
    rows = sorted((r for chunk in results for r in chunk), key=lambda item: item[0])
    failures, table = [], []
    for key, rep, ana in rows:
        variant, sigma, eps, lam, t = key
        dcoh = abs(rep.coherence_magnitude - ana.coherence_magnitude)
        ok = (dcoh < 1e-3 and abs(rep.z_distinguishability - ana.z_distinguishability) < 1e-3
              and abs(rep.p_distinguishability - ana.p_distinguishability) < 1e-3)
        if not ok:
            failures.append(f"analytic/numeric mismatch at {key}")
        table.append([variant, fmt(sigma), fmt(eps), fmt(lam)] + rep.csv_row() + [fmt(ana.coherence_magnitude), str(int(ok))])
    header = ["variant", "sigma", "epsilon", "lambda"] + CorrelationReport.csv_header() + ["analytic_coherence", "agrees"]
    _write_csv(out / "reports.csv", header, table)
    summary = {"scenario": sc.describe(), "n_points": len(points), "n_rows": len(table),
               "failures": failures, "pass": not failures}
    _write_json(out / "sweep_summary.json", summary)
    return RunResult(EXIT_ASSERTION if failures else EXIT_OK, summary)


def run_classify(sc: Scenario) -> RunResult:
    out = sc.prepare_output()
    cl = sc.raw["classify"]
    try:
        states = [
            GaussianPacket(float(cl["gaussian"]["sigma"])),
            MomentumEigenstate(float(cl["momentum_eigenstate"]["k"])),
            PositionEigenstate(float(cl["position_eigenstate"]["z0"])),
        ]
        times = {s.label: float(cl[s.label]["t"]) for s in states}
        schedules = {s.label: [float(x) for x in cl[s.label].get("schedule", [])] for s in states[1:]}
        grids = {s.label: _grid(cl[s.label].get("grid", {})) for s in states}
        threshold = float(cl["threshold"])
        trend_tol = float(cl["trend_tolerance"])
        expect = cl.get("expect", {})
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid classify block: {exc}") from exc
    verdicts, failures, rows = {}, [], []
    for variant in HamiltonianVariant:
        ranked = classify_preferred_state(states, variant, times, sc.params, schedules, grids,
                                          sc.propagator, threshold, trend_tol)
        for v in ranked:
            verdicts.setdefault(v.state, {})[variant.value] = v
            rows.append([v.state, v.variant, fmt(v.t), str(int(v.correlates_in_position)),
                         str(int(v.correlates_in_momentum)), str(int(v.conclusive)), str(v.rank),
                         str(int(v.preferred)), v.summary])
            if not v.conclusive:
                failures.append(f"{v.state}/{v.variant}: inconclusive trend")
            want = expect.get(v.state, {}).get(v.variant)
            if want is not None and [v.correlates_in_position, v.correlates_in_momentum] != list(want):
                failures.append(f"{v.state}/{v.variant}: got (z={v.correlates_in_position}, "
                                f"p={v.correlates_in_momentum}), expected {tuple(want)}")
    rows.sort(key=lambda r: (r[0], r[1]))
    _write_csv(out / "verdicts.csv",
               ["state", "variant", "t", "correlates_in_position", "correlates_in_momentum",
                "conclusive", "rank", "preferred", "summary"], rows)
    table = {s: {var: verdicts[s][var].to_dict() for var in sorted(verdicts[s])} for s in sorted(verdicts)}
    summary = {"params": sc.describe()["params"], "verdicts": table, "failures": failures, "pass": not failures}
    _write_json(out / "verdicts.json", summary)
    return RunResult(EXIT_ASSERTION if failures else EXIT_OK, summary)


def format_verdict_table(summary: dict) -> str:
    mark = {True: "yes", False: "no"}
    lines = [f"{'state':<22}{'variant':<18}{'z':<5}{'p':<5}preferred"]
    for state, by_variant in summary["verdicts"].items():
        for variant, v in by_variant.items():
            lines.append(f"{state:<22}{variant:<18}{mark[v['correlates_in_position']]:<5}"
                         f"{mark[v['correlates_in_momentum']]:<5}{mark[v['preferred']]}")
    return "\n".join(lines)
