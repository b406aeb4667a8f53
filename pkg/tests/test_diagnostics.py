"""Correlation reports, reduced spin state and preferred-state ranking."""

import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from pointer_states import (
    GaussianPacket,
    HamiltonianVariant,
    ModelParams,
    MomentumEigenstate,
    PositionEigenstate,
    SpinAmplitudes,
    SpinorField,
    correlation_report,
    evolve,
    init_field,
    spin_reduced_density,
)
from pointer_states import diagnostics
from pointer_states.diagnostics import (
    CorrelationReport,
    DegenerateDensityError,
    Verdict,
    analytic_gaussian_report,
    classify_preferred_state,
    gaussian_total_variation,
    total_variation,
)

FULL = HamiltonianVariant.FULL
IO = HamiltonianVariant.INTERACTION_ONLY

densities = arrays(np.float64, 50, elements=st.floats(0, 10))
amplitudes = st.builds(
    lambda th, ph: SpinAmplitudes(math.cos(th), math.sin(th) * complex(math.cos(ph), math.sin(ph))),
    st.floats(0, math.pi / 2), st.floats(-math.pi, math.pi),
)
overlaps = st.builds(lambda m, ph: m * complex(math.cos(ph), math.sin(ph)), st.floats(0, 1), st.floats(-math.pi, math.pi))


def _normalize(p):
    s = p.sum()
    return p / s if s > 0 else np.full_like(p, 1 / p.size)


@given(densities, densities)
def test_total_variation_bounds_and_symmetry(a, b):
    p, q = _normalize(a), _normalize(b)
    d = total_variation(p, q, 1.0)
    assert -1e-12 <= d <= 1 + 1e-12
    assert d == pytest.approx(total_variation(q, p, 1.0))
    assert total_variation(p, p, 1.0) == 0.0


def test_gaussian_total_variation_matches_grid():
    x = np.linspace(-20, 20, 40001)
    h = x[1] - x[0]
    for m1, s1, m2, s2 in [(0, 1, 1.5, 1), (-1, 0.7, 1, 1.3), (0, 1, 0, 2)]:
        g1 = np.exp(-((x - m1) ** 2) / (2 * s1**2)) / (s1 * math.sqrt(2 * math.pi))
        g2 = np.exp(-((x - m2) ** 2) / (2 * s2**2)) / (s2 * math.sqrt(2 * math.pi))
        assert gaussian_total_variation(m1, s1, m2, s2) == pytest.approx(total_variation(g1, g2, h), abs=1e-7)


@given(amplitudes, overlaps)
def test_reduced_density_is_a_state(amps, ov):
    rho = spin_reduced_density(amps, ov)
    np.testing.assert_allclose(rho, rho.conj().T, atol=1e-15)
    assert np.trace(rho).real == pytest.approx(1.0)
    w = np.linalg.eigvalsh(rho)
    assert w.min() >= -1e-12 and w.max() <= 1 + 1e-12
    # eigenvalues (1 +- sqrt(1 - 4|a|^2|b|^2 (1 - |ov|^2)))/2
    disc = 1 - 4 * abs(amps.a) ** 2 * abs(amps.b) ** 2 * (1 - abs(ov) ** 2)
    np.testing.assert_allclose(w, [(1 - math.sqrt(max(disc, 0))) / 2, (1 + math.sqrt(max(disc, 0))) / 2], atol=1e-7)


def test_reduced_density_rejects_overlap_above_one():
    with pytest.raises(ValueError):
        spin_reduced_density(SpinAmplitudes(), 1.1)


def test_gaussian_full_report(gaussian_fields):
    rep = correlation_report(gaussian_fields[FULL, 2.0], SpinAmplitudes(), 2.0)
    assert rep.z_separation == pytest.approx(4.0, rel=1e-8)
    assert rep.p_separation == pytest.approx(4.0, rel=1e-8)
    assert rep.correlates_in_position and rep.correlates_in_momentum
    assert rep.coherence_magnitude == pytest.approx(math.exp(-8), abs=1e-10)
    assert rep.spin_coherence == pytest.approx(math.exp(-8) / 2, abs=1e-10)


def test_interaction_only_report(gaussian_fields):
    rep = correlation_report(gaussian_fields[IO, 2.0], SpinAmplitudes(), 2.0)
    assert rep.z_distinguishability < 1e-8
    assert not rep.correlates_in_position and rep.correlates_in_momentum
    assert rep.p_separation == pytest.approx(4.0, rel=1e-8)


@pytest.mark.parametrize("variant", list(HamiltonianVariant))
@pytest.mark.parametrize("t", [0.5, 1.0, 2.0])
def test_numeric_and_analytic_reports_agree(variant, t, gaussian_fields, unit_params):
    num = correlation_report(gaussian_fields[variant, t], SpinAmplitudes(), t)
    ana = analytic_gaussian_report(1.0, unit_params, t, variant)
    for name in ("z_separation", "p_separation", "z_distinguishability", "p_distinguishability", "coherence_magnitude"):
        assert getattr(num, name) == pytest.approx(getattr(ana, name), abs=1e-3), name
    assert (num.correlates_in_position, num.correlates_in_momentum) == (ana.correlates_in_position, ana.correlates_in_momentum)


@pytest.mark.parametrize("state,reg", [(GaussianPacket(1.0), None), (MomentumEigenstate(0.0), 5.0), (PositionEigenstate(0.0), 0.2)])
def test_zero_coupling_null_case(state, reg, desk_grid, exact_config):
    params = ModelParams(lam=0.5, epsilon=0.0)
    f = evolve(init_field(state, desk_grid, reg), params, FULL, exact_config, 1.0)
    rep = correlation_report(f, SpinAmplitudes(), 1.0)
    assert rep.coherence_magnitude == pytest.approx(1.0, abs=1e-12)
    assert rep.z_distinguishability < 1e-12 and rep.p_distinguishability < 1e-12
    assert not rep.correlates_in_position and not rep.correlates_in_momentum


def test_degenerate_density_rejected(desk_grid):
    psi = np.zeros(desk_grid.n_points, complex)
    psi[desk_grid.n_points // 2] = 1 / math.sqrt(desk_grid.dz)
    with pytest.raises(DegenerateDensityError):
        correlation_report(SpinorField(psi, psi, desk_grid), SpinAmplitudes(), 0.0)


def test_report_serialization(gaussian_fields):
    rep = correlation_report(gaussian_fields[FULL, 1.0], SpinAmplitudes(), 1.0)
    d = json.loads(rep.to_json())
    assert d["t"] == 1.0 and len(d["z_centers"]) == 2
    header, row = rep.to_csv().strip().split("\n")
    assert header.split(",") == CorrelationReport.csv_header()
    assert len(row.split(",")) == len(CorrelationReport.csv_header())


def _fake_verdict(label, z, p, conclusive=True):
    return Verdict(label, "full", 1.0, z, p, conclusive, summary=f"{label}")


def _patch_classifier(monkeypatch, table):
    def fake(state, variant, t, params, schedule, grid, config, threshold, trend_tolerance):
        return _fake_verdict(state.label, *table[state.label])

    monkeypatch.setattr(diagnostics, "classify_state", fake)


STATES = [GaussianPacket(1.0), MomentumEigenstate(0.0), PositionEigenstate(0.0)]


def test_ranking_prefers_strict_winner(monkeypatch):
    _patch_classifier(monkeypatch, {"gaussian": (True, True), "momentum_eigenstate": (False, True),
                                    "position_eigenstate": (False, False)})
    ranked = classify_preferred_state(STATES, FULL, 1.0)
    assert [v.state for v in ranked] == ["gaussian", "momentum_eigenstate", "position_eigenstate"]
    assert [v.rank for v in ranked] == [1, 2, 3]
    assert ranked[0].preferred and ranked[0].summary.startswith("preferred")
    assert not any(v.preferred for v in ranked[1:])


def test_ranking_tie_has_no_preferred(monkeypatch):
    _patch_classifier(monkeypatch, {"gaussian": (False, True), "momentum_eigenstate": (False, True),
                                    "position_eigenstate": (False, False)})
    ranked = classify_preferred_state(STATES, IO, 1.0)
    assert [v.state for v in ranked[:2]] == ["gaussian", "momentum_eigenstate"]
    assert not any(v.preferred for v in ranked)


def test_inconclusive_ranked_last(monkeypatch):
    table = {"gaussian": (True, True, False), "momentum_eigenstate": (False, True),
             "position_eigenstate": (False, False)}
    _patch_classifier(monkeypatch, table)
    ranked = classify_preferred_state(STATES, FULL, 1.0)
    assert ranked[-1].state == "gaussian"
    assert ranked[0].state == "momentum_eigenstate" and ranked[0].preferred


def test_reduced_density_limits():
    amps = SpinAmplitudes()
    np.testing.assert_allclose(spin_reduced_density(amps, 1.0), np.full((2, 2), 0.5))
    np.testing.assert_allclose(spin_reduced_density(amps, 0.0), np.diag([0.5, 0.5]))
    # sigma = eps = hbar = m = 1, full, t = 1
    rho = spin_reduced_density(amps, math.exp(-5 / 4))
    assert abs(rho[0, 1]) == pytest.approx(0.1433, abs=1e-4)


@pytest.mark.parametrize("sigma,eps,t", [(1.5, 0.5, 1.0), (1.5, 1.0, 0.5), (0.7, 1.0, 1.0)])
def test_distinguishability_quadrature_on_coarse_momentum_grid(sigma, eps, t, desk_grid, exact_config):
    # momentum widths of order the grid spacing; crossings need the refined grid
    params = ModelParams(epsilon=eps)
    f = evolve(init_field(GaussianPacket(sigma), desk_grid), params, FULL, exact_config, t)
    num = correlation_report(f, SpinAmplitudes(), t)
    ana = analytic_gaussian_report(sigma, params, t, FULL)
    assert num.p_distinguishability == pytest.approx(ana.p_distinguishability, abs=1e-4)
    assert num.z_distinguishability == pytest.approx(ana.z_distinguishability, abs=1e-4)
