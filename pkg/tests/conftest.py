import numpy as np
import pytest

from pointer_states import (
    GaussianPacket,
    GridSpec,
    HamiltonianVariant,
    ModelParams,
    PropagatorConfig,
    PropagatorMode,
    evolve,
    init_field,
)

_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance_log():
    """Record one PASS/FAIL line per acceptance criterion."""

    def record(number: int, ok: bool, detail: str):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def unit_params():
    return ModelParams(lam=0.0, epsilon=1.0, mass=1.0, hbar=1.0)


@pytest.fixture(scope="session")
def desk_grid():
    return GridSpec(4096, 80.0)


@pytest.fixture(scope="session")
def exact_config():
    return PropagatorConfig(1e-3, PropagatorMode.EXACT_LINEAR)


@pytest.fixture(scope="session")
def gaussian_fields(unit_params, desk_grid, exact_config):
    """Gaussian sigma=1 branches at t = 0.5, 1, 2 under both variants."""
    f0 = init_field(GaussianPacket(1.0), desk_grid)
    out = {}
    for variant in HamiltonianVariant:
        for t in (0.5, 1.0, 2.0):
            out[variant, t] = evolve(f0, unit_params, variant, exact_config, t)
    return out


def l2(a, b, dz):
    return float(np.sqrt(np.sum(np.abs(np.asarray(a) - np.asarray(b)) ** 2) * dz))
