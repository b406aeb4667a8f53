"""Grid-based evolution of the two spin branches.

The Hamiltonian is diagonal in spin, so each branch is a scalar problem

    H_s = p^2/2m + s*(lam + eps*z),    s = +1 (up), -1 (down)

solved on a periodic grid either by Strang splitting or by the closed-form
linear-potential propagator (momentum kick, free drift, cubic phase).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import (
    Block,
    BoundaryError,
    CompositeDensity,
    ConvergenceError,
    GaussianPacket,
    GridSpec,
    HamiltonianVariant,
    InitialApparatusState,
    ModelParams,
    MomentumEigenstate,
    PositionEigenstate,
    SpinAmplitudes,
    SpinBranch,
)

EDGE_POINTS = 5
EDGE_PROBABILITY = 1e-10
FIT_SIGMAS = 5.0
# Gaussian momentum tail exp(-(k_max*sigma)^2/2) must be negligible
BAND_SIGMAS = 6.0


class PropagatorMode(enum.Enum):
    SPLIT_STEP = "split_step"
    EXACT_LINEAR = "exact_linear"


@dataclass(frozen=True)
class PropagatorConfig:
    dt: float = 1e-3
    mode: PropagatorMode = PropagatorMode.SPLIT_STEP
    n_steps: Optional[int] = None
    guard_every: int = 100

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        object.__setattr__(self, "mode", PropagatorMode(self.mode))

    def steps_for(self, duration: float) -> int:
        n = int(round(abs(duration) / self.dt))
        if abs(n * self.dt - abs(duration)) > 1e-9 * max(1.0, abs(duration)):
            raise ValueError(f"duration {duration} is not a multiple of dt={self.dt}")
        if self.n_steps is not None and self.n_steps != n:
            raise ValueError(f"n_steps={self.n_steps} inconsistent with duration/dt={n}")
        return n

    def halved(self) -> "PropagatorConfig":
        return PropagatorConfig(self.dt / 2, self.mode, None, self.guard_every)


@dataclass(frozen=True)
class SpinorField:
    """Branch wavefunctions ``psi_up``, ``psi_down`` on ``grid`` at ``time``."""

    psi_up: np.ndarray
    psi_down: np.ndarray
    grid: GridSpec
    time: float = 0.0

    def __post_init__(self):
        for name in ("psi_up", "psi_down"):
            arr = np.array(getattr(self, name), dtype=complex)
            if arr.shape != (self.grid.n_points,):
                raise ValueError(f"{name} has shape {arr.shape}, expected ({self.grid.n_points},)")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def branches(self) -> np.ndarray:
        return np.stack([self.psi_up, self.psi_down])

    def branch(self, b: SpinBranch) -> np.ndarray:
        return self.psi_up if b is SpinBranch.UP else self.psi_down

    def norms(self) -> tuple[float, float]:
        dz = self.grid.dz
        return (float(np.sum(np.abs(self.psi_up) ** 2) * dz), float(np.sum(np.abs(self.psi_down) ** 2) * dz))

    def composite(self, amplitudes: SpinAmplitudes) -> CompositeDensity:
        return CompositeDensity.from_branches(amplitudes, self.psi_up, self.psi_down, self.grid.dz)


# ---------------------------------------------------------------------------
# Initial fields
# ---------------------------------------------------------------------------


def _gaussian(z, center, sigma):
    return (sigma * math.sqrt(math.pi)) ** -0.5 * np.exp(-((z - center) ** 2) / (2 * sigma * sigma))


def _check_packet_fits(grid: GridSpec, center: float, sigma: float, k0: float = 0.0):
    if center - FIT_SIGMAS * sigma < grid.z_min or center + FIT_SIGMAS * sigma > grid.z_max:
        raise BoundaryError(
            f"packet (center {center:g}, sigma {sigma:g}) does not fit window "
            f"[{grid.z_min:g}, {grid.z_max:g}] with {FIT_SIGMAS:g} sigma margin"
        )
    if abs(k0) + BAND_SIGMAS / sigma > grid.k_max:
        raise BoundaryError(
            f"packet sigma {sigma:g} too narrow for grid resolution dz={grid.dz:g} "
            f"(needs |k0| + {BAND_SIGMAS:g}/sigma <= k_max={grid.k_max:g})"
        )


def init_field(
    state: InitialApparatusState,
    grid: GridSpec,
    regularization: Optional[float] = None,
) -> SpinorField:
    """Product initial state: both branches start in the same ``phi(z)``.

    Plane waves are exact when ``regularization`` is None (``k`` must then be
    commensurate with the window); otherwise they get a Gaussian envelope of
    that width.  Position eigenstates always need a regularization width.
    """
    z = grid.z
    if isinstance(state, GaussianPacket):
        _check_packet_fits(grid, 0.0, state.sigma)
        phi = _gaussian(z, 0.0, state.sigma)
    elif isinstance(state, MomentumEigenstate):
        if regularization is None:
            n = state.k * grid.length / (2 * np.pi)
            if abs(n - round(n)) > 1e-9:
                raise ValueError(f"k={state.k} is not commensurate with window length {grid.length}")
            if abs(state.k) >= grid.k_max:
                raise BoundaryError("plane-wave k outside the grid band")
            phi = np.exp(1j * state.k * z) / math.sqrt(grid.length)
        else:
            _check_packet_fits(grid, 0.0, regularization, state.k)
            phi = _gaussian(z, 0.0, regularization) * np.exp(1j * state.k * z)
    elif isinstance(state, PositionEigenstate):
        if regularization is None:
            raise ValueError("a position eigenstate needs a regularization width")
        _check_packet_fits(grid, state.z0, regularization)
        phi = _gaussian(z, state.z0, regularization)
    else:
        raise TypeError(f"unknown initial state {state!r}")
    return SpinorField(phi, phi, grid, 0.0)


# ---------------------------------------------------------------------------
# Evolution
# ---------------------------------------------------------------------------

_SIGNS = np.array([1.0, -1.0])[:, None]


def _check_edges(psi: np.ndarray, grid: GridSpec, time: float):
    dz = grid.dz
    edge = np.sum(np.abs(psi[:, :EDGE_POINTS]) ** 2, axis=1) + np.sum(np.abs(psi[:, -EDGE_POINTS:]) ** 2, axis=1)
    edge = edge * dz
    if np.any(edge > EDGE_PROBABILITY):
        raise BoundaryError(
            f"wavepacket reached the grid edge at t={time:g}: edge probability "
            f"{edge.max():.3e} > {EDGE_PROBABILITY:g}"
        )
    power = np.abs(np.fft.fft(psi, axis=1)) ** 2
    total = power.sum(axis=1)
    order = np.argsort(np.abs(np.fft.fftfreq(grid.n_points)))
    band = power[:, order[-2 * EDGE_POINTS:]].sum(axis=1) / total
    if np.any(band > EDGE_PROBABILITY):
        raise BoundaryError(
            f"momentum distribution reached the band edge at t={time:g}: weight {band.max():.3e}"
        )


def _split_step(psi, grid, params, h, n, guard_every, t0):
    hbar, m = params.hbar, params.mass
    V = _SIGNS * (params.lam + params.epsilon * grid.z[None, :])
    half = np.exp(-0.5j * h * V / hbar)
    full = half * half
    kin = np.exp(-0.5j * hbar * h * grid.k ** 2 / m)[None, :]
    psi = half * psi
    for i in range(n):
        psi = np.fft.ifft(kin * np.fft.fft(psi, axis=1), axis=1)
        if i < n - 1:
            psi = full * psi
            if guard_every and (i + 1) % guard_every == 0:
                _check_edges(psi, grid, t0 + (i + 1) * h)
    psi = half * psi
    # Strang splitting of p^2/2m + F z is exact up to the c-number
    # exp(i F^2 h^3 / (24 m hbar)) per step; remove it
    psi = psi * np.exp(-1j * n * params.epsilon ** 2 * h ** 3 / (24 * m * hbar))
    return psi


def _exact_linear(psi, grid, params, t):
    hbar, m, eps, lam = params.hbar, params.mass, params.epsilon, params.lam
    z, k = grid.z[None, :], grid.k[None, :]
    F = _SIGNS * eps
    drift = np.exp(-0.5j * hbar * k ** 2 * t / m + 0.5j * k * F * t * t / m)
    phi = np.fft.ifft(drift * np.fft.fft(psi, axis=1), axis=1)
    phase = -1j * (F * z * t / hbar + F * F * t ** 3 / (6 * m * hbar) + _SIGNS * lam * t / hbar)
    return np.exp(phase) * phi


def evolve(
    field: SpinorField,
    params: ModelParams,
    variant: HamiltonianVariant,
    config: PropagatorConfig,
    t_final: float,
) -> SpinorField:
    """Evolve ``field`` by the duration ``t_final`` (negative runs backwards).

    Raises :class:`BoundaryError` if probability reaches the window edges or
    the momentum band edge.
    """
    variant = HamiltonianVariant(variant)
    grid = field.grid
    psi = field.branches
    _check_edges(psi, grid, field.time)
    if t_final == 0:
        return field
    if variant is HamiltonianVariant.INTERACTION_ONLY:
        phase = -1j * _SIGNS * (params.epsilon * grid.z[None, :] + params.lam) * t_final / params.hbar
        psi = np.exp(phase) * psi
    elif config.mode is PropagatorMode.EXACT_LINEAR:
        psi = _exact_linear(psi, grid, params, t_final)
    else:
        n = config.steps_for(t_final)
        h = math.copysign(config.dt, t_final)
        psi = _split_step(psi, grid, params, h, n, config.guard_every, field.time)
    t = field.time + t_final
    _check_edges(psi, grid, t)
    return SpinorField(psi[0], psi[1], grid, t)


def evolve_trajectory(
    field: SpinorField,
    params: ModelParams,
    variant: HamiltonianVariant,
    config: PropagatorConfig,
    times: Sequence[float],
) -> list[SpinorField]:
    """Snapshots at the absolute ``times`` (strictly increasing, >= field.time)."""
    out = []
    current = field
    for t in times:
        if t < current.time:
            raise ValueError("times must be strictly increasing and not before the field time")
        current = evolve(current, params, variant, config, t - current.time)
        out.append(current)
    return out


def observables(field: SpinorField) -> dict:
    """Norms, first moments and overlap used by the convergence gate."""
    marg = marginals(field, check=False)
    out = {"overlap_re": overlap(field).real, "overlap_im": overlap(field).imag}
    for i, name in enumerate(("up", "down")):
        out[f"norm_{name}"] = float(np.sum(marg.position[i]) * marg.dz)
        out[f"z_{name}"] = float(np.sum(marg.z * marg.position[i]) * marg.dz)
        out[f"p_{name}"] = float(np.sum(marg.p * marg.momentum[i]) * marg.dp)
    return out


def convergence_gate(
    field: SpinorField,
    params: ModelParams,
    variant: HamiltonianVariant,
    config: PropagatorConfig,
    t_final: float,
    tol: float = 1e-8,
) -> dict:
    """Compare observables at ``dt`` and ``dt/2``; raise if they differ by ``>= tol``."""
    a = observables(evolve(field, params, variant, config, t_final))
    b = observables(evolve(field, params, variant, config.halved(), t_final))
    diffs = {key: abs(a[key] - b[key]) for key in a}
    worst = max(diffs.values())
    if worst >= tol:
        raise ConvergenceError(f"halving dt changed observables by {worst:.3e} >= {tol:g}")
    return diffs


# ---------------------------------------------------------------------------
# Density-matrix samples
# ---------------------------------------------------------------------------


def overlap(field: SpinorField) -> complex:
    """``<psi_down|psi_up> = integral conj(psi_down) psi_up dz``."""
    return complex(np.sum(np.conj(field.psi_down) * field.psi_up) * field.grid.dz)


def _shifted(psi: np.ndarray, grid: GridSpec, a: float) -> np.ndarray:
    """Band-limited ``psi(z + a)``."""
    if a == 0:
        return psi
    return np.fft.ifft(np.fft.fft(psi) * np.exp(1j * grid.k * a))


def numeric_partial_ft_sample(field: SpinorField, block: Block, Q: float, r: float) -> complex:
    """``integral exp(i Q R) psi_ket(R + r/2) conj(psi_bra(R - r/2)) dR``.

    Half-shifts ``r/2`` that fall between grid points use spectral (Fourier
    shift) interpolation.
    """
    grid = field.grid
    if abs(Q) > grid.k_max / 2:
        raise ValueError(f"Q={Q} outside resolvable band |Q| <= {grid.k_max / 2:g}")
    if abs(r) >= grid.length / 2:
        raise ValueError(f"r={r} outside the grid")
    ket = _shifted(field.branch(block.ket), grid, r / 2)
    bra = _shifted(field.branch(block.bra), grid, -r / 2)
    return complex(np.sum(np.exp(1j * Q * grid.z) * ket * np.conj(bra)) * grid.dz)


def _interpolate(psi: np.ndarray, grid: GridSpec, x) -> np.ndarray:
    """Trigonometric interpolant of ``psi`` at arbitrary points ``x``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    coef = np.fft.fft(psi) / grid.n_points
    return np.exp(1j * np.outer(x - grid.z_min, grid.k)) @ coef


def _spectrum_at(psi: np.ndarray, grid: GridSpec, k) -> np.ndarray:
    """``integral exp(-i k z) psi(z) dz`` at arbitrary wavenumbers."""
    k = np.atleast_1d(np.asarray(k, dtype=float))
    return np.exp(-1j * np.outer(k, grid.z)) @ psi * grid.dz


def numeric_position_rep_sample(field: SpinorField, block: Block, R, r) -> np.ndarray:
    """``psi_ket(R + r/2) conj(psi_bra(R - r/2))``."""
    R, r = np.broadcast_arrays(np.asarray(R, float), np.asarray(r, float))
    ket = _interpolate(field.branch(block.ket), field.grid, (R + r / 2).ravel())
    bra = _interpolate(field.branch(block.bra), field.grid, (R - r / 2).ravel())
    return (ket * np.conj(bra)).reshape(R.shape)


def numeric_momentum_rep_sample(field: SpinorField, block: Block, Q, q) -> np.ndarray:
    """``phi_ket(q - Q/2) conj(phi_bra(q + Q/2)) / 2pi``."""
    Q, q = np.broadcast_arrays(np.asarray(Q, float), np.asarray(q, float))
    ket = _spectrum_at(field.branch(block.ket), field.grid, (q - Q / 2).ravel())
    bra = _spectrum_at(field.branch(block.bra), field.grid, (q + Q / 2).ravel())
    return (ket * np.conj(bra) / (2 * np.pi)).reshape(Q.shape)


@dataclass(frozen=True)
class Marginals:
    """Per-branch position and momentum densities (row 0 up, row 1 down)."""

    z: np.ndarray
    p: np.ndarray
    position: np.ndarray
    momentum: np.ndarray
    dz: float
    dp: float


def _refined_branches(psi: np.ndarray, factor: int) -> np.ndarray:
    """Band-limited interpolation onto a grid ``factor`` times finer."""
    if factor == 1:
        return psi
    n = psi.shape[1]
    coeffs = np.fft.fft(psi, axis=1)
    padded = np.zeros((psi.shape[0], n * factor), dtype=complex)
    h = n // 2
    padded[:, :h] = coeffs[:, :h]
    padded[:, -h + 1:] = coeffs[:, -h + 1:]
    # split the Nyquist bin so the interpolant stays real for real input
    padded[:, h] = padded[:, -h] = coeffs[:, h] / 2
    return np.fft.ifft(padded, axis=1) * factor


def marginals(field: SpinorField, check: bool = True, tol: float = 1e-8, refine: int = 1) -> Marginals:
    """``|psi_s(z)|^2`` and ``|phi_s(p)|^2 / 2pi`` with ``p`` a wavenumber (ascending).

    ``refine > 1`` samples both densities ``refine`` times more finely:
    positions by band-limited interpolation, momenta by zero-padding the
    window (the exact transform of the same grid function).  Integrals of
    non-smooth functionals such as ``|rho_up - rho_down|`` converge much
    faster on the refined grids.
    """
    if refine < 1 or int(refine) != refine:
        raise ValueError("refine must be a positive integer")
    refine = int(refine)
    grid = field.grid
    psi = field.branches
    n = grid.n_points * refine
    dz, dp = grid.dz / refine, grid.dk / refine
    z = grid.z_min + dz * np.arange(n)
    pos = np.abs(_refined_branches(psi, refine)) ** 2
    amp = grid.dz * np.fft.fft(psi, n=n, axis=1)
    mom = np.fft.fftshift(np.abs(amp) ** 2 / (2 * np.pi), axes=1)
    p = np.fft.fftshift(2 * np.pi * np.fft.fftfreq(n, d=grid.dz))
    if check:
        for dens, h in ((pos, dz), (mom, dp)):
            norms = dens.sum(axis=1) * h
            if np.any(np.abs(norms - 1) > tol):
                raise ValueError(f"branch densities not normalized: {norms}")
    return Marginals(z, p, pos, mom, dz, dp)
