"""Shared domain types, grids and density-matrix helpers.

Conventions used throughout the package
---------------------------------------
* Spin up carries the potential ``+lambda + epsilon*z`` and spin down
  ``-lambda - epsilon*z``.  ``SpinBranch.UP.sign == +1``.
* The partial Fourier transform of a density matrix uses the forward kernel
  ``exp(+i Q R)``::

      rho(Q, r) = integral exp(i Q R) rho(R + r/2, R - r/2) dR

* Wavefunctions are analysed in momentum space with ``exp(-i k z)`` so that
  momentum centres are physical wavenumbers (``p = hbar * k``).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Union

import numpy as np


class GridError(ValueError):
    """Raised for malformed or non-uniform grids."""


class NormalizationError(ValueError):
    """Raised when a density that must be normalized is not."""

    def __init__(self, norm: float, tol: float):
        self.norm = norm
        super().__init__(f"density not normalized: norm = {norm:.12g} (tolerance {tol:g})")


class NumericalGuardError(RuntimeError):
    """A numerical guard (boundary, band edge, convergence) tripped."""


class BoundaryError(NumericalGuardError):
    pass


class ConvergenceError(NumericalGuardError):
    pass


# ---------------------------------------------------------------------------
# Parameters and labels
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ModelParams:
    """Physical constants of ``H = lam*sz + p^2/2m + eps*z*sz``."""

    lam: float = 0.0
    epsilon: float = 1.0
    mass: float = 1.0
    hbar: float = 1.0

    def __post_init__(self):
        for name in ("lam", "epsilon", "mass", "hbar"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.mass <= 0:
            raise ValueError("mass must be positive")
        if self.hbar <= 0:
            raise ValueError("hbar must be positive")


@dataclass(frozen=True)
class SpinAmplitudes:
    a: complex = 1 / math.sqrt(2)
    b: complex = 1 / math.sqrt(2)

    def __post_init__(self):
        object.__setattr__(self, "a", complex(self.a))
        object.__setattr__(self, "b", complex(self.b))
        norm = abs(self.a) ** 2 + abs(self.b) ** 2
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"|a|^2 + |b|^2 = {norm!r}, expected 1")


class SpinBranch(enum.Enum):
    """Spin branch.  ``UP`` takes the upper sign of every ``-/+`` pair in the
    diagonal flows (potential ``+eps*z``)."""

    UP = "up"
    DOWN = "down"

    @property
    def sign(self) -> int:
        return 1 if self is SpinBranch.UP else -1


class Block(enum.Enum):
    """Spin block ``rho_{ket,bra}`` of the composite density matrix."""

    UP_UP = "uu"
    DOWN_DOWN = "dd"
    UP_DOWN = "ud"
    DOWN_UP = "du"

    @property
    def ket(self) -> SpinBranch:
        return SpinBranch.UP if self.value[0] == "u" else SpinBranch.DOWN

    @property
    def bra(self) -> SpinBranch:
        return SpinBranch.UP if self.value[1] == "u" else SpinBranch.DOWN

    @property
    def is_diagonal(self) -> bool:
        return self.ket is self.bra

    @property
    def offdiagonal_sign(self) -> int:
        """Sign used by :func:`pointer_states.kernels.flow_offdiagonal`.

        It equals the sign of the bra branch: ``UP_DOWN -> -1``,
        ``DOWN_UP -> +1``.
        """
        if self.is_diagonal:
            raise ValueError(f"{self} is a diagonal block")
        return self.bra.sign


class HamiltonianVariant(enum.Enum):
    FULL = "full"
    INTERACTION_ONLY = "interaction_only"


# ---------------------------------------------------------------------------
# Initial apparatus states
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MomentumEigenstate:
    k: float = 0.0

    label = "momentum_eigenstate"


@dataclass(frozen=True)
class PositionEigenstate:
    z0: float = 0.0

    label = "position_eigenstate"


@dataclass(frozen=True)
class GaussianPacket:
    sigma: float = 1.0

    label = "gaussian"

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")


InitialApparatusState = Union[MomentumEigenstate, PositionEigenstate, GaussianPacket]


# ---------------------------------------------------------------------------
# Grids
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridSpec:
    """Periodic position grid ``z_j = center - length/2 + j*dz``."""

    n_points: int = 4096
    length: float = 80.0
    center: float = 0.0

    def __post_init__(self):
        n = int(self.n_points)
        if n != self.n_points or n < 256 or n & (n - 1):
            raise GridError(f"n_points must be a power of two >= 256, got {self.n_points}")
        if not self.length > 0:
            raise GridError("length must be positive")

    @property
    def dz(self) -> float:
        return self.length / self.n_points

    @property
    def dk(self) -> float:
        return 2 * np.pi / self.length

    @property
    def k_max(self) -> float:
        return np.pi / self.dz

    @property
    def z_min(self) -> float:
        return self.center - self.length / 2

    @property
    def z_max(self) -> float:
        return self.center + self.length / 2 - self.dz

    @property
    def z(self) -> np.ndarray:
        return self.z_min + self.dz * np.arange(self.n_points)

    @property
    def k(self) -> np.ndarray:
        """Wavenumbers in FFT order."""
        return 2 * np.pi * np.fft.fftfreq(self.n_points, d=self.dz)


def _uniform_spacing(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size < 2:
        raise GridError("grid must be a 1-D array with at least two points")
    d = np.diff(x)
    h = d.mean()
    if h <= 0 or not np.allclose(d, h, rtol=1e-9, atol=0.0):
        raise GridError("grid is not uniform")
    return float(h)


# ---------------------------------------------------------------------------
# Variable maps
# ---------------------------------------------------------------------------


def position_vars(z, zp):
    """``(z, z') -> (R, r)`` with ``R = (z+z')/2`` and ``r = z - z'``."""
    return (z + zp) / 2, z - zp


def position_pairs(R, r):
    return R + r / 2, R - r / 2


def momentum_vars(p, pp):
    """``(p, p') -> (Q, q)`` with ``Q = p - p'`` and ``q = (p+p')/2``."""
    return p - pp, (p + pp) / 2


def momentum_pairs(Q, q):
    return q + Q / 2, q - Q / 2


@dataclass(frozen=True)
class PhaseSpaceVars:
    R: float
    r: float
    Q: float
    q: float

    @classmethod
    def from_pairs(cls, z, zp, p=0.0, pp=0.0) -> "PhaseSpaceVars":
        R, r = position_vars(z, zp)
        Q, q = momentum_vars(p, pp)
        return cls(R, r, Q, q)

    def to_pairs(self):
        z, zp = position_pairs(self.R, self.r)
        p, pp = momentum_pairs(self.Q, self.q)
        return z, zp, p, pp


# ---------------------------------------------------------------------------
# Partial Fourier transform and expectation values
# ---------------------------------------------------------------------------


def partial_ft_forward(rho_Rr, R, axis: int = 0):
    """Discrete version of ``integral exp(i Q R) rho(R, r) dR``.

    Parameters
    ----------
    rho_Rr : array_like
        Samples with the ``R`` coordinate along ``axis``; any other axes
        (typically ``r``) are transformed independently.
    R : array_like
        Uniform ``R`` grid.

    Returns
    -------
    Q : ndarray
        Ascending wavenumber grid.
    rho_Qr : ndarray
        Transformed samples, ``Q`` along ``axis``.
    """
    dR = _uniform_spacing(R)
    rho = np.moveaxis(np.asarray(rho_Rr, dtype=complex), axis, -1)
    n = rho.shape[-1]
    if n != len(R):
        raise GridError("R grid does not match the transformed axis")
    Q = 2 * np.pi * np.fft.fftfreq(n, d=dR)
    out = dR * n * np.fft.ifft(rho, axis=-1) * np.exp(1j * Q * R[0])
    out = np.fft.fftshift(out, axes=-1)
    return np.fft.fftshift(Q), np.moveaxis(out, -1, axis)


def partial_ft_inverse(rho_Qr, R, axis: int = 0):
    """Exact inverse of :func:`partial_ft_forward` on the same ``R`` grid."""
    dR = _uniform_spacing(R)
    F = np.moveaxis(np.asarray(rho_Qr, dtype=complex), axis, -1)
    n = F.shape[-1]
    F = np.fft.ifftshift(F, axes=-1)
    Q = 2 * np.pi * np.fft.fftfreq(n, d=dR)
    out = np.fft.fft(F * np.exp(-1j * Q * R[0]), axis=-1) / (n * dR)
    return np.moveaxis(out, -1, axis)


def expectation(rho_diag, x, observable: Union[np.ndarray, Callable], tol: float = 1e-8) -> float:
    """``integral A(x) rho(x, x) dx`` on a uniform grid.

    Raises :class:`NormalizationError` if ``rho_diag`` does not integrate to
    one within ``tol``.
    """
    dx = _uniform_spacing(x)
    rho = np.asarray(rho_diag, dtype=float)
    norm = float(rho.sum() * dx)
    if abs(norm - 1.0) > tol:
        raise NormalizationError(norm, tol)
    values = observable(np.asarray(x)) if callable(observable) else np.asarray(observable)
    values = np.broadcast_to(values, rho.shape)
    return float(np.sum(values * rho) * dx)


# ---------------------------------------------------------------------------
# Composite (spin x apparatus) density
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BranchOuterProduct:
    """Lazy ``psi_ket(z) conj(psi_bra(z'))`` on a grid."""

    ket: np.ndarray
    bra: np.ndarray
    dz: float

    def matrix(self, rows=slice(None), cols=slice(None)) -> np.ndarray:
        return np.outer(self.ket[rows], np.conj(self.bra[cols]))

    def trace(self) -> complex:
        return complex(np.sum(self.ket * np.conj(self.bra)) * self.dz)


@dataclass(frozen=True)
class CompositeDensity:
    """Spin-block structure ``sum_{s,s'} c_{ss'} |s><s'| (x) rho_{ss'}``.

    ``blocks`` maps each :class:`Block` to either a
    :class:`BranchOuterProduct` (numeric path) or an analytic kernel in the
    partial Fourier representation (analytic path).
    """

    amplitudes: SpinAmplitudes
    blocks: Mapping[Block, object] = field(default_factory=dict)

    @classmethod
    def from_branches(cls, amplitudes: SpinAmplitudes, psi_up, psi_down, dz: float):
        up = np.asarray(psi_up, dtype=complex)
        down = np.asarray(psi_down, dtype=complex)
        branch = {SpinBranch.UP: up, SpinBranch.DOWN: down}
        blocks = {b: BranchOuterProduct(branch[b.ket], branch[b.bra], dz) for b in Block}
        return cls(amplitudes, blocks)

    @classmethod
    def from_kernels(cls, amplitudes: SpinAmplitudes, kernels: Mapping[Block, object]):
        missing = set(Block) - set(kernels)
        if missing:
            raise ValueError(f"missing blocks: {sorted(b.value for b in missing)}")
        return cls(amplitudes, dict(kernels))

    def weight(self, block: Block) -> complex:
        a, b = self.amplitudes.a, self.amplitudes.b
        return {
            Block.UP_UP: abs(a) ** 2,
            Block.DOWN_DOWN: abs(b) ** 2,
            Block.UP_DOWN: a * np.conj(b),
            Block.DOWN_UP: np.conj(a) * b,
        }[block]

    def block_trace(self, block: Block) -> complex:
        item = self.blocks[block]
        if isinstance(item, BranchOuterProduct):
            return item.trace()
        # analytic kernels: the trace is the value at Q = r = 0
        return complex(item.evaluate(0.0, 0.0))

    def spin_populations(self) -> tuple[float, float]:
        up = self.weight(Block.UP_UP) * self.block_trace(Block.UP_UP)
        down = self.weight(Block.DOWN_DOWN) * self.block_trace(Block.DOWN_DOWN)
        return float(np.real(up)), float(np.real(down))
