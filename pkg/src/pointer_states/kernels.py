"""Exact density-matrix kernels and their closed-form time evolution.

A kernel is a complex quadratic exponential in two variables multiplied by
at most two Dirac deltas of linear forms::

    exp(xx*x^2 + yy*y^2 + xy*x*y + x_*x + y_*y + c) * prod_i delta(kx_i*x + ky_i*y - c_i)

In the partial Fourier representation the variables are ``(Q, r)``.  All
flows are affine substitutions plus phases, so the class is closed under
them, and the transforms to ``(R, r)`` or ``(Q, q)`` are done with exact
complex Gaussian integrals or delta substitutions.
"""

from __future__ import annotations

import cmath
import json
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np

from .core import (
    Block,
    GaussianPacket,
    HamiltonianVariant,
    InitialApparatusState,
    ModelParams,
    MomentumEigenstate,
    PositionEigenstate,
    SpinBranch,
)

_EPS = 1e-14


class NotIntegrableError(ValueError):
    """The kernel cannot be transformed along the requested axis."""


@dataclass(frozen=True)
class QuadExpKernel:
    """``exp(xx x^2 + yy y^2 + xy x y + x_ x + y_ y + c)``."""

    xx: complex = 0j
    yy: complex = 0j
    xy: complex = 0j
    x_: complex = 0j
    y_: complex = 0j
    c: complex = 0j

    def __post_init__(self):
        for name in ("xx", "yy", "xy", "x_", "y_", "c"):
            value = complex(getattr(self, name))
            if not cmath.isfinite(value):
                raise ValueError(f"coefficient {name} is not finite")
            object.__setattr__(self, name, value)

    def exponent(self, x, y):
        return self.xx * x * x + self.yy * y * y + self.xy * x * y + self.x_ * x + self.y_ * y + self.c

    def __call__(self, x, y):
        return np.exp(self.exponent(x, y))

    @property
    def coefficients(self) -> tuple:
        return (self.xx, self.yy, self.xy, self.x_, self.y_, self.c)

    @property
    def is_bounded(self) -> bool:
        return self.xx.real <= _EPS and self.yy.real <= _EPS

    def substitute(self, u: float, v: float, w: float) -> "QuadExpKernel":
        """Kernel of ``(x, y) -> K(x + u, y + v*x + w)``."""
        A, B, C, D, E, F = self.coefficients
        return QuadExpKernel(
            xx=A + B * v * v + C * v,
            yy=B,
            xy=2 * B * v + C,
            x_=2 * A * u + 2 * B * v * w + C * (w + u * v) + D + E * v,
            y_=2 * B * w + C * u + E,
            c=A * u * u + B * w * w + C * u * w + D * u + E * w + F,
        )

    def times_phase(self, x_: complex = 0j, y_: complex = 0j, c: complex = 0j) -> "QuadExpKernel":
        return replace(self, x_=self.x_ + x_, y_=self.y_ + y_, c=self.c + c)

    def swapped(self) -> "QuadExpKernel":
        return QuadExpKernel(self.yy, self.xx, self.xy, self.y_, self.x_, self.c)


@dataclass(frozen=True)
class DeltaFactor:
    """``delta(kx*x + ky*y - c)`` with real coefficients."""

    kx: float
    ky: float
    c: float = 0.0

    def __post_init__(self):
        for name in ("kx", "ky", "c"):
            value = getattr(self, name)
            if isinstance(value, complex) or np.iscomplexobj(value):
                if abs(complex(value).imag) > _EPS:
                    raise ValueError("delta coefficients must be real")
                value = complex(value).real
            object.__setattr__(self, name, float(value))
        if self.kx == 0 and self.ky == 0:
            raise ValueError("delta factor needs a non-zero direction")

    def substitute(self, u: float, v: float, w: float) -> "DeltaFactor":
        return DeltaFactor(self.kx + self.ky * v, self.ky, self.c - self.kx * u - self.ky * w)

    def swapped(self) -> "DeltaFactor":
        return DeltaFactor(self.ky, self.kx, self.c)

    def residual(self, x, y):
        return self.kx * x + self.ky * y - self.c

    def canonical(self) -> "DeltaFactor":
        """Same distribution with the leading non-zero coefficient equal to 1."""
        lead = self.kx if self.kx != 0 else self.ky
        # delta(a*f) = delta(f)/|a|; the 1/|a| is returned separately by callers
        return DeltaFactor(self.kx / lead, self.ky / lead, self.c / lead)


@dataclass(frozen=True)
class AnalyticKernel:
    """Smooth quadratic exponential times 0, 1 or 2 delta factors."""

    smooth: QuadExpKernel = field(default_factory=QuadExpKernel)
    deltas: tuple = ()
    axes: tuple = ("Q", "r")
    provenance: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "deltas", tuple(self.deltas))
        object.__setattr__(self, "provenance", tuple(self.provenance))
        if len(self.deltas) > 2:
            raise ValueError("at most two delta factors are supported")
        if len(self.deltas) == 2:
            d1, d2 = self.deltas
            if abs(d1.kx * d2.ky - d1.ky * d2.kx) <= _EPS * max(1.0, abs(d1.kx * d2.ky)):
                raise ValueError("two delta factors must be linearly independent")

    # -- evaluation ---------------------------------------------------------

    def evaluate(self, x, y, smooth_only: bool = False):
        """Value of the smooth factor at ``(x, y)``.

        Kernels carrying delta factors are distributions; they are only
        evaluated when ``smooth_only`` is set explicitly.
        """
        if self.deltas and not smooth_only:
            raise ValueError("kernel contains delta factors; pass smooth_only=True")
        return self.smooth(x, y)

    def on_support(self, x, y, atol: float = 1e-12):
        ok = np.ones(np.broadcast(x, y).shape, dtype=bool)
        for d in self.deltas:
            ok &= np.abs(d.residual(x, y)) <= atol
        return ok

    # -- manipulation -------------------------------------------------------

    def substitute(self, u: float, v: float, w: float) -> "AnalyticKernel":
        return replace(
            self,
            smooth=self.smooth.substitute(u, v, w),
            deltas=tuple(d.substitute(u, v, w) for d in self.deltas),
        )

    def times_phase(self, x_=0j, y_=0j, c=0j) -> "AnalyticKernel":
        return replace(self, smooth=self.smooth.times_phase(x_, y_, c))

    def with_provenance(self, *steps: str) -> "AnalyticKernel":
        return replace(self, provenance=self.provenance + tuple(steps))

    def swapped(self) -> "AnalyticKernel":
        return replace(
            self,
            smooth=self.smooth.swapped(),
            deltas=tuple(d.swapped() for d in self.deltas),
            axes=(self.axes[1], self.axes[0]),
        )

    def reduced(self) -> "AnalyticKernel":
        """Substitute every single-variable delta into the smooth part.

        ``delta(x - a) f(x, y) == delta(x - a) f(a, y)``, so the result is the
        same distribution with a canonical smooth factor.  Useful for
        comparing kernels whose printed forms differ only off-support.
        """
        kern = self
        for d in self.deltas:
            if d.ky == 0:
                a = d.c / d.kx
                s = kern.smooth
                smooth = QuadExpKernel(0, s.yy, 0, 0, s.y_ + s.xy * a, s.c + s.xx * a * a + s.x_ * a)
                kern = replace(kern, smooth=smooth)
            elif d.kx == 0:
                b = d.c / d.ky
                s = kern.smooth
                smooth = QuadExpKernel(s.xx, 0, 0, s.x_ + s.xy * b, 0, s.c + s.yy * b * b + s.y_ * b)
                kern = replace(kern, smooth=smooth)
        deltas = []
        for d in kern.deltas:
            lead = d.kx if d.kx != 0 else d.ky
            deltas.append(d.canonical())
            kern = replace(kern, smooth=kern.smooth.times_phase(c=-math.log(abs(lead))))
        return replace(kern, deltas=tuple(deltas))

    # -- serialization ------------------------------------------------------

    def to_record(self) -> dict:
        names = ("xx", "yy", "xy", "x", "y", "c")
        return {
            "axes": list(self.axes),
            "coefficients": {n: [_round(v.real), _round(v.imag)] for n, v in zip(names, self.smooth.coefficients)},
            "deltas": [{"kx": _round(d.kx), "ky": _round(d.ky), "c": _round(d.c)} for d in self.deltas],
            "provenance": list(self.provenance),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_record(), sort_keys=True, indent=2)

    @classmethod
    def from_record(cls, record: dict) -> "AnalyticKernel":
        co = record["coefficients"]
        smooth = QuadExpKernel(*(complex(*co[n]) for n in ("xx", "yy", "xy", "x", "y", "c")))
        deltas = tuple(DeltaFactor(d["kx"], d["ky"], d["c"]) for d in record.get("deltas", []))
        return cls(smooth, deltas, tuple(record.get("axes", ("Q", "r"))), tuple(record.get("provenance", ())))

    @classmethod
    def from_json(cls, text: str) -> "AnalyticKernel":
        return cls.from_record(json.loads(text))


def _round(value: float) -> float:
    """Round to 12 significant digits for byte-stable output."""
    value = float(value)
    if value == 0 or not math.isfinite(value):
        return 0.0 if value == 0 else value
    return float(f"{value:.11e}")


# ---------------------------------------------------------------------------
# Initial kernels
# ---------------------------------------------------------------------------


def initial_kernel(state: InitialApparatusState) -> AnalyticKernel:
    """Initial density matrix in the partial Fourier representation."""
    if isinstance(state, GaussianPacket):
        s2 = state.sigma ** 2
        smooth = QuadExpKernel(xx=-s2 / 4, yy=-1 / (4 * s2))
        return AnalyticKernel(smooth, (), provenance=(f"initial:gaussian(sigma={state.sigma:g})",))
    if isinstance(state, MomentumEigenstate):
        smooth = QuadExpKernel(y_=1j * state.k)
        return AnalyticKernel(smooth, (DeltaFactor(1.0, 0.0, 0.0),), provenance=(f"initial:momentum(k={state.k:g})",))
    if isinstance(state, PositionEigenstate):
        smooth = QuadExpKernel(x_=1j * state.z0)
        return AnalyticKernel(smooth, (DeltaFactor(0.0, 1.0, 0.0),), provenance=(f"initial:position(z0={state.z0:g})",))
    raise TypeError(f"unknown initial state {state!r}")


# ---------------------------------------------------------------------------
# Flows
# ---------------------------------------------------------------------------


def _check_axes(kernel: AnalyticKernel):
    if kernel.axes != ("Q", "r"):
        raise ValueError(f"flows act on (Q, r) kernels, got axes {kernel.axes}")


def flow_diagonal(
    kernel: AnalyticKernel,
    params: ModelParams,
    branch: SpinBranch,
    t: float,
    variant: HamiltonianVariant = HamiltonianVariant.FULL,
) -> AnalyticKernel:
    """Evolve a spin-diagonal block for a time ``t``.

    Full:  ``rho(Q, r + hbar Q t/m) exp(-s i eps r t/hbar - s i eps Q t^2/2m)``
    Interaction only: ``rho(Q, r) exp(-s i eps r t/hbar)``

    with ``s = branch.sign``.
    """
    _check_axes(kernel)
    hbar, m, eps = params.hbar, params.mass, params.epsilon
    s = branch.sign
    if variant is HamiltonianVariant.FULL:
        out = kernel.substitute(0.0, hbar * t / m, 0.0)
        out = out.times_phase(x_=-1j * s * eps * t * t / (2 * m), y_=-1j * s * eps * t / hbar)
    else:
        out = kernel.times_phase(y_=-1j * s * eps * t / hbar)
    return out.with_provenance(f"flow:diagonal({branch.value},{variant.value},t={t:g})")


def flow_offdiagonal(
    kernel: AnalyticKernel,
    params: ModelParams,
    sign: int,
    t: float,
    variant: HamiltonianVariant = HamiltonianVariant.FULL,
) -> AnalyticKernel:
    """Evolve a spin-off-diagonal block for a time ``t``.

    Full: ``exp(sign 2i lam t/hbar) rho(Q + sign 2 eps t/hbar, r + hbar Q t/m + sign eps t^2/m)``
    Interaction only: the same without the ``hbar Q t/m`` and ``eps t^2/m`` shifts.

    ``sign = -1`` evolves ``rho_{up,down}``, ``sign = +1`` evolves
    ``rho_{down,up}`` (see :attr:`Block.offdiagonal_sign`).  The ``lam``
    phase is kept in both variants; set ``lam = 0`` for the bare
    ``eps*sz*z`` coupling.
    """
    _check_axes(kernel)
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    hbar, m, eps, lam = params.hbar, params.mass, params.epsilon, params.lam
    if variant is HamiltonianVariant.FULL:
        out = kernel.substitute(sign * 2 * eps * t / hbar, hbar * t / m, sign * eps * t * t / m)
    else:
        out = kernel.substitute(sign * 2 * eps * t / hbar, 0.0, 0.0)
    out = out.times_phase(c=sign * 2j * lam * t / hbar)
    return out.with_provenance(f"flow:offdiagonal({sign:+d},{variant.value},t={t:g})")


def flow_block(kernel, params, block: Block, t, variant=HamiltonianVariant.FULL) -> AnalyticKernel:
    if block.is_diagonal:
        return flow_diagonal(kernel, params, block.ket, t, variant)
    return flow_offdiagonal(kernel, params, block.offdiagonal_sign, t, variant)


# ---------------------------------------------------------------------------
# Representation transforms
# ---------------------------------------------------------------------------


def _integrate_first(kernel: AnalyticKernel, new_axis: str) -> AnalyticKernel:
    """``(1/2pi) integral exp(-i X x) K(x, y) dx`` as a kernel in ``(X, y)``."""
    s = kernel.smooth
    A, B, C, D, E, F = s.coefficients
    deltas = list(kernel.deltas)
    axes = (new_axis, kernel.axes[1])

    # a delta that involves x collapses the integral
    for i, d in enumerate(deltas):
        if d.kx != 0:
            alpha, beta = d.c / d.kx, -d.ky / d.kx
            smooth = QuadExpKernel(
                xx=0,
                yy=A * beta * beta + B + C * beta,
                xy=-1j * beta,
                x_=-1j * alpha,
                y_=2 * A * alpha * beta + C * alpha + D * beta + E,
                c=A * alpha * alpha + D * alpha + F - math.log(2 * math.pi * abs(d.kx)),
            )
            rest = []
            for j, other in enumerate(deltas):
                if j == i:
                    continue
                ky = other.kx * beta + other.ky
                cc = other.c - other.kx * alpha
                if abs(ky) <= _EPS:
                    raise NotIntegrableError("delta factors are degenerate after substitution")
                rest.append(DeltaFactor(0.0, ky, cc))
            return AnalyticKernel(smooth, tuple(rest), axes, kernel.provenance)

    if A.real < -_EPS:
        pref = cmath.sqrt(math.pi / (-A)) / (2 * math.pi)
        smooth = QuadExpKernel(
            xx=1 / (4 * A),
            yy=B - C * C / (4 * A),
            xy=1j * C / (2 * A),
            x_=1j * D / (2 * A),
            y_=E - C * D / (2 * A),
            c=F - D * D / (4 * A) + cmath.log(pref),
        )
        return AnalyticKernel(smooth, tuple(deltas), axes, kernel.provenance)

    if abs(A) <= _EPS and abs(C.real) <= _EPS and abs(D.real) <= _EPS:
        # integral of a pure phase: 2 pi delta(X - Im(C) y - Im(D))
        smooth = QuadExpKernel(yy=B, y_=E, c=F)
        new = DeltaFactor(1.0, -C.imag, D.imag)
        return AnalyticKernel(smooth, tuple(deltas) + (new,), axes, kernel.provenance)

    raise NotIntegrableError(
        f"kernel is not integrable along {kernel.axes[0]} (quadratic coefficient {A!r}, no delta)"
    )


def to_position_rep(kernel: AnalyticKernel) -> AnalyticKernel:
    """``rho(R, r) = (1/2pi) integral exp(-i Q R) rho(Q, r) dQ``."""
    _check_axes(kernel)
    return _integrate_first(kernel, "R").with_provenance("rep:position")


def to_momentum_rep(kernel: AnalyticKernel) -> AnalyticKernel:
    """``rho(Q, q) = (1/2pi) integral exp(-i q r) rho(Q, r) dr``.

    ``q`` is a physical wavenumber; for a density built from branch
    wavefunctions this equals ``phi_ket(q - Q/2) conj(phi_bra(q + Q/2)) / 2pi``
    where ``phi(k) = integral exp(-i k z) psi(z) dz``.
    """
    _check_axes(kernel)
    return _integrate_first(kernel.swapped(), "q").swapped().with_provenance("rep:momentum")


# ---------------------------------------------------------------------------
# Closed-form diagnostics
# ---------------------------------------------------------------------------


def separations(params: ModelParams, t: float) -> tuple[float, float]:
    """Pointer separations ``(eps t^2/m, 2 eps t/hbar)`` (absolute values)."""
    if t < 0:
        raise ValueError("t must be non-negative")
    eps = abs(params.epsilon)
    return eps * t * t / params.mass, 2 * eps * t / params.hbar


def coherence_factor(
    sigma: float,
    params: ModelParams,
    t: float,
    variant: HamiltonianVariant = HamiltonianVariant.FULL,
) -> float:
    """Magnitude of the off-diagonal block at ``Q = r = 0`` for a Gaussian packet."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    dz, dp = separations(params, t)
    if variant is HamiltonianVariant.FULL:
        return math.exp(-dz * dz / (4 * sigma * sigma) - sigma * sigma * dp * dp / 4)
    return math.exp(-sigma * sigma * dp * dp / 4)


# ---------------------------------------------------------------------------
# Catalog
# ---------------------------------------------------------------------------

REPRESENTATIONS = ("partial_ft", "position", "momentum")


def catalog_closed_form(
    state: InitialApparatusState,
    variant: HamiltonianVariant,
    rep: str,
    element: Union[Block, SpinBranch, int],
    t: float,
    params: Optional[ModelParams] = None,
) -> AnalyticKernel:
    """Compose initial kernel, flow and representation transform.

    ``element`` is a :class:`Block`, a :class:`SpinBranch` (diagonal block)
    or an off-diagonal sign ``+1``/``-1``.
    """
    params = params or ModelParams()
    if rep not in REPRESENTATIONS:
        raise ValueError(f"rep must be one of {REPRESENTATIONS}")
    if t < 0:
        raise ValueError("t must be non-negative")
    k0 = initial_kernel(state)
    if isinstance(element, Block):
        kern = flow_block(k0, params, element, t, variant)
    elif isinstance(element, SpinBranch):
        kern = flow_diagonal(k0, params, element, t, variant)
    elif element in (1, -1):
        kern = flow_offdiagonal(k0, params, int(element), t, variant)
    else:
        raise ValueError(f"invalid element {element!r}")
    if rep == "position":
        return to_position_rep(kern)
    if rep == "momentum":
        return to_momentum_rep(kern)
    return kern


def gaussian_block_kernels(sigma: float, params: ModelParams, t: float, variant: HamiltonianVariant) -> dict:
    """All four partial-FT blocks for a Gaussian packet at time ``t``."""
    state = GaussianPacket(sigma)
    return {b: catalog_closed_form(state, variant, "partial_ft", b, t, params) for b in Block}


def slice_moments(kernel: AnalyticKernel, axis: str) -> tuple[float, float, float]:
    """Mean, standard deviation and norm of a Gaussian diagonal slice.

    For a position-representation kernel (``axis='R'``) the slice is
    ``rho(R, r=0)``; for a momentum one (``axis='q'``) it is ``rho(Q=0, q)``.
    """
    if kernel.deltas:
        raise ValueError("slice of a delta-carrying kernel is not a density")
    s = kernel.smooth
    if axis == "R" and kernel.axes[0] == "R":
        a, b, c = s.xx, s.x_, s.c
    elif axis == "q" and kernel.axes[1] == "q":
        a, b, c = s.yy, s.y_, s.c
    else:
        raise ValueError(f"axis {axis!r} not in kernel axes {kernel.axes}")
    scale = max(1.0, abs(a), abs(b))
    if abs(a.imag) > 1e-10 * scale or abs(b.imag) > 1e-10 * scale:
        raise ValueError("diagonal slice is not a real Gaussian")
    a, b = a.real, b.real
    if not a < 0:
        raise ValueError("degenerate (non-normalizable) slice")
    mean = -b / (2 * a)
    std = math.sqrt(-1 / (2 * a))
    norm = abs(cmath.exp(c - b * b / (4 * a))) * math.sqrt(math.pi / -a)
    return mean, std, norm
