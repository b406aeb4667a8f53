"""Pointer-state formation in a spin-1/2 Stern-Gerlach measurement model.

Two independent routes to the same density matrix:

* :mod:`pointer_states.kernels` - exact Gaussian/delta kernels and their
  closed-form flows in the partial Fourier representation;
* :mod:`pointer_states.propagator` - split-step / exact linear-potential
  propagation of the two spin branches on a periodic grid.

:mod:`pointer_states.diagnostics` turns either into correlation verdicts.
"""

from .core import (
    Block,
    BoundaryError,
    CompositeDensity,
    ConvergenceError,
    GaussianPacket,
    GridSpec,
    HamiltonianVariant,
    ModelParams,
    MomentumEigenstate,
    NormalizationError,
    NumericalGuardError,
    PhaseSpaceVars,
    PositionEigenstate,
    SpinAmplitudes,
    SpinBranch,
    expectation,
    partial_ft_forward,
    partial_ft_inverse,
)
from .diagnostics import (
    CorrelationReport,
    classify_preferred_state,
    correlation_report,
    spin_reduced_density,
)
from .kernels import (
    AnalyticKernel,
    DeltaFactor,
    QuadExpKernel,
    catalog_closed_form,
    coherence_factor,
    flow_diagonal,
    flow_offdiagonal,
    initial_kernel,
    separations,
    to_momentum_rep,
    to_position_rep,
)
from .propagator import (
    PropagatorConfig,
    PropagatorMode,
    SpinorField,
    evolve,
    init_field,
    marginals,
    numeric_partial_ft_sample,
    overlap,
)

__version__ = "0.1.0"

__all__ = [
    "AnalyticKernel",
    "Block",
    "BoundaryError",
    "catalog_closed_form",
    "classify_preferred_state",
    "coherence_factor",
    "CompositeDensity",
    "ConvergenceError",
    "correlation_report",
    "CorrelationReport",
    "DeltaFactor",
    "evolve",
    "expectation",
    "flow_diagonal",
    "flow_offdiagonal",
    "GaussianPacket",
    "GridSpec",
    "HamiltonianVariant",
    "init_field",
    "initial_kernel",
    "marginals",
    "ModelParams",
    "MomentumEigenstate",
    "NormalizationError",
    "numeric_partial_ft_sample",
    "NumericalGuardError",
    "overlap",
    "partial_ft_forward",
    "partial_ft_inverse",
    "PhaseSpaceVars",
    "PositionEigenstate",
    "PropagatorConfig",
    "PropagatorMode",
    "QuadExpKernel",
    "separations",
    "spin_reduced_density",
    "SpinAmplitudes",
    "SpinBranch",
    "SpinorField",
    "to_momentum_rep",
    "to_position_rep",
]
