"""Coherent-state path-integral propagators on a split phase space.

Desk-scale machinery for checking that classical delta-projection,
Lagrange-multiplier extension, and physical-subspace (Dirac) imposition
of first-class constraints p_i = 0 all land on the reduced-phase-space
propagator — with every route cross-checked against independent
brute-force oracles.
"""

__version__ = "0.1.0"

from .errors import (
    BudgetError,
    DimensionMismatchError,
    OperatorFormatError,
    PreconditionError,
    TruncationError,
)
from .states import (
    FiducialSpec,
    Label,
    ModeSpace,
    PhaseSpaceMeasure,
    coherent_wavefunction,
    fiducial_moment,
    log_overlap,
    overlap,
    resolution_residual,
)
from .quadrature import AxisSpec, QuadratureGrid, tree_sum
from .operators import (
    PolynomialOperator,
    commutator,
    free_particle,
    harmonic_oscillator,
    identity,
    ladder_term,
    momentum,
    number_op,
    position,
)
from .symbols import (
    SymbolFn,
    label_alphas,
    lower_symbol,
    lower_symbol_fn,
    symbol_gap,
    transition_symbol,
    upper_from_lower,
    upper_symbol,
    upper_symbol_fn,
)
from .oracle import (
    FockResult,
    QuadResult,
    brute_quadrature,
    coherent_fock_vector,
    fock_propagator,
    gaussian_moment,
    operator_fock_matrix,
)
from .lattice import (
    ConvergenceStudy,
    LatticeConfig,
    PropagatorResult,
    convergence_study,
    propagator_gaussian_chain,
    propagator_quadrature,
    short_time_kernel,
)
from .wiener import (
    BridgePath,
    MetricSpec,
    WienerConfig,
    brownian_bridge_covariance,
    chapman_kolmogorov_residual,
    heat_kernel,
    regularized_propagator_mc,
    regularized_propagator_quadrature,
    sample_pinned_bridge,
    sample_pinned_bridges,
)
from .constraints import (
    ConstraintSpec,
    DiracResult,
    EquivalenceReport,
    ExtendedPath,
    HcrValue,
    ReducedSystem,
    RouteResult,
    constrained_state_moments,
    dirac_physical_matrix_element,
    equivalence_report,
    extended_lattice_propagator,
    lambda_effective_weight,
    projected_lattice_propagator,
    reduced_symbol_Hcr,
    saddle_concentration_check,
)
from .opspec import parse_operator, serialize_operator
