"""Large-deviations rate functions of empirical measures and flows of
finite continuous-time Markov chains.

The rate of an occupation measure is computed two independent ways: as the
infimum of a joint divergence over circulations (solved per mutual-
reachability class) and as the supremum of the Donsker-Varadhan objective
over potentials, with a Fenchel-dual route and a Gillespie Monte Carlo
harness for cross-checking.
"""

from .chain import (
    ChainSpec,
    EdgeFunction,
    Flow,
    ProbabilityMeasure,
    VertexFunction,
    apply_generator,
    divergence,
    is_reversible,
    mu_flow,
    stationary_distribution,
    tilted_exit_rate,
    total_exit_rate,
)
from .config import DEFAULT_TOLERANCES, Tolerances
from .errors import (
    ConvergenceError,
    DivergenceError,
    DvrateError,
    InputFormatError,
    NotReversibleError,
    OverflowGuardError,
    PathDependenceError,
    SizeError,
    UnknownStateError,
    ValidationError,
)
from .fenchel import (
    FenchelResult,
    duality_check,
    legendre_phi_star,
    legendre_psi_star,
)
from .fileio import (
    flow_to_jsonable,
    load_chain,
    load_flow,
    load_measure,
    measure_to_jsonable,
    rate_to_jsonable,
    vertex_function_to_jsonable,
)
from .functionals import (
    INFINITY,
    ExtendedReal,
    dv_objective,
    joint_rate,
    perturbed_rate,
    phi,
    phi_edge_sum,
    reversible_optimal_flow,
    reversible_rate,
)
from .graphs import (
    ClassPartition,
    CondensationGraph,
    CycleDecomposition,
    GradientCheck,
    GradientWitness,
    SupportGraph,
    condensation,
    cycle_decomposition,
    f_star,
    fundamental_cycle_basis,
    gradient,
    is_gradient,
    mutual_reachability_classes,
    path_integral,
    support_graph,
    witness_flow,
)
from .montecarlo import (
    RNG_ALGORITHM,
    EmpiricalPair,
    EventEstimate,
    HalfSpaceEvent,
    SlopeEstimate,
    TiltedRun,
    Trajectory,
    closed_empirical_pair,
    empirical_pair,
    estimate_event_probability,
    estimate_ldp_slope,
    simulate,
    tilted_chain,
    tilted_simulate,
)
from .solver import (
    APPROX_LEVELS,
    ApproximatingSequence,
    ContractionResult,
    DvSupResult,
    build_approximating_sequence,
    construct_class_potential,
    dv_sup,
    minimize_flow,
    mixed_measure_rate,
)

__version__ = "0.1.0"

__all__ = [
    "APPROX_LEVELS",
    "ApproximatingSequence",
    "ChainSpec",
    "ClassPartition",
    "CondensationGraph",
    "ContractionResult",
    "ConvergenceError",
    "CycleDecomposition",
    "DEFAULT_TOLERANCES",
    "DivergenceError",
    "DvrateError",
    "DvSupResult",
    "EdgeFunction",
    "EmpiricalPair",
    "EventEstimate",
    "ExtendedReal",
    "FenchelResult",
    "Flow",
    "GradientCheck",
    "GradientWitness",
    "HalfSpaceEvent",
    "INFINITY",
    "InputFormatError",
    "NotReversibleError",
    "OverflowGuardError",
    "PathDependenceError",
    "ProbabilityMeasure",
    "RNG_ALGORITHM",
    "SizeError",
    "SlopeEstimate",
    "SupportGraph",
    "TiltedRun",
    "Tolerances",
    "Trajectory",
    "UnknownStateError",
    "ValidationError",
    "VertexFunction",
    "apply_generator",
    "build_approximating_sequence",
    "closed_empirical_pair",
    "condensation",
    "construct_class_potential",
    "cycle_decomposition",
    "divergence",
    "duality_check",
    "dv_objective",
    "dv_sup",
    "empirical_pair",
    "estimate_event_probability",
    "estimate_ldp_slope",
    "f_star",
    "flow_to_jsonable",
    "fundamental_cycle_basis",
    "gradient",
    "is_gradient",
    "is_reversible",
    "joint_rate",
    "legendre_phi_star",
    "legendre_psi_star",
    "load_chain",
    "load_flow",
    "load_measure",
    "measure_to_jsonable",
    "minimize_flow",
    "mixed_measure_rate",
    "mu_flow",
    "mutual_reachability_classes",
    "path_integral",
    "perturbed_rate",
    "phi",
    "phi_edge_sum",
    "rate_to_jsonable",
    "reversible_optimal_flow",
    "reversible_rate",
    "simulate",
    "stationary_distribution",
    "support_graph",
    "tilted_chain",
    "tilted_exit_rate",
    "tilted_simulate",
    "total_exit_rate",
    "vertex_function_to_jsonable",
    "witness_flow",
]
