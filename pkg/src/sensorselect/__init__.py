"""Observability-based sensor selection for LTI traffic-network models."""

from .errors import (
    BudgetExceeded,
    DimensionMismatch,
    InvalidArgument,
    InvalidMatrix,
    InvalidNetwork,
    NoConvergence,
    SensorSelectError,
    UndetectablePair,
    UnstableSystem,
)
from .numkernel import (
    Tolerance,
    eig_symmetric,
    numeric_rank,
    solve_discrete_lyapunov,
    solve_discrete_riccati,
    spectral_radius,
)
from .observability import (
    GramianBundle,
    GramianMetric,
    SubsetScorer,
    evaluate_metric,
    gramian_finite,
    gramian_infinite,
    observability_matrix,
    parse_metric,
)
from .observer import EstimationRun, ObserverDesign, design_observer, run_estimator
from .selection import (
    SelectionProblem,
    SelectionResult,
    SensorSelection,
    is_detectable,
    is_observable,
    select_exhaustive,
    select_greedy,
    select_random,
)
from .sysmodel import (
    LtiSystem,
    RoadNetwork,
    Trajectory,
    compile_network,
    load_network,
    load_raw_system,
    output_energy,
    simulate,
    synthetic_grid,
)

__version__ = "0.1.0"
