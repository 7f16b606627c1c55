"""Joint laws of marked split events in multi-type Markov branching processes.

Analytic route: generating-function flow (RK4), fixed-point roots, and
criticality classification.  Stochastic route: exact event-by-event chain
simulation with deterministic, seed-split replica streams.  The two routes
cross-validate each other throughout the test suite.
"""

from .errors import (
    ConvergenceError,
    HorizonCapError,
    MtbranchError,
    SimulationError,
    SpecError,
    StepSizeError,
)
from .model import (
    Criticality,
    CriticalityClass,
    MarkAssignment,
    MarkedSets,
    MeanMatrix,
    OffspringVector,
    ProcessSpec,
    TypeLaw,
    check_positive_regularity,
    classify,
    gf_B,
    gf_B_marked,
    jacobian,
    marked_sets,
    validate_spec,
)
from .extinction import (
    ExtinctionResult,
    MarkedRootResult,
    extinction_prob,
    marked_root,
)
from .flow import FlowResult, PicardParams, drift, integrate, limit, picard, picard_params
from .pgf import (
    ExtinctionPgfResult,
    StartState,
    extinction_pgf,
    horizon_pgf,
    marginal_pgf,
    pure_death_marks,
    twins_marks,
)
from .simulate import (
    ChainState,
    ExtinctionCounts,
    McEstimate,
    SimOutcome,
    mc_extinction_counts,
    mc_pgf,
    new_chain_state,
    replica_generator,
    run,
    step,
)
from .oracle import (
    ExampleParams,
    example_extinction_pgf,
    example_rho,
    example_spec,
    example_uv,
)

__version__ = "0.1.0"

__all__ = [
    "ChainState",
    "ConvergenceError",
    "Criticality",
    "CriticalityClass",
    "ExampleParams",
    "ExtinctionCounts",
    "ExtinctionPgfResult",
    "ExtinctionResult",
    "FlowResult",
    "HorizonCapError",
    "MarkAssignment",
    "MarkedRootResult",
    "MarkedSets",
    "McEstimate",
    "MeanMatrix",
    "MtbranchError",
    "OffspringVector",
    "PicardParams",
    "ProcessSpec",
    "SimOutcome",
    "SimulationError",
    "SpecError",
    "StartState",
    "StepSizeError",
    "TypeLaw",
    "check_positive_regularity",
    "classify",
    "drift",
    "example_extinction_pgf",
    "example_rho",
    "example_spec",
    "example_uv",
    "extinction_pgf",
    "extinction_prob",
    "gf_B",
    "gf_B_marked",
    "horizon_pgf",
    "integrate",
    "jacobian",
    "limit",
    "marginal_pgf",
    "marked_root",
    "marked_sets",
    "mc_extinction_counts",
    "mc_pgf",
    "new_chain_state",
    "picard",
    "picard_params",
    "pure_death_marks",
    "replica_generator",
    "run",
    "step",
    "twins_marks",
    "validate_spec",
]
