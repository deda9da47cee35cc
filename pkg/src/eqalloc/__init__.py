"""Equal-precision sample allocation for stratified survey designs.

Computes allocations that make every subpopulation's squared coefficient
of variation equal and minimal under total (expected) sample-size budgets,
by solving the positive-eigenpair problem of a rank-at-most-two
perturbation of a diagonal matrix, and verifies them by direct variance
evaluation and Monte-Carlo simulation.
"""

from .allocation import (
    AllocationResult,
    Budgets,
    SchemeId,
    allocate,
    evaluate_precision,
    proportional_allocation,
    round_allocation,
    solve_T_direct,
)
from .eigen import (
    EigenPair,
    LoadVectors,
    PerturbedMatrix,
    build_matrix,
    check_condition_rank1,
    check_condition_rank2,
    unique_positive_eigenpair,
)
from .io import load_population, save_population
from .population import (
    CoefficientSet,
    Psu,
    PsuStratum,
    SingleStagePopulation,
    SsuStratum,
    Stratum,
    Subpopulation,
    TwoStagePopulation,
    TwoStageSubpopulation,
    derive_hr,
    derive_single_stage,
    derive_two_stage_fixed_ssu,
    derive_two_stage_srswor,
)
from .simulate import (
    FrameParams,
    SimulationReport,
    SyntheticFrame,
    bootstrap_cv,
    draw_hartley_rao,
    draw_srswor,
    generate_frame,
    ht_total,
    run_experiment,
    sample_two_stage,
    simulate_allocation,
)

__version__ = "0.1.0"

__all__ = [
    "AllocationResult",
    "Budgets",
    "CoefficientSet",
    "EigenPair",
    "FrameParams",
    "LoadVectors",
    "PerturbedMatrix",
    "Psu",
    "PsuStratum",
    "SchemeId",
    "SimulationReport",
    "SingleStagePopulation",
    "SsuStratum",
    "Stratum",
    "Subpopulation",
    "SyntheticFrame",
    "TwoStagePopulation",
    "TwoStageSubpopulation",
    "allocate",
    "bootstrap_cv",
    "build_matrix",
    "check_condition_rank1",
    "check_condition_rank2",
    "derive_hr",
    "derive_single_stage",
    "derive_two_stage_fixed_ssu",
    "derive_two_stage_srswor",
    "draw_hartley_rao",
    "draw_srswor",
    "evaluate_precision",
    "generate_frame",
    "ht_total",
    "load_population",
    "proportional_allocation",
    "round_allocation",
    "run_experiment",
    "sample_two_stage",
    "save_population",
    "simulate_allocation",
    "solve_T_direct",
    "unique_positive_eigenpair",
]
