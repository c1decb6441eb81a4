"""Budget-optimal trajectory truncation for Monte Carlo policy evaluation."""
from .batches import Trajectory, TruncatedBatch, collect_batch, read_batch, write_batch
from .envs import make_env
from .errors import (
    AbsoluteContinuityError,
    BiasedScheduleError,
    BudgetMismatchError,
    DomainError,
    InternalCheckError,
)
from .estimators import (
    EstimateReport,
    empirical_renyi_profile,
    estimate_return,
    evaluate_off_policy,
    evaluate_on_policy,
    hoeffding_interval,
    importance_weights,
    off_policy_estimate,
    variance_penalty,
)
from .policies import SoftmaxPolicy
from .schedule import (
    PAC_CONSTANT,
    PacBudget,
    RelaxedAllocation,
    Schedule,
    brute_force_optimal,
    coefficients,
    confidence_width,
    optimal_schedule,
    pac_budget,
    round_allocation,
    rounding_ratio_bound,
    samples_per_step,
    saturation_budget,
    solve_relaxed,
    trajectories_per_length,
    uniform_schedule,
    validate_schedule,
)
from .ttpois import OptimConfig, OptimResult, surrogate, surrogate_gradient
from .ttpois import run as optimize_policy

__all__ = [
    "AbsoluteContinuityError",
    "BiasedScheduleError",
    "BudgetMismatchError",
    "DomainError",
    "EstimateReport",
    "InternalCheckError",
    "OptimConfig",
    "OptimResult",
    "PAC_CONSTANT",
    "PacBudget",
    "RelaxedAllocation",
    "Schedule",
    "SoftmaxPolicy",
    "Trajectory",
    "TruncatedBatch",
    "brute_force_optimal",
    "coefficients",
    "collect_batch",
    "confidence_width",
    "empirical_renyi_profile",
    "estimate_return",
    "evaluate_off_policy",
    "evaluate_on_policy",
    "hoeffding_interval",
    "importance_weights",
    "make_env",
    "off_policy_estimate",
    "optimal_schedule",
    "optimize_policy",
    "pac_budget",
    "read_batch",
    "round_allocation",
    "rounding_ratio_bound",
    "samples_per_step",
    "saturation_budget",
    "solve_relaxed",
    "surrogate",
    "surrogate_gradient",
    "trajectories_per_length",
    "uniform_schedule",
    "validate_schedule",
    "write_batch",
]
