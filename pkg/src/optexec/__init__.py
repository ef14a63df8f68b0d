"""Optimal liquidation under S-shaped market impact.

Closed-form strategies where they exist, a monotone finite-difference solver
for the reduced value PDE where they do not, and a Monte Carlo simulator of
the controlled execution dynamics for cross-validation.
"""

from .closed_form import (
    ExtremeComparison,
    MarketParams,
    MixedPowerSolution,
    QuasiBlock,
    Schedule,
    TwapSolution,
    extreme_comparison,
    incomplete_beta,
    levy_effective_twap_rate,
    linear_quasi_block,
    mixed_power_solution,
    proceeds_factor,
    twap_rate,
    twap_solution,
)
from .errors import ConfigError, HypothesisViolation, NumericalFailure
from .hamiltonian import (
    Gradient,
    hamiltonian,
    hamiltonian_bruteforce,
    optimal_speed,
    target_marginal_impact,
)
from .hjb import (
    ValueSurface,
    extract_policy,
    full_value_from_reduced,
    hjb_residual,
    optimize_deterministic_schedule,
    solve_reduced_hjb,
)
from .impact import (
    ImpactModel,
    LevyEffectiveImpact,
    LinearImpact,
    MarginalNotInvertibleError,
    MixedPowerImpact,
    QuadraticImpact,
    ShapeReport,
    ShiftedConvexImpact,
    impact_from_config,
    validate_s_shape,
)
from .simulate import (
    CoefficientSet,
    DeterministicStrategy,
    FeedbackStrategy,
    SimResult,
    StrategyComparison,
    Utility,
    compare_strategies,
    feedback_strategy_from_policy,
    simulate,
    simulate_unimpacted,
)

__version__ = "0.1.0"
