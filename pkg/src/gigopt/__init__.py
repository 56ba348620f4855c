"""Profit-optimal reward distributions for markets of departing workers.

The package is layered: market holds the model primitives, fluid the
relaxation solvers, sim the stochastic validator, policies the time-varying
policy engine, noisy the noisy-entry analytics, and experiments/cli the
reproduction harness.
"""

from .market import (
    DegenerateSupply,
    EpsNoisy,
    ExpFloor,
    FluidOutcome,
    Linear,
    LinearRev,
    Log,
    MarketInstance,
    Newsvendor,
    Power,
    Quadratic,
    RewardDistribution,
    RewardSet,
    Tabulated,
    WorkerType,
    expected_departure,
    expected_reward,
    fluid_profit,
    fluid_supply,
    instance_from_dict,
    instance_to_dict,
    load_instance,
)
from .fluid import (
    BudgetedInstance,
    Dispersion,
    InfeasibleInput,
    InterlacingNotFound,
    InvalidMoments,
    TooLarge,
    UnsupportedSupport,
    brute_force_oracle,
    classify_dispersion,
    find_interlacing,
    lottery_distribution,
    lottery_for_instance,
    objective_lipschitz,
    optimal_fixed_wage,
    optimize_pair,
    solve_fluid,
    solve_supply_opt,
    support_reduce,
)
from .policies import (
    BeliefBased,
    BeliefOutcome,
    Cyclic,
    FairnessReport,
    NonMixing,
    PreconditionViolated,
    Static,
    Trajectory,
    belief_based_policy,
    cyclic_profit,
    cyclic_steady_state,
    cyclic_to_static_report,
    distribution_at,
    experienced_distribution,
    fairness_audit,
    fluid_trajectory,
    static_from_cyclic,
    turnover_profit,
)
from .sim import (
    ConfigError,
    LossRow,
    SimConfig,
    SimResult,
    SimTrace,
    additive_loss_sweep,
    default_burn_in,
    occupancy_samples,
    simulate,
    steady_state_mean,
)
from .noisy import (
    AssumptionViolated,
    CrossoverReport,
    DerivativeVanishes,
    GridMismatch,
    InvalidRegime,
    MetricCurve,
    NoisyInstance,
    NoisySolution,
    detect_double_threshold,
    market_instance,
    marginal_surplus,
    mhr_like_check,
    newsvendor_optimal,
    noisy_metrics,
    optimal_noisy,
    rational_scaled_surplus,
    myopic_scaled_surplus,
    surplus_curve,
)
from .experiments import (
    EXPERIMENT_IDS,
    ExperimentSpec,
    UnknownExperiment,
    normal_policy,
    run_experiment,
    canonical_instance,
)

__version__ = "0.1.0"
