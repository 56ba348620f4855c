"""Deterministic policy engine: fluid trajectories, cyclic steady states,
experienced reward distributions, fairness audits, and the belief-based
retention policy.

Periods are 1-based everywhere; the population in period t is the survivors
of period t-1 plus the period-t arrivals, and the payment drawn in period t
applies to that whole population.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .fluid import solve_fluid
from .market import (
    MarketInstance,
    Newsvendor,
    RewardDistribution,
    RewardSet,
    Tabulated,
    WorkerType,
    expected_departure,
    expected_reward,
    fluid_profit,
)

__all__ = [
    "NonMixing",
    "PreconditionViolated",
    "Static",
    "Cyclic",
    "Trajectory",
    "BeliefBased",
    "Policy",
    "TrajectoryResult",
    "FairnessReport",
    "BeliefOutcome",
    "distribution_at",
    "fluid_trajectory",
    "cyclic_steady_state",
    "cyclic_profit",
    "experienced_distribution",
    "static_from_cyclic",
    "cyclic_to_static_report",
    "fairness_audit",
    "belief_based_policy",
    "turnover_profit",
]


class NonMixing(ValueError):
    """Some worker type never departs over a full cycle, so no cyclic steady
    state exists."""


class PreconditionViolated(ValueError):
    """The belief-based construction's parameter restrictions fail."""


@dataclass(frozen=True)
class Static:
    """Draw from the same distribution every period."""

    x: RewardDistribution


@dataclass(frozen=True)
class Cyclic:
    """Rotate through a fixed tuple of distributions (all on one domain)."""

    xs: tuple[RewardDistribution, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "xs", tuple(self.xs))
        if not self.xs:
            raise ValueError("a cycle needs at least one distribution")
        dom = self.xs[0].rewards
        if any(x.rewards != dom for x in self.xs):
            raise ValueError("all cycle distributions must share one reward domain")

    @property
    def tau(self) -> int:
        return len(self.xs)


@dataclass(frozen=True)
class Trajectory:
    """A finite head of distributions followed by a repeating tail."""

    head: tuple[RewardDistribution, ...]
    tail: tuple[RewardDistribution, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "head", tuple(self.head))
        object.__setattr__(self, "tail", tuple(self.tail))
        if not self.tail:
            raise ValueError("the repeating tail must be non-empty")
        dom = self.tail[0].rewards
        if any(x.rewards != dom for x in self.head + self.tail):
            raise ValueError("all distributions must share one reward domain")


@dataclass(frozen=True)
class BeliefBased:
    """Pay v1 to everyone while learning who values v1-retention, then pay v1
    to exactly enough known retainers to fill demand D and nothing to anyone
    else. Evaluated by the deterministic engine only."""

    alpha: float
    v1: float
    v2: float
    D: float


Policy = Union[Static, Cyclic, Trajectory, BeliefBased]


def distribution_at(policy: Policy, t: int) -> RewardDistribution:
    """The reward distribution a policy draws from in (1-based) period t."""
    if t < 1:
        raise ValueError("periods are 1-based")
    if isinstance(policy, Static):
        return policy.x
    if isinstance(policy, Cyclic):
        return policy.xs[(t - 1) % policy.tau]
    if isinstance(policy, Trajectory):
        if t <= len(policy.head):
            return policy.head[t - 1]
        return policy.tail[(t - 1 - len(policy.head)) % len(policy.tail)]
    raise TypeError("belief-based policies pay per worker state, not from one distribution")


@dataclass(frozen=True)
class TrajectoryResult:
    """Fluid dynamics over a finite horizon."""

    supplies: np.ndarray  # (T, K), population of period t in row t-1
    profits: np.ndarray  # (T,)
    tail_average: float  # mean profit over the trailing half of the horizon


def fluid_trajectory(
    inst: MarketInstance,
    policy: Policy,
    horizon: int,
    n0: Sequence[float] | None = None,
) -> TrajectoryResult:
    """Iterate the fluid recursion N(t) = N(t-1) * (1 - l_hat(x(t-1))) + lambda.

    n0 is the pre-horizon population (defaults to empty). The reported
    long-run profit averages the trailing half of the horizon.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    K = inst.K
    n = np.zeros(K) if n0 is None else np.asarray(n0, dtype=float).copy()
    if n.shape != (K,):
        raise ValueError(f"n0 must have {K} entries")
    supplies = np.empty((horizon, K))
    profits = np.empty(horizon)
    for t in range(1, horizon + 1):
        n = n + inst.lambdas
        x = distribution_at(policy, t)
        lhat = np.array([expected_departure(w, x) for w in inst.types])
        total = float(n.sum())
        profits[t - 1] = float(inst.revenue.value(total)) - expected_reward(x) * total
        supplies[t - 1] = n
        n = n * (1.0 - lhat)
    window = horizon - horizon // 2
    return TrajectoryResult(
        supplies=supplies, profits=profits, tail_average=float(profits[-window:].mean())
    )


def _cycle_rates(inst: MarketInstance, cyc: Cyclic) -> np.ndarray:
    """(tau, K) matrix of mixture departure rates over one cycle."""
    return np.array([[expected_departure(w, x) for w in inst.types] for x in cyc.xs])


def cyclic_steady_state(inst: MarketInstance, cyc: Cyclic) -> np.ndarray:
    """Per-period steady-state populations of a cyclic policy, closed form.

    Row t-1 holds the period-t population (paid with cyc.xs[t-1]):

        N_i(t) = lambda_i * (1 + sum_{d=1}^{tau-1} prod_{j=1}^{d} z_i(t-j))
                 / (1 - prod_{t'=1}^{tau} z_i(t'))

    with z_i(t) = 1 - l_hat_i(x(t)) and wrap-around period indices. Raises
    NonMixing when some type survives a whole cycle with probability one.
    """
    tau = cyc.tau
    K = inst.K
    z = 1.0 - _cycle_rates(inst, cyc)  # (tau, K)
    full = z.prod(axis=0)
    if np.any(full >= 1.0 - 1e-12):
        bad = np.flatnonzero(full >= 1.0 - 1e-12).tolist()
        raise NonMixing(f"type(s) {bad} never depart over the cycle")
    out = np.empty((tau, K))
    for t in range(tau):
        acc = np.ones(K)
        run = np.ones(K)
        for d in range(1, tau):
            run = run * z[(t - d) % tau]
            acc += run
        out[t] = inst.lambdas * acc / (1.0 - full)
    return out


def cyclic_profit(inst: MarketInstance, cyc: Cyclic) -> float:
    """Average per-period steady-state profit of a cyclic policy."""
    states = cyclic_steady_state(inst, cyc)
    total = 0.0
    for t, x in enumerate(cyc.xs):
        n = float(states[t].sum())
        total += float(inst.revenue.value(n)) - expected_reward(x) * n
    return total / cyc.tau


def experienced_distribution(inst: MarketInstance, cyc: Cyclic, type_index: int) -> RewardDistribution:
    """Reward distribution a type-i worker experiences over one steady-state
    cycle: the supply-weighted average of the per-period distributions."""
    if not 0 <= type_index < inst.K:
        raise ValueError("type index out of range")
    states = cyclic_steady_state(inst, cyc)
    weights = states[:, type_index]
    mix = np.zeros(len(cyc.xs[0].rewards))
    for t, x in enumerate(cyc.xs):
        mix += weights[t] * x.as_array()
    mix /= weights.sum()
    return RewardDistribution(cyc.xs[0].rewards, tuple(float(v) for v in mix))


def static_from_cyclic(inst: MarketInstance, cyc: Cyclic, anchor_type: int) -> RewardDistribution:
    """Static policy anchored at one type's experienced distribution; it
    gives the anchor type exactly its cyclic steady-state supply."""
    return experienced_distribution(inst, cyc, anchor_type)


def cyclic_to_static_report(inst: MarketInstance, cyc: Cyclic) -> dict:
    """How well anchored static policies replace a cyclic one.

    Reports the cyclic policy's internal unfairness (max pairwise L1 gap of
    experienced distributions), each anchored static's fluid profit, the
    cyclic profit, and a numerically estimated constant c0 such that every
    anchored static is within eps * c0 of the cyclic profit. The constant is
    an estimate: it samples |R'| over the occupied supply range.
    """
    states = cyclic_steady_state(inst, cyc)
    hats = [experienced_distribution(inst, cyc, i) for i in range(inst.K)]
    eps = 0.0
    for i in range(inst.K):
        for j in range(i + 1, inst.K):
            gap = float(np.abs(hats[i].as_array() - hats[j].as_array()).sum())
            eps = max(eps, gap)
    cyc_profit = cyclic_profit(inst, cyc)
    anchors = {}
    for i, x in enumerate(hats):
        anchors[i] = {"x": x, "profit": fluid_profit(inst, x).profit}

    n_max = inst.max_fluid_supply()
    if math.isfinite(n_max):
        lo = max(1e-9, 0.5 * float(states.sum(axis=1).min()))
        us = np.linspace(lo, n_max, 513)
        c_rev = max(abs(inst.revenue.derivative(float(u), side="left")) for u in us)
        rates = _cycle_rates(inst, cyc)
        lhat_min = float(rates.min())
        slope = float((inst.lambdas / lhat_min**2).max())
        r_max = inst.rewards.r_max
        c0 = r_max * n_max * inst.K + c_rev * slope * inst.K + r_max * slope * inst.K
    else:
        c0 = math.inf
    worst = max(cyc_profit - anchors[i]["profit"] for i in range(inst.K))
    return {
        "cyclic_fairness_eps": eps,
        "cyclic_profit": cyc_profit,
        "anchors": anchors,
        "c0": c0,
        "c0_is_estimate": True,
        "bound_holds": bool(worst <= eps * c0 + 1e-9),
    }


@dataclass(frozen=True)
class FairnessReport:
    """Windowed experienced-distribution audit (window length = tau periods)."""

    tau: int
    delta: float
    max_gap: float
    gap_matrix: tuple[tuple[float, ...], ...]
    fair: bool


def _payment_streams(
    inst: MarketInstance, policy: Policy, horizon: int, n0
) -> tuple[np.ndarray, list[list[np.ndarray]]]:
    """Per-type supply weights (T, K) and per-type per-period payment
    distributions, as weight vectors over a shared domain."""
    if isinstance(policy, BeliefBased):
        return _belief_streams(policy, horizon)
    traj = fluid_trajectory(inst, policy, horizon, n0)
    dists = [distribution_at(policy, t).as_array() for t in range(1, horizon + 1)]
    rows = [[d] * inst.K for d in dists]
    return traj.supplies, [list(r) for r in rows]


def fairness_audit(
    inst: MarketInstance,
    policy: Policy,
    tau: int,
    horizon: int,
    n0: Sequence[float] | None = None,
    delta: float = 0.05,
) -> FairnessReport:
    """Max windowed L1 gap between the supply-weighted reward distributions
    any two types experience, over every window of tau consecutive periods
    that fits in the horizon.

    Cyclic policies default to starting at their steady state, where the
    audit is exact; everything else starts from an empty market unless n0
    says otherwise.
    """
    if tau < 1 or horizon < tau:
        raise ValueError("need 1 <= tau <= horizon")
    K = inst.K
    if n0 is None and isinstance(policy, Cyclic):
        try:
            n0 = cyclic_steady_state(inst, policy)[0] - inst.lambdas
        except NonMixing:
            pass
    supplies, dists = _payment_streams(inst, policy, horizon, n0)
    gaps = np.zeros((K, K))
    for start in range(horizon - tau + 1):
        window = range(start, start + tau)
        mixes = []
        for i in range(K):
            w = np.array([supplies[t, i] for t in window])
            vecs = np.stack([dists[t][i] for t in window])
            mixes.append((w[:, None] * vecs).sum(axis=0) / w.sum())
        for i in range(K):
            for j in range(i + 1, K):
                gap = float(np.abs(mixes[i] - mixes[j]).sum())
                if gap > gaps[i, j]:
                    gaps[i, j] = gaps[j, i] = gap
    max_gap = float(gaps.max()) if K > 1 else 0.0
    return FairnessReport(
        tau=tau,
        delta=delta,
        max_gap=max_gap,
        gap_matrix=tuple(tuple(float(v) for v in row) for row in gaps),
        fair=bool(max_gap < delta),
    )


# --------------------------------------------------------------------------
# Belief-based retention


@dataclass(frozen=True)
class BeliefOutcome:
    """Deterministic evaluation of the belief-based policy."""

    policy: BeliefBased
    profit: float  # long-run per-period profit
    trajectory: tuple[tuple[float, float], ...]  # (population, profit) per period
    static_profit: float  # best static distribution on {0, v1, v2}
    gap: float  # profit - static_profit
    instance: MarketInstance | None  # the grid instance used for the static benchmark


def _belief_instance(policy: BeliefBased, lambda1: float, lambda2: float) -> MarketInstance:
    rewards = RewardSet((0.0, policy.v1, policy.v2))
    t1 = WorkerType(lambda1, Tabulated(rewards.values, (1.0, 0.0, 0.0)))
    t2 = WorkerType(lambda2, Tabulated(rewards.values, (1.0, 1.0, 0.0)))
    return MarketInstance(
        rewards=rewards,
        types=(t1, t2),
        revenue=Newsvendor(alpha=policy.alpha, cap=policy.D),
        eps_noisy_mode=True,
    )


def _belief_dynamics(policy: BeliefBased, lambda1: float, lambda2: float, horizon: int):
    """Population and profit per period, plus per-period per-type payment
    splits for fairness audits.

    Phase 1 pays v1 to everyone until the retained type-1 stock plus fresh
    arrivals covers D; afterwards exactly D - lambda1 - lambda2 retained
    type-1 workers keep receiving v1 and everyone else gets 0.
    """
    alpha, v1, D = policy.alpha, policy.v1, policy.D
    lam = lambda1 + lambda2
    keep = D - lam  # retained stock needed in steady state
    retained = 0.0
    rows = []
    splits = []  # (weights per type over domain (0, v1, v2)) per period
    for _ in range(horizon):
        n = retained + lam
        if n < D - 1e-12:
            # still learning: pay v1 to the whole population
            rows.append((n, alpha * min(n, D) - v1 * n))
            splits.append((np.array([0.0, 1.0, 0.0]), np.array([0.0, 1.0, 0.0]), n, retained))
            retained = retained + lambda1  # type-1 workers paid v1 stay
        else:
            paid = keep
            rows.append((D, alpha * D - v1 * paid))
            n1 = retained + lambda1
            w1 = np.array([(n1 - paid) / n1, paid / n1, 0.0])
            w2 = np.array([1.0, 0.0, 0.0])
            splits.append((w1, w2, D, retained))
            retained = keep
    return rows, splits


def _belief_streams(policy: BeliefBased, horizon: int):
    lambda1, lambda2 = policy.D / 4.0, policy.D / 2.0
    _, splits = _belief_dynamics(policy, lambda1, lambda2, horizon)
    supplies = np.empty((horizon, 2))
    dists: list[list[np.ndarray]] = []
    for t, (w1, w2, _, retained) in enumerate(splits):
        supplies[t, 0] = retained + lambda1
        supplies[t, 1] = lambda2
        dists.append([w1, w2])
    return supplies, dists


def belief_based_policy(
    alpha: float, v1: float, v2: float, lambda1: float, lambda2: float, D: float
) -> BeliefOutcome:
    """Evaluate the belief-based policy against the best static distribution.

    Requires alpha > 2*v2, 0 < v1 <= v2, lambda1 = D/4 and lambda2 = D/2 (the
    regime where the learning phase lasts exactly one period and the
    stationary profit is alpha*D - v1*(D - lambda1 - lambda2)).
    """
    if D <= 0.0:
        raise PreconditionViolated("D must be positive")
    if not 0.0 < v1 <= v2:
        raise PreconditionViolated("need 0 < v1 <= v2")
    if alpha <= 2.0 * v2:
        raise PreconditionViolated("need alpha > 2 * v2")
    if abs(lambda1 - D / 4.0) > 1e-9 * D or abs(lambda2 - D / 2.0) > 1e-9 * D:
        raise PreconditionViolated("need lambda1 = D/4 and lambda2 = D/2")
    policy = BeliefBased(alpha=alpha, v1=v1, v2=v2, D=D)
    rows, _ = _belief_dynamics(policy, lambda1, lambda2, horizon=12)
    profit = rows[-1][1]
    if v2 > v1:
        inst = _belief_instance(policy, lambda1, lambda2)
        static_profit = solve_fluid(inst).profit
    else:
        # v2 = v1 makes the two types indistinguishable: no belief advantage
        inst = None
        static_profit = profit
    return BeliefOutcome(
        policy=policy,
        profit=profit,
        trajectory=tuple(rows),
        static_profit=static_profit,
        gap=profit - static_profit,
        instance=inst,
    )


def turnover_profit(inst: MarketInstance, r: float) -> float:
    """Profit of paying r when no worker outlasts a single period, so the
    population is exactly the arrival mass."""
    lam = float(inst.lambdas.sum())
    return float(inst.revenue.value(lam)) - r * lam
