"""Stochastic market simulator.

Each period: Poisson arrivals join per type, every present worker draws a
reward cell from the period's distribution (multinomial), profit is recorded
from the post-arrival population, then workers depart cell-wise with the
reward's departure probability (binomial thinning).

All replications advance in lockstep as vectorized arrays, drawing from a
single generator seeded from the config, so results are bit-identical for
identical inputs regardless of platform thread counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Mapping, Sequence, Union

import numpy as np

from .fluid import solve_fluid
from .market import MarketInstance, RewardDistribution, fluid_supply
from .policies import BeliefBased, Cyclic, Policy, Static, Trajectory, distribution_at

__all__ = [
    "ConfigError",
    "SimConfig",
    "SimTrace",
    "SimResult",
    "LossRow",
    "default_burn_in",
    "simulate",
    "steady_state_mean",
    "occupancy_samples",
    "additive_loss_sweep",
]


class ConfigError(ValueError):
    """Invalid simulation configuration."""


@dataclass(frozen=True)
class SimConfig:
    theta: int  # market scale multiplying every arrival rate
    periods: int  # total simulated periods, burn-in included
    burn_in: int  # leading periods excluded from every average
    replications: int
    seed: int
    realized_cost: bool = False  # record drawn payments instead of expected pay
    record_trace: bool = False  # keep the full path of replication 0

    def __post_init__(self) -> None:
        if self.theta < 1:
            raise ConfigError("theta must be a positive integer")
        if self.burn_in < 0 or self.periods <= self.burn_in:
            raise ConfigError("need periods > burn_in >= 0")
        if self.replications < 1:
            raise ConfigError("need at least one replication")


@dataclass(frozen=True)
class SimTrace:
    """Full path of one replication (all periods, burn-in included)."""

    supply: np.ndarray  # (T, K) post-arrival populations
    arrivals: np.ndarray  # (T, K)
    departures: np.ndarray  # (T, K)
    profit: np.ndarray  # (T,)


@dataclass(frozen=True)
class SimResult:
    mean_profit: float
    std_error: float
    mean_supply: tuple[float, ...]  # per-type post-arrival average
    mean_supply_total: float
    replications: int
    theta: int
    trace: SimTrace | None


def _period_weights(policy: Policy):
    """Shared reward domain, stacked weight rows, and a period -> row map."""
    if isinstance(policy, Static):
        rows = np.array([policy.x.weights])
        return policy.x.rewards, rows, lambda t: 0
    if isinstance(policy, Cyclic):
        rows = np.array([x.weights for x in policy.xs])
        tau = policy.tau
        return policy.xs[0].rewards, rows, lambda t: (t - 1) % tau
    if isinstance(policy, Trajectory):
        rows = np.array([x.weights for x in policy.head + policy.tail])
        h, tl = len(policy.head), len(policy.tail)
        return policy.tail[0].rewards, rows, lambda t: t - 1 if t <= h else h + (t - 1 - h) % tl
    if isinstance(policy, BeliefBased):
        raise ConfigError(
            "belief-based policies pay per worker state; evaluate them with the policy engine"
        )
    raise ConfigError(f"unknown policy type {type(policy)!r}")


def default_burn_in(inst: MarketInstance, policy: Policy) -> int:
    """Roughly ten mixing times.

    Uses the slowest departure rate at the top reward; when a departure
    function vanishes there (flagged instances) it falls back to the slowest
    mixture rate the policy actually induces.
    """
    rate = float(inst.departure_matrix[:, -1].min())
    if rate < 1e-9:
        dom, rows, _ = _period_weights(policy)
        mat = np.array([[float(t.departure.rate(r)) for r in dom] for t in inst.types])
        rate = float((rows @ mat.T).min())
    if rate < 1e-9:
        raise ConfigError("policy never mixes: some type would sit forever")
    return math.ceil(10.0 / rate)


def simulate(inst: MarketInstance, policy: Policy, cfg: SimConfig) -> SimResult:
    """Run the market and average per-period profit after burn-in.

    Profit in period t is R(N(t)/theta) minus the per-period pay, both in
    fluid units; pay is the expected cost r_hat(x(t)) * N(t)/theta unless
    cfg.realized_cost asks for the drawn payments.
    """
    dom, rows, row_of = _period_weights(policy)
    rewards = np.asarray(dom)
    mat = np.array([[float(t.departure.rate(r)) for r in dom] for t in inst.types])
    K, R = inst.K, cfg.replications
    lam = inst.lambdas * cfg.theta
    rhat_rows = rows @ rewards
    rng = np.random.default_rng(cfg.seed)

    n = np.zeros((R, K), dtype=np.int64)
    measured = cfg.periods - cfg.burn_in
    profit_acc = np.zeros(R)
    supply_acc = np.zeros((R, K))
    if cfg.record_trace:
        tr_n = np.empty((cfg.periods, K), dtype=np.int64)
        tr_a = np.empty((cfg.periods, K), dtype=np.int64)
        tr_d = np.empty((cfg.periods, K), dtype=np.int64)
        tr_p = np.empty(cfg.periods)

    for t in range(1, cfg.periods + 1):
        arrivals = rng.poisson(lam, size=(R, K))
        n += arrivals
        k = row_of(t)
        scaled = n.sum(axis=1) / cfg.theta
        departures = np.empty((R, K), dtype=np.int64)
        paid = np.zeros(R) if cfg.realized_cost else None
        for i in range(K):
            cells = rng.multinomial(n[:, i], rows[k])
            departures[:, i] = rng.binomial(cells, mat[i]).sum(axis=1)
            if paid is not None:
                paid += cells @ rewards
        if paid is not None:
            profit = np.asarray(inst.revenue.value(scaled)) - paid / cfg.theta
        else:
            profit = np.asarray(inst.revenue.value(scaled)) - rhat_rows[k] * scaled
        if t > cfg.burn_in:
            profit_acc += profit
            supply_acc += n
        if cfg.record_trace:
            tr_n[t - 1] = n[0]
            tr_a[t - 1] = arrivals[0]
            tr_d[t - 1] = departures[0]
            tr_p[t - 1] = profit[0]
        n -= departures

    rep_means = profit_acc / measured
    mean_profit = float(rep_means.mean())
    se = float(rep_means.std(ddof=1) / math.sqrt(R)) if R > 1 else 0.0
    per_type = supply_acc.mean(axis=0) / measured
    trace = (
        SimTrace(supply=tr_n, arrivals=tr_a, departures=tr_d, profit=tr_p)
        if cfg.record_trace
        else None
    )
    return SimResult(
        mean_profit=mean_profit,
        std_error=se,
        mean_supply=tuple(float(v) for v in per_type),
        mean_supply_total=float(per_type.sum()),
        replications=R,
        theta=cfg.theta,
        trace=trace,
    )


def steady_state_mean(inst: MarketInstance, x: RewardDistribution, theta: int) -> np.ndarray:
    """Stationary mean occupancy per type, theta * lambda_i / l_hat_i(x)."""
    return fluid_supply(inst, x) * theta


def occupancy_samples(
    inst: MarketInstance,
    x: RewardDistribution,
    theta: int,
    n_samples: int,
    burn_in: int,
    seed: int,
) -> np.ndarray:
    """Independent draws of the total post-arrival occupancy after burn_in
    periods under a static policy, one per replication."""
    if n_samples < 1 or burn_in < 0:
        raise ConfigError("need n_samples >= 1 and burn_in >= 0")
    rewards = np.asarray(x.rewards)
    weights = np.asarray(x.weights)
    mat = np.array([[float(t.departure.rate(r)) for r in x.rewards] for t in inst.types])
    lam = inst.lambdas * theta
    rng = np.random.default_rng(seed)
    K = inst.K
    n = np.zeros((n_samples, K), dtype=np.int64)
    for _ in range(burn_in):
        n += rng.poisson(lam, size=(n_samples, K))
        for i in range(K):
            cells = rng.multinomial(n[:, i], weights)
            n[:, i] -= rng.binomial(cells, mat[i]).sum(axis=1)
    n += rng.poisson(lam, size=(n_samples, K))
    return n.sum(axis=1)


@dataclass(frozen=True)
class LossRow:
    policy: str
    theta: int
    loss: float  # fluid-optimal profit minus simulated average profit
    se: float
    reps: int


def additive_loss_sweep(
    inst: MarketInstance,
    policies: Sequence[tuple[str, Policy]],
    thetas: Sequence[int],
    cfg: Union[SimConfig, Mapping[int, SimConfig]],
) -> list[LossRow]:
    """Simulated additive loss against the fluid optimum, per policy and
    scale. Each (theta, policy) cell gets its own seed derived from the base
    seed and the cell coordinates, so partial reruns reproduce exactly.
    """
    pi_star = solve_fluid(inst).profit
    rows: list[LossRow] = []
    for a, theta in enumerate(thetas):
        base = cfg[theta] if isinstance(cfg, Mapping) else cfg
        for b, (label, policy) in enumerate(policies):
            seed = int(np.random.SeedSequence([base.seed, a, b]).generate_state(1, np.uint64)[0])
            cell = replace(base, theta=int(theta), seed=seed)
            res = simulate(inst, policy, cell)
            rows.append(
                LossRow(
                    policy=label,
                    theta=int(theta),
                    loss=pi_star - res.mean_profit,
                    se=res.std_error,
                    reps=cell.replications,
                )
            )
    return rows
