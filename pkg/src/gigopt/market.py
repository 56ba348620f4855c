"""Market primitives: reward grids, worker types, revenue functions, and the
fluid (mean-field) supply and profit quantities everything downstream
consumes.

All types are immutable value objects; operations are pure functions of
their arguments.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Sequence, Union

import numpy as np

__all__ = [
    "MIN_DEPARTURE_FLOOR",
    "DegenerateSupply",
    "RewardSet",
    "Tabulated",
    "ExpFloor",
    "Linear",
    "Quadratic",
    "EpsNoisy",
    "Departure",
    "WorkerType",
    "Newsvendor",
    "Power",
    "Log",
    "LinearRev",
    "Revenue",
    "MarketInstance",
    "RewardDistribution",
    "FluidOutcome",
    "expected_reward",
    "expected_departure",
    "fluid_supply",
    "fluid_profit",
    "instance_from_dict",
    "instance_to_dict",
    "load_instance",
]

#: Expected departure probabilities below this are treated as vanishing: the
#: fluid supply lambda/l_hat would be astronomically large, not meaningfully
#: finite, so such mixtures are declared degenerate instead.
MIN_DEPARTURE_FLOOR = 1e-12


class DegenerateSupply(ValueError):
    """An expected departure probability vanished; fluid supply is unbounded."""


def _clamp01(a):
    return np.clip(a, 0.0, 1.0)


@dataclass(frozen=True)
class RewardSet:
    """Finite, strictly increasing grid of per-period money rewards."""

    values: tuple[float, ...]

    def __post_init__(self) -> None:
        vals = tuple(float(v) for v in self.values)
        object.__setattr__(self, "values", vals)
        if len(vals) < 2:
            raise ValueError("a reward set needs at least two rewards")
        if vals[0] < 0.0:
            raise ValueError("rewards must be non-negative")
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise ValueError("rewards must be strictly increasing")

    @classmethod
    def from_range(cls, lo: float, hi: float, step: float = 1.0) -> "RewardSet":
        if step <= 0.0:
            raise ValueError("step must be positive")
        n = int(math.floor((hi - lo) / step + 1e-9))
        return cls(tuple(lo + k * step for k in range(n + 1)))

    @property
    def r_min(self) -> float:
        return self.values[0]

    @property
    def r_max(self) -> float:
        return self.values[-1]

    def index_of(self, r: float, tol: float = 1e-9) -> int:
        for k, v in enumerate(self.values):
            if abs(v - r) <= tol * max(1.0, abs(v)):
                return k
        raise ValueError(f"reward {r!r} is not on the grid")

    def __len__(self) -> int:
        return len(self.values)

    def __iter__(self):
        return iter(self.values)


# --------------------------------------------------------------------------
# Departure probability families. Each exposes rate(r) for scalar or ndarray
# rewards, with values clamped into [0, 1].


@dataclass(frozen=True)
class Tabulated:
    """Departure probabilities listed per grid reward; undefined off-grid."""

    rewards: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self) -> None:
        rs = tuple(float(r) for r in self.rewards)
        vs = tuple(float(v) for v in self.values)
        object.__setattr__(self, "rewards", rs)
        object.__setattr__(self, "values", vs)
        if len(rs) != len(vs):
            raise ValueError("rewards and values must have equal length")
        if any(b <= a for a, b in zip(rs, rs[1:])):
            raise ValueError("tabulated rewards must be strictly increasing")
        if any(v < -1e-12 or v > 1.0 + 1e-12 for v in vs):
            raise ValueError("departure probabilities must lie in [0, 1]")
        if any(b > a + 1e-12 for a, b in zip(vs, vs[1:])):
            raise ValueError("departure probabilities must be non-increasing in the reward")

    def rate(self, r):
        arr = np.asarray(r, dtype=float)
        grid = np.asarray(self.rewards)
        idx = np.clip(np.searchsorted(grid, arr), 0, len(grid) - 1)
        # searchsorted returns the right neighbour for interior values; accept
        # whichever of the two neighbours matches within tolerance
        left = np.clip(idx - 1, 0, len(grid) - 1)
        take = np.where(np.abs(grid[idx] - arr) <= np.abs(grid[left] - arr), idx, left)
        if np.any(np.abs(grid[take] - arr) > 1e-9 * np.maximum(1.0, np.abs(arr))):
            raise ValueError("tabulated departure function evaluated off its grid")
        out = _clamp01(np.asarray(self.values)[take])
        return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ExpFloor:
    """l(r) = min(1, exp(alpha * (floor - r)))."""

    alpha: float
    floor: float

    def __post_init__(self) -> None:
        if self.alpha <= 0.0:
            raise ValueError("alpha must be positive")

    def rate(self, r):
        return np.minimum(1.0, np.exp(self.alpha * (self.floor - np.asarray(r, dtype=float))))


@dataclass(frozen=True)
class Linear:
    """l(r) = clamp(beta - alpha * r) into [0, 1]."""

    alpha: float
    beta: float

    def __post_init__(self) -> None:
        if self.alpha < 0.0:
            raise ValueError("alpha must be non-negative")

    def rate(self, r):
        return _clamp01(self.beta - self.alpha * np.asarray(r, dtype=float))


@dataclass(frozen=True)
class Quadratic:
    """l(r) = clamp(-alpha*r^2 + beta*r + gamma) into [0, 1]."""

    alpha: float
    beta: float
    gamma: float

    def rate(self, r):
        arr = np.asarray(r, dtype=float)
        return _clamp01(-self.alpha * arr * arr + self.beta * arr + self.gamma)


@dataclass(frozen=True)
class EpsNoisy:
    """Piecewise-linear ramp around a money valuation v.

    l(r) = 1 below v-eps, 0 above v+eps, and 1/2 - (r-v)/(2 eps) in between,
    so l(v) = 1/2 exactly.
    """

    v: float
    eps: float

    def __post_init__(self) -> None:
        if self.eps <= 0.0:
            raise ValueError("eps must be positive")

    def rate(self, r):
        arr = np.asarray(r, dtype=float)
        return _clamp01(0.5 - (arr - self.v) / (2.0 * self.eps))


Departure = Union[Tabulated, ExpFloor, Linear, Quadratic, EpsNoisy]


@dataclass(frozen=True)
class WorkerType:
    """Arrival mass per period and the departure response of one worker type."""

    lam: float
    departure: Departure

    def __post_init__(self) -> None:
        if self.lam <= 0.0:
            raise ValueError("arrival rate must be positive")


# --------------------------------------------------------------------------
# Revenue functions of aggregate normalized supply. Each exposes value(x),
# derivative(x, side) and second_derivative(x); derivatives are one-sided at
# kinks, so callers that sit on a kink must say which side they mean.


@dataclass(frozen=True)
class Newsvendor:
    """R(x) = alpha * min(x, cap)."""

    alpha: float
    cap: float

    def __post_init__(self) -> None:
        if self.alpha <= 0.0 or self.cap <= 0.0:
            raise ValueError("alpha and cap must be positive")

    def value(self, x):
        return self.alpha * np.minimum(np.asarray(x, dtype=float), self.cap)

    def derivative(self, x: float, side: str = "left") -> float:
        if x < self.cap:
            return self.alpha
        if x > self.cap:
            return 0.0
        return self.alpha if side == "left" else 0.0

    def second_derivative(self, x: float) -> float:
        return 0.0


@dataclass(frozen=True)
class Power:
    """R(x) = c * x**beta with 0 < beta < 1."""

    c: float
    beta: float

    def __post_init__(self) -> None:
        if self.c <= 0.0:
            raise ValueError("c must be positive")
        if not 0.0 < self.beta < 1.0:
            raise ValueError("beta must lie in (0, 1)")

    def value(self, x):
        return self.c * np.power(np.asarray(x, dtype=float), self.beta)

    def derivative(self, x: float, side: str = "left") -> float:
        return self.c * self.beta * x ** (self.beta - 1.0)

    def second_derivative(self, x: float) -> float:
        return self.c * self.beta * (self.beta - 1.0) * x ** (self.beta - 2.0)


@dataclass(frozen=True)
class Log:
    """R(x) = c * log(1 + x)."""

    c: float

    def __post_init__(self) -> None:
        if self.c <= 0.0:
            raise ValueError("c must be positive")

    def value(self, x):
        return self.c * np.log1p(np.asarray(x, dtype=float))

    def derivative(self, x: float, side: str = "left") -> float:
        return self.c / (1.0 + x)

    def second_derivative(self, x: float) -> float:
        return -self.c / (1.0 + x) ** 2


@dataclass(frozen=True)
class LinearRev:
    """R(x) = alpha * x."""

    alpha: float

    def __post_init__(self) -> None:
        if self.alpha <= 0.0:
            raise ValueError("alpha must be positive")

    def value(self, x):
        return self.alpha * np.asarray(x, dtype=float)

    def derivative(self, x: float, side: str = "left") -> float:
        return self.alpha

    def second_derivative(self, x: float) -> float:
        return 0.0


Revenue = Union[Newsvendor, Power, Log, LinearRev]


@dataclass(frozen=True)
class MarketInstance:
    """A reward grid, a set of worker types, and a revenue function.

    eps_noisy_mode relaxes the requirement that every type retains some
    probability mass at the top reward; instances built from valuation ramps
    (and the tabulated instances derived from them) legitimately hit
    l_i(r_max) = 0.
    """

    rewards: RewardSet
    types: tuple[WorkerType, ...]
    revenue: Revenue
    eps_noisy_mode: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "types", tuple(self.types))
        if not self.types:
            raise ValueError("an instance needs at least one worker type")
        grid = np.asarray(self.rewards.values)
        for i, t in enumerate(self.types):
            rates = np.asarray(t.departure.rate(grid), dtype=float)
            if np.any(rates < -1e-9) or np.any(rates > 1.0 + 1e-9):
                raise ValueError(f"type {i}: departure probabilities leave [0, 1] on the grid")
            if np.any(np.diff(rates) > 1e-12):
                raise ValueError(f"type {i}: departure probabilities increase along the grid")
            if rates[-1] <= 0.0 and not self.eps_noisy_mode:
                raise ValueError(
                    f"type {i}: departure vanishes at r_max; construct with "
                    "eps_noisy_mode=True if this is intended"
                )

    @property
    def K(self) -> int:
        return len(self.types)

    @cached_property
    def lambdas(self) -> np.ndarray:
        arr = np.array([t.lam for t in self.types])
        arr.setflags(write=False)
        return arr

    @cached_property
    def departure_matrix(self) -> np.ndarray:
        """(K, m) matrix of departure probabilities on the reward grid."""
        grid = np.asarray(self.rewards.values)
        mat = np.vstack([_clamp01(np.asarray(t.departure.rate(grid), dtype=float)) for t in self.types])
        mat.setflags(write=False)
        return mat

    def max_fluid_supply(self) -> float:
        """Total fluid supply when everyone is paid r_max (inf if some type
        never departs at the top reward)."""
        top = self.departure_matrix[:, -1]
        if np.any(top < MIN_DEPARTURE_FLOOR):
            return math.inf
        return float((self.lambdas / top).sum())


@dataclass(frozen=True)
class RewardDistribution:
    """Probability distribution over a finite set of rewards.

    The domain usually coincides with the instance grid, but two-point
    lotteries may carry an off-grid high reward.
    """

    rewards: tuple[float, ...]
    weights: tuple[float, ...]

    def __post_init__(self) -> None:
        rs = tuple(float(r) for r in self.rewards)
        ws = [float(w) for w in self.weights]
        if len(rs) != len(ws):
            raise ValueError("rewards and weights must have equal length")
        if len(rs) == 0:
            raise ValueError("empty distribution")
        if any(b <= a for a, b in zip(rs, rs[1:])):
            raise ValueError("rewards must be strictly increasing")
        for k, w in enumerate(ws):
            if w < -1e-12:
                raise ValueError("weights must be non-negative")
            if w < 0.0:
                ws[k] = 0.0  # snap float dust
        total = math.fsum(ws)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {total!r}, not 1")
        object.__setattr__(self, "rewards", rs)
        object.__setattr__(self, "weights", tuple(ws))

    @classmethod
    def on(cls, rewards, weights) -> "RewardDistribution":
        if isinstance(rewards, RewardSet):
            rewards = rewards.values
        return cls(tuple(rewards), tuple(weights))

    @classmethod
    def point_mass(cls, rewards, r: float) -> "RewardDistribution":
        if isinstance(rewards, RewardSet):
            rewards = rewards.values
        rewards = tuple(rewards)
        ws = [0.0] * len(rewards)
        hit = [k for k, v in enumerate(rewards) if abs(v - r) <= 1e-9 * max(1.0, abs(v))]
        if not hit:
            raise ValueError(f"reward {r!r} is not in the domain")
        ws[hit[0]] = 1.0
        return cls(rewards, tuple(ws))

    @classmethod
    def two_point(cls, r_low: float, r_high: float, weight_high: float) -> "RewardDistribution":
        if not r_low < r_high:
            raise ValueError("need r_low < r_high")
        return cls((float(r_low), float(r_high)), (1.0 - float(weight_high), float(weight_high)))

    def support(self) -> tuple[tuple[float, float], ...]:
        return tuple((r, w) for r, w in zip(self.rewards, self.weights) if w > 0.0)

    def support_rewards(self) -> tuple[float, ...]:
        return tuple(r for r, w in zip(self.rewards, self.weights) if w > 0.0)

    def weight_at(self, r: float) -> float:
        for rv, w in zip(self.rewards, self.weights):
            if abs(rv - r) <= 1e-9 * max(1.0, abs(rv)):
                return w
        return 0.0

    def as_array(self) -> np.ndarray:
        return np.asarray(self.weights)


@dataclass(frozen=True)
class FluidOutcome:
    """Fluid steady state induced by one reward distribution."""

    x: RewardDistribution
    supply_per_type: tuple[float, ...]
    total_supply: float
    expected_reward: float
    profit: float


def expected_reward(x: RewardDistribution) -> float:
    return math.fsum(r * w for r, w in zip(x.rewards, x.weights))


def expected_departure(worker: WorkerType, x: RewardDistribution) -> float:
    """Mixture departure probability l_hat of one type under distribution x.

    Zero-weight rewards are skipped so that tabulated departures only need to
    cover the support.
    """
    total = math.fsum(float(worker.departure.rate(r)) * w for r, w in zip(x.rewards, x.weights) if w > 0.0)
    return min(1.0, max(0.0, total))


def fluid_supply(inst: MarketInstance, x: RewardDistribution) -> np.ndarray:
    """Per-type fluid steady-state supply lambda_i / l_hat_i(x)."""
    lhat = np.array([expected_departure(t, x) for t in inst.types])
    bad = np.flatnonzero(lhat < MIN_DEPARTURE_FLOOR)
    if bad.size:
        raise DegenerateSupply(
            f"expected departure vanishes for type(s) {bad.tolist()}; fluid supply is unbounded"
        )
    return inst.lambdas / lhat


def fluid_profit(inst: MarketInstance, x: RewardDistribution) -> FluidOutcome:
    """Fluid steady-state profit R(N) - r_hat(x) * N of distribution x."""
    per_type = fluid_supply(inst, x)
    total = float(per_type.sum())
    rhat = expected_reward(x)
    profit = float(inst.revenue.value(total)) - rhat * total
    return FluidOutcome(
        x=x,
        supply_per_type=tuple(float(v) for v in per_type),
        total_supply=total,
        expected_reward=rhat,
        profit=profit,
    )


# --------------------------------------------------------------------------
# JSON instance schema


_DEPARTURE_KINDS = {
    "exp_floor": lambda d, grid: ExpFloor(alpha=float(d["alpha"]), floor=float(d["floor"])),
    "linear": lambda d, grid: Linear(alpha=float(d["alpha"]), beta=float(d["beta"])),
    "quadratic": lambda d, grid: Quadratic(
        alpha=float(d["alpha"]), beta=float(d["beta"]), gamma=float(d["gamma"])
    ),
    "eps_noisy": lambda d, grid: EpsNoisy(v=float(d["v"]), eps=float(d["eps"])),
    "tabulated": lambda d, grid: Tabulated(rewards=grid.values, values=tuple(float(v) for v in d["values"])),
}

_REVENUE_KINDS = {
    "newsvendor": lambda d: Newsvendor(alpha=float(d["alpha"]), cap=float(d["cap"])),
    "power": lambda d: Power(c=float(d["c"]), beta=float(d["beta"])),
    "log": lambda d: Log(c=float(d["c"])),
    "linear": lambda d: LinearRev(alpha=float(d["alpha"])),
}


def _rewards_from_spec(spec) -> RewardSet:
    if isinstance(spec, dict):
        return RewardSet.from_range(float(spec["min"]), float(spec["max"]), float(spec.get("step", 1.0)))
    return RewardSet(tuple(float(v) for v in spec))


def instance_from_dict(d: dict) -> MarketInstance:
    rewards = _rewards_from_spec(d["rewards"])
    types = []
    for td in d["types"]:
        dep = dict(td["departure"])
        kind = dep.pop("kind")
        if kind not in _DEPARTURE_KINDS:
            raise ValueError(f"unknown departure kind {kind!r}")
        types.append(WorkerType(lam=float(td["lambda"]), departure=_DEPARTURE_KINDS[kind](dep, rewards)))
    rev = dict(d["revenue"])
    kind = rev.pop("kind")
    if kind not in _REVENUE_KINDS:
        raise ValueError(f"unknown revenue kind {kind!r}")
    return MarketInstance(
        rewards=rewards,
        types=tuple(types),
        revenue=_REVENUE_KINDS[kind](rev),
        eps_noisy_mode=bool(d.get("eps_noisy_mode", False)),
    )


def _departure_to_dict(dep: Departure) -> dict:
    if isinstance(dep, ExpFloor):
        return {"kind": "exp_floor", "alpha": dep.alpha, "floor": dep.floor}
    if isinstance(dep, Linear):
        return {"kind": "linear", "alpha": dep.alpha, "beta": dep.beta}
    if isinstance(dep, Quadratic):
        return {"kind": "quadratic", "alpha": dep.alpha, "beta": dep.beta, "gamma": dep.gamma}
    if isinstance(dep, EpsNoisy):
        return {"kind": "eps_noisy", "v": dep.v, "eps": dep.eps}
    if isinstance(dep, Tabulated):
        return {"kind": "tabulated", "values": list(dep.values)}
    raise TypeError(f"unknown departure type {type(dep)!r}")


def _revenue_to_dict(rev: Revenue) -> dict:
    if isinstance(rev, Newsvendor):
        return {"kind": "newsvendor", "alpha": rev.alpha, "cap": rev.cap}
    if isinstance(rev, Power):
        return {"kind": "power", "c": rev.c, "beta": rev.beta}
    if isinstance(rev, Log):
        return {"kind": "log", "c": rev.c}
    if isinstance(rev, LinearRev):
        return {"kind": "linear", "alpha": rev.alpha}
    raise TypeError(f"unknown revenue type {type(rev)!r}")


def instance_to_dict(inst: MarketInstance) -> dict:
    return {
        "rewards": list(inst.rewards.values),
        "types": [{"lambda": t.lam, "departure": _departure_to_dict(t.departure)} for t in inst.types],
        "revenue": _revenue_to_dict(inst.revenue),
        "eps_noisy_mode": inst.eps_noisy_mode,
    }


def load_instance(path: Union[str, Path]) -> MarketInstance:
    with open(path, "r", encoding="utf-8") as fh:
        return instance_from_dict(json.load(fh))
