"""Fluid-optimal reward distributions.

The profit maximization exploits the structural fact that some optimal
distribution has at most two support points, so the search space is every
singleton and every reward pair, each pair a one-dimensional problem in the
weight placed on the higher reward. The 1-D slice objective can fail to be
concave, so each slice is scanned globally before local refinement; exact
newsvendor-kink candidates are added because kinked optima are common and
the refinement alone cannot pin them to full precision.

The budgeted variant (maximize supply subject to an expected-pay budget)
reuses the same slices, plus a support-reduction routine that rewrites any
feasible distribution into an equally good one with at most two support
points via mean-preserving mass transfers and budget rebalancing.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .market import (
    MIN_DEPARTURE_FLOOR,
    DegenerateSupply,
    FluidOutcome,
    MarketInstance,
    Newsvendor,
    RewardDistribution,
    RewardSet,
    Tabulated,
    fluid_profit,
)

__all__ = [
    "SCAN_POINTS",
    "REFINE_TOL",
    "TooLarge",
    "InfeasibleInput",
    "InterlacingNotFound",
    "UnsupportedSupport",
    "InvalidMoments",
    "PairSolution",
    "BudgetedInstance",
    "Dispersion",
    "optimize_pair",
    "solve_fluid",
    "brute_force_oracle",
    "objective_lipschitz",
    "solve_supply_opt",
    "find_interlacing",
    "support_reduce",
    "classify_dispersion",
    "optimal_fixed_wage",
    "lottery_distribution",
    "lottery_for_instance",
]

SCAN_POINTS = 1025  # uniform pre-scan of each pair slice
REFINE_TOL = 1e-12  # golden-section bracket width target

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


class TooLarge(ValueError):
    """Brute-force enumeration would be astronomically large."""


class InfeasibleInput(ValueError):
    """The provided distribution does not satisfy the budget with equality."""


class InterlacingNotFound(LookupError):
    """No budget-interlacing reward pair exists within the support."""


class UnsupportedSupport(ValueError):
    """Dispersion is only classified for supports of size one or two."""


class InvalidMoments(ValueError):
    """No two-point lottery with the requested mean and variance exists."""


@dataclass(frozen=True)
class PairSolution:
    """Optimal weight split between two rewards (weight_high on r_high)."""

    r_low: float
    r_high: float
    weight_high: float
    profit: float


@dataclass(frozen=True)
class BudgetedInstance:
    """Market instance plus a per-period expected-pay budget.

    The budget must at least cover paying the bottom reward to the supply
    that the bottom reward itself sustains, otherwise no distribution is
    feasible.
    """

    inst: MarketInstance
    budget: float

    def __post_init__(self) -> None:
        floor_cost = _singleton_cost(self.inst, self.inst.rewards.r_min)
        if math.isfinite(floor_cost) and self.budget < floor_cost - 1e-9 * max(1.0, abs(floor_cost)):
            raise ValueError(
                f"budget {self.budget} cannot cover the bottom-reward cost {floor_cost}"
            )


class Dispersion(str, Enum):
    MINIMAL = "minimal"
    MAXIMAL = "maximal"
    NEITHER = "neither"


# --------------------------------------------------------------------------
# Pair slices


class _PairSlice:
    """One-dimensional slice of the simplex: weight y on r_high, 1-y on r_low."""

    def __init__(self, inst: MarketInstance, r_low: float, r_high: float):
        if not r_low < r_high:
            raise ValueError("need r_low < r_high")
        self.inst = inst
        self.r_low = float(r_low)
        self.r_high = float(r_high)
        i = inst.rewards.index_of(r_low)
        j = inst.rewards.index_of(r_high)
        mat = inst.departure_matrix
        self.lo = [float(v) for v in mat[:, i]]
        self.hi = [float(v) for v in mat[:, j]]
        self.lam = [float(v) for v in inst.lambdas]

    def admissible_max(self) -> float | None:
        """Largest weight on r_high keeping every mixture rate above the
        degeneracy floor; None when the whole slice is degenerate."""
        y = 1.0
        for lo, hi in zip(self.lo, self.hi):
            if hi < MIN_DEPARTURE_FLOOR:
                if lo < MIN_DEPARTURE_FLOOR:
                    return None
                y = min(y, (lo - MIN_DEPARTURE_FLOOR) / (lo - hi))
        return y

    def supply(self, y: float) -> float:
        total = 0.0
        for lam, lo, hi in zip(self.lam, self.lo, self.hi):
            total += lam / (lo + (hi - lo) * y)
        return total

    def rhat(self, y: float) -> float:
        return self.r_low + (self.r_high - self.r_low) * y

    def profit(self, y: float) -> float:
        n = self.supply(y)
        return float(self.inst.revenue.value(n)) - self.rhat(y) * n

    def profit_grid(self, ys: np.ndarray) -> np.ndarray:
        lo = np.asarray(self.lo)[:, None]
        hi = np.asarray(self.hi)[:, None]
        lhat = lo + (hi - lo) * ys[None, :]
        n = (np.asarray(self.lam)[:, None] / lhat).sum(axis=0)
        rhat = self.r_low + (self.r_high - self.r_low) * ys
        return np.asarray(self.inst.revenue.value(n)) - rhat * n


def _golden_max(f, a: float, b: float, tol: float) -> float:
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def _bisect_increasing(f, target: float, lo: float, hi: float) -> float | None:
    """Root of f(y) = target for non-decreasing f; None if the target is not
    strictly bracketed."""
    flo, fhi = f(lo), f(hi)
    if not (flo < target < fhi):
        return None
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if f(mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def optimize_pair(
    inst: MarketInstance, r_low: float, r_high: float, tol: float = REFINE_TOL
) -> PairSolution | None:
    """Globally maximize fluid profit over mixtures of two rewards.

    Returns None when the whole slice is degenerate (both rewards fail to
    retain some type). Ties resolve to the smallest weight on r_high.
    """
    sl = _PairSlice(inst, r_low, r_high)
    y_hi = sl.admissible_max()
    if y_hi is None:
        return None
    ys = np.linspace(0.0, y_hi, SCAN_POINTS)
    profits = sl.profit_grid(ys)
    candidates = {0.0, y_hi}
    n = len(ys)
    for k in range(1, n - 1):
        if profits[k] >= profits[k - 1] and profits[k] >= profits[k + 1]:
            candidates.add(_golden_max(sl.profit, ys[k - 1], ys[k + 1], tol))
    if isinstance(inst.revenue, Newsvendor):
        # profit is kinked where total supply crosses the revenue cap
        y_kink = _bisect_increasing(sl.supply, inst.revenue.cap, 0.0, y_hi)
        if y_kink is not None:
            candidates.add(y_kink)
    best_y = None
    best_p = -math.inf
    for y in sorted(candidates):
        p = sl.profit(y)
        if p > best_p:
            best_y, best_p = y, p
    return PairSolution(r_low=sl.r_low, r_high=sl.r_high, weight_high=best_y, profit=best_p)


def _pair_distribution(rewards: RewardSet, ps: PairSolution) -> RewardDistribution:
    ws = [0.0] * len(rewards)
    ws[rewards.index_of(ps.r_low)] = 1.0 - ps.weight_high
    ws[rewards.index_of(ps.r_high)] = ps.weight_high
    return RewardDistribution.on(rewards, ws)


def solve_fluid(inst: MarketInstance, tol: float = REFINE_TOL) -> FluidOutcome:
    """Profit-maximizing reward distribution of the fluid relaxation.

    Searches all singletons and all pair slices; the returned support has at
    most two rewards. Ties resolve to the lower expected reward, then the
    lower high reward, then the lower low reward, independently of
    enumeration order.
    """
    grid = inst.rewards
    best: FluidOutcome | None = None
    best_key: tuple | None = None

    def consider(outcome: FluidOutcome, r_high: float, r_low: float) -> None:
        nonlocal best, best_key
        key = (outcome.profit, -outcome.expected_reward, -r_high, -r_low)
        if best_key is None or key > best_key:
            best, best_key = outcome, key

    for r in grid:
        try:
            out = fluid_profit(inst, RewardDistribution.point_mass(grid, r))
        except DegenerateSupply:
            continue
        consider(out, r, r)
    for r_low, r_high in itertools.combinations(grid.values, 2):
        ps = optimize_pair(inst, r_low, r_high, tol)
        if ps is None:
            continue
        w = ps.weight_high
        if w <= 1e-12 or w >= 1.0 - 1e-12:
            continue  # collapses to a singleton already considered
        try:
            out = fluid_profit(inst, _pair_distribution(grid, ps))
        except DegenerateSupply:
            continue  # admissible-boundary float dust
        consider(out, r_high, r_low)
    if best is None:
        raise DegenerateSupply("every candidate distribution is degenerate")
    return best


# --------------------------------------------------------------------------
# Brute-force grid oracle


def _compositions(m: int, G: int) -> np.ndarray:
    """All m-part compositions of G as an (n, m) integer array."""
    if m == 1:
        return np.array([[G]], dtype=np.int64)
    flat = np.fromiter(
        itertools.chain.from_iterable(itertools.combinations(range(G + m - 1), m - 1)),
        dtype=np.int64,
    )
    bars = flat.reshape(-1, m - 1)
    n = len(bars)
    edges = np.column_stack(
        [np.full(n, -1, dtype=np.int64), bars, np.full(n, G + m - 1, dtype=np.int64)]
    )
    return np.diff(edges, axis=1) - 1


def _grid_profits(inst: MarketInstance, X: np.ndarray):
    """Vectorized profit over rows of weight matrix X; returns (profit, rhat,
    feasible mask) where infeasible rows have some mixture rate below the
    floor."""
    mat = inst.departure_matrix
    lhat = X @ mat.T
    mask = (lhat >= MIN_DEPARTURE_FLOOR).all(axis=1)
    safe = np.maximum(lhat, MIN_DEPARTURE_FLOOR)
    n = (inst.lambdas[None, :] / safe).sum(axis=1)
    rhat = X @ np.asarray(inst.rewards.values)
    profit = np.asarray(inst.revenue.value(n)) - rhat * n
    return profit, rhat, mask


def brute_force_oracle(inst: MarketInstance, grid_resolution: int) -> FluidOutcome:
    """Exhaustive search over all weight vectors with denominator G.

    Guarded to small instances: at most 5 rewards and G <= 100. Ties resolve
    to the lowest expected reward.
    """
    G = int(grid_resolution)
    m = len(inst.rewards)
    if m > 5 or G > 100 or G < 1:
        raise TooLarge(f"oracle limited to |rewards| <= 5 and 1 <= G <= 100, got m={m}, G={G}")
    X = _compositions(m, G).astype(float) / G
    profit, rhat, mask = _grid_profits(inst, X)
    profit = np.where(mask, profit, -np.inf)
    p_max = profit.max()
    if not np.isfinite(p_max):
        raise DegenerateSupply("every grid point is degenerate")
    tied = np.flatnonzero(profit == p_max)
    best = tied[np.argmin(rhat[tied])]
    x = RewardDistribution.on(inst.rewards, X[best])
    return fluid_profit(inst, x)


def objective_lipschitz(inst: MarketInstance, grid_resolution: int) -> float:
    """Empirical Lipschitz bound of the fluid profit on the oracle grid.

    Max finite difference |profit(x') - profit(x)| / ||x' - x||_1 over unit
    mass transfers from each composition's first occupied bin to the next bin
    (cyclically), restricted to pairs where both points are non-degenerate.
    """
    G = int(grid_resolution)
    m = len(inst.rewards)
    if m > 5 or G > 100 or G < 1:
        raise TooLarge(f"limited to |rewards| <= 5 and 1 <= G <= 100, got m={m}, G={G}")
    C = _compositions(m, G)
    p0, _, ok0 = _grid_profits(inst, C.astype(float) / G)
    src = np.argmax(C > 0, axis=1)
    dst = (src + 1) % m
    C2 = C.copy()
    rows = np.arange(len(C))
    C2[rows, src] -= 1
    C2[rows, dst] += 1
    p1, _, ok1 = _grid_profits(inst, C2.astype(float) / G)
    ok = ok0 & ok1
    if not ok.any():
        return 0.0
    return float(np.abs(p1[ok] - p0[ok]).max() * (G / 2.0))


# --------------------------------------------------------------------------
# Budgeted supply maximization


def _singleton_cost(inst: MarketInstance, r: float) -> float:
    """Expected pay per period when everyone receives r; inf when the point
    mass is degenerate."""
    j = inst.rewards.index_of(r)
    rates = inst.departure_matrix[:, j]
    if np.any(rates < MIN_DEPARTURE_FLOOR):
        return math.inf
    return float(r * (inst.lambdas / rates).sum())


def solve_supply_opt(b: BudgetedInstance, tol: float = 1e-9) -> FluidOutcome:
    """Maximize total fluid supply subject to expected pay <= budget.

    On every pair slice both the expected reward and the supply are
    non-decreasing in the weight on the higher reward, so the slice optimum
    is the largest admissible weight whose cost stays within budget (found by
    bisection when the budget binds).
    """
    inst, B = b.inst, b.budget
    grid = inst.rewards
    slack = tol * max(1.0, abs(B))
    best: FluidOutcome | None = None
    best_key: tuple | None = None

    def consider(x: RewardDistribution, r_high: float, r_low: float) -> None:
        nonlocal best, best_key
        try:
            out = fluid_profit(inst, x)
        except DegenerateSupply:
            return
        key = (out.total_supply, -out.expected_reward, -r_high, -r_low)
        if best_key is None or key > best_key:
            best, best_key = out, key

    for r in grid:
        if _singleton_cost(inst, r) <= B + slack:
            consider(RewardDistribution.point_mass(grid, r), r, r)
    for r_low, r_high in itertools.combinations(grid.values, 2):
        sl = _PairSlice(inst, r_low, r_high)
        y_hi = sl.admissible_max()
        if y_hi is None:
            continue

        def cost(y: float) -> float:
            return sl.rhat(y) * sl.supply(y)

        if cost(0.0) > B + slack:
            continue
        if cost(y_hi) <= B + slack:
            y_star = y_hi
        else:
            y_star = _bisect_increasing(cost, B, 0.0, y_hi)
            if y_star is None:
                continue
        if y_star <= 1e-12 or y_star >= 1.0 - 1e-12:
            continue  # collapses to a singleton already considered
        consider(_pair_distribution(grid, PairSolution(r_low, r_high, y_star, 0.0)), r_high, r_low)
    if best is None:
        raise DegenerateSupply("no feasible non-degenerate distribution")
    return best


def find_interlacing(b: BudgetedInstance, support) -> tuple[float, float, float]:
    """Three support rewards (descending) containing a budget-interlacing
    pair: the largest support reward whose full-mass cost stays within
    budget, the smallest whose cost exceeds it, and one more.

    Raises InterlacingNotFound when every support reward falls on the same
    side of the budget. Requires at least three support rewards.
    """
    support = tuple(sorted(set(float(r) for r in support)))
    if len(support) < 3:
        raise ValueError("need at least three support rewards")
    B = b.budget
    slack = 1e-12 * max(1.0, abs(B))
    costs = {r: _singleton_cost(b.inst, r) for r in support}
    lows = [r for r in support if costs[r] <= B + slack]
    highs = [r for r in support if costs[r] > B + slack]
    if not lows or not highs:
        raise InterlacingNotFound(
            "all support rewards sit on one side of the budget; no interlacing pair"
        )
    r_lo = max(lows)
    r_hi = min(highs)
    rest = [r for r in support if r not in (r_lo, r_hi)]
    triple = sorted((r_lo, r_hi, max(rest)), reverse=True)
    return (triple[0], triple[1], triple[2])


def _weights_stats(inst: MarketInstance, w: dict[float, float]):
    """(rhat, total supply, cost) of a support-weight mapping."""
    rhat = math.fsum(r * wt for r, wt in w.items())
    total = 0.0
    for i, worker in enumerate(inst.types):
        lhat = math.fsum(float(worker.departure.rate(r)) * wt for r, wt in w.items())
        if lhat < MIN_DEPARTURE_FLOOR:
            raise DegenerateSupply(f"type {i} mixture rate vanished during reduction")
        total += float(inst.lambdas[i]) / lhat
    return rhat, total, rhat * total


def _transfer_toward_pair(
    w: dict[float, float], src: float, p: float, q: float
) -> dict[float, float] | None:
    """Move as much of src's mass onto rewards p > q as non-negativity
    allows, holding the expected reward fixed; the binding coordinate is
    snapped to exactly zero. None when nothing can move."""
    cp = (src - q) / (p - q)
    cq = (p - src) / (p - q)
    t = w[src]
    binding = src
    for coef, tgt in ((cp, p), (cq, q)):
        if coef < 0.0:
            cap = -w[tgt] / coef
            if cap < t:
                t, binding = cap, tgt
    if t <= 1e-15:
        return None
    out = dict(w)
    out[src] -= t
    out[p] += cp * t
    out[q] += cq * t
    out[binding] = 0.0
    return {r: wt for r, wt in out.items() if wt > 0.0}


def _rebalance_to_budget(inst: MarketInstance, w: dict[float, float], B: float, slack: float):
    """Shift mass from the largest to the smallest support reward until the
    expected pay meets the budget; repeats with the next-largest reward when
    the top empties first. Cost is strictly decreasing along the path."""
    w = dict(w)
    while True:
        _, _, cost = _weights_stats(inst, w)
        if cost <= B + slack:
            return w
        top = max(w)
        bot = min(w)
        if top == bot:
            raise InfeasibleInput("support collapsed to a single reward exceeding the budget")

        def cost_after(s: float) -> float:
            trial = dict(w)
            trial[top] -= s
            trial[bot] += s
            if trial[top] <= 0.0:
                del trial[top]
            return _weights_stats(inst, trial)[2]

        if cost_after(w[top]) > B + slack:
            w[bot] += w[top]
            del w[top]
            continue
        lo, hi = 0.0, w[top]
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if mid == lo or mid == hi:
                break
            if cost_after(mid) > B:
                lo = mid
            else:
                hi = mid
        s = 0.5 * (lo + hi)
        w[top] -= s
        w[bot] += s
        if w[top] <= 0.0:
            del w[top]
        return w


def _best_tight_pair(
    inst: MarketInstance, support, B: float, slack: float, n_floor: float
) -> dict[float, float] | None:
    """Best budget-tight pair (or singleton) drawn from the support rewards.

    Cost is strictly increasing along every pair slice, so the tight weight
    is found by bisection whenever the endpoints bracket the budget. Returns
    None if no candidate reaches supply n_floor.
    """
    support = sorted(set(float(r) for r in support))
    best: tuple[float, dict[float, float]] | None = None
    for r in support:
        if abs(_singleton_cost(inst, r) - B) <= slack:
            _, n, _ = _weights_stats(inst, {r: 1.0})
            if best is None or n > best[0]:
                best = (n, {r: 1.0})
    for r_lo, r_hi in itertools.combinations(support, 2):
        sl = _PairSlice(inst, r_lo, r_hi)
        y_hi = sl.admissible_max()
        if y_hi is None:
            continue

        def cost(y: float) -> float:
            return sl.rhat(y) * sl.supply(y)

        y = _bisect_increasing(cost, B, 0.0, y_hi)
        if y is None:
            continue
        n = sl.supply(y)
        if best is None or n > best[0]:
            best = (n, {r_lo: 1.0 - y, r_hi: y})
    if best is None or best[0] < n_floor - 1e-9:
        return None
    return best[1]


def support_reduce(
    b: BudgetedInstance, x: RewardDistribution, tol: float = 1e-9
) -> RewardDistribution:
    """Rewrite a budget-tight distribution into one with at most two support
    points, never losing total supply and never raising the expected reward.

    Each round picks an interlacing triple, tries every mean-preserving mass
    transfer off one triple element onto the other two (capped where a weight
    hits zero), keeps the best supply among those not worse than the current
    point, then rebalances mass from the top of the support to the bottom
    until the budget binds again. If every transfer strands the budget (a
    cap can zero the only reward cheap enough to rebalance with), the round
    falls back to the best budget-tight pair within the current support.
    """
    inst, B = b.inst, b.budget
    slack = tol * max(1.0, abs(B))
    w = {r: wt for r, wt in x.support()}
    _, n_cur, cost = _weights_stats(inst, w)
    if abs(cost - B) > slack:
        raise InfeasibleInput(f"expected pay {cost} must equal the budget {B} within {slack}")
    while len(w) > 2:
        r1, r2, r3 = find_interlacing(b, tuple(w))
        candidates = []
        for src, p, q in ((r2, r1, r3), (r1, r2, r3), (r3, r1, r2)):
            trial = _transfer_toward_pair(w, src, p, q)
            if trial is None or len(trial) >= len(w):
                continue
            try:
                _, n_trial, _ = _weights_stats(inst, trial)
            except DegenerateSupply:
                continue
            candidates.append((n_trial, trial))
        viable = [(n, t) for n, t in candidates if n >= n_cur - 1e-9]
        if not viable:
            raise InfeasibleInput("mean-preserving reduction made no progress")
        # a transfer can strand the budget (e.g. by zeroing the cheapest
        # reward), so fall back to the next-best direction when rebalancing
        # fails, and to a direct tight-pair search when all of them strand
        viable.sort(key=lambda c: -c[0])
        for _, trial in viable:
            try:
                w = _rebalance_to_budget(inst, trial, B, slack)
            except InfeasibleInput:
                continue
            break
        else:
            pair = _best_tight_pair(inst, tuple(w), B, slack, n_cur)
            if pair is None:
                raise InfeasibleInput("every mean-preserving reduction strands the budget")
            w = pair
        _, n_cur, _ = _weights_stats(inst, w)
    weights = [0.0] * len(x.rewards)
    for r, wt in w.items():
        weights[x.rewards.index(r)] = wt
    total = math.fsum(weights)
    weights = [wt / total for wt in weights]
    return RewardDistribution(x.rewards, tuple(weights))


# --------------------------------------------------------------------------
# Dispersion, fixed wages, lotteries


def classify_dispersion(x: RewardDistribution, rewards: RewardSet) -> Dispersion:
    """Minimal: a singleton or two adjacent grid rewards. Maximal: exactly
    the two grid endpoints. Every support reward must lie on the grid."""
    supp = x.support_rewards()
    if len(supp) > 2:
        raise UnsupportedSupport("dispersion is defined for supports of at most two rewards")
    idx = sorted(rewards.index_of(r) for r in supp)
    if len(idx) == 1:
        return Dispersion.MINIMAL
    if idx[0] == 0 and idx[1] == len(rewards) - 1:
        return Dispersion.MAXIMAL
    if idx[1] == idx[0] + 1:
        return Dispersion.MINIMAL
    return Dispersion.NEITHER


def optimal_fixed_wage(inst: MarketInstance) -> tuple[float, FluidOutcome]:
    """Best deterministic wage on the grid; ties resolve to the lower wage."""
    best_r = None
    best: FluidOutcome | None = None
    for r in inst.rewards:
        try:
            out = fluid_profit(inst, RewardDistribution.point_mass(inst.rewards, r))
        except DegenerateSupply:
            continue
        if best is None or out.profit > best.profit:
            best_r, best = r, out
    if best is None:
        raise DegenerateSupply("every fixed wage is degenerate")
    return best_r, best


def lottery_distribution(r_min: float, mu: float, sigma: float) -> RewardDistribution:
    """Two-point lottery supported on {r_min, h} matching mean mu and
    standard deviation sigma exactly:

        h = mu + sigma^2 / (mu - r_min)
        P(h) = (mu - r_min)^2 / ((mu - r_min)^2 + sigma^2)
    """
    if mu <= r_min:
        raise InvalidMoments(f"mean {mu} must exceed the bottom reward {r_min}")
    if sigma <= 0.0:
        raise InvalidMoments("sigma must be positive")
    gap = mu - r_min
    h = mu + sigma * sigma / gap
    p = gap * gap / (gap * gap + sigma * sigma)
    return RewardDistribution.two_point(r_min, h, p)


def lottery_for_instance(
    inst: MarketInstance, mu: float, sigma: float
) -> tuple[RewardDistribution, float]:
    """Moment-matched lottery adapted to an instance.

    Tabulated departures cannot be evaluated off-grid, so in that case the
    high reward snaps to the nearest grid reward and the snap distance is
    reported; otherwise the exact lottery is returned with distance 0.
    """
    x = lottery_distribution(inst.rewards.r_min, mu, sigma)
    if not any(isinstance(t.departure, Tabulated) for t in inst.types):
        return x, 0.0
    h = x.rewards[1]
    grid = inst.rewards.values
    snapped = min(grid, key=lambda g: (abs(g - h), g))
    if snapped <= x.rewards[0]:
        snapped = grid[1]
    return (
        RewardDistribution.two_point(x.rewards[0], snapped, x.weights[1]),
        abs(snapped - h),
    )
