"""Fluid solvers: pair optimization, the global solver vs. the brute-force
oracle, budgeted supply maximization, support reduction, and lotteries."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gigopt import (
    BudgetedInstance,
    DegenerateSupply,
    Dispersion,
    EpsNoisy,
    ExpFloor,
    InfeasibleInput,
    InterlacingNotFound,
    InvalidMoments,
    LinearRev,
    MarketInstance,
    Newsvendor,
    Power,
    RewardDistribution,
    RewardSet,
    Tabulated,
    TooLarge,
    WorkerType,
    brute_force_oracle,
    classify_dispersion,
    expected_reward,
    find_interlacing,
    fluid_profit,
    fluid_supply,
    lottery_distribution,
    lottery_for_instance,
    objective_lipschitz,
    optimal_fixed_wage,
    optimize_pair,
    solve_fluid,
    solve_supply_opt,
    support_reduce,
)


def _tab_instance(rewards, rates, lam=1.0, revenue=None, **kw):
    rs = RewardSet(tuple(rewards))
    t = WorkerType(lam, Tabulated(rs.values, tuple(rates)))
    return MarketInstance(rs, (t,), revenue or LinearRev(alpha=1.0), **kw)


# --------------------------------------------------------------------------
# Pair slices


def test_pair_constant_departure_puts_no_mass_high():
    # constant l makes supply constant, so profit falls in the high weight
    inst = _tab_instance((0.0, 10.0), (1.0, 1.0), revenue=LinearRev(alpha=20.0))
    ps = optimize_pair(inst, 0.0, 10.0)
    assert ps.weight_high == 0.0
    assert ps.profit == pytest.approx(20.0, rel=1e-12)


def test_pair_nonconvex_slice_prefers_endpoint():
    inst = _tab_instance((0.0, 0.1), (1.0, 0.5))
    ps = optimize_pair(inst, 0.0, 0.1)
    assert ps.weight_high == pytest.approx(1.0, abs=1e-9)
    assert ps.profit == pytest.approx(1.8, rel=1e-12)
    # profit is strictly convex along this slice: the midpoint loses to the
    # average of the endpoints
    mid = fluid_profit(inst, RewardDistribution.two_point(0.0, 0.1, 0.5)).profit
    assert mid == pytest.approx(1.2666666666666666, rel=1e-12)
    assert mid < 0.5 * (1.0 + 1.8)


def test_pair_flat_newsvendor_plateau():
    # alpha = v + eps makes profit constant (300) left of the capacity kink
    inst = MarketInstance(
        RewardSet((15.0, 40.0)),
        (WorkerType(10.0, EpsNoisy(v=25.0, eps=15.0)),),
        Newsvendor(40.0, 300.0),
        eps_noisy_mode=True,
    )
    ps = optimize_pair(inst, 15.0, 40.0)
    assert ps.profit == pytest.approx(300.0, abs=1e-9)
    # the kink weight 1 - lam/(cap*l(15)) = 0.96 attains the plateau value
    kink = fluid_profit(inst, RewardDistribution.two_point(15.0, 40.0, 0.96))
    assert kink.total_supply == pytest.approx(300.0, abs=1e-9)
    assert kink.profit == pytest.approx(300.0, abs=1e-9)


def test_pair_degenerate_slice_returns_none():
    inst = _tab_instance((0.0, 1.0), (0.0, 0.0), eps_noisy_mode=True)
    assert optimize_pair(inst, 0.0, 1.0) is None


@given(
    st.floats(min_value=0.05, max_value=1.0),
    st.floats(min_value=0.0, max_value=1.0),
    st.floats(min_value=0.0, max_value=1.0),
)
def test_pair_never_below_endpoints(lo_rate, hi_frac, y):
    # the pair optimum dominates every scanned point of its own slice
    hi_rate = lo_rate * hi_frac
    inst = _tab_instance((1.0, 2.0), (lo_rate, hi_rate), revenue=Power(c=5.0, beta=0.5),
                         eps_noisy_mode=True)
    ps = optimize_pair(inst, 1.0, 2.0)
    if ps is None:
        return
    try:
        sample = fluid_profit(inst, RewardDistribution.two_point(1.0, 2.0, y)).profit
    except DegenerateSupply:
        return
    assert ps.profit >= sample - 1e-7 * max(1.0, abs(sample))


# --------------------------------------------------------------------------
# Global solver


def test_solve_fluid_mixture_instance(canon):
    out = solve_fluid(canon)
    assert out.x.support_rewards() == (57.0, 58.0)
    assert out.x.weight_at(58.0) == pytest.approx(0.33973762443800726, abs=1e-9)
    assert out.profit == pytest.approx(6399.039356334297, rel=1e-9)
    # the revenue cap binds at the optimum
    assert out.total_supply == pytest.approx(150.0, abs=1e-6)


def test_solve_fluid_support_at_most_two(canon):
    assert len(solve_fluid(canon).x.support()) <= 2


def test_solver_matches_oracle_on_small_instances():
    rng = np.random.default_rng(7)
    for _ in range(25):
        m = int(rng.integers(2, 5))
        grid = np.sort(rng.uniform(1.0, 50.0, size=m))
        while np.min(np.diff(grid)) < 1e-3:
            grid = np.sort(rng.uniform(1.0, 50.0, size=m))
        types = tuple(
            WorkerType(
                float(rng.uniform(0.5, 3.0)),
                Tabulated(tuple(grid), tuple(np.sort(rng.uniform(0.05, 1.0, size=m))[::-1])),
            )
            for _ in range(int(rng.integers(1, 4)))
        )
        inst = MarketInstance(RewardSet(tuple(grid)), types, Power(c=100.0, beta=0.6))
        out = solve_fluid(inst)
        oracle = brute_force_oracle(inst, 60)
        tol = 10.0 * objective_lipschitz(inst, 60) / 60.0
        assert out.profit >= oracle.profit - tol
        assert len(out.x.support()) <= 2


def test_oracle_guards():
    inst = _tab_instance((0.0, 1.0), (1.0, 0.5))
    with pytest.raises(TooLarge):
        brute_force_oracle(inst, 101)
    big = MarketInstance(
        RewardSet(tuple(float(k) for k in range(6))),
        (WorkerType(1.0, ExpFloor(0.1, 0.0)),),
        LinearRev(alpha=1.0),
    )
    with pytest.raises(TooLarge):
        brute_force_oracle(big, 10)


def test_oracle_flat_plateau_value():
    inst = MarketInstance(
        RewardSet((15.0, 40.0)),
        (WorkerType(10.0, EpsNoisy(v=25.0, eps=15.0)),),
        Newsvendor(40.0, 300.0),
        eps_noisy_mode=True,
    )
    assert brute_force_oracle(inst, 60).profit == pytest.approx(300.0, abs=1e-9)


def test_objective_lipschitz_positive(canon):
    small = _tab_instance((0.0, 1.0, 2.0), (1.0, 0.6, 0.3), revenue=Power(c=10.0, beta=0.5))
    assert objective_lipschitz(small, 30) > 0.0


# --------------------------------------------------------------------------
# Budgeted supply maximization


def _budget_instance():
    return MarketInstance(
        RewardSet((15.0, 60.0)),
        (WorkerType(10.0, Tabulated((15.0, 60.0), (1.0, 0.2))),),
        Newsvendor(100.0, 150.0),
    )


def test_supply_opt_binding_budget():
    b = BudgetedInstance(_budget_instance(), 1000.0)
    out = solve_supply_opt(b)
    assert out.x.weight_at(60.0) == pytest.approx(0.68, abs=1e-9)
    assert out.total_supply == pytest.approx(21.929824561403507, rel=1e-12)
    assert out.expected_reward * out.total_supply == pytest.approx(1000.0, abs=1e-6)


def test_supply_opt_loose_budget_pays_top():
    # with budget >= the full cost of r_max, paying everyone 60 is optimal
    inst = _budget_instance()
    top_cost = 60.0 * 10.0 / 0.2
    out = solve_supply_opt(BudgetedInstance(inst, top_cost + 10.0))
    assert out.x.weight_at(60.0) == pytest.approx(1.0)
    assert out.total_supply == pytest.approx(50.0, rel=1e-12)


def test_budget_below_floor_cost_rejected():
    with pytest.raises(ValueError, match="cannot cover"):
        BudgetedInstance(_budget_instance(), 100.0)


def test_supply_opt_monotone_in_budget():
    inst = _budget_instance()
    supplies = [solve_supply_opt(BudgetedInstance(inst, b)).total_supply for b in (300.0, 600.0, 1200.0, 2400.0)]
    assert all(b >= a - 1e-9 for a, b in zip(supplies, supplies[1:]))


# --------------------------------------------------------------------------
# Interlacing and support reduction


def _reduction_instance():
    rs = RewardSet((10.0, 20.0, 40.0, 80.0))
    t = WorkerType(5.0, Tabulated(rs.values, (1.0, 0.7, 0.4, 0.1)))
    return MarketInstance(rs, (t,), Newsvendor(100.0, 1000.0))


def test_find_interlacing_triple():
    inst = _reduction_instance()
    # singleton costs: 50, 143, 500, 4000: budget 600 splits {10,20,40} | {80}
    b = BudgetedInstance(inst, 600.0)
    triple = find_interlacing(b, (10.0, 20.0, 40.0, 80.0))
    assert triple == (80.0, 40.0, 20.0)
    with pytest.raises(InterlacingNotFound):
        find_interlacing(BudgetedInstance(inst, 5000.0), (10.0, 20.0, 40.0, 80.0))
    with pytest.raises(ValueError, match="three"):
        find_interlacing(b, (10.0, 20.0))


def _tight_case(inst, lo_w, mid_w):
    # four-point distribution whose own expected pay defines the budget, so
    # the input is budget-tight by construction
    rest = 1.0 - lo_w - mid_w
    x = RewardDistribution.on(inst.rewards, (lo_w, mid_w, 2.0 * rest / 3.0, rest / 3.0))
    out = fluid_profit(inst, x)
    return x, out.expected_reward * out.total_supply, out.total_supply


def test_support_reduce_preserves_supply_and_budget():
    inst = _reduction_instance()
    x0, budget, n0 = _tight_case(inst, 0.3, 0.3)
    x1 = support_reduce(BudgetedInstance(inst, budget), x0)
    out = fluid_profit(inst, x1)
    assert len(x1.support()) <= 2
    assert out.total_supply >= n0 - 1e-9
    assert out.expected_reward * out.total_supply <= budget + 1e-6


def test_support_reduce_rejects_loose_input():
    inst = _reduction_instance()
    b = BudgetedInstance(inst, 600.0)
    x = RewardDistribution.on(inst.rewards, (0.25, 0.25, 0.25, 0.25))
    with pytest.raises(InfeasibleInput, match="budget"):
        support_reduce(b, x)


@settings(deadline=None, max_examples=25)
@given(st.floats(min_value=0.05, max_value=0.45), st.floats(min_value=0.05, max_value=0.45))
def test_support_reduce_property(lo_w, mid_w):
    inst = _reduction_instance()
    x0, budget, n0 = _tight_case(inst, lo_w, mid_w)
    x1 = support_reduce(BudgetedInstance(inst, budget), x0)
    out = fluid_profit(inst, x1)
    assert len(x1.support()) <= 2
    assert out.total_supply >= n0 - 1e-9
    assert out.expected_reward <= expected_reward(x0) + 1e-9


# --------------------------------------------------------------------------
# Dispersion, fixed wages, lotteries


def test_classify_dispersion():
    rs = RewardSet((15.0, 16.0, 17.0, 60.0))
    assert classify_dispersion(RewardDistribution.point_mass(rs, 16.0), rs) is Dispersion.MINIMAL
    adjacent = RewardDistribution.on(rs, (0.5, 0.5, 0.0, 0.0))
    assert classify_dispersion(adjacent, rs) is Dispersion.MINIMAL
    extreme = RewardDistribution.on(rs, (0.5, 0.0, 0.0, 0.5))
    assert classify_dispersion(extreme, rs) is Dispersion.MAXIMAL
    skip = RewardDistribution.on(rs, (0.5, 0.0, 0.5, 0.0))
    assert classify_dispersion(skip, rs) is Dispersion.NEITHER
    wide = RewardDistribution.on(rs, (0.4, 0.3, 0.3, 0.0))
    with pytest.raises(ValueError, match="two"):
        classify_dispersion(wide, rs)


def test_optimal_fixed_wage_canonical(canon):
    wage, out = optimal_fixed_wage(canon)
    assert wage == 57.0
    assert out.profit == pytest.approx(5973.340270273799, rel=1e-9)


def test_lottery_moments():
    lot = lottery_distribution(15.0, 35.0, 11.2)
    assert lot.support_rewards() == (15.0, 41.272)
    assert lot.weight_at(41.272) == pytest.approx(400.0 / (400.0 + 11.2**2), rel=1e-12)
    assert expected_reward(lot) == pytest.approx(35.0, rel=1e-12)
    var = sum(w * (r - 35.0) ** 2 for r, w in lot.support())
    assert var == pytest.approx(11.2**2, rel=1e-12)


def test_lottery_invalid_moments():
    with pytest.raises(InvalidMoments):
        lottery_distribution(15.0, 15.0, 5.0)
    with pytest.raises(InvalidMoments):
        lottery_distribution(15.0, 35.0, 0.0)


def test_lottery_snaps_only_for_tabulated():
    smooth = MarketInstance(
        RewardSet.from_range(15.0, 60.0, 1.0),
        (WorkerType(10.0, ExpFloor(0.07, 15.0)),),
        Newsvendor(100.0, 150.0),
    )
    lot, dist = lottery_for_instance(smooth, 35.0, 11.2)
    assert dist == 0.0
    assert lot.support_rewards() == (15.0, 41.272)

    tab = _tab_instance((15.0, 40.0, 45.0), (1.0, 0.5, 0.4), lam=10.0)
    lot, dist = lottery_for_instance(tab, 35.0, 11.2)
    assert lot.support_rewards() == (15.0, 40.0)
    assert dist == pytest.approx(1.272, rel=1e-12)
    # weight is kept, so the mean shifts by weight_high * snap distance
    assert lot.weight_at(40.0) == pytest.approx(400.0 / (400.0 + 11.2**2), rel=1e-12)
