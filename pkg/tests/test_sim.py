"""Stochastic simulator: conservation, determinism, steady-state agreement
with the fluid quantities, and the aggregate-sampling shortcut."""

import math

import numpy as np
import pytest
from scipy import stats

from gigopt import (
    BeliefBased,
    LinearRev,
    MarketInstance,
    RewardDistribution,
    RewardSet,
    Static,
    Tabulated,
    WorkerType,
    fluid_supply,
    solve_fluid,
)
from gigopt.experiments import example1_instance
from gigopt.sim import (
    ConfigError,
    SimConfig,
    additive_loss_sweep,
    default_burn_in,
    occupancy_samples,
    simulate,
    steady_state_mean,
)


def _fast_instance():
    rs = RewardSet((10.0, 30.0))
    return MarketInstance(
        rs,
        (WorkerType(2.0, Tabulated(rs.values, (0.9, 0.3))),),
        LinearRev(alpha=50.0),
    )


def test_config_validation():
    with pytest.raises(ConfigError, match="theta"):
        SimConfig(theta=0, periods=10, burn_in=0, replications=1, seed=1)
    with pytest.raises(ConfigError, match="burn_in"):
        SimConfig(theta=1, periods=10, burn_in=10, replications=1, seed=1)
    with pytest.raises(ConfigError, match="replication"):
        SimConfig(theta=1, periods=10, burn_in=0, replications=0, seed=1)


def test_belief_policies_are_rejected():
    cfg = SimConfig(theta=1, periods=10, burn_in=0, replications=1, seed=1)
    with pytest.raises(ConfigError, match="belief"):
        simulate(_fast_instance(), BeliefBased(3.0, 1.0, 1.2, 100.0), cfg)


def test_population_conservation_is_exact(canon):
    x = solve_fluid(canon).x
    cfg = SimConfig(theta=3, periods=80, burn_in=10, replications=2, seed=42, record_trace=True)
    tr = simulate(canon, Static(x), cfg).trace
    assert tr.supply.dtype == np.int64
    np.testing.assert_array_equal(tr.supply[0], tr.arrivals[0])
    np.testing.assert_array_equal(
        tr.supply[1:], tr.supply[:-1] - tr.departures[:-1] + tr.arrivals[1:]
    )
    assert np.all(tr.departures <= tr.supply)


def test_bit_identical_reruns(canon):
    x = RewardDistribution.point_mass(canon.rewards, 35.0)
    cfg = SimConfig(theta=2, periods=60, burn_in=20, replications=5, seed=7, record_trace=True)
    a = simulate(canon, Static(x), cfg)
    b = simulate(canon, Static(x), cfg)
    assert a.mean_profit == b.mean_profit
    assert a.std_error == b.std_error
    assert a.mean_supply == b.mean_supply
    for f in ("supply", "arrivals", "departures", "profit"):
        np.testing.assert_array_equal(getattr(a.trace, f), getattr(b.trace, f))


def test_full_turnover_population_is_fresh_arrivals():
    # everyone departs each period, so supply is a fresh Poisson draw
    rs = RewardSet((5.0, 9.0))
    inst = MarketInstance(
        rs,
        (
            WorkerType(1.5, Tabulated(rs.values, (1.0, 1.0))),
            WorkerType(1.0, Tabulated(rs.values, (1.0, 1.0))),
        ),
        LinearRev(alpha=12.0),
    )
    x = RewardDistribution.two_point(5.0, 9.0, 0.4)
    cfg = SimConfig(theta=7, periods=60, burn_in=10, replications=40, seed=11)
    res = simulate(inst, Static(x), cfg)
    mean = 7 * 2.5
    se = math.sqrt(mean / (40 * 50))  # iid Poisson cells after full turnover
    assert abs(res.mean_supply_total - mean) <= 3 * se


def test_steady_state_supply_matches_birth_death_mean():
    inst = example1_instance()
    x = RewardDistribution.point_mass(inst.rewards, 35.0)
    target = float(steady_state_mean(inst, x, theta=10).sum())
    assert target == pytest.approx(10 * 10.0 / math.exp(-1.4), rel=1e-12)
    res = simulate(inst, Static(x), SimConfig(theta=10, periods=300, burn_in=100, replications=30, seed=2))
    # long-run variance of the occupancy AR recursion: theta*N*(2-l)/l per sample
    lhat = math.exp(-1.4)
    se = math.sqrt(target * (2 - lhat) / lhat / (30 * 200))
    assert abs(res.mean_supply_total - target) <= 3 * se


def test_steady_state_mean_scales_linearly(canon):
    x = solve_fluid(canon).x
    np.testing.assert_allclose(steady_state_mean(canon, x, 100), 100 * fluid_supply(canon, x), rtol=1e-12)


def test_static_profit_never_beats_fluid_optimum(canon):
    pi_star = solve_fluid(canon).profit
    for x in (
        solve_fluid(canon).x,
        RewardDistribution.point_mass(canon.rewards, 35.0),
        RewardDistribution.two_point(20.0, 50.0, 0.5),
    ):
        res = simulate(canon, Static(x), SimConfig(theta=20, periods=400, burn_in=200, replications=20, seed=7))
        assert res.mean_profit <= pi_star + 3 * res.std_error


def test_normalized_supply_is_scale_invariant():
    rs = RewardSet((1.0, 4.0))
    inst = MarketInstance(rs, (WorkerType(3.0, Tabulated(rs.values, (0.9, 0.5))),), LinearRev(alpha=6.0))
    x = RewardDistribution.two_point(1.0, 4.0, 0.5)
    n_fluid = float(fluid_supply(inst, x)[0])
    lhat = 3.0 / n_fluid

    def run(theta, seed):
        cfg = SimConfig(theta=theta, periods=260, burn_in=60, replications=25, seed=seed)
        return simulate(inst, Static(x), cfg).mean_supply_total / theta

    def se(theta):
        return math.sqrt(theta * n_fluid * (2 - lhat) / lhat / (25 * 200)) / theta

    m1, m25 = run(1, 21), run(25, 22)
    assert abs(m1 - n_fluid) <= 3 * se(1)
    assert abs(m25 - n_fluid) <= 3 * se(25)
    assert abs(m1 - m25) <= 3 * math.hypot(se(1), se(25))


def test_aggregate_sampler_matches_per_worker_reference():
    # one period of departures plus fresh arrivals, theta=1, 1e5 draws each;
    # the aggregate multinomial/binomial path must match a literal per-worker
    # draw (reward category then Bernoulli departure) in distribution
    inst = _fast_instance()
    x = RewardDistribution.two_point(10.0, 30.0, 0.5)
    S = 100_000
    agg = occupancy_samples(inst, x, theta=1, n_samples=S, burn_in=1, seed=314)

    rng = np.random.default_rng(2718)
    a1 = rng.poisson(2.0, S)
    owner = np.repeat(np.arange(S), a1)
    idx = rng.choice(2, size=owner.size, p=np.asarray(x.weights))
    gone = rng.random(owner.size) < np.where(idx == 0, 0.9, 0.3)
    departed = np.bincount(owner[gone], minlength=S)
    ref = a1 - departed + rng.poisson(2.0, S)

    hi = int(max(agg.max(), ref.max()))
    o1 = np.bincount(agg, minlength=hi + 1).astype(float)
    o2 = np.bincount(ref, minlength=hi + 1).astype(float)
    pooled1, pooled2 = [], []
    c1 = c2 = 0.0
    for k in range(hi + 1):  # pool rare occupancies so every cell has mass
        c1 += o1[k]
        c2 += o2[k]
        if c1 + c2 >= 10.0:
            pooled1.append(c1)
            pooled2.append(c2)
            c1 = c2 = 0.0
    pooled1[-1] += c1
    pooled2[-1] += c2
    b1, b2 = np.array(pooled1), np.array(pooled2)
    stat = float(((b1 - b2) ** 2 / (b1 + b2)).sum())
    p = float(stats.chi2.sf(stat, len(b1) - 1))
    assert p > 0.01


def test_occupancy_samples_validation_and_determinism():
    inst = _fast_instance()
    x = RewardDistribution.two_point(10.0, 30.0, 0.5)
    with pytest.raises(ConfigError):
        occupancy_samples(inst, x, theta=1, n_samples=0, burn_in=1, seed=1)
    a = occupancy_samples(inst, x, theta=1, n_samples=50, burn_in=3, seed=7)
    b = occupancy_samples(inst, x, theta=1, n_samples=50, burn_in=3, seed=7)
    np.testing.assert_array_equal(a, b)


def test_default_burn_in(canon):
    inst = example1_instance()
    x = Static(RewardDistribution.point_mass(inst.rewards, 35.0))
    assert default_burn_in(inst, x) == math.ceil(10 / math.exp(0.07 * (15 - 60)))
    # two of the three canonical departure functions vanish at the top
    # reward, so the fallback uses the policy's own mixture rates
    assert default_burn_in(canon, Static(solve_fluid(canon).x)) == 194
    top = Static(RewardDistribution.point_mass(canon.rewards, 60.0))
    with pytest.raises(ConfigError, match="mixes"):
        default_burn_in(canon, top)


def test_realized_cost_agrees_with_expected_cost():
    inst = _fast_instance()
    x = RewardDistribution.two_point(10.0, 30.0, 0.5)
    kw = dict(theta=5, periods=200, burn_in=50, replications=20, seed=99)
    exp_res = simulate(inst, Static(x), SimConfig(**kw))
    real_res = simulate(inst, Static(x), SimConfig(realized_cost=True, **kw))
    comb = math.hypot(exp_res.std_error, real_res.std_error)
    assert abs(real_res.mean_profit - exp_res.mean_profit) <= 3 * comb
    # a point mass leaves nothing random in the payment
    pm = RewardDistribution.point_mass(inst.rewards, 10.0)
    assert simulate(inst, Static(pm), SimConfig(**kw)).mean_profit == pytest.approx(
        simulate(inst, Static(pm), SimConfig(realized_cost=True, **kw)).mean_profit, rel=1e-12
    )


def test_additive_loss_sweep_rows_and_reproducibility():
    inst = example1_instance()
    policies = [
        ("a", Static(RewardDistribution.point_mass(inst.rewards, 35.0))),
        ("b", Static(RewardDistribution.point_mass(inst.rewards, 40.0))),
    ]
    base = SimConfig(theta=1, periods=120, burn_in=40, replications=6, seed=1234)
    rows = additive_loss_sweep(inst, policies, [2, 8], base)
    assert [(r.policy, r.theta) for r in rows] == [("a", 2), ("b", 2), ("a", 8), ("b", 8)]
    assert all(r.se >= 0.0 and r.reps == 6 for r in rows)
    # cells are seeded by coordinate, so a prefix rerun is identical
    assert additive_loss_sweep(inst, policies, [2], base) == rows[:2]
    per_theta = {2: base, 8: SimConfig(theta=1, periods=120, burn_in=40, replications=9, seed=1234)}
    assert [r.reps for r in additive_loss_sweep(inst, policies, [2, 8], per_theta)] == [6, 6, 9, 9]
