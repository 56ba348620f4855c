"""Noisy-entry analytics: closed-form lotteries, the capped-revenue special
case, surplus accounting, and crossover detection."""

import json
import math

import numpy as np
import pytest

from gigopt.experiments import noisy_newsvendor_instance, noisy_sqrt_instance
from gigopt.market import DegenerateSupply, LinearRev, Newsvendor, Power, RewardDistribution
from gigopt.noisy import (
    AssumptionViolated,
    DerivativeVanishes,
    GridMismatch,
    InvalidRegime,
    NoisyInstance,
    detect_double_threshold,
    load_noisy,
    market_instance,
    mhr_like_check,
    myopic_scaled_surplus,
    newsvendor_optimal,
    noisy_from_dict,
    noisy_metrics,
    noisy_to_dict,
    optimal_noisy,
    rational_scaled_surplus,
    surplus_curve,
)

EPS_GRID = [float(e) for e in np.linspace(0.25, 25.0, 100)]


# --------------------------------------------------------------------------
# Instance construction


def test_noisy_instance_validation():
    ok = dict(lambdas=(1.0,), values=(25.0,), epsilon=5.0,
              revenue=Power(c=250.0, beta=0.5), r_min=0.0, r_max=100.0)
    with pytest.raises(ValueError, match="per worker value"):
        NoisyInstance(**{**ok, "lambdas": (1.0, 2.0)})
    with pytest.raises(ValueError, match="positive"):
        NoisyInstance(**{**ok, "lambdas": (0.0,)})
    with pytest.raises(ValueError, match="r_min < r_max"):
        NoisyInstance(**{**ok, "r_max": 0.0})
    with pytest.raises(ValueError, match="strictly inside"):
        NoisyInstance(**{**ok, "values": (100.0,)})
    with pytest.raises(ValueError, match="non-negative"):
        NoisyInstance(**{**ok, "epsilon": -1.0})
    assert NoisyInstance(**ok).with_epsilon(9.0).epsilon == 9.0


def test_market_instance_grid_is_bounds_plus_breakpoints():
    sq = noisy_sqrt_instance(5.0)
    assert market_instance(sq).rewards.values == (0.0, 20.0, 25.0, 30.0, 100.0)
    # breakpoints outside the reward range are clipped away
    assert market_instance(sq.with_epsilon(30.0)).rewards.values == (0.0, 25.0, 55.0, 100.0)
    with pytest.raises(AssumptionViolated, match="positive noise"):
        market_instance(sq.with_epsilon(0.0))


def test_market_instance_merges_colliding_breakpoints():
    two = NoisyInstance(lambdas=(1.0, 1.0), values=(25.0, 30.0), epsilon=2.5,
                        revenue=Power(c=250.0, beta=0.5), r_min=0.0, r_max=100.0)
    # 25 + 2.5 and 30 - 2.5 collapse into one grid point
    assert market_instance(two).rewards.values == (0.0, 22.5, 25.0, 27.5, 30.0, 32.5, 100.0)


# --------------------------------------------------------------------------
# Single-type closed form


def test_optimal_noisy_closed_form():
    sq = noisy_sqrt_instance(5.0)
    sol = optimal_noisy(sq)
    assert sol.eps0 == pytest.approx(125.0 / math.sqrt(10.0) - 25.0, abs=1e-9)
    assert sol.x_star == pytest.approx(0.424, abs=1e-9)
    assert sol.distribution.support_rewards() == (0.0, 30.0)
    # R'(lam/(1-x)) = v + eps inverts to 1 - x = lam ((v+eps)/c)^2 here
    for e in (1.0, 5.0, 10.0, 14.0):
        got = optimal_noisy(sq.with_epsilon(e)).x_star
        assert got == pytest.approx(1.0 - 10.0 * ((25.0 + e) / 125.0) ** 2, abs=1e-9)


def test_optimal_noisy_stops_paying_beyond_eps0():
    sq = noisy_sqrt_instance(5.0)
    sol = optimal_noisy(sq.with_epsilon(15.0))  # eps0 ~ 14.53
    assert sol.x_star == 0.0
    assert sol.distribution.support_rewards() == (0.0,)


def test_optimal_noisy_assumptions():
    sq = noisy_sqrt_instance(5.0)
    with pytest.raises(AssumptionViolated, match="single worker type"):
        optimal_noisy(NoisyInstance(lambdas=(1.0, 1.0), values=(25.0, 30.0), epsilon=5.0,
                                    revenue=Power(c=250.0, beta=0.5), r_min=0.0, r_max=100.0))
    with pytest.raises(AssumptionViolated, match="strictly concave"):
        optimal_noisy(NoisyInstance(lambdas=(10.0,), values=(25.0,), epsilon=5.0,
                                    revenue=LinearRev(alpha=40.0), r_min=0.0, r_max=100.0))
    with pytest.raises(AssumptionViolated, match="exceeds the reward range slack"):
        optimal_noisy(sq.with_epsilon(26.0))
    with pytest.raises(AssumptionViolated, match="non-triviality"):
        optimal_noisy(NoisyInstance(lambdas=(10.0,), values=(25.0,), epsilon=5.0,
                                    revenue=Power(c=10000.0, beta=0.5), r_min=0.0, r_max=100.0))


def test_newsvendor_optimal():
    for e in (0.0, 5.0, 15.0):
        assert newsvendor_optimal(40.0, 300.0, 10.0, 25.0, e) == pytest.approx(29.0 / 30.0, rel=1e-12)
    assert newsvendor_optimal(40.0, 300.0, 10.0, 25.0, 15.000001) == 0.0
    with pytest.raises(InvalidRegime):
        newsvendor_optimal(40.0, 10.0, 10.0, 5.0, 1.0)
    with pytest.raises(ValueError, match="positive"):
        newsvendor_optimal(0.0, 300.0, 10.0, 25.0, 1.0)
    with pytest.raises(ValueError, match="non-negative"):
        newsvendor_optimal(40.0, 300.0, 10.0, 25.0, -1.0)


# --------------------------------------------------------------------------
# Metrics


def test_noisy_metrics_accounting_identity():
    sq = noisy_sqrt_instance(5.0)
    m = noisy_metrics(sq, optimal_noisy(sq).distribution)
    assert m.profit == pytest.approx(820.8333333333, abs=1e-6)
    assert m.surplus == pytest.approx(-213.1944444444, abs=1e-6)
    assert m.welfare == pytest.approx(607.6388888889, abs=1e-6)
    assert m.welfare - m.profit - m.surplus == pytest.approx(0.0, abs=1e-9)


def test_degenerate_distribution_rejected():
    sq = noisy_sqrt_instance(5.0)
    never_leaves = RewardDistribution.point_mass((0.0, 30.0), 30.0)  # rate(v + eps) = 0
    with pytest.raises(DegenerateSupply, match="never departs"):
        noisy_metrics(sq, never_leaves)


def test_scaled_surpluses_single_type():
    sq = noisy_sqrt_instance(5.0)
    dist = optimal_noisy(sq).distribution
    # expected pay 12.72 < value 25: rational workers would not enter
    assert rational_scaled_surplus(sq, dist, 5.0) == 0.0
    # with one type the excess-weighted average is just surplus
    assert myopic_scaled_surplus(sq, dist, 5.0) == pytest.approx(
        noisy_metrics(sq, dist).surplus, rel=1e-9
    )
    # full turnover retains nobody
    pay_floor = RewardDistribution.point_mass((0.0, 30.0), 0.0)
    assert myopic_scaled_surplus(sq, pay_floor, 5.0) == 0.0


def test_mhr_like_check():
    assert mhr_like_check(Power(c=250.0, beta=0.5), 25.0, 10.0, list(np.linspace(10, 50, 9)))
    with pytest.raises(DerivativeVanishes):
        mhr_like_check(LinearRev(alpha=40.0), 25.0, 10.0, [10.0, 20.0])
    with pytest.raises(ValueError, match="two grid points"):
        mhr_like_check(Power(c=250.0, beta=0.5), 25.0, 10.0, [10.0])
    with pytest.raises(ValueError, match="below the arrival rate"):
        mhr_like_check(Power(c=250.0, beta=0.5), 25.0, 10.0, [5.0, 20.0])


# --------------------------------------------------------------------------
# Curves over noise levels


def test_surplus_curve_grid_validation():
    sq = noisy_sqrt_instance(5.0)
    with pytest.raises(ValueError, match="two grid points"):
        surplus_curve(sq, [1.0])
    with pytest.raises(ValueError, match="positive"):
        surplus_curve(sq, [0.0, 1.0])
    with pytest.raises(ValueError, match="strictly increasing"):
        surplus_curve(sq, [1.0, 1.0])


def test_sqrt_curve_shapes():
    sq = noisy_sqrt_instance(5.0)
    cur = surplus_curve(sq, EPS_GRID)
    assert cur.eps0 == pytest.approx(125.0 / math.sqrt(10.0) - 25.0, abs=1e-9)
    xs = np.array(cur.x_star)
    assert np.all(np.diff(xs) <= 1e-12)
    assert xs[-1] == 0.0
    assert np.all(np.diff(cur.profit) <= 1e-9)
    inner = np.array(cur.eps) < cur.eps0 - 1e-9
    assert np.diff(np.array(cur.surplus)[inner], 2).max() <= 1e-6  # concave before eps0
    # surplus peaks strictly inside the paying band
    assert 0.0 < cur.eps1 < cur.eps0
    assert cur.eps1 == pytest.approx(6.0, abs=1e-12)


def test_newsvendor_curve_closed_form_lines():
    nv = noisy_newsvendor_instance(5.0)
    cur = surplus_curve(nv, EPS_GRID)
    eps = np.array(cur.eps)
    low = eps <= 15.0 + 1e-12
    np.testing.assert_allclose(np.array(cur.welfare)[low], 4500.0, atol=1e-9)
    np.testing.assert_allclose(np.array(cur.profit)[low], 4750.0 - 290.0 * eps[low], atol=1e-9)
    np.testing.assert_allclose(np.array(cur.surplus)[low], 290.0 * eps[low] - 250.0, atol=1e-9)
    # paying stops exactly past alpha - v, where welfare drops to R(lam) - lam v
    k = int(np.argmin(np.abs(eps - 15.0)))
    assert cur.x_star[k] == pytest.approx(29.0 / 30.0, rel=1e-12)
    assert cur.x_star[k + 1] == 0.0
    np.testing.assert_allclose(np.array(cur.welfare)[~low], 150.0, atol=1e-12)
    assert cur.eps0 == 15.0
    assert cur.eps1 == 15.0
    # one type, everyone identical: both scaled baselines equal the surplus
    band = (eps >= 25.0 / 29.0 + 1e-9) & low
    np.testing.assert_allclose(np.array(cur.rational)[band], np.array(cur.surplus)[band], atol=1e-9)
    np.testing.assert_allclose(np.array(cur.myopic)[band], np.array(cur.surplus)[band], atol=1e-9)


def test_multi_type_curve_runs_through_solver():
    two = NoisyInstance(lambdas=(5.0, 5.0), values=(20.0, 30.0), epsilon=1.0,
                        revenue=Power(c=250.0, beta=0.5), r_min=0.0, r_max=100.0)
    cur = surplus_curve(two, [2.0, 4.0, 6.0])
    assert cur.eps0 is None
    assert all(0.0 <= x <= 1.0 for x in cur.x_star)
    assert all(w - p - s == pytest.approx(0.0, abs=1e-9)
               for w, p, s in zip(cur.welfare, cur.profit, cur.surplus))


# --------------------------------------------------------------------------
# Crossover detection


def _curves(eps, ra, my):
    return list(zip(eps, ra)), list(zip(eps, my))


def test_crossover_identical_curves():
    eps = [1.0, 2.0, 3.0]
    ra, my = _curves(eps, [5.0, 6.0, 7.0], [5.0, 6.0, 7.0])
    assert detect_double_threshold(ra, my).count == 0


def test_crossover_single_sign_change():
    eps = [1.0, 2.0, 3.0, 4.0, 5.0]
    ra, my = _curves(eps, [1.0, 1.0, 1.0, 1.0, 1.0], [2.0, 1.5, 0.5, 0.4, 0.3])
    rep = detect_double_threshold(ra, my)
    assert rep.count == 1
    assert rep.locations == (3.0,)


def test_crossover_terminal_collapse_counts():
    eps = [1.0, 2.0, 3.0, 4.0, 5.0]
    ra, my = _curves(eps, [1.0, 1.0, 1.0, 1.0, 1.0], [2.0, 1.5, 0.5, 1.0, 1.0])
    rep = detect_double_threshold(ra, my)
    assert rep.count == 2
    assert rep.locations == (3.0, 4.0)


def test_crossover_zero_runs_bridge_sign():
    eps = [1.0, 2.0, 3.0]
    ra, my = _curves(eps, [1.0, 1.0, 1.0], [2.0, 1.0, 2.0])
    assert detect_double_threshold(ra, my).count == 0
    ra2, my2 = _curves(eps, [1.0, 1.0, 1.0], [2.0, 1.0, 0.5])
    rep = detect_double_threshold(ra2, my2)
    assert rep.count == 1 and rep.locations == (3.0,)


def test_crossover_shallow_excursions_merge():
    eps = [1.0, 2.0, 3.0, 4.0]
    shallow_ra, shallow_my = _curves(eps, [1.0, 20.0, 1.0, 1.0], [2.0, 19.999, 2.0, 2.0])
    assert detect_double_threshold(shallow_ra, shallow_my).count == 1
    deep_ra, deep_my = _curves(eps, [1.0, 1.5, 1.0, 1.0], [2.0, 1.0, 2.0, 2.0])
    rep = detect_double_threshold(deep_ra, deep_my)
    assert rep.count == 2 and rep.locations == (2.0, 3.0)


def test_crossover_grid_mismatch():
    ra, my = _curves([1.0, 2.0], [1.0, 1.0], [2.0, 2.0])
    with pytest.raises(GridMismatch):
        detect_double_threshold(ra, [(1.0, 2.0), (2.5, 2.0)])
    with pytest.raises(GridMismatch):
        detect_double_threshold(ra, my + [(3.0, 2.0)])


# --------------------------------------------------------------------------
# Serialization


def test_noisy_json_round_trip(tmp_path):
    nv = noisy_newsvendor_instance(7.5)
    assert noisy_from_dict(noisy_to_dict(nv)) == nv
    p = tmp_path / "noisy.json"
    p.write_text(json.dumps(noisy_to_dict(nv)), encoding="utf-8")
    assert load_noisy(p) == nv
    with pytest.raises(ValueError, match="unknown revenue kind"):
        noisy_from_dict({**noisy_to_dict(nv), "revenue": {"kind": "cubic"}})
