import math
import warnings

import numpy as np
import pytest

from wage_earner.errors import DomainError, PathError
from wage_earner.simulate import (
    EvaluationMode,
    FixedFractions,
    SimulationConfig,
    Termination,
    closed_form_policy,
    compare_strategies,
    estimate_expected_utility,
    simulate_path,
    summary_csv,
)
from wage_earner.solver import Variant, optimal_risky_amounts, solve, value_function

from conftest import TINY_HAZARD, make_scenario

RH = EvaluationMode.RANDOM_HORIZON
FW = EvaluationMode.FIXED_HORIZON_WEIGHTED


def test_config_validation():
    with pytest.raises(ValueError):
        SimulationConfig(dt=0.0)
    with pytest.raises(ValueError):
        SimulationConfig(n_paths=0)
    with pytest.raises(ValueError):
        SimulationConfig(solvency="none")
    assert SimulationConfig(evaluation_mode="fixed_horizon_weighted").evaluation_mode is FW


def test_deterministic_wealth_without_risk():
    r, i, x0, T, dt = 0.04, 50_000.0, 1e5, 40.0, 0.01
    sc = make_scenario(r=r, hazard=TINY_HAZARD, i0=i, T=T, x0=x0, gamma=0.5)
    path = simulate_path(sc, FixedFractions(theta=(0.0,)), SimulationConfig(dt=dt))
    n = round(T / dt)
    growth = (1 + r * dt) ** n
    euler = x0 * growth + i * dt * (growth - 1) / (r * dt)
    exact = x0 * math.exp(r * T) + i * (math.exp(r * T) - 1) / r
    assert path.terminated_by is Termination.RETIREMENT
    assert path.wealth[0] == x0
    assert path.wealth[-1] == pytest.approx(euler, rel=1e-12)
    assert path.wealth[-1] == pytest.approx(exact, rel=r * r * T * dt)


def test_gbm_terminal_mean():
    mu, s, T, x0 = 0.07, 0.2, 1.0, 1e5
    sc = make_scenario(mu=(mu,), sigma=((s,),), hazard=TINY_HAZARD, i0=0.0, T=T, gamma=0.5)
    cfg = SimulationConfig(n_paths=100_000, dt=0.01, seed=11)
    est = estimate_expected_utility(sc, FixedFractions(theta=(1.0,)), config=cfg)
    sd = x0 * math.exp(mu * T) * math.sqrt(math.expm1(s * s * T))
    assert abs(est.mean_terminal_wealth - x0 * math.exp(mu * T)) < 3 * sd / math.sqrt(cfg.n_paths)


def test_bit_reproducible(fig1):
    cfg = SimulationConfig(n_paths=2000, dt=0.05, seed=7)
    pol = closed_form_policy(fig1)
    a = estimate_expected_utility(fig1, pol, config=cfg)
    b = estimate_expected_utility(fig1, pol, config=cfg)
    assert a == b
    p1 = simulate_path(fig1, pol, cfg, path_index=17)
    p2 = simulate_path(fig1, pol, cfg, path_index=17)
    assert p1.to_csv() == p2.to_csv()


def test_independent_of_blocking_and_threads(fig1):
    pol = closed_form_policy(fig1)
    base = SimulationConfig(n_paths=3000, dt=0.05, seed=2)
    ref = estimate_expected_utility(fig1, pol, config=base)
    for kw in (dict(block_size=256), dict(n_workers=3, block_size=512)):
        got = estimate_expected_utility(fig1, pol, config=SimulationConfig(n_paths=3000, dt=0.05, seed=2, **kw))
        assert got == ref


def test_seed_changes_estimate(fig1):
    pol = closed_form_policy(fig1)
    a = estimate_expected_utility(fig1, pol, config=SimulationConfig(n_paths=500, dt=0.1, seed=1))
    b = estimate_expected_utility(fig1, pol, config=SimulationConfig(n_paths=500, dt=0.1, seed=2))
    assert a.mean != b.mean


def test_single_paths_match_batch(fig1):
    pol = closed_form_policy(fig1)
    cfg = SimulationConfig(n_paths=6, dt=0.05, seed=4, antithetic=False)
    est = estimate_expected_utility(fig1, pol, config=cfg)
    per_path = [simulate_path(fig1, pol, cfg, path_index=k).realized_utility for k in range(6)]
    assert est.mean == pytest.approx(math.fsum(per_path) / 6, rel=1e-14)


def test_death_path_ends_at_death_time():
    sc = make_scenario(hazard=0.5)
    cfg = SimulationConfig(dt=0.05, seed=1)
    pol = closed_form_policy(sc)
    path = next(p for p in (simulate_path(sc, pol, cfg, path_index=k) for k in range(50))
                if p.terminated_by is Termination.DEATH)
    assert path.times[-1] == path.death_time
    assert path.times[-2] < path.death_time
    assert np.all(path.wealth >= 0)
    header = path.to_csv().splitlines()[0]
    assert header == "t,wealth,consumption,premium,risky_1"


def test_modes_coincide_without_mortality():
    sc = make_scenario(hazard=TINY_HAZARD, i0=20_000.0)
    pol = closed_form_policy(sc)
    rh = estimate_expected_utility(sc, pol, config=SimulationConfig(n_paths=4000, dt=0.05, evaluation_mode=RH))
    fw = estimate_expected_utility(sc, pol, config=SimulationConfig(n_paths=4000, dt=0.05, evaluation_mode=FW))
    assert rh.mean == pytest.approx(fw.mean, rel=1e-8)
    assert rh.std_error == pytest.approx(fw.std_error, rel=1e-6)


def test_mode_equivalence_small(fig1):
    pol = closed_form_policy(fig1)
    rh = estimate_expected_utility(fig1, pol, config=SimulationConfig(n_paths=20_000, dt=0.05, evaluation_mode=RH))
    fw = estimate_expected_utility(fig1, pol, config=SimulationConfig(n_paths=20_000, dt=0.05, evaluation_mode=FW))
    assert abs(rh.mean - fw.mean) < 3 * math.hypot(rh.std_error, fw.std_error)
    assert fw.std_error < rh.std_error


def test_duplicated_strategy_gives_identical_rows(fig1):
    pol = closed_form_policy(fig1)
    rows = compare_strategies(fig1, [("a", pol), ("b", pol)], config=SimulationConfig(n_paths=1000, dt=0.1))
    assert rows[0].estimate == rows[1].estimate
    lines = summary_csv(rows).splitlines()
    assert lines[0] == "strategy,mean,std_error,bankruptcy_fraction,mean_terminal_wealth,mean_insurance_spend"
    assert lines[1].split(",", 1)[1] == lines[2].split(",", 1)[1]


def test_insured_allocation_is_smaller(fig1):
    xa = fig1.market.algebra(0.0).xi_alpha
    wealths = np.array([1e3, 1e5, 1e6, 3e6])
    for t in np.arange(0.0, 40.0, 0.5):
        amt = optimal_risky_amounts(fig1, t, wealths, Variant.WITH_INSURANCE)
        amt0 = optimal_risky_amounts(fig1, t, wealths, Variant.NO_INSURANCE)
        pos = xa > 0
        assert np.all(amt[:, pos] < amt0[:, pos])
        assert np.all(np.abs(amt) < np.abs(amt0))


def test_zero_risk_premium_isolates_insurance():
    # mu = r: both closed forms hold no risky assets, so wealth is deterministic
    sc = make_scenario(mu=(0.04,))
    cfg = SimulationConfig(n_paths=4, dt=0.01, evaluation_mode=FW)
    rows = compare_strategies(
        sc, [closed_form_policy(sc, Variant.WITH_INSURANCE), closed_form_policy(sc, Variant.NO_INSURANCE)], config=cfg
    )
    for variant in Variant:
        assert np.all(optimal_risky_amounts(sc, 10.0, np.array([1e5]), variant) == 0)
    ins, plain = (r.estimate for r in rows)
    assert ins.std_error == 0 and plain.std_error == 0
    assert ins.mean != plain.mean
    assert plain.mean_insurance_spend == 0 and ins.mean_insurance_spend != 0
    assert ins.mean == pytest.approx(value_function(sc, 0.0, 1e5), rel=5e-3)


def test_negative_consumption_is_rejected(fig1):
    with pytest.raises(DomainError):
        estimate_expected_utility(fig1, FixedFractions(consumption=-1.0, theta=(0.0, 0.0)),
                                  config=SimulationConfig(n_paths=10, dt=0.1))


def test_non_finite_action_is_rejected(fig1):
    with pytest.raises(PathError):
        estimate_expected_utility(fig1, FixedFractions(premium=float("nan"), theta=(0.0, 0.0)),
                                  config=SimulationConfig(n_paths=10, dt=0.1))


def test_bankruptcy_is_reported():
    sc = make_scenario(hazard=TINY_HAZARD, i0=0.0, gamma=0.5)
    cfg = SimulationConfig(n_paths=10, dt=0.1, solvency="zero")
    with pytest.warns(UserWarning, match="bankrupt"):
        est = estimate_expected_utility(sc, FixedFractions(consumption=1e4, theta=(0.0,)), config=cfg)
    assert est.bankruptcy_fraction == 1.0
    assert math.isnan(est.mean)


def test_weak_order_one():
    # alpha = 0 removes the noise, leaving only the discretisation error
    sc = make_scenario(mu=(0.04,))
    pol = closed_form_policy(sc)
    est = {dt: estimate_expected_utility(sc, pol, config=SimulationConfig(n_paths=2, dt=dt, evaluation_mode=FW)).mean
           for dt in (0.04, 0.02, 0.01)}
    ratio = (est[0.04] - est[0.02]) / (est[0.02] - est[0.01])
    assert ratio == pytest.approx(2.0, abs=0.2)


PERTURBATIONS = [
    dict(consumption_scale=0.8), dict(consumption_scale=1.25),
    dict(premium_scale=0.8), dict(premium_scale=1.25),
    dict(risky_scale=0.8), dict(risky_scale=1.25),
    dict(consumption_scale=0.8, premium_scale=0.8), dict(consumption_scale=1.25, premium_scale=1.25),
    dict(consumption_scale=0.8, premium_scale=0.8, risky_scale=0.8),
    dict(consumption_scale=1.25, premium_scale=1.25, risky_scale=1.25),
]


@pytest.mark.slow
def test_closed_form_dominates_perturbations(fig1):
    cfg = SimulationConfig(n_paths=20_000, dt=0.05, seed=3)
    strategies = [("optimal", closed_form_policy(fig1))]
    strategies += [(str(kw), closed_form_policy(fig1, **kw)) for kw in PERTURBATIONS]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        rows = compare_strategies(fig1, strategies, config=cfg)
    best = rows[0].estimate
    for row in rows[1:]:
        assert row.estimate.mean < best.mean, row.name
    clear = {str(kw) for kw in PERTURBATIONS[:2] + PERTURBATIONS[4:5]}
    for row in rows[1:]:
        if row.name in clear:
            assert best.mean - row.estimate.mean > 3 * row.estimate.std_error, row.name
