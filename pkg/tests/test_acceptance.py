"""The ten acceptance criteria, each at its stated tolerance.

Every test records one PASS/FAIL line; the lines are printed in the pytest
terminal summary (see conftest.py) and also to stdout.
"""

import math
import time

import numpy as np
import pytest

from wage_earner.cli import main, read_csv
from wage_earner.market import MarketModel, risk_premium, sigma_quadratic, xi_alpha
from wage_earner.errors import SingularMarketError
from wage_earner.simulate import EvaluationMode, SimulationConfig, closed_form_policy, estimate_expected_utility
from wage_earner.solver import (
    Preferences,
    Variant,
    coefficient_e_integral,
    human_capital_integral,
    lemma_hypotheses_hold,
    optimal_control,
    optimal_portfolio,
    optimal_premium,
    solve,
    value_function,
)
from wage_earner.verify import numeric_hamiltonian_argmax, verify_grid

REPORT: list[str] = []


def record(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] {number:2d} {title}: {detail}"
    REPORT.append(line)
    print(line)
    assert ok, line


T_GRID = np.linspace(0.0, 40.0, 51)
X_GRID = np.linspace(1e3, 3e6, 51)


@pytest.fixture(scope="module")
def mc_random_horizon(fig1):
    cfg = SimulationConfig(n_paths=100_000, dt=0.01, seed=0, n_workers=4)
    start = time.perf_counter()
    est = estimate_expected_utility(fig1, closed_form_policy(fig1), 0.0, 1e5, cfg)
    return est, time.perf_counter() - start


def test_01_hjb_certification(fig1):
    start = time.perf_counter()
    rep = verify_grid(fig1, T_GRID, X_GRID)
    elapsed = time.perf_counter() - start
    ok = rep.max_relative_residual < 1e-8 and rep.max_relative_residual_fd < 1e-4 and elapsed < 10
    record(1, "HJB certification", ok,
           f"analytic {rep.max_relative_residual:.2e} < 1e-8, finite-difference {rep.max_relative_residual_fd:.2e} "
           f"< 1e-4, {elapsed:.2f}s < 10s")


def test_02_argmax_oracle(fig1):
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        t, x = rng.uniform(0.0, 40.0), rng.uniform(1e3, 3e6)
        num = numeric_hamiltonian_argmax(fig1, t, x)
        ref = optimal_control(fig1, t, x)
        rel = [abs(num.c / ref.c - 1), abs(num.p / ref.p - 1), *np.abs(num.theta / ref.theta - 1)]
        worst = max(worst, *rel)
    elapsed = time.perf_counter() - start
    record(2, "argmax oracle", worst < 1e-6 and elapsed < 30,
           f"max relative gap {worst:.2e} < 1e-6 over 100 points, {elapsed:.2f}s < 30s")


def test_03_ode_quadrature_cross_check(fig1):
    worst = 0.0
    for variant in Variant:
        coeffs = solve(fig1, variant)
        for t in np.linspace(0.0, 39.0, 20):
            for rk4, quad in ((coeffs.e(t), coefficient_e_integral(fig1, t, variant)),
                              (coeffs.b(t), human_capital_integral(fig1, t, variant))):
                worst = max(worst, abs(rk4 - quad) / abs(quad))
    record(3, "ODE/quadrature cross-check", worst < 1e-8, f"max relative gap {worst:.2e} < 1e-8 at 20 times")


def test_04_monte_carlo_consistency(fig1, mc_random_horizon):
    est, t_opt = mc_random_horizon
    V = value_function(fig1, 0.0, 1e5)
    cfg = SimulationConfig(n_paths=100_000, dt=0.01, seed=0, n_workers=4)
    start = time.perf_counter()
    worse = estimate_expected_utility(fig1, closed_form_policy(fig1, consumption_scale=1.2), 0.0, 1e5, cfg)
    elapsed = t_opt + time.perf_counter() - start
    z_opt = (est.mean - V) / est.std_error
    z_bad = (worse.mean - V) / worse.std_error
    ok = abs(z_opt) < 3 and z_bad < -3 and elapsed < 120
    record(4, "Monte Carlo consistency", ok,
           f"optimal z={z_opt:+.2f} (|z|<3), 1.2c z={z_bad:+.2f} (<-3), {elapsed:.1f}s < 120s")


def test_05_lemma_equivalence(fig1, mc_random_horizon):
    rh, _ = mc_random_horizon
    cfg = SimulationConfig(n_paths=100_000, dt=0.01, seed=0, n_workers=4,
                           evaluation_mode=EvaluationMode.FIXED_HORIZON_WEIGHTED)
    fw = estimate_expected_utility(fig1, closed_form_policy(fig1), 0.0, 1e5, cfg)
    z = (rh.mean - fw.mean) / math.hypot(rh.std_error, fw.std_error)
    record(5, "random-horizon vs weighted estimator", abs(z) < 3, f"z={z:+.2f} (|z|<3)")


def test_06_figure1_shape(tmp_path):
    assert main(["figure1", "--out", str(tmp_path)]) == 0
    header, data = read_csv(tmp_path / "surface.csv")
    t, F, p = (data[:, header.index(k)] for k in ("t", "full_wealth", "p"))
    times = np.unique(t)
    decreasing = all(np.all(np.diff(p[t == s]) < 0) for s in times)
    low = p[F == 1e5]
    steps = np.sign(np.diff(low))
    peak = int(np.argmax(low))
    unimodal = 0 < peak < low.size - 1 and np.all(steps[:peak] > 0) and np.all(steps[peak:] < 0)
    negative = bool(np.any(p[(t >= 35) & (F >= 2e6)] < 0))
    record(6, "Figure 1 shape", decreasing and unimodal and negative,
           f"decreasing in wealth at all {times.size} times={decreasing}, unimodal at F=1e5 "
           f"(peak t={times[peak]:g})={unimodal}, negative near T at high wealth={negative}")


def test_07_comparison_theorem(fig1):
    xa = fig1.xi_alpha(0.0)
    ok = bool(np.allclose(xa, (-10.98, 10.55), atol=5e-3))
    points = 0
    for s in T_GRID[:-1]:  # at t = T both portfolios coincide
        for x in X_GRID:
            diff = optimal_portfolio(fig1, s, x, Variant.NO_INSURANCE) - optimal_portfolio(fig1, s, x)
            ok &= bool(np.all(np.sign(diff) == np.sign(xa)))
            points += 1
    record(7, "comparison theorem", ok,
           f"xi alpha = ({xa[0]:.2f}, {xa[1]:.2f}); sign(theta0 - theta) = sign(xi alpha) at {points} points")


def test_08_corollary_suite(fig1):
    coeffs = solve(fig1)
    xa = fig1.xi_alpha(0.0)
    lemma = lemma_hypotheses_hold(coeffs)
    D_ok = lemma and all(coeffs.D(s) < 1 for s in coeffs.grid)
    higher_rho = fig1.replace(prefs=Preferences(fig1.gamma, 0.05, fig1.T))
    mono_x = mono_rho = True
    ratio_gap = limit_gap = 0.0
    for s in T_GRID:
        p = optimal_premium(fig1, s, X_GRID)
        mono_x &= bool(np.all(np.diff(p) < 0))
        if s < fig1.T:
            mono_rho &= bool(np.all(optimal_premium(higher_rho, s, X_GRID) > p))
        for variant in Variant:
            for x in X_GRID:
                th = optimal_portfolio(fig1, s, x, variant)
                ratio_gap = max(ratio_gap, abs(th[0] / th[1] / (xa[0] / xa[1]) - 1))
            limit_gap = max(limit_gap, np.max(np.abs(optimal_portfolio(fig1, s, 1e18, variant) / (xa / 4) - 1)))
    for variant in Variant:
        limit_gap = max(limit_gap, np.max(np.abs(optimal_portfolio(fig1, fig1.T, 1e5, variant) / (xa / 4) - 1)))
    ok = D_ok and mono_x and mono_rho and ratio_gap < 1e-12 and limit_gap < 1e-10
    record(8, "corollary suite", ok,
           f"D<1={D_ok}, p decreasing in x={mono_x}, increasing in rho={mono_rho}, "
           f"mutual-fund ratio gap {ratio_gap:.1e} < 1e-12, theta limit gap {limit_gap:.1e} < 1e-10")


def test_09_sigma_identity():
    rng = np.random.default_rng(9)
    worst, done = 0.0, 0
    while done < 100:
        n = int(rng.integers(1, 5))
        m = int(rng.integers(n, 6))
        sigma = rng.uniform(-0.4, 0.4, (n, m))
        mu = rng.uniform(-0.05, 0.25, n)
        try:
            market = MarketModel.constant(0.03, mu, sigma)
        except SingularMarketError:
            continue
        half = 0.5 * risk_premium(market, 0.0) @ xi_alpha(market, 0.0)
        worst = max(worst, abs(sigma_quadratic(market, 0.0) - half) / abs(half))
        done += 1
    record(9, "Sigma identity", worst < 1e-12, f"max relative gap {worst:.1e} < 1e-12 on 100 markets")


def test_10_determinism(tmp_path):
    runs = {
        "solve": (["solve"], ["coefficients.csv", "strategy_grid.csv"]),
        "simulate": (["simulate", "--paths", "2000", "--dt", "0.05", "--seed", "5", "--dump-paths", "2"],
                     ["simulation_summary.csv", "path_00000.csv", "path_00001.csv"]),
        "compare": (["compare", "--paths", "1000", "--dt", "0.1", "--seed", "5"],
                    ["comparison.csv", "comparison_summary.csv"]),
        "verify": (["verify"], ["verification.csv"]),
        "figure1": (["figure1"], ["surface.csv"]),
    }
    same, files = True, 0
    for name, (args, outputs) in runs.items():
        for rep in ("a", "b"):
            assert main([*args, "--out", str(tmp_path / name / rep)]) == 0
        for out in outputs:
            same &= (tmp_path / name / "a" / out).read_bytes() == (tmp_path / name / "b" / out).read_bytes()
            files += 1
    threads = tmp_path / "simulate" / "threads"
    assert main([*runs["simulate"][0], "--workers", "4", "--out", str(threads)]) == 0
    same &= (threads / "simulation_summary.csv").read_bytes() == (
        tmp_path / "simulate" / "a" / "simulation_summary.csv").read_bytes()
    record(10, "determinism", same, f"{files} CSVs bit-identical across repeated runs, 1 vs 4 workers identical")
