"""Discretisation studies: RK4 grid refinement and Euler-Maruyama weak order.

Usage: python scripts/convergence.py [--paths N]
"""

import argparse

from wage_earner.scenario_io import figure1_scenario
from wage_earner.simulate import EvaluationMode, SimulationConfig, closed_form_policy, estimate_expected_utility
from wage_earner.solver import Variant, build_coefficients, coefficient_e_integral, value_function


def rk4_refinement(scenario):
    exact = coefficient_e_integral(scenario, 0.0)
    print("RK4: e(0) against adaptive quadrature")
    print(f"{'steps':>7} {'rel error':>11} {'ratio':>7}")
    prev = None
    for steps in (50, 100, 200, 400, 800):
        err = abs(build_coefficients(scenario, Variant.WITH_INSURANCE, steps).e(0.0) / exact - 1)
        ratio = f"{prev / err:7.2f}" if prev else ""
        print(f"{steps:7d} {err:11.3e} {ratio}")
        prev = err


def weak_order(scenario, paths):
    print("Euler-Maruyama: weighted estimator of J(0, x0), same seed at every dt")
    V = value_function(scenario, 0.0, scenario.x0)
    print(f"{'dt':>6} {'mean':>17} {'std err':>10} {'mean - V':>11}")
    for dt in (0.04, 0.02, 0.01):
        cfg = SimulationConfig(n_paths=paths, dt=dt, evaluation_mode=EvaluationMode.FIXED_HORIZON_WEIGHTED)
        est = estimate_expected_utility(scenario, closed_form_policy(scenario), config=cfg)
        print(f"{dt:6.2f} {est.mean:17.10e} {est.std_error:10.2e} {est.mean - V:11.2e}")

    print("same with a zero risk premium (deterministic wealth, pure discretisation error)")
    flat = figure1_scenario(["market.mu=[0.04, 0.04]"])
    V = value_function(flat, 0.0, flat.x0)
    errs = {}
    for dt in (0.04, 0.02, 0.01, 0.005):
        cfg = SimulationConfig(n_paths=2, dt=dt, evaluation_mode=EvaluationMode.FIXED_HORIZON_WEIGHTED)
        errs[dt] = estimate_expected_utility(flat, closed_form_policy(flat), config=cfg).mean - V
    dts = sorted(errs, reverse=True)
    for a, b in zip(dts, dts[1:]):
        print(f"  error({a:g}) / error({b:g}) = {errs[a] / errs[b]:.3f}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--paths", type=int, default=20_000)
    args = ap.parse_args()
    scenario = figure1_scenario()
    rk4_refinement(scenario)
    weak_order(scenario, args.paths)


if __name__ == "__main__":
    main()
