"""Monte Carlo estimates of J(0, x0) against the closed-form value function.

Runs both estimators for the closed-form strategy and for a family of
perturbed strategies on common random numbers.

Usage: python scripts/mc_consistency.py [--paths N] [--dt F] [--seed N] [--workers N]
"""

import argparse
import time
import warnings

from wage_earner.scenario_io import figure1_scenario
from wage_earner.simulate import EvaluationMode, SimulationConfig, closed_form_policy, estimate_expected_utility
from wage_earner.solver import value_function

PERTURBATIONS = [
    {}, {"consumption_scale": 0.8}, {"consumption_scale": 1.2}, {"consumption_scale": 1.25},
    {"premium_scale": 0.8}, {"premium_scale": 1.25}, {"risky_scale": 0.8}, {"risky_scale": 1.25},
]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--paths", type=int, default=100_000)
    ap.add_argument("--dt", type=float, default=0.01)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    scenario = figure1_scenario()
    x0 = scenario.x0
    V = value_function(scenario, 0.0, x0)
    print(f"V(0, {x0:g}) = {V:.10e}")
    print(f"{'mode':<24} {'strategy':<28} {'mean':>17} {'std err':>10} {'z vs V':>8} {'bankrupt':>9} {'sec':>6}")
    for mode in EvaluationMode:
        cfg = SimulationConfig(n_paths=args.paths, dt=args.dt, seed=args.seed, evaluation_mode=mode,
                               n_workers=args.workers)
        for scales in PERTURBATIONS:
            label = ", ".join(f"{k.split('_')[0]} x{v}" for k, v in scales.items()) or "closed form"
            start = time.perf_counter()
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", UserWarning)
                est = estimate_expected_utility(scenario, closed_form_policy(scenario, **scales), 0.0, x0, cfg)
            z = (est.mean - V) / est.std_error
            print(f"{mode.value:<24} {label:<28} {est.mean:17.10e} {est.std_error:10.2e} {z:8.2f} "
                  f"{est.bankruptcy_fraction:9.2%} {time.perf_counter() - start:6.1f}")


if __name__ == "__main__":
    main()
