"""Command-line driver: solve | verify | simulate | compare | figure1.

Exit codes: 0 success, 1 verification failure, 2 input error, 3 numerical error.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
import tempfile
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import AccuracyError, NumericalError, OracleFailure, PathError, SchemaError, SingularMarketError
from .scenario_io import apply_overrides, figure1_dict, load_scenario_dict, scenario_from_dict
from .simulate import (
    EvaluationMode,
    SimulationConfig,
    closed_form_policy,
    compare_strategies,
    simulate_path,
    summary_csv,
)
from .solver import (
    Scenario,
    Variant,
    optimal_consumption,
    optimal_premium,
    optimal_risky_amounts,
    solve,
    warn_if_lemma_fails,
)
from .verify import verify_grid

EXIT_OK, EXIT_VERIFY, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3
COMMANDS = ("solve", "verify", "simulate", "compare", "figure1")


@dataclass
class RunManifest:
    command: str
    scenario: str | None
    out: Path
    overrides: list[str] = field(default_factory=list)
    seed: int = 0
    paths: int = 100_000
    dt: float = 0.01
    grid_steps: int | None = None
    mode: str = EvaluationMode.RANDOM_HORIZON.value
    workers: int = 1
    t_points: int = 41
    x_min: float = 1e3
    x_max: float = 3e6
    x_points: int = 51
    dump_paths: int = 0

    def load(self) -> Scenario:
        if self.scenario is None:
            doc, text = figure1_dict(), None
        else:
            doc, text = load_scenario_dict(self.scenario)
        doc = apply_overrides(doc, self.overrides)
        if self.grid_steps is not None:
            doc["grid_steps"] = self.grid_steps
        return scenario_from_dict(doc, text)

    def sim_config(self) -> SimulationConfig:
        return SimulationConfig(n_paths=self.paths, dt=self.dt, seed=self.seed, evaluation_mode=self.mode,
                                n_workers=self.workers)


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, str):
        return v
    return f"{float(v):.17g}"


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def write_atomic(path: Path, text: str) -> Path:
    """Write ``text`` to a temp file in the same directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def read_csv(path) -> tuple[list[str], np.ndarray]:
    """Read a numeric CSV written by this module (booleans become 0/1)."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    conv = {"true": 1.0, "false": 0.0}
    data = np.array([[conv[v] if v in conv else float(v) for v in row] for row in rows[1:]])
    return rows[0], data


def _grids(m: RunManifest, scenario: Scenario):
    times = np.linspace(0.0, scenario.T, m.t_points)
    wealths = np.linspace(m.x_min, m.x_max, m.x_points)
    return times, wealths


def strategy_grid_rows(scenario: Scenario, times, wealths, variant=Variant.WITH_INSURANCE):
    n = scenario.market.n_assets
    header = ["t", "x", "c", "p"] + [f"theta_{k + 1}" for k in range(n)] + ["theta_0"]
    rows = []
    for t in times:
        c = optimal_consumption(scenario, t, wealths, variant)
        p = optimal_premium(scenario, t, wealths) if variant is Variant.WITH_INSURANCE else np.zeros_like(wealths)
        theta = optimal_risky_amounts(scenario, t, wealths, variant) / wealths[:, None]
        for j, x in enumerate(wealths):
            rows.append([t, x, c[j], p[j], *theta[j], 1.0 - theta[j].sum()])
    return header, rows


def run_solve(m: RunManifest) -> int:
    scenario = m.load()
    coeffs = solve(scenario, Variant.WITH_INSURANCE)
    warn_if_lemma_fails(coeffs)
    table = coeffs.table()
    cols = ["t", "b", "e", "D", "a", "Sigma", "H", "K"]
    write_atomic(m.out / "coefficients.csv", csv_text(cols, zip(*(table[c] for c in cols))))
    times, wealths = _grids(m, scenario)
    header, rows = strategy_grid_rows(scenario, times, wealths)
    write_atomic(m.out / "strategy_grid.csv", csv_text(header, rows))
    print(f"wrote {m.out / 'coefficients.csv'} and {m.out / 'strategy_grid.csv'}")
    return EXIT_OK


def run_verify(m: RunManifest) -> int:
    scenario = m.load()
    report = verify_grid(scenario)
    write_atomic(m.out / "verification.csv", report.to_csv())
    print(report.summary())
    return EXIT_OK if report.passed else EXIT_VERIFY


def run_simulate(m: RunManifest) -> int:
    scenario = m.load()
    config = m.sim_config()
    policy = closed_form_policy(scenario)
    rows = compare_strategies(scenario, [("with_insurance", policy)], 0.0, scenario.x0, config)
    write_atomic(m.out / "simulation_summary.csv", summary_csv(rows))
    for k in range(m.dump_paths):
        path = simulate_path(scenario, policy, config, path_index=k)
        write_atomic(m.out / f"path_{k:05d}.csv", path.to_csv())
    est = rows[0].estimate
    print(f"J(0, {scenario.x0:g}) = {est.mean:.10g} +/- {est.std_error:.3g} over {est.n_paths} paths "
          f"(bankrupt {est.bankruptcy_fraction:.2%})")
    return EXIT_OK


def comparison_rows(scenario: Scenario, times, wealths):
    """Per grid point: fractions and dollar allocations with and without insurance."""
    n = scenario.market.n_assets
    header = ["t", "x"]
    header += [f"theta_{k + 1}" for k in range(n)] + [f"theta0_{k + 1}" for k in range(n)]
    header += [f"amount_{k + 1}" for k in range(n)] + [f"amount0_{k + 1}" for k in range(n)]
    rows = []
    for t in times:
        amt = optimal_risky_amounts(scenario, t, wealths, Variant.WITH_INSURANCE)
        amt0 = optimal_risky_amounts(scenario, t, wealths, Variant.NO_INSURANCE)
        for j, x in enumerate(wealths):
            rows.append([t, x, *(amt[j] / x), *(amt0[j] / x), *amt[j], *amt0[j]])
    return header, rows


def run_compare(m: RunManifest) -> int:
    scenario = m.load()
    times, wealths = _grids(m, scenario)
    header, rows = comparison_rows(scenario, times, wealths)
    write_atomic(m.out / "comparison.csv", csv_text(header, rows))
    strategies = [
        ("with_insurance", closed_form_policy(scenario, Variant.WITH_INSURANCE)),
        ("no_insurance", closed_form_policy(scenario, Variant.NO_INSURANCE)),
    ]
    table = compare_strategies(scenario, strategies, 0.0, scenario.x0, m.sim_config())
    write_atomic(m.out / "comparison_summary.csv", summary_csv(table))
    for row in table:
        print(f"{row.name}: {row.estimate.mean:.10g} +/- {row.estimate.std_error:.3g}")
    return EXIT_OK


def surface_rows(scenario: Scenario, t_step: float = 0.5, f_max: float = 3e6, f_step: float = 1e4):
    """p* on t in [0, T] and full wealth x + b in [0, f_max]; x = full wealth - b(t)."""
    coeffs = solve(scenario, Variant.WITH_INSURANCE)
    times = np.linspace(0.0, scenario.T, int(round(scenario.T / t_step)) + 1)
    full = np.linspace(0.0, f_max, int(round(f_max / f_step)) + 1)
    rows = []
    for t in times:
        b = coeffs.b(t)
        x = full - b
        p = optimal_premium(scenario, t, x)
        rows.extend(zip(np.full(full.size, t), full, x, p))
    return ["t", "full_wealth", "x", "p"], rows


def run_figure1(m: RunManifest) -> int:
    scenario = m.load()
    header, rows = surface_rows(scenario)
    write_atomic(m.out / "surface.csv", csv_text(header, rows))
    print(f"wrote {m.out / 'surface.csv'} ({len(rows)} rows, p in $/yr)")
    return EXIT_OK


RUNNERS = {"solve": run_solve, "verify": run_verify, "simulate": run_simulate, "compare": run_compare,
           "figure1": run_figure1}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="wage-earner", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--scenario", help="scenario JSON (default: bundled Figure 1 parameters)")
    ap.add_argument("--out", default=".", help="output directory")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--paths", type=int, default=100_000)
    ap.add_argument("--dt", type=float, default=0.01, help="simulation time step [yr]")
    ap.add_argument("--grid-steps", type=int, help="RK4 grid steps for the coefficient ODEs")
    ap.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                    help="dotted scenario key, e.g. preferences.rho=0.05 (repeatable)")
    ap.add_argument("--mode", choices=[e.value for e in EvaluationMode], default=EvaluationMode.RANDOM_HORIZON.value)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--t-points", type=int, default=41, help="time points of the strategy/comparison grids")
    ap.add_argument("--x-min", type=float, default=1e3)
    ap.add_argument("--x-max", type=float, default=3e6)
    ap.add_argument("--x-points", type=int, default=51)
    ap.add_argument("--dump-paths", type=int, default=0, help="write the first N simulated paths as CSV")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def manifest_from_args(args) -> RunManifest:
    return RunManifest(
        command=args.command, scenario=args.scenario, out=Path(args.out), overrides=list(args.override),
        seed=args.seed, paths=args.paths, dt=args.dt, grid_steps=args.grid_steps, mode=args.mode,
        workers=args.workers, t_points=args.t_points, x_min=args.x_min, x_max=args.x_max,
        x_points=args.x_points, dump_paths=args.dump_paths,
    )


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    m = manifest_from_args(args)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            return RUNNERS[m.command](m)
    except (SchemaError, SingularMarketError, FileNotFoundError, ValueError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NumericalError, AccuracyError, OracleFailure, PathError, ArithmeticError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
