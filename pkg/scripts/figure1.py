"""Write the Figure 1 premium surface and print its shape diagnostics.

Usage: python scripts/figure1.py [--out DIR]
"""

import argparse
from pathlib import Path

import numpy as np

from wage_earner.cli import csv_text, surface_rows, write_atomic
from wage_earner.scenario_io import figure1_scenario


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="out/figure1")
    args = ap.parse_args()

    scenario = figure1_scenario()
    header, rows = surface_rows(scenario)
    path = write_atomic(Path(args.out) / "surface.csv", csv_text(header, rows))
    data = np.array(rows, dtype=float)
    t, F, p = data[:, 0], data[:, 1], data[:, 3]

    print(f"wrote {path} ({len(rows)} rows)")
    print("premium p* in $/yr along time at fixed full wealth x + b:")
    print(f"{'F':>10} {'peak t':>7} {'max p':>10} {'p(0)':>10} {'p(T)':>10}")
    for level in (0.0, 1e5, 5e5, 1e6, 2e6, 3e6):
        row = p[F == level]
        k = int(np.argmax(row))
        print(f"{level:10.0f} {t[F == level][k]:7.1f} {row[k]:10.1f} {row[0]:10.1f} {row[-1]:10.1f}")
    neg = (p < 0)
    print(f"negative premium (selling insurance) at {neg.sum()} of {p.size} points; "
          f"earliest at t = {t[neg].min():g}")


if __name__ == "__main__":
    main()
