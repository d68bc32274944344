import math
import sys

import numpy as np
import pytest

from wage_earner.market import MarketModel
from wage_earner.mortality import GompertzMakeham, PiecewiseConstant
from wage_earner.scenario_io import figure1_scenario
from wage_earner.solver import ExponentialIncome, HazardLoading, Preferences, Scenario

# hazard used where a test wants "no deaths": the piecewise model needs a positive rate
TINY_HAZARD = 1e-12


@pytest.fixture(scope="session")
def fig1():
    return figure1_scenario()


def make_scenario(
    r=0.04,
    mu=(0.07,),
    sigma=((0.2,),),
    hazard=None,
    loading=1.05,
    i0=50_000.0,
    growth=0.0,
    gamma=-3.0,
    rho=0.03,
    T=40.0,
    x0=1e5,
    grid_steps=800,
):
    """Constant-coefficient scenario; ``hazard=None`` means the Figure 1 Gompertz-Makeham law."""
    if hazard is None:
        mortality = GompertzMakeham(0.001, math.exp(-9.5), 0.1)
    else:
        mortality = PiecewiseConstant((0.0,), (float(hazard),))
    return Scenario(
        market=MarketModel.constant(r, np.asarray(mu, dtype=float), np.asarray(sigma, dtype=float)),
        mortality=mortality,
        insurance=HazardLoading(loading),
        income=ExponentialIncome(i0, growth),
        prefs=Preferences(gamma, rho, T),
        x0=x0,
        grid_steps=grid_steps,
    )


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    if module is None or not module.REPORT:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(module.REPORT, key=lambda s: int(s.split()[1])):
        terminalreporter.write_line(line)
