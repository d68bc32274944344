import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from wage_earner.errors import DomainError
from wage_earner.mortality import (
    FIGURE1_MORTALITY,
    GompertzMakeham,
    PiecewiseConstant,
    conditional_density,
    conditional_survival,
    cumulative_hazard,
    hazard,
    mortality_from_dict,
    mortality_to_dict,
    sample_death_time,
)
from wage_earner.numerics import integrate_adaptive

from oracle_values import FIG1

CONST = PiecewiseConstant((0.0,), (0.02,))
STEPS = PiecewiseConstant((0.0, 10.0, 25.0), (0.01, 0.03, 0.08))
MODELS = [FIGURE1_MORTALITY, CONST, STEPS, GompertzMakeham(0.002, 0.0005, 0.0)]


def test_hazard_examples():
    assert hazard(FIGURE1_MORTALITY, 0.0) == pytest.approx(0.001 + math.exp(-9.5), rel=1e-15)
    assert hazard(CONST, 5.0) == 0.02
    assert hazard(FIGURE1_MORTALITY, 40.0) == pytest.approx(0.001 + math.exp(-5.5), rel=1e-14)


def test_negative_time_rejected():
    with pytest.raises(DomainError):
        hazard(FIGURE1_MORTALITY, -0.1)
    with pytest.raises(DomainError):
        conditional_survival(CONST, 1.0, 2.0)
    with pytest.raises(DomainError):
        conditional_density(CONST, 1.0, 2.0)


def test_survival_examples():
    assert conditional_survival(CONST, 10.0, 0.0) == pytest.approx(math.exp(-0.2), rel=1e-15)
    for model in MODELS:
        assert conditional_survival(model, 7.5, 7.5) == 1.0
    assert conditional_survival(FIGURE1_MORTALITY, 40.0, 0.0) == pytest.approx(FIG1["survival_40_0"], rel=1e-12)
    assert cumulative_hazard(FIGURE1_MORTALITY, 40.0) == pytest.approx(FIG1["cum_hazard_0_40"], rel=1e-12)


def test_density_examples():
    assert conditional_density(CONST, 0.0, 0.0) == 0.02
    s = np.linspace(3.0, 60.0, 13)
    np.testing.assert_allclose(conditional_density(CONST, s, 3.0), 0.02 * np.exp(-0.02 * (s - 3.0)), rtol=1e-14)
    assert conditional_density(FIGURE1_MORTALITY, 20.0, 0.0) == pytest.approx(FIG1["density_20_0"], rel=1e-12)


def test_density_integrates_to_one():
    body = integrate_adaptive(lambda s: conditional_density(FIGURE1_MORTALITY, s, 10.0), 10.0, 120.0, tol=1e-12)
    tail = conditional_survival(FIGURE1_MORTALITY, 120.0, 10.0)
    assert body + tail == pytest.approx(1.0, abs=1e-10)


@pytest.mark.parametrize("model", MODELS, ids=["fig1", "const", "steps", "gm_flat"])
@given(u=st.floats(0, 30), gap1=st.floats(0, 20), gap2=st.floats(0, 20))
def test_survival_chain_rule(model, u, gap1, gap2):
    t, s = u + gap1, u + gap1 + gap2
    lhs = conditional_survival(model, s, t) * conditional_survival(model, t, u)
    assert lhs == pytest.approx(conditional_survival(model, s, u), rel=1e-12)


@pytest.mark.parametrize("model", [FIGURE1_MORTALITY, GompertzMakeham(0.002, 0.0005, 0.0)], ids=["fig1", "gm_flat"])
def test_density_is_minus_survival_derivative(model):
    for s in (1.0, 12.5, 33.0, 47.0):
        h = 1e-4
        fd = -(conditional_survival(model, s + h, 0.5) - conditional_survival(model, s - h, 0.5)) / (2 * h)
        assert fd == pytest.approx(conditional_density(model, s, 0.5), rel=1e-6)


def test_piecewise_segment_integration():
    # segments: 0.01 on [0, 10), 0.03 on [10, 25), 0.08 afterwards
    expected = {4.0: 0.04, 10.0: 0.1, 17.0: 0.1 + 0.03 * 7, 40.0: 0.1 + 0.45 + 0.08 * 15}
    for s, value in expected.items():
        assert cumulative_hazard(STEPS, s) == pytest.approx(value, rel=1e-12)
    assert cumulative_hazard(STEPS, 30.0, 12.0) == pytest.approx(0.03 * 13 + 0.08 * 5, rel=1e-12)


def test_sampler_exponential_mean():
    tau = sample_death_time(CONST, 2.0, 123, size=1_000_000)
    assert np.all(tau > 2.0)
    assert abs(tau.mean() - 2.0 - 50.0) < 0.2


def test_sampler_deterministic():
    assert sample_death_time(FIGURE1_MORTALITY, 0.0, 9) == sample_death_time(FIGURE1_MORTALITY, 0.0, 9)
    batch = sample_death_time(FIGURE1_MORTALITY, 0.0, 9, size=20)
    assert batch[0] == sample_death_time(FIGURE1_MORTALITY, 0.0, 9)
    np.testing.assert_array_equal(batch[5:], sample_death_time(FIGURE1_MORTALITY, 0.0, 9, size=15, first=5))


def test_sampler_survival_probability():
    n = 100_000
    tau = sample_death_time(FIGURE1_MORTALITY, 0.0, 2024, size=n)
    p = conditional_survival(FIGURE1_MORTALITY, 40.0, 0.0)
    assert abs(np.mean(tau > 40.0) - p) < 3 * math.sqrt(p * (1 - p) / n)


def test_sampler_ks_statistic():
    n = 100_000
    tau = np.sort(sample_death_time(FIGURE1_MORTALITY, 5.0, 77, size=n))
    cdf = 1.0 - conditional_survival(FIGURE1_MORTALITY, tau, 5.0)
    ecdf_hi = np.arange(1, n + 1) / n
    ecdf_lo = np.arange(0, n) / n
    ks = max(np.max(ecdf_hi - cdf), np.max(cdf - ecdf_lo))
    assert ks < 1.63 / math.sqrt(n)


def test_validation():
    with pytest.raises(ValueError):
        PiecewiseConstant((0.0, 5.0), (0.01, 0.0))
    with pytest.raises(ValueError):
        PiecewiseConstant((1.0,), (0.01,))
    with pytest.raises(ValueError):
        GompertzMakeham(0.0, 0.0, 0.1)


def test_dict_round_trip():
    for model in (FIGURE1_MORTALITY, STEPS):
        assert mortality_from_dict(mortality_to_dict(model)) == model
