"""Closed-form optimal consumption, life-insurance and portfolio rules under CRRA utility.

The value function has the form V(t, x) = a(t)/gamma * (x + b(t))^gamma with

* b(t), the human capital: present value of future income discounted at r + eta
  (at r alone when insurance is unavailable);
* e(t), solving the backward linear ODE e' = H e - K with e(T) = 1, and
  a(t) = exp(-rho t) e(t)^(1 - gamma).

Both b and e are integrated with RK4 on a uniform grid and cached in a
:class:`StrategyCoefficients`; the double-integral representations are kept
as independent quadrature oracles (``human_capital_integral`` and
``coefficient_e_integral``).
"""

from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Union

import numpy as np

from .errors import DomainError
from .market import MarketModel
from .mortality import MortalityModel, hazard
from .numerics import Curve, as_curve, integrate_adaptive, solve_backward_linear_ode

DEFAULT_GRID_STEPS = 4000
MIN_WEALTH_FRACTION = 1e-9


class Variant(str, Enum):
    WITH_INSURANCE = "with_insurance"
    NO_INSURANCE = "no_insurance"


@dataclass(frozen=True)
class Preferences:
    """Discounted CRRA preferences: U(c, t) = exp(-rho t) c^gamma / gamma."""

    gamma: float
    rho: float
    T: float

    def __post_init__(self):
        if self.gamma == 0:
            raise ValueError("gamma = 0 (log utility) is not supported")
        if not self.gamma < 1:
            raise ValueError("gamma must be < 1")
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        if not self.T > 0:
            raise ValueError("T must be positive")


@dataclass(frozen=True)
class ExponentialIncome:
    """i(t) = i0 * exp(growth * t)."""

    i0: float
    growth: float = 0.0

    def __post_init__(self):
        if self.i0 < 0:
            raise ValueError("income must be non-negative")

    def rate(self, t):
        return self.i0 * np.exp(self.growth * np.asarray(t, dtype=float))


@dataclass(frozen=True, eq=False)
class CurveIncome:
    curve: Curve

    def __post_init__(self):
        if np.any(self.curve.values < 0):
            raise ValueError("income must be non-negative")

    def rate(self, t):
        return self.curve(t)


IncomeProfile = Union[ExponentialIncome, CurveIncome]


@dataclass(frozen=True)
class HazardLoading:
    """Premium-payout ratio eta(t) = loading * lambda(t)."""

    loading: float

    def __post_init__(self):
        if not self.loading > 0:
            raise ValueError("loading must be positive")


@dataclass(frozen=True, eq=False)
class CurveInsurance:
    curve: Curve

    def __post_init__(self):
        if np.any(self.curve.values <= 0):
            raise ValueError("eta must be positive")


InsuranceModel = Union[HazardLoading, CurveInsurance]


@dataclass(frozen=True, eq=False)
class Scenario:
    """Everything that defines one instance of the wage earner's problem."""

    market: MarketModel
    mortality: MortalityModel
    insurance: InsuranceModel
    income: IncomeProfile
    prefs: Preferences
    x0: float = 0.0
    grid_steps: int = DEFAULT_GRID_STEPS

    def __post_init__(self):
        if self.x0 < 0:
            raise ValueError("initial wealth must be non-negative")
        if self.grid_steps < 2:
            raise ValueError("grid_steps must be at least 2")
        if not self.market.covers(0.0, self.T):
            raise ValueError("market curves must cover [0, T]")
        for curve in (getattr(self.insurance, "curve", None), getattr(self.income, "curve", None)):
            if curve is not None and not curve.covers(0.0, self.T):
                raise ValueError("income and insurance curves must cover [0, T]")

    @property
    def T(self) -> float:
        return self.prefs.T

    @property
    def gamma(self) -> float:
        return self.prefs.gamma

    @property
    def wealth_scale(self) -> float:
        return max(self.x0, 1.0)

    def replace(self, **changes) -> "Scenario":
        return replace(self, **changes)

    def check_time(self, t):
        tt = np.asarray(t, dtype=float)
        if np.any(tt < 0) or np.any(tt > self.T) or np.any(np.isnan(tt)):
            raise DomainError(f"time {t} outside [0, {self.T}]")

    # deterministic coefficient functions of time

    def hazard(self, t):
        return hazard(self.mortality, t)

    def eta(self, t):
        if isinstance(self.insurance, HazardLoading):
            return self.insurance.loading * hazard(self.mortality, t)
        return self.insurance.curve(t)

    def r(self, t):
        return self.market.r(t)

    def income_rate(self, t):
        v = self.income.rate(t)
        return float(v) if np.ndim(v) == 0 else v

    def Sigma(self, t):
        if np.ndim(t) == 0:
            return self.market.algebra(t).Sigma
        if self.market.is_constant:
            return np.full(np.shape(t), self.market.algebra(0.0).Sigma)
        return np.array([self.market.algebra(s).Sigma for s in np.ravel(t)]).reshape(np.shape(t))

    def xi_alpha(self, t) -> np.ndarray:
        return self.market.algebra(t).xi_alpha


@dataclass(frozen=True)
class ControlAction:
    """Consumption rate c, premium rate p and risky-asset wealth fractions theta."""

    c: float
    p: float
    theta: np.ndarray

    @property
    def theta0(self) -> float:
        return 1.0 - float(np.sum(self.theta))


def _variant(v) -> Variant:
    return Variant(v)


def coefficient_H(scenario: Scenario, t, variant=Variant.WITH_INSURANCE) -> float:
    """H(t) = (lambda+rho)/(1-g) - g Sigma/(1-g)^2 - g/(1-g) (r + eta); eta dropped without insurance."""
    g = scenario.gamma
    lam = scenario.hazard(t)
    discount = scenario.r(t)
    if _variant(variant) is Variant.WITH_INSURANCE:
        discount = discount + scenario.eta(t)
    return (lam + scenario.prefs.rho) / (1 - g) - g * scenario.Sigma(t) / (1 - g) ** 2 - g / (1 - g) * discount


def coefficient_K(scenario: Scenario, t, variant=Variant.WITH_INSURANCE) -> float:
    """K(t) = lambda^{1/(1-g)} / eta^{g/(1-g)} + 1, or 1 without insurance."""
    if _variant(variant) is Variant.NO_INSURANCE:
        return 1.0
    g = scenario.gamma
    return scenario.hazard(t) ** (1 / (1 - g)) / scenario.eta(t) ** (g / (1 - g)) + 1.0


def _discount_rate(scenario: Scenario, t, variant):
    rate = scenario.r(t)
    if _variant(variant) is Variant.WITH_INSURANCE:
        rate = rate + scenario.eta(t)
    return rate


@dataclass(frozen=True, eq=False)
class StrategyCoefficients:
    """Coefficient curves of the closed-form solution on a uniform time grid."""

    scenario: Scenario
    variant: Variant
    grid: np.ndarray
    b_curve: Curve
    e_curve: Curve
    H_values: np.ndarray
    K_values: np.ndarray
    Sigma_values: np.ndarray
    xi_alpha_values: np.ndarray
    _xi_alpha_curve: Curve = field(repr=False)

    @property
    def gamma(self) -> float:
        return self.scenario.gamma

    def b(self, t):
        self.scenario.check_time(t)
        return self.b_curve(t)

    def e(self, t):
        self.scenario.check_time(t)
        return self.e_curve(t)

    def db(self, t):
        """b'(t) from the ODE right-hand side: (r + eta) b - i."""
        return _discount_rate(self.scenario, t, self.variant) * self.b(t) - self.scenario.income_rate(t)

    def de(self, t):
        """e'(t) from the ODE right-hand side: H e - K."""
        return coefficient_H(self.scenario, t, self.variant) * self.e(t) - coefficient_K(self.scenario, t, self.variant)

    def a(self, t):
        rho, g = self.scenario.prefs.rho, self.gamma
        return np.exp(-rho * np.asarray(t, dtype=float)) * self.e(t) ** (1 - g)

    def da(self, t):
        rho, g = self.scenario.prefs.rho, self.gamma
        e = self.e(t)
        return math.exp(-rho * t) * ((1 - g) * e ** (-g) * self.de(t) - rho * e ** (1 - g))

    def D(self, t):
        if self.variant is not Variant.WITH_INSURANCE:
            raise DomainError("D(t) is only defined when insurance is available")
        g = self.gamma
        ratio = self.scenario.hazard(t) / self.scenario.eta(t)
        return ratio ** (1 / (1 - g)) / self.e(t)

    def xi_alpha(self, t) -> np.ndarray:
        self.scenario.check_time(t)
        return self.scenario.xi_alpha(t) if self.scenario.market.is_constant else self._xi_alpha_curve(t)

    def Sigma(self, t) -> float:
        return self.scenario.Sigma(t)

    def table(self) -> dict[str, np.ndarray]:
        """Coefficient columns on the grid (t, b, e, D, a, Sigma, H, K)."""
        t = self.grid
        cols = {"t": t, "b": self.b_curve.values, "e": self.e_curve.values}
        if self.variant is Variant.WITH_INSURANCE:
            cols["D"] = np.array([self.D(s) for s in t])
        cols["a"] = self.a(t)
        cols["Sigma"] = self.Sigma_values
        cols["H"] = self.H_values
        cols["K"] = self.K_values
        return cols


def build_coefficients(scenario: Scenario, variant=Variant.WITH_INSURANCE, grid_steps: int | None = None) -> StrategyCoefficients:
    """Integrate the b and e ODEs backward from T and package the curves."""
    variant = _variant(variant)
    steps = grid_steps or scenario.grid_steps
    grid = np.linspace(0.0, scenario.T, steps + 1)
    H = functools.partial(coefficient_H, scenario, variant=variant)
    K = functools.partial(coefficient_K, scenario, variant=variant)
    e_curve = solve_backward_linear_ode(H, K, 1.0, grid, vectorized=True)
    b_curve = solve_backward_linear_ode(
        lambda t: _discount_rate(scenario, t, variant), scenario.income_rate, 0.0, grid, vectorized=True
    )
    xa = np.array([scenario.xi_alpha(t) for t in grid])
    return StrategyCoefficients(
        scenario=scenario,
        variant=variant,
        grid=grid,
        b_curve=b_curve,
        e_curve=e_curve,
        H_values=np.broadcast_to(H(grid), grid.shape).copy(),
        K_values=np.broadcast_to(K(grid), grid.shape).copy(),
        Sigma_values=scenario.Sigma(grid),
        xi_alpha_values=xa,
        _xi_alpha_curve=Curve(grid, xa, "monotone_cubic"),
    )


@functools.lru_cache(maxsize=64)
def solve(scenario: Scenario, variant=Variant.WITH_INSURANCE) -> StrategyCoefficients:
    """Cached :func:`build_coefficients` at the scenario's own grid resolution."""
    return build_coefficients(scenario, _variant(variant))


# coefficient accessors mirroring the closed-form notation


def human_capital(scenario: Scenario, t, variant=Variant.WITH_INSURANCE):
    """b(t): present value at t of income over [t, T]."""
    return solve(scenario, variant).b(t)


def coefficient_e(scenario: Scenario, t, variant=Variant.WITH_INSURANCE):
    return solve(scenario, variant).e(t)


def coefficient_D(scenario: Scenario, t):
    return solve(scenario, Variant.WITH_INSURANCE).D(t)


def value_coefficient_a(scenario: Scenario, t, variant=Variant.WITH_INSURANCE):
    return solve(scenario, variant).a(t)


def human_capital_integral(scenario: Scenario, t: float, variant=Variant.WITH_INSURANCE, tol: float = 1e-11) -> float:
    """b(t) as the double integral int_t^T i(s) exp(-int_t^s (r + eta)) ds."""
    scenario.check_time(t)

    def discount(s):
        return integrate_adaptive(lambda v: _discount_rate(scenario, v, variant), t, s, tol)

    return integrate_adaptive(lambda s: scenario.income_rate(s) * math.exp(-discount(s)), t, scenario.T, tol)


def coefficient_e_integral(scenario: Scenario, t: float, variant=Variant.WITH_INSURANCE, tol: float = 1e-11) -> float:
    """e(t) = exp(-int_t^T H) + int_t^T exp(-int_t^s H) K(s) ds by nested adaptive quadrature."""
    scenario.check_time(t)

    def H(v):
        return coefficient_H(scenario, v, variant)

    def decay(s):
        return math.exp(-integrate_adaptive(H, t, s, tol))

    return decay(scenario.T) + integrate_adaptive(
        lambda s: decay(s) * coefficient_K(scenario, s, variant), t, scenario.T, tol
    )


def lemma_hypotheses_hold(coeffs: StrategyCoefficients) -> bool:
    """lambda <= eta and H <= 1 at every grid time (H compared literally in 1/yr)."""
    sc = coeffs.scenario
    lam = np.array([sc.hazard(t) for t in coeffs.grid])
    eta = np.array([sc.eta(t) for t in coeffs.grid])
    return bool(np.all(lam <= eta) and np.all(coeffs.H_values <= 1.0))


# utilities


def crra_power(v, gamma: float):
    """v**gamma, by repeated multiplication when gamma is a small integer."""
    if float(gamma).is_integer() and 0 < abs(gamma) <= 8:
        n = int(abs(gamma))
        out = v
        for _ in range(n - 1):
            out = out * v
        return 1.0 / out if gamma < 0 else out
    return np.power(v, gamma)


def _crra(prefs: Preferences, v, discount):
    v = np.asarray(v, dtype=float)
    if np.any(v < 0) or np.any(np.isnan(v)):
        raise DomainError("utility argument must be non-negative")
    g = prefs.gamma
    with np.errstate(divide="ignore"):
        out = discount * crra_power(v, g) / g
    out = np.where(v == 0, -np.inf if g < 0 else 0.0, out)
    return float(out) if out.ndim == 0 else out


def utility_U(prefs: Preferences, c, t):
    """Consumption utility exp(-rho t) c^gamma / gamma (-inf at c = 0 when gamma < 0)."""
    return _crra(prefs, c, np.exp(-prefs.rho * np.asarray(t, dtype=float)))


def utility_B(prefs: Preferences, Z, t):
    """Bequest utility, same form as consumption utility."""
    return _crra(prefs, Z, np.exp(-prefs.rho * np.asarray(t, dtype=float)))


def utility_W(prefs: Preferences, x):
    """Terminal-wealth utility exp(-rho T) x^gamma / gamma."""
    return _crra(prefs, x, math.exp(-prefs.rho * prefs.T))


def legacy_value(scenario: Scenario, t, x, p):
    """Estate on death: Z = x + p / eta(t)."""
    return x + p / scenario.eta(t)


# optimal feedback rules


def _full_wealth(coeffs: StrategyCoefficients, t, x, strict=True):
    F = np.asarray(x, dtype=float) + coeffs.b(t)
    if np.any(F <= 0 if strict else F < 0):
        raise DomainError("full wealth x + b(t) must be positive")
    return F


def value_function(scenario: Scenario, t, x, variant=Variant.WITH_INSURANCE):
    """V(t, x) = a(t)/gamma (x + b(t))^gamma."""
    coeffs = solve(scenario, variant)
    F = _full_wealth(coeffs, t, x)
    return coeffs.a(t) / coeffs.gamma * crra_power(F, coeffs.gamma)


def optimal_consumption(scenario: Scenario, t, x, variant=Variant.WITH_INSURANCE):
    """c*(t, x) = (x + b(t)) / e(t)."""
    coeffs = solve(scenario, variant)
    return _full_wealth(coeffs, t, x, strict=False) / coeffs.e(t)


def optimal_premium(scenario: Scenario, t, x):
    """p*(t, x) = eta(t) ((D(t) - 1) x + D(t) b(t)); negative values mean insurance is sold."""
    coeffs = solve(scenario, Variant.WITH_INSURANCE)
    D = coeffs.D(t)
    return scenario.eta(t) * ((D - 1.0) * np.asarray(x, dtype=float) + D * coeffs.b(t))


def optimal_risky_amounts(scenario: Scenario, t, x, variant=Variant.WITH_INSURANCE):
    """Dollar holdings theta* x = (x + b(t)) xi alpha / (1 - gamma), finite as x -> 0."""
    coeffs = solve(scenario, variant)
    F = _full_wealth(coeffs, t, x, strict=False)
    return np.multiply.outer(F, coeffs.xi_alpha(t)) / (1 - coeffs.gamma)


def optimal_portfolio(scenario: Scenario, t, x, variant=Variant.WITH_INSURANCE):
    """Risky fractions theta*(t, x) = (x + b(t)) / (x (1 - gamma)) xi alpha.

    Refuses wealth below ``1e-9 * scenario.wealth_scale``, where the fractions
    blow up; use :func:`optimal_risky_amounts` there.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x <= MIN_WEALTH_FRACTION * scenario.wealth_scale):
        raise DomainError("portfolio fractions are undefined at (near) zero wealth")
    amounts = optimal_risky_amounts(scenario, t, x, variant)
    return amounts / x[..., None] if x.ndim else amounts / float(x)


def optimal_control(scenario: Scenario, t: float, x: float, variant=Variant.WITH_INSURANCE) -> ControlAction:
    variant = _variant(variant)
    p = optimal_premium(scenario, t, x) if variant is Variant.WITH_INSURANCE else 0.0
    return ControlAction(
        c=float(optimal_consumption(scenario, t, x, variant)),
        p=float(p),
        theta=np.asarray(optimal_portfolio(scenario, t, x, variant)),
    )


def warn_if_lemma_fails(coeffs: StrategyCoefficients):
    if coeffs.variant is Variant.WITH_INSURANCE and not lemma_hypotheses_hold(coeffs):
        warnings.warn("lambda <= eta or H <= 1 fails somewhere; D(t) < 1 is not guaranteed", stacklevel=2)
