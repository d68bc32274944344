"""Numerical certification that the closed-form controls solve the HJB equation.

Checks performed at each (t, x):

* the HJB residual V_t - lambda V + H(t, x; c*, p*, theta*), with the
  derivatives of V taken analytically from the ansatz or by central
  differences of the interpolated coefficient curves;
* the three first-order conditions of the Hamiltonian;
* strict concavity of the Hamiltonian in each control block;
* agreement with a direct Newton maximisation of the Hamiltonian.

Residuals are reported relative to the largest individual term of the
equation, because with CRRA utility in dollars V itself can be of order 1e-18.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, OracleFailure
from .solver import (
    ControlAction,
    Scenario,
    StrategyCoefficients,
    Variant,
    crra_power,
    optimal_consumption,
    optimal_premium,
    optimal_risky_amounts,
    solve,
)

EPS = np.finfo(float).eps
CBRT_EPS = EPS ** (1.0 / 3.0)


@dataclass(frozen=True)
class Derivatives:
    V: np.ndarray
    Vt: np.ndarray
    Vx: np.ndarray
    Vxx: np.ndarray


def _check_region(coeffs: StrategyCoefficients, t, x):
    coeffs.scenario.check_time(t)
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise DomainError("verification needs x > 0")
    F = x + coeffs.b(t)
    if np.any(F <= 0):
        raise DomainError("verification needs x + b(t) > 0")
    return x, F


def analytic_derivatives(coeffs: StrategyCoefficients, t: float, x) -> Derivatives:
    """V, V_t, V_x, V_xx of the ansatz; a' and b' come from the ODE right-hand sides."""
    x, F = _check_region(coeffs, t, x)
    g = coeffs.gamma
    a = coeffs.a(t)
    Fg1 = crra_power(F, g - 1.0) if float(g).is_integer() else np.power(F, g - 1.0)
    Fg = Fg1 * F
    return Derivatives(
        V=a / g * Fg,
        Vt=coeffs.da(t) / g * Fg + a * Fg1 * coeffs.db(t),
        Vx=a * Fg1,
        Vxx=(g - 1.0) * a * Fg1 / F,
    )


def value_of(coeffs: StrategyCoefficients, t, x):
    F = np.asarray(x, dtype=float) + coeffs.b(t)
    return coeffs.a(t) / coeffs.gamma * np.power(F, coeffs.gamma)


def finite_difference_derivatives(coeffs: StrategyCoefficients, t: float, x) -> Derivatives:
    """Central differences (one-sided second order at the horizon ends) of V built from the curves."""
    x, F = _check_region(coeffs, t, x)
    T = coeffs.scenario.T
    # characteristic time: V varies on the scale F / |b'| as well as on the scale of t
    horizon = np.minimum(max(1.0, abs(t)), F / np.maximum(np.abs(coeffs.db(t)), 1e-300))
    ht = CBRT_EPS * horizon
    if np.any(t - ht < 0):
        v0, v1, v2 = (value_of(coeffs, t + k * ht, x) for k in range(3))
        Vt = (-3.0 * v0 + 4.0 * v1 - v2) / (2.0 * ht)
    elif np.any(t + ht > T):
        v0, v1, v2 = (value_of(coeffs, t - k * ht, x) for k in range(3))
        Vt = (3.0 * v0 - 4.0 * v1 + v2) / (2.0 * ht)
    else:
        Vt = (value_of(coeffs, t + ht, x) - value_of(coeffs, t - ht, x)) / (2.0 * ht)
    hx = CBRT_EPS * F
    up, mid, down = value_of(coeffs, t, x + hx), value_of(coeffs, t, x), value_of(coeffs, t, x - hx)
    return Derivatives(V=mid, Vt=Vt, Vx=(up - down) / (2.0 * hx), Vxx=(up - 2.0 * mid + down) / hx**2)


def _utility(prefs, v, t):
    """CRRA utility with -inf for non-positive arguments (an infeasible action, not an error)."""
    v = np.asarray(v, dtype=float)
    g = prefs.gamma
    with np.errstate(divide="ignore", invalid="ignore"):
        out = math.exp(-prefs.rho * t) * np.power(np.where(v > 0, v, 1.0), g) / g
    bad = (v < 0) | ((v == 0) & (g < 0))
    out = np.where(bad, -np.inf, np.where(v == 0, 0.0, out))
    return out


@dataclass(frozen=True)
class HamiltonianTerms:
    drift: np.ndarray
    diffusion: np.ndarray
    bequest: np.ndarray
    consumption: np.ndarray

    @property
    def total(self):
        return self.drift + self.diffusion + self.bequest + self.consumption


def hamiltonian_terms(
    scenario: Scenario, t: float, x, c, p, theta, Vx, Vxx, variant=Variant.WITH_INSURANCE
) -> HamiltonianTerms:
    """The four pieces of H(t, x; c, p, theta) for arrays of states and controls.

    ``theta`` has shape (..., N) and holds wealth fractions.
    """
    x = np.asarray(x, dtype=float)
    theta = np.asarray(theta, dtype=float)
    alg = scenario.market.algebra(t)
    sigma = scenario.market.sigma(t)
    excess = theta @ alg.alpha
    drift = (scenario.income_rate(t) - c - p + (scenario.r(t) + excess) * x) * Vx
    loadings = theta @ sigma
    diffusion = 0.5 * x**2 * np.sum(loadings**2, axis=-1) * Vxx
    if Variant(variant) is Variant.WITH_INSURANCE:
        bequest = scenario.hazard(t) * _utility(scenario.prefs, x + p / scenario.eta(t), t)
    else:
        if np.any(np.asarray(p) != 0):
            raise DomainError("no premium can be paid without an insurance market")
        bequest = np.zeros_like(x)
    return HamiltonianTerms(drift, diffusion, bequest, _utility(scenario.prefs, c, t))


def hamiltonian(scenario: Scenario, t: float, x: float, action: ControlAction, Vx: float, Vxx: float,
                variant=Variant.WITH_INSURANCE) -> float:
    """H(t, x; nu) for a single state and action."""
    if x < 0:
        raise DomainError("wealth must be non-negative")
    terms = hamiltonian_terms(scenario, t, x, action.c, action.p, action.theta, Vx, Vxx, variant)
    return float(terms.total)


def closed_form_controls(coeffs: StrategyCoefficients, t: float, x):
    sc = coeffs.scenario
    x = np.asarray(x, dtype=float)
    c = optimal_consumption(sc, t, x, coeffs.variant)
    p = optimal_premium(sc, t, x) if coeffs.variant is Variant.WITH_INSURANCE else np.zeros_like(x)
    theta = optimal_risky_amounts(sc, t, x, coeffs.variant) / x[..., None]
    return c, p, theta


@dataclass(frozen=True)
class ResidualBreakdown:
    residual: np.ndarray
    scale: np.ndarray

    @property
    def relative(self):
        return np.abs(self.residual) / self.scale


def residual_breakdown(scenario: Scenario, t: float, x, variant=Variant.WITH_INSURANCE, method="analytic",
                       controls=None) -> ResidualBreakdown:
    coeffs = solve(scenario, variant)
    d = analytic_derivatives(coeffs, t, x) if method == "analytic" else finite_difference_derivatives(coeffs, t, x)
    c, p, theta = closed_form_controls(coeffs, t, x) if controls is None else controls
    terms = hamiltonian_terms(scenario, t, x, c, p, theta, d.Vx, d.Vxx, variant)
    lamV = scenario.hazard(t) * d.V
    residual = d.Vt - lamV + terms.total
    scale = np.max(np.abs([d.Vt, lamV, terms.drift, terms.diffusion, terms.bequest, terms.consumption]), axis=0)
    return ResidualBreakdown(residual, scale)


def hjb_residual(scenario: Scenario, t: float, x, variant=Variant.WITH_INSURANCE, method="analytic",
                 controls=None):
    """V_t - lambda V + H at the closed-form controls (or at ``controls`` = (c, p, theta) if given)."""
    out = residual_breakdown(scenario, t, x, variant, method, controls).residual
    return float(out) if np.ndim(out) == 0 else out


def relative_hjb_residual(scenario: Scenario, t: float, x, variant=Variant.WITH_INSURANCE, method="analytic"):
    out = residual_breakdown(scenario, t, x, variant, method).relative
    return float(out) if np.ndim(out) == 0 else out


def terminal_gap(scenario: Scenario, x, variant=Variant.WITH_INSURANCE):
    """|V(T, x) - W(x)|; zero by construction since e(T) = 1 and b(T) = 0."""
    coeffs = solve(scenario, variant)
    T, g = scenario.T, scenario.gamma
    W = np.exp(-scenario.prefs.rho * np.asarray(T, dtype=float)) / g * np.power(np.asarray(x, dtype=float), g)
    return np.abs(value_of(coeffs, T, x) - W)


@dataclass(frozen=True)
class FocGaps:
    consumption: np.ndarray
    premium: np.ndarray
    portfolio: np.ndarray


def foc_gaps(scenario: Scenario, t: float, x, variant=Variant.WITH_INSURANCE) -> FocGaps:
    """Relative violations of the three first-order conditions at the closed-form optimum."""
    coeffs = solve(scenario, variant)
    d = analytic_derivatives(coeffs, t, x)
    x = np.asarray(x, dtype=float)
    c, p, theta = closed_form_controls(coeffs, t, x)
    prefs = scenario.prefs
    disc = math.exp(-prefs.rho * t)
    g = prefs.gamma
    gap_c = np.abs(disc * np.power(c, g - 1.0) - d.Vx) / np.abs(d.Vx)
    if coeffs.variant is Variant.WITH_INSURANCE:
        eta = scenario.eta(t)
        # Compare p/eta with the Z solving (lambda/eta) B_Z(Z) = V_x; x + p/eta cancels when Z << x,
        # so the gap is measured against the size of the cancelling terms.
        z_foc = np.power(eta * d.Vx / (scenario.hazard(t) * disc), 1.0 / (g - 1.0))
        gap_p = np.abs(x + p / eta - z_foc) / np.maximum(x, z_foc)
    else:
        gap_p = np.zeros_like(x)
    sigma = scenario.market.sigma(t)
    alpha = scenario.market.algebra(t).alpha
    first = np.multiply.outer(x * d.Vx, alpha)
    second = (x**2 * d.Vxx)[..., None] * (theta @ (sigma @ sigma.T).T)
    gap_theta = np.linalg.norm(first + second, axis=-1) / np.linalg.norm(first, axis=-1)
    return FocGaps(gap_c, gap_p, gap_theta)


def hessian_check(scenario: Scenario, t: float, x: float, variant=Variant.WITH_INSURANCE, vxx_override=None) -> bool:
    """True iff U_cc < 0, (lambda/eta^2) B_ZZ < 0 and x^2 V_xx sigma sigma^T is negative definite.

    ``vxx_override`` replaces the analytic V_xx (for negative controls in tests).
    """
    coeffs = solve(scenario, variant)
    d = analytic_derivatives(coeffs, t, x)
    c, p, _ = closed_form_controls(coeffs, t, x)
    g = scenario.gamma
    disc = math.exp(-scenario.prefs.rho * t)
    ok = bool(disc * (g - 1.0) * c ** (g - 2.0) < 0)
    if coeffs.variant is Variant.WITH_INSURANCE:
        eta = scenario.eta(t)
        Z = x + p / eta
        if not Z > 0:
            return False
        ok = ok and bool(scenario.hazard(t) / eta**2 * disc * (g - 1.0) * Z ** (g - 2.0) < 0)
    Vxx = float(d.Vxx) if vxx_override is None else float(vxx_override)
    sigma = scenario.market.sigma(t)
    hess = x**2 * Vxx * (sigma @ sigma.T)
    try:
        np.linalg.cholesky(-hess)
    except np.linalg.LinAlgError:
        return False
    return ok


def _newton(g, dg, start, positive=False, max_iter=100, rtol=1e-14):
    v = start
    for _ in range(max_iter):
        step = g(v) / dg(v)
        nxt = v - step
        if positive and nxt <= 0:
            nxt = 0.5 * v
        if abs(nxt - v) <= rtol * max(abs(nxt), 1e-300):
            return nxt
        v = nxt
    raise OracleFailure("Newton iteration did not converge in 100 steps")


def numeric_hamiltonian_argmax(scenario: Scenario, t: float, x: float, variant=Variant.WITH_INSURANCE) -> ControlAction:
    """Maximise the Hamiltonian directly, one decoupled control block at a time.

    Uses the analytic V_x, V_xx but none of the closed-form control formulas,
    except to seed each Newton iteration at half the closed-form answer.
    """
    coeffs = solve(scenario, variant)
    d = analytic_derivatives(coeffs, t, x)
    Vx, Vxx = float(d.Vx), float(d.Vxx)
    c_star, p_star, theta_star = (np.asarray(v) for v in closed_form_controls(coeffs, t, x))
    g = scenario.gamma
    disc = math.exp(-scenario.prefs.rho * t)

    c = _newton(
        lambda v: disc * v ** (g - 1.0) - Vx,
        lambda v: disc * (g - 1.0) * v ** (g - 2.0),
        0.5 * float(c_star),
        positive=True,
    )
    if coeffs.variant is Variant.WITH_INSURANCE:
        eta, lam = scenario.eta(t), scenario.hazard(t)
        # Newton in the estate Z = x + p/eta, which must stay positive
        Z = _newton(
            lambda z: lam / eta * disc * z ** (g - 1.0) - Vx,
            lambda z: lam / eta * disc * (g - 1.0) * z ** (g - 2.0),
            x + 0.5 * float(p_star) / eta,
            positive=True,
        )
        p = eta * (Z - x)
    else:
        p = 0.0

    sigma = scenario.market.sigma(t)
    alpha = scenario.market.algebra(t).alpha
    hess = x**2 * Vxx * (sigma @ sigma.T)
    theta = 0.5 * theta_star
    for _ in range(100):
        grad = x * Vx * alpha + hess @ theta
        step = np.linalg.solve(hess, grad)
        theta = theta - step
        if np.linalg.norm(step) <= 1e-14 * max(np.linalg.norm(theta), 1e-300):
            break
    else:
        raise OracleFailure("portfolio Newton iteration did not converge")
    return ControlAction(c=c, p=p, theta=theta)


@dataclass
class VerificationReport:
    times: np.ndarray
    wealths: np.ndarray
    residual: np.ndarray
    residual_rel: np.ndarray
    residual_fd_rel: np.ndarray
    foc_c: np.ndarray
    foc_p: np.ndarray
    foc_theta: np.ndarray
    hessian_ok: np.ndarray
    tol_analytic: float
    tol_fd: float
    tol_foc: float
    terminal_gap: float = 0.0
    notes: list[str] = field(default_factory=list)

    @property
    def max_abs_residual(self) -> float:
        return float(np.max(np.abs(self.residual)))

    @property
    def max_relative_residual(self) -> float:
        return float(np.max(self.residual_rel))

    @property
    def max_relative_residual_fd(self) -> float:
        return float(np.max(self.residual_fd_rel))

    @property
    def passed(self) -> bool:
        return bool(
            np.all(self.residual_rel < self.tol_analytic)
            and np.all(self.residual_fd_rel < self.tol_fd)
            and np.all(np.maximum.reduce([self.foc_c, self.foc_p, self.foc_theta]) < self.tol_foc)
            and np.all(self.hessian_ok)
            and self.terminal_gap == 0.0
        )

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (
            f"{status}: {self.residual.size} points, max rel residual {self.max_relative_residual:.3e} "
            f"(analytic, tol {self.tol_analytic:g}), {self.max_relative_residual_fd:.3e} "
            f"(finite differences, tol {self.tol_fd:g}), max FOC gap "
            f"{max(self.foc_c.max(), self.foc_p.max(), self.foc_theta.max()):.3e}, "
            f"hessian ok {int(self.hessian_ok.sum())}/{self.hessian_ok.size}"
        )

    def rows(self):
        header = ["t", "x", "residual", "foc_c", "foc_p", "foc_theta_norm", "hessian_ok", "residual_rel", "residual_fd_rel"]
        yield header
        for k in range(self.residual.size):
            yield [
                f"{float(self.times.flat[k]):.17g}",
                f"{float(self.wealths.flat[k]):.17g}",
                f"{float(self.residual.flat[k]):.17g}",
                f"{float(self.foc_c.flat[k]):.17g}",
                f"{float(self.foc_p.flat[k]):.17g}",
                f"{float(self.foc_theta.flat[k]):.17g}",
                str(bool(self.hessian_ok.flat[k])).lower(),
                f"{float(self.residual_rel.flat[k]):.17g}",
                f"{float(self.residual_fd_rel.flat[k]):.17g}",
            ]

    def to_csv(self) -> str:
        buf = io.StringIO()
        csv.writer(buf, lineterminator="\n").writerows(self.rows())
        return buf.getvalue()


def verify_grid(
    scenario: Scenario,
    times=None,
    wealths=None,
    variant=Variant.WITH_INSURANCE,
    tol_analytic: float = 1e-8,
    tol_fd: float = 1e-4,
    tol_foc: float = 1e-10,
) -> VerificationReport:
    """Evaluate every check on the tensor grid times x wealths (51 x 51 over [0,T] x [1e3, 3e6] by default)."""
    times = np.linspace(0.0, scenario.T, 51) if times is None else np.asarray(times, dtype=float)
    wealths = np.linspace(1e3, 3e6, 51) if wealths is None else np.asarray(wealths, dtype=float)
    coeffs = solve(scenario, variant)
    shape = (times.size, wealths.size)
    res, rel, rel_fd = np.empty(shape), np.empty(shape), np.empty(shape)
    fc, fp, ft = np.empty(shape), np.empty(shape), np.empty(shape)
    hess = np.empty(shape, dtype=bool)
    for i, t in enumerate(times):
        a = residual_breakdown(scenario, t, wealths, variant, "analytic")
        f = residual_breakdown(scenario, t, wealths, variant, "finite_difference")
        res[i], rel[i], rel_fd[i] = a.residual, a.relative, f.relative
        gaps = foc_gaps(scenario, t, wealths, variant)
        fc[i], fp[i], ft[i] = gaps.consumption, gaps.premium, gaps.portfolio
        hess[i] = [hessian_check(scenario, t, w, variant) for w in wealths]
    tt, xx = np.meshgrid(times, wealths, indexing="ij")
    gap = float(np.max(terminal_gap(scenario, wealths, variant)))
    del coeffs
    return VerificationReport(tt, xx, res, rel, rel_fd, fc, fp, ft, hess, tol_analytic, tol_fd, tol_foc, gap)
