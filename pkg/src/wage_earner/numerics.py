"""Numerical kernels: curves, adaptive Simpson, backward RK4, bisection, SPD solves."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.linalg import cho_solve

from .errors import AccuracyError, DomainError, NumericalError, SingularMarketError

MAX_CONDITION = 1e12


class Interpolation(str, Enum):
    LINEAR = "linear"
    MONOTONE_CUBIC = "monotone_cubic"
    CONSTANT = "constant"


@dataclass(frozen=True, eq=False)
class Curve:
    """Scalar- or array-valued function of time sampled on knots.

    ``values`` has the knot axis first, so a curve of 2x2 matrices on 5 knots
    has shape (5, 2, 2). Evaluation outside [knots[0], knots[-1]] raises,
    except for CONSTANT curves, which are defined everywhere.
    """

    knots: np.ndarray
    values: np.ndarray
    interpolation: Interpolation = Interpolation.LINEAR
    _pchip: PchipInterpolator | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        knots = np.atleast_1d(np.asarray(self.knots, dtype=float))
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 0 or values.shape[0] != knots.shape[0]:
            raise ValueError("values must have one entry per knot")
        if knots.ndim != 1 or knots.size == 0:
            raise ValueError("knots must be a non-empty 1-d array")
        if knots.size > 1 and np.any(np.diff(knots) <= 0):
            raise ValueError("knots must be strictly increasing")
        if not np.all(np.isfinite(values)):
            raise NumericalError("curve values must be finite")
        kind = Interpolation(self.interpolation)
        if kind is Interpolation.CONSTANT and knots.size != 1:
            raise ValueError("a constant curve has exactly one knot")
        if kind is not Interpolation.CONSTANT and knots.size < 2:
            kind = Interpolation.CONSTANT
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "interpolation", kind)
        if kind is Interpolation.MONOTONE_CUBIC:
            object.__setattr__(self, "_pchip", PchipInterpolator(knots, values, axis=0, extrapolate=False))

    @classmethod
    def constant(cls, value) -> "Curve":
        return cls(np.array([0.0]), np.asarray(value, dtype=float)[None, ...], Interpolation.CONSTANT)

    @property
    def is_constant(self) -> bool:
        return self.interpolation is Interpolation.CONSTANT

    @property
    def domain(self) -> tuple[float, float]:
        if self.is_constant:
            return (-math.inf, math.inf)
        return (float(self.knots[0]), float(self.knots[-1]))

    def covers(self, a: float, b: float) -> bool:
        lo, hi = self.domain
        return lo <= a and b <= hi

    def __call__(self, t):
        if self.is_constant:
            if np.ndim(t) == 0:
                return self.values[0] if self.values.ndim > 1 else float(self.values[0])
            return np.broadcast_to(self.values[0], np.shape(t) + self.values.shape[1:]).copy()
        tt = np.asarray(t, dtype=float)
        lo, hi = self.knots[0], self.knots[-1]
        if np.any(tt < lo) or np.any(tt > hi) or np.any(np.isnan(tt)):
            raise DomainError(f"time {t} outside curve domain [{lo}, {hi}]")
        if self.interpolation is Interpolation.MONOTONE_CUBIC:
            out = self._pchip(tt)
            # knot values are returned exactly (boundary conditions rely on it)
            idx = np.clip(np.searchsorted(self.knots, tt), 0, self.knots.size - 1)
            hit = self.knots[idx] == tt
            if np.any(hit):
                out = np.where(np.reshape(hit, np.shape(hit) + (1,) * (self.values.ndim - 1)), self.values[idx], out)
        else:
            out = self._linear(tt)
        if np.ndim(t) == 0 and self.values.ndim == 1:
            return float(out)
        return out

    def _linear(self, tt):
        idx = np.clip(np.searchsorted(self.knots, tt, side="right") - 1, 0, self.knots.size - 2)
        t0 = self.knots[idx]
        w = (tt - t0) / (self.knots[idx + 1] - t0)
        v0 = self.values[idx]
        v1 = self.values[idx + 1]
        w = np.reshape(w, np.shape(w) + (1,) * (self.values.ndim - 1))
        return v0 + w * (v1 - v0)


def as_curve(spec) -> Curve:
    """Coerce a number, array, or Curve into a Curve (numbers become constants)."""
    if isinstance(spec, Curve):
        return spec
    return Curve.constant(spec)


def integrate_adaptive(
    f: Callable[[float], float],
    a: float,
    b: float,
    tol: float = 1e-10,
    max_depth: int = 40,
) -> float:
    """Adaptive Simpson quadrature of ``f`` over [a, b].

    The target is ``|result - true| <= tol * (1 + |result|)``. Each panel is
    accepted when the two-half Simpson estimate differs from the whole-panel
    estimate by at most 15x its share of the error budget; the accepted value
    carries the Richardson correction. Subdividing deeper than ``max_depth``
    raises :class:`AccuracyError`.
    """
    if b < a:
        raise DomainError("integrate_adaptive requires a <= b")
    if a == b:
        return 0.0
    fa, fm, fb = f(a), f(0.5 * (a + b)), f(b)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    if not all(math.isfinite(v) for v in (fa, fm, fb)):
        raise NumericalError("integrand is not finite")
    # a coarse probe of the magnitude sets the absolute budget
    probe = _composite_simpson(f, a, b, 16)
    budget = tol * (1.0 + abs(probe))

    def recurse(lo, hi, flo, fmid, fhi, est, eps, depth):
        mid = 0.5 * (lo + hi)
        lm, rm = 0.5 * (lo + mid), 0.5 * (mid + hi)
        flm, frm = f(lm), f(rm)
        left = (mid - lo) / 6.0 * (flo + 4.0 * flm + fmid)
        right = (hi - mid) / 6.0 * (fmid + 4.0 * frm + fhi)
        delta = left + right - est
        if abs(delta) <= 15.0 * eps:
            return left + right + delta / 15.0
        if depth >= max_depth:
            raise AccuracyError(f"adaptive Simpson exceeded depth {max_depth} near t={mid}")
        return recurse(lo, mid, flo, flm, fmid, left, 0.5 * eps, depth + 1) + recurse(
            mid, hi, fmid, frm, fhi, right, 0.5 * eps, depth + 1
        )

    result = recurse(a, b, fa, fm, fb, whole, budget, 0)
    if not math.isfinite(result):
        raise NumericalError("quadrature produced a non-finite value")
    return result


def _composite_simpson(f, a, b, n):
    h = (b - a) / n
    total = f(a) + f(b)
    for k in range(1, n):
        total += (4.0 if k % 2 else 2.0) * f(a + k * h)
    return total * h / 3.0


def solve_backward_linear_ode(
    H: Callable,
    K: Callable,
    terminal: float,
    grid: np.ndarray,
    vectorized: bool = False,
) -> Curve:
    """Classical RK4 for y' = H(t) y - K(t) integrated backward from y(grid[-1]) = terminal.

    H and K are sampled once at the knots and interval midpoints (the only
    stage times RK4 needs). With ``vectorized=True`` they are called on whole
    arrays of times. Returns a monotone-cubic :class:`Curve` on ``grid``.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing with at least two knots")
    mid = 0.5 * (grid[:-1] + grid[1:])

    def sample(f, times):
        if vectorized:
            return np.broadcast_to(np.asarray(f(times), dtype=float), times.shape)
        return np.array([f(t) for t in times], dtype=float)

    Hn, Hm, Kn, Km = (sample(f, ts).tolist() for f, ts in ((H, grid), (H, mid), (K, grid), (K, mid)))
    if not all(math.isfinite(v) for seq in (Hn, Hm, Kn, Km) for v in seq):
        raise NumericalError("non-finite coefficients in backward ODE")
    knots = grid.tolist()
    y = [0.0] * grid.size
    y[-1] = v = float(terminal)
    for k in range(grid.size - 1, 0, -1):
        h = knots[k - 1] - knots[k]  # h < 0
        hm, km = Hm[k - 1], Km[k - 1]
        k1 = Hn[k] * v - Kn[k]
        k2 = hm * (v + 0.5 * h * k1) - km
        k3 = hm * (v + 0.5 * h * k2) - km
        k4 = Hn[k - 1] * (v + h * k3) - Kn[k - 1]
        v = v + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        y[k - 1] = v
    y = np.array(y)
    if not np.all(np.isfinite(y)):
        raise NumericalError("non-finite coefficients in backward ODE")
    return Curve(grid, y, Interpolation.MONOTONE_CUBIC)


def bisect_root(g, lo, hi, xtol: float = 1e-12, rtol: float = 4 * np.finfo(float).eps, max_iter: int = 200):
    """Vectorised bisection for an increasing function ``g`` with g(lo) <= 0 <= g(hi).

    ``lo`` and ``hi`` may be arrays; iteration stops once every bracket is
    narrower than ``xtol + rtol * |hi|`` (the relative part matters for huge roots).
    """
    lo = np.array(lo, dtype=float, copy=True)
    hi = np.array(hi, dtype=float, copy=True)
    for _ in range(max_iter):
        if np.all(hi - lo <= xtol + rtol * np.abs(hi)):
            break
        mid = 0.5 * (lo + hi)
        up = g(mid) > 0
        hi = np.where(up, mid, hi)
        lo = np.where(up, lo, mid)
    else:
        raise AccuracyError("bisection did not converge")
    mid = 0.5 * (lo + hi)
    return float(mid) if mid.ndim == 0 else mid


def condition_number(A: np.ndarray) -> float:
    eig = np.linalg.eigvalsh(A)
    if eig[0] <= 0:
        return math.inf
    return float(eig[-1] / eig[0])


def spd_solve(A, rhs, max_condition: float = MAX_CONDITION) -> np.ndarray:
    """Solve A x = rhs for symmetric positive-definite A via Cholesky.

    Raises :class:`SingularMarketError` if A is not symmetric, not positive
    definite, or its condition number exceeds ``max_condition``.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    rhs = np.asarray(rhs, dtype=float)
    scale = max(np.max(np.abs(A)), np.finfo(float).tiny)
    if not np.allclose(A, A.T, rtol=0.0, atol=1e-12 * scale):
        raise SingularMarketError("matrix is not symmetric")
    cond = condition_number(0.5 * (A + A.T))
    if not cond <= max_condition:
        raise SingularMarketError(f"matrix is singular or ill-conditioned (cond={cond:.3g})")
    try:
        factor = np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        raise SingularMarketError("matrix is not positive definite") from exc
    return cho_solve((factor, True), rhs)
