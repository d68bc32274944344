"""Multi-asset Black-Scholes market with deterministic coefficients.

N risky assets driven by M Brownian motions. All derived quantities needed by
the optimal strategies (risk premium, the mutual-fund direction
(sigma sigma^T)^{-1} alpha and the quadratic form Sigma) live here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, SingularMarketError
from .numerics import MAX_CONDITION, Curve, as_curve, condition_number, spd_solve


@dataclass(frozen=True, eq=False)
class MarketModel:
    """Interest rate r(t), appreciation rates mu(t) (N,), volatilities sigma(t) (N, M)."""

    r: Curve
    mu: Curve
    sigma: Curve

    def __post_init__(self):
        r, mu, sigma = as_curve(self.r), as_curve(self.mu), as_curve(self.sigma)
        if r.values.ndim != 1:
            raise ValueError("r must be scalar-valued")
        if mu.values.ndim != 2:
            raise ValueError("mu must be vector-valued")
        if sigma.values.ndim != 3:
            raise ValueError("sigma must be matrix-valued")
        if sigma.values.shape[1] != mu.values.shape[1]:
            raise ValueError("sigma must have one row per risky asset")
        if sigma.values.shape[1] > sigma.values.shape[2]:
            raise SingularMarketError("sigma sigma^T is singular when N > M")
        if np.any(r.values <= 0):
            raise ValueError("the interest rate must be positive")
        for mat in sigma.values:
            cond = condition_number(mat @ mat.T)
            if not cond <= MAX_CONDITION:
                raise SingularMarketError(f"sigma sigma^T is singular (cond={cond:.3g})")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "_cache", {})

    @classmethod
    def constant(cls, r: float, mu, sigma) -> "MarketModel":
        return cls(Curve.constant(r), Curve.constant(np.asarray(mu, dtype=float)), Curve.constant(np.atleast_2d(sigma)))

    @property
    def n_assets(self) -> int:
        return self.mu.values.shape[1]

    @property
    def n_drivers(self) -> int:
        return self.sigma.values.shape[2]

    @property
    def is_constant(self) -> bool:
        return self.r.is_constant and self.mu.is_constant and self.sigma.is_constant

    def covers(self, a: float, b: float) -> bool:
        return all(c.covers(a, b) for c in (self.r, self.mu, self.sigma))

    def algebra(self, t: float) -> "MarketAlgebra":
        """Derived quantities at time t (memoised for constant markets)."""
        if self.is_constant and "algebra" in self._cache:
            return self._cache["algebra"]
        out = _algebra(self, t)
        if self.is_constant:
            self._cache["algebra"] = out
        return out


@dataclass(frozen=True)
class MarketAlgebra:
    alpha: np.ndarray
    xi: np.ndarray
    xi_alpha: np.ndarray
    Sigma: float


def _check_t(t):
    if t < 0 or not math.isfinite(t):
        raise DomainError(f"time must be finite and non-negative, got {t}")


def _algebra(market: MarketModel, t: float) -> MarketAlgebra:
    alpha = risk_premium(market, t)
    sigma = market.sigma(t)
    cov = sigma @ sigma.T
    xa = spd_solve(cov, alpha)
    xi = spd_solve(cov, np.eye(cov.shape[0]))
    return MarketAlgebra(alpha, xi, xa, sigma_quadratic(market, t))


def risk_premium(market: MarketModel, t: float) -> np.ndarray:
    """alpha(t) = mu(t) - r(t) componentwise."""
    _check_t(t)
    return np.asarray(market.mu(t), dtype=float) - market.r(t)


def xi_alpha(market: MarketModel, t: float) -> np.ndarray:
    """(sigma sigma^T)^{-1} alpha, by a Cholesky solve rather than explicit inversion."""
    sigma = market.sigma(t)
    return spd_solve(sigma @ sigma.T, risk_premium(market, t))


def sigma_quadratic(market: MarketModel, t: float) -> float:
    """Sigma(t) = alpha^T xi alpha - 1/2 |sigma^T xi alpha|^2, evaluated term by term."""
    alpha = risk_premium(market, t)
    direction = xi_alpha(market, t)
    loadings = market.sigma(t).T @ direction
    return float(alpha @ direction - 0.5 * (loadings @ loadings))


def market_price_of_risk(market: MarketModel, t: float) -> np.ndarray:
    """Least-norm pi with sigma pi = alpha, i.e. sigma^T (sigma sigma^T)^{-1} alpha."""
    return market.sigma(t).T @ xi_alpha(market, t)


def _curve_from_json(doc, shape_check):
    if isinstance(doc, dict):
        t = np.asarray(doc["t"], dtype=float)
        values = np.asarray(doc["values"], dtype=float)
        kind = doc.get("interpolation", "linear")
        curve = Curve(t, values, kind)
    else:
        curve = Curve.constant(np.asarray(doc, dtype=float))
    shape_check(curve.values.shape[1:])
    return curve


def market_from_dict(doc: dict) -> MarketModel:
    def scalar(shape):
        if shape != ():
            raise ValueError("r must be a scalar or scalar curve")

    def vector(shape):
        if len(shape) != 1:
            raise ValueError("mu must be a vector or vector curve")

    def matrix(shape):
        if len(shape) != 2:
            raise ValueError("sigma must be a matrix or matrix curve")

    return MarketModel(
        _curve_from_json(doc["r"], scalar),
        _curve_from_json(doc["mu"], vector),
        _curve_from_json(doc["sigma"], matrix),
    )


def _curve_to_json(curve: Curve):
    if curve.is_constant:
        return curve.values[0].tolist() if curve.values.ndim > 1 else float(curve.values[0])
    return {"t": curve.knots.tolist(), "values": curve.values.tolist(), "interpolation": curve.interpolation.value}


def market_to_dict(market: MarketModel) -> dict:
    return {"r": _curve_to_json(market.r), "mu": _curve_to_json(market.mu), "sigma": _curve_to_json(market.sigma)}


FIGURE1_MARKET = MarketModel.constant(r=0.04, mu=[0.07, 0.11], sigma=[[0.19, 0.15], [0.17, 0.21]])
