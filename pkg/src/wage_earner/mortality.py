"""Deterministic hazard-rate models for the wage earner's lifetime.

Times are measured in years from the start of the working life (t = 0).
Both model families integrate their hazard in closed form, so survival
probabilities are exact up to floating point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from . import rng
from .errors import DomainError
from .numerics import bisect_root


@dataclass(frozen=True)
class GompertzMakeham:
    """lambda(t) = base + scale * exp(growth * t)."""

    base: float
    scale: float
    growth: float

    def __post_init__(self):
        if self.base < 0 or self.scale < 0 or self.base + self.scale <= 0:
            raise ValueError("Gompertz-Makeham needs base, scale >= 0 and a positive hazard")
        if self.growth < 0:
            raise ValueError("growth must be non-negative")

    def rate(self, t):
        return self.base + self.scale * np.exp(self.growth * np.asarray(t, dtype=float))

    def integrated(self, t, s):
        """Cumulative hazard between t and s (s >= t)."""
        t = np.asarray(t, dtype=float)
        s = np.asarray(s, dtype=float)
        span = s - t
        if self.growth == 0.0:
            return (self.base + self.scale) * span
        return self.base * span + self.scale / self.growth * np.exp(self.growth * t) * np.expm1(self.growth * span)


@dataclass(frozen=True)
class PiecewiseConstant:
    """Hazard equal to ``rates[i]`` on [times[i], times[i+1]); the last rate extends forever."""

    times: tuple[float, ...]
    rates: tuple[float, ...]

    def __post_init__(self):
        times = tuple(float(v) for v in self.times)
        rates = tuple(float(v) for v in self.rates)
        if len(times) != len(rates) or not times:
            raise ValueError("need one rate per knot")
        if times[0] != 0.0:
            raise ValueError("the first knot must be at t = 0")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("knot times must be strictly increasing")
        if any(r <= 0 for r in rates):
            raise ValueError("hazard rates must be positive")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "rates", rates)

    @classmethod
    def from_knots(cls, knots) -> "PiecewiseConstant":
        times, rates = zip(*[(float(a), float(b)) for a, b in knots])
        return cls(times, rates)

    def _segment(self, t):
        return np.searchsorted(np.asarray(self.times), t, side="right") - 1

    def rate(self, t):
        t = np.asarray(t, dtype=float)
        out = np.asarray(self.rates)[self._segment(t)]
        return float(out) if out.ndim == 0 else out

    def _from_zero(self, s):
        times = np.asarray(self.times)
        rates = np.asarray(self.rates)
        at_knots = np.concatenate(([0.0], np.cumsum(rates[:-1] * np.diff(times))))
        j = self._segment(s)
        return at_knots[j] + rates[j] * (s - times[j])

    def integrated(self, t, s):
        t = np.asarray(t, dtype=float)
        s = np.asarray(s, dtype=float)
        same = self._segment(t) == self._segment(s)
        direct = np.asarray(self.rates)[self._segment(t)] * (s - t)
        return np.where(same, direct, self._from_zero(s) - self._from_zero(t))


MortalityModel = Union[GompertzMakeham, PiecewiseConstant]


def _check_time(t):
    if np.any(np.asarray(t) < 0):
        raise DomainError(f"time must be non-negative, got {t}")


def _check_order(s, t):
    _check_time(t)
    if np.any(np.asarray(s) < np.asarray(t)):
        raise DomainError("conditional quantities need s >= t")


def _out(v):
    v = np.asarray(v, dtype=float)
    return float(v) if v.ndim == 0 else v


def hazard(model: MortalityModel, t):
    """Instantaneous death rate lambda(t) (1/yr)."""
    _check_time(t)
    return _out(model.rate(t))


def cumulative_hazard(model: MortalityModel, s, t=0.0):
    """Integral of lambda over [t, s]."""
    _check_order(s, t)
    return _out(model.integrated(t, s))


def conditional_survival(model: MortalityModel, s, t):
    """P(tau > s | tau > t) = exp(-int_t^s lambda)."""
    _check_order(s, t)
    return _out(np.exp(-model.integrated(t, s)))


def conditional_density(model: MortalityModel, s, t):
    """Density of the death time at s given survival to t: lambda(s) * survival(s, t)."""
    _check_order(s, t)
    return _out(model.rate(s) * np.exp(-model.integrated(t, s)))


def death_times_from_uniforms(model: MortalityModel, t0: float, u) -> np.ndarray:
    """Invert the conditional survival function: solve int_{t0}^tau lambda = -log(u)."""
    _check_time(t0)
    target = -np.log(np.asarray(u, dtype=float))
    lo = np.full_like(target, float(t0))
    hi = lo + 1.0
    # expand the bracket until it contains every root
    while True:
        short = model.integrated(t0, hi) < target
        if not np.any(short):
            break
        hi = np.where(short, t0 + 2.0 * (hi - t0), hi)
    return np.asarray(bisect_root(lambda x: model.integrated(t0, x) - target, lo, hi, xtol=1e-12))


def sample_death_time(model: MortalityModel, t0: float, rng_seed: int, size: int | None = None, first: int = 0):
    """Draw tau > t0 from the conditional lifetime law, deterministically in ``rng_seed``.

    With ``size=None`` a single float is returned; otherwise an array of the
    death times for draw indices ``first .. first+size-1``.
    """
    n = 1 if size is None else int(size)
    u = rng.uniforms(rng_seed, rng.DEATH, 0, first, n)
    tau = death_times_from_uniforms(model, t0, u)
    return float(tau[0]) if size is None else tau


def mortality_from_dict(doc: dict) -> MortalityModel:
    form = doc.get("form")
    if form == "gompertz_makeham":
        return GompertzMakeham(float(doc["base"]), float(doc["scale"]), float(doc["growth"]))
    if form == "piecewise":
        return PiecewiseConstant.from_knots(doc["knots"])
    raise ValueError(f"unknown mortality form {form!r}")


def mortality_to_dict(model: MortalityModel) -> dict:
    if isinstance(model, GompertzMakeham):
        return {"form": "gompertz_makeham", "base": model.base, "scale": model.scale, "growth": model.growth}
    return {"form": "piecewise", "knots": [[t, r] for t, r in zip(model.times, model.rates)]}


FIGURE1_MORTALITY = GompertzMakeham(base=0.001, scale=math.exp(-9.5), growth=0.1)
