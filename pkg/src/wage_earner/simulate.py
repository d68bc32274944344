"""Monte Carlo evaluation of consumption / insurance / investment strategies.

Wealth follows the Euler-Maruyama discretisation of

    dX = (i - c - p + r X + A . alpha) dt + A^T sigma dW,

where A = theta X is the vector of dollar holdings in the risky assets.
Strategies hand back dollar holdings directly, which keeps the dynamics
finite when X approaches zero.

Two estimators of the expected utility are provided:

* ``RANDOM_HORIZON`` samples the death time and accumulates utility of
  consumption until min(T, tau), then the bequest or terminal utility;
* ``FIXED_HORIZON_WEIGHTED`` runs every path to T and weights consumption by
  the survival probability and the bequest by the death density (no death
  sampling, lower variance).

Normals are keyed by (seed, step, path), so paths can be regenerated one at a
time and the result is independent of block size and worker count.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple, Protocol

import numpy as np

from . import rng
from .errors import DomainError, PathError
from .mortality import conditional_density, conditional_survival, sample_death_time
from .solver import Scenario, StrategyCoefficients, Variant, crra_power, solve


class EvaluationMode(str, Enum):
    RANDOM_HORIZON = "random_horizon"
    FIXED_HORIZON_WEIGHTED = "fixed_horizon_weighted"


class Termination(str, Enum):
    DEATH = "death"
    RETIREMENT = "retirement"
    BANKRUPTCY = "bankruptcy"


_ACTIVE, _DEAD, _BANKRUPT = 0, 1, 2


@dataclass(frozen=True)
class SimulationConfig:
    n_paths: int = 100_000
    dt: float = 0.01
    seed: int = 0
    antithetic: bool = True
    evaluation_mode: EvaluationMode = EvaluationMode.RANDOM_HORIZON
    # "policy": bankrupt when X falls to the strategy's own floor (-b(t) for the
    # closed forms); "zero": bankrupt as soon as X <= 0.
    solvency: str = "policy"
    block_size: int = 32768
    n_workers: int = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.n_paths < 1:
            raise ValueError("n_paths must be at least 1")
        if self.solvency not in ("policy", "zero"):
            raise ValueError("solvency must be 'policy' or 'zero'")
        if self.block_size < 2 or self.block_size % 2:
            raise ValueError("block_size must be a positive even number")
        object.__setattr__(self, "evaluation_mode", EvaluationMode(self.evaluation_mode))


class Controls(NamedTuple):
    consumption: np.ndarray
    premium: np.ndarray
    risky: np.ndarray  # dollar holdings, shape (n, N)


class Policy(Protocol):
    name: str
    bequest: bool

    def __call__(self, t: float, x: np.ndarray) -> Controls: ...

    def solvency_floor(self, t: float) -> float: ...


class ClosedFormPolicy:
    """Feedback rules of the closed-form solution, optionally with each control scaled.

    Scaling factors let the same object produce the perturbed strategies used
    to probe optimality.
    """

    def __init__(self, coeffs: StrategyCoefficients, consumption_scale=1.0, premium_scale=1.0, risky_scale=1.0,
                 name: str | None = None):
        self.coeffs = coeffs
        self.scales = (float(consumption_scale), float(premium_scale), float(risky_scale))
        self.bequest = coeffs.variant is Variant.WITH_INSURANCE
        self.name = name or coeffs.variant.value
        self._cache: dict[float, tuple] = {}

    def _at(self, t):
        hit = self._cache.get(t)
        if hit is None:
            co = self.coeffs
            sc = co.scenario
            b, e = co.b(t), co.e(t)
            if self.bequest:
                D, eta = co.D(t), sc.eta(t)
            else:
                D, eta = 0.0, 0.0
            direction = co.xi_alpha(t) / (1.0 - co.gamma)
            hit = self._cache[t] = (b, e, D, eta, direction)
        return hit

    def __call__(self, t, x):
        b, e, D, eta, direction = self._at(t)
        cs, ps, rs = self.scales
        F = x + b
        c = F / e
        if cs != 1.0:
            c = cs * c
        if self.bequest:
            p = eta * ((D - 1.0) * x + D * b)
            if ps != 1.0:
                p = ps * p
        else:
            p = np.zeros_like(x)
        risky = F[:, None] * direction
        if rs != 1.0:
            risky = rs * risky
        return Controls(c, p, risky)

    def solvency_floor(self, t):
        return -self._at(t)[0]


@dataclass
class FixedFractions:
    """Constant consumption and premium rates ($/yr) with constant wealth fractions in the risky assets."""

    consumption: float = 0.0
    premium: float = 0.0
    theta: tuple = ()
    bequest: bool = True
    name: str = "fixed"

    def __call__(self, t, x):
        n = x.shape[0]
        theta = np.asarray(self.theta, dtype=float)
        return Controls(np.full(n, self.consumption), np.full(n, self.premium), x[:, None] * theta[None, :])

    def solvency_floor(self, t):
        return 0.0


@dataclass
class WealthPath:
    times: np.ndarray
    wealth: np.ndarray
    consumption: np.ndarray
    premium: np.ndarray
    risky: np.ndarray
    death_time: float | None
    realized_utility: float
    terminated_by: Termination

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        n_assets = self.risky.shape[1] if self.risky.ndim == 2 else 0
        w.writerow(["t", "wealth", "consumption", "premium"] + [f"risky_{k + 1}" for k in range(n_assets)])
        for k in range(self.times.size):
            row = [self.times[k], self.wealth[k]]
            if k < self.consumption.size:
                row += [self.consumption[k], self.premium[k], *self.risky[k]]
            w.writerow([f"{v:.17g}" for v in row])
        return buf.getvalue()


@dataclass(frozen=True)
class UtilityEstimate:
    mean: float
    std_error: float
    n_paths: int
    bankruptcy_fraction: float = 0.0
    mean_terminal_wealth: float = float("nan")
    mean_insurance_spend: float = float("nan")


@dataclass
class _Schedule:
    """Deterministic per-step quantities shared by all paths of one run."""

    times: np.ndarray
    h: float
    income: np.ndarray
    rate: np.ndarray
    eta: np.ndarray
    alpha: np.ndarray
    sigma: np.ndarray
    survival: np.ndarray
    density: np.ndarray
    discount: np.ndarray


def _schedule(scenario: Scenario, t0: float, dt: float) -> _Schedule:
    T = scenario.T
    if not 0 <= t0 < T:
        raise ValueError("t0 must lie in [0, T)")
    n = max(1, int(round((T - t0) / dt)))
    times = np.linspace(t0, T, n + 1)
    mkt = scenario.market
    return _Schedule(
        times=times,
        h=(T - t0) / n,
        income=np.array([scenario.income_rate(t) for t in times]),
        rate=np.array([scenario.r(t) for t in times]),
        eta=np.array([scenario.eta(t) for t in times]),
        alpha=np.array([mkt.algebra(t).alpha for t in times]),
        sigma=np.array([mkt.sigma(t) for t in times]),
        survival=np.asarray(conditional_survival(scenario.mortality, times, t0)),
        density=np.asarray(conditional_density(scenario.mortality, times, t0)),
        discount=np.exp(-scenario.prefs.rho * times),
    )


def _utility(v, gamma, discount):
    """Vectorised discounted CRRA; -inf/nan for infeasible arguments is left to the caller."""
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        out = discount * crra_power(v, gamma) / gamma
    return np.where(v < 0, np.nan, out)


@dataclass
class _BlockResult:
    utility: np.ndarray
    status: np.ndarray
    final_wealth: np.ndarray
    insurance_spend: np.ndarray
    death_time: np.ndarray
    record: dict | None = field(default=None)


def _normals(config: SimulationConfig, step: int, first: int, count: int, dim: int) -> np.ndarray:
    if not config.antithetic:
        return rng.normals(config.seed, step, first, count, dim)
    # path 2j uses base row j, path 2j+1 its mirror image
    b0, b1 = first // 2, (first + count - 1) // 2
    zb = rng.normals(config.seed, step, b0, b1 - b0 + 1, dim)
    full = np.empty((2 * zb.shape[0], dim))
    full[0::2] = zb
    full[1::2] = -zb
    start = first - 2 * b0
    return full[start:start + count]


def _check_actions(c, p, risky, live, t):
    if np.all(np.isfinite(p)) and np.all(np.isfinite(risky)) and np.all(c >= 0):
        return
    with np.errstate(invalid="ignore"):
        finite = np.isfinite(c) & np.isfinite(p) & np.all(np.isfinite(risky), axis=1)
        if np.any(live & ~finite):
            raise PathError(f"strategy returned a non-finite action at t={t}")
        if np.any(live & (c < 0)):
            raise DomainError(f"strategy returned negative consumption at t={t}")


def _run_block(scenario: Scenario, policy: Policy, config: SimulationConfig, sched: _Schedule, x0: float,
               first: int, count: int, record: bool = False) -> _BlockResult:
    g = scenario.gamma
    rho = scenario.prefs.rho
    random_horizon = config.evaluation_mode is EvaluationMode.RANDOM_HORIZON
    dim = scenario.market.n_drivers
    h = sched.h
    sqrt_h = math.sqrt(h)
    n_steps = sched.times.size - 1
    T = sched.times[-1]

    x = np.full(count, float(x0))
    util = np.zeros(count)
    spend = np.zeros(count)
    status = np.zeros(count, dtype=np.int8)
    live = np.ones(count, dtype=bool)
    if random_horizon:
        tau = np.atleast_1d(sample_death_time(scenario.mortality, sched.times[0], config.seed, size=count, first=first))
    death_time = np.full(count, np.nan)
    rec = {"wealth": [x.copy()], "c": [], "p": [], "risky": []} if record else None

    for k in range(n_steps):
        s = sched.times[k]
        with np.errstate(all="ignore"):
            c, p, risky = policy(s, x)
        c = np.asarray(c, dtype=float)
        p = np.asarray(p, dtype=float)
        risky = np.asarray(risky, dtype=float).reshape(count, -1)
        _check_actions(c, p, risky, live, s)
        if record:
            rec["c"].append(c.copy())
            rec["p"].append(p.copy())
            rec["risky"].append(risky.copy())

        u_c = _utility(c, g, sched.discount[k])
        if random_horizon:
            dies = live & (tau < s + h)
            if np.any(dies):
                idx = np.flatnonzero(dies)
                frac = np.ones(count)
                frac[idx] = (tau[idx] - s) / h
                util += np.where(live, u_c * h * frac, 0.0)
                spend += np.where(live, p * h * frac, 0.0)
                if policy.bequest:
                    Z = x[idx] + p[idx] / sched.eta[k]
                    util[idx] += _utility(Z, g, np.exp(-rho * tau[idx]))
                status[idx] = _DEAD
                death_time[idx] = tau[idx]
                live[idx] = False
            else:
                util += np.where(live, u_c * h, 0.0)
                spend += np.where(live, p * h, 0.0)
        else:
            inc = sched.survival[k] * h * u_c
            if policy.bequest:
                inc = inc + sched.density[k] * h * _utility(x + p / sched.eta[k], g, sched.discount[k])
            util += np.where(live, inc, 0.0)
            spend += np.where(live, p * h, 0.0)

        z = _normals(config, k, first, count, dim)
        with np.errstate(all="ignore"):
            drift = sched.income[k] - c - p + sched.rate[k] * x + risky @ sched.alpha[k]
            shock = np.einsum("ij,ij->i", risky @ sched.sigma[k], z)
            x = np.where(live, x + drift * h + shock * sqrt_h, x)
        floor = policy.solvency_floor(sched.times[k + 1]) if config.solvency == "policy" else 0.0
        broke = live & (x <= floor)
        if np.any(broke):
            status[broke] = _BANKRUPT
            live &= ~broke
        if record:
            rec["wealth"].append(x.copy())
        if not np.any(live):
            break

    if np.any(live):
        w = _utility(x[live], g, math.exp(-rho * T))
        if not random_horizon:
            w = sched.survival[-1] * w
        util[live] += w
    util[status == _BANKRUPT] = np.nan
    util[~np.isfinite(util)] = np.nan
    status[np.isnan(util)] = _BANKRUPT
    return _BlockResult(util, status, x, spend, death_time, rec)


def _blocks(config: SimulationConfig):
    size = config.block_size
    for first in range(0, config.n_paths, size):
        yield first, min(size, config.n_paths - first)


def _run(scenario, policy, config, t0, x0):
    if x0 < 0:
        raise ValueError("initial wealth must be non-negative")
    sched = _schedule(scenario, t0, config.dt)
    jobs = list(_blocks(config))

    def work(job):
        return _run_block(scenario, policy, config, sched, x0, *job)

    if config.n_workers > 1:
        with ThreadPoolExecutor(config.n_workers) as pool:
            parts = list(pool.map(work, jobs))
    else:
        parts = [work(job) for job in jobs]
    return _BlockResult(
        np.concatenate([p.utility for p in parts]),
        np.concatenate([p.status for p in parts]),
        np.concatenate([p.final_wealth for p in parts]),
        np.concatenate([p.insurance_spend for p in parts]),
        np.concatenate([p.death_time for p in parts]),
    )


def _mean(values: np.ndarray) -> float:
    return math.fsum(values.tolist()) / values.size if values.size else float("nan")


def _summarise(result: _BlockResult, antithetic: bool) -> UtilityEstimate:
    u = result.utility
    bankrupt = float(np.mean(result.status == _BANKRUPT))
    if bankrupt > 0:
        warnings.warn(f"{bankrupt:.2%} of paths went bankrupt and are excluded from the estimate", stacklevel=3)
    if antithetic and u.size >= 2:
        n_pairs = u.size // 2
        pairs = u[: 2 * n_pairs].reshape(n_pairs, 2)
        valid = np.isfinite(pairs)
        counts = valid.sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            samples = np.where(valid, pairs, 0.0).sum(axis=1) / counts  # pairs with no survivor give NaN
        if u.size % 2:
            samples = np.append(samples, u[-1])
    else:
        samples = u
    samples = samples[np.isfinite(samples)]
    mean = _mean(samples)
    if samples.size > 1:
        var = math.fsum(((samples - mean) ** 2).tolist()) / (samples.size - 1)
        se = math.sqrt(var / samples.size)
    else:
        se = float("nan")
    ok = result.status != _BANKRUPT
    return UtilityEstimate(
        mean=mean,
        std_error=se,
        n_paths=int(u.size),
        bankruptcy_fraction=bankrupt,
        mean_terminal_wealth=_mean(result.final_wealth[ok]),
        mean_insurance_spend=_mean(result.insurance_spend[ok]),
    )


def estimate_expected_utility(scenario: Scenario, policy: Policy, t0: float = 0.0, x0: float | None = None,
                              config: SimulationConfig = SimulationConfig()) -> UtilityEstimate:
    """Monte Carlo estimate of J(t0, x0; policy) with its standard error."""
    x0 = scenario.x0 if x0 is None else x0
    return _summarise(_run(scenario, policy, config, t0, x0), config.antithetic)


def simulate_path(scenario: Scenario, policy: Policy, config: SimulationConfig = SimulationConfig(),
                  path_index: int = 0, t0: float = 0.0, x0: float | None = None) -> WealthPath:
    """Regenerate path ``path_index`` of the run defined by ``config`` and record it."""
    x0 = scenario.x0 if x0 is None else x0
    sched = _schedule(scenario, t0, config.dt)
    res = _run_block(scenario, policy, config, sched, x0, path_index, 1, record=True)
    rec = res.record
    wealth = np.array([w[0] for w in rec["wealth"]])
    times = sched.times[: wealth.size].copy()
    status = int(res.status[0])
    death = float(res.death_time[0])
    if status == _DEAD:
        how = Termination.DEATH
        times[-1] = death  # wealth is frozen at the last grid value before death
    elif status == _BANKRUPT:
        how = Termination.BANKRUPTCY
    else:
        how = Termination.RETIREMENT
    steps = len(rec["c"])
    risky = np.array([r[0] for r in rec["risky"]]) if steps else np.empty((0, scenario.market.n_assets))
    return WealthPath(
        times=times,
        wealth=wealth,
        consumption=np.array([c[0] for c in rec["c"]]),
        premium=np.array([p[0] for p in rec["p"]]),
        risky=risky,
        death_time=None if math.isnan(death) else death,
        realized_utility=float(res.utility[0]),
        terminated_by=how,
    )


@dataclass(frozen=True)
class ComparisonRow:
    name: str
    estimate: UtilityEstimate


def compare_strategies(scenario: Scenario, strategies, t0: float = 0.0, x0: float | None = None,
                       config: SimulationConfig = SimulationConfig()) -> list[ComparisonRow]:
    """Evaluate several strategies on common random numbers (same seed, same paths)."""
    rows = []
    for item in strategies:
        name, policy = item if isinstance(item, tuple) else (item.name, item)
        rows.append(ComparisonRow(name, estimate_expected_utility(scenario, policy, t0, x0, config)))
    return rows


def summary_csv(rows: list[ComparisonRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["strategy", "mean", "std_error", "bankruptcy_fraction", "mean_terminal_wealth", "mean_insurance_spend"])
    for row in rows:
        e = row.estimate
        w.writerow([row.name] + [f"{v:.17g}" for v in (e.mean, e.std_error, e.bankruptcy_fraction,
                                                       e.mean_terminal_wealth, e.mean_insurance_spend)])
    return buf.getvalue()


def closed_form_policy(scenario: Scenario, variant=Variant.WITH_INSURANCE, **scales) -> ClosedFormPolicy:
    return ClosedFormPolicy(solve(scenario, variant), **scales)
