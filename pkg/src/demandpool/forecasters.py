"""Native probabilistic forecasters for intermittent demand.

Two parametric models share a damped-dynamic mean

    mu_t = (1 - phi - alpha) * mu + phi * mu_{t-1} + alpha * y_{t-1}

with Poisson or negative binomial observations, fitted by maximum likelihood
and forecast by Monte-Carlo simulation. Two bootstrap methods (WSS and ZV)
resample the demand history directly. All forecasters return one
:class:`~demandpool.pmf.QuantileVector` per horizon.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import math

import numpy as np
from numba import njit
from scipy import optimize, signal, special

from .errors import DegenerateSeries, EmptySeries, NonConvergence
from .pmf import QuantileVector, empirical_quantiles, paths_to_quantiles

logger = logging.getLogger(__name__)

FAMILIES = ("poisson", "negbin")
MIN_FIT_PERIODS = 20
N_STARTS = 5
MAX_ITER = 500
FIT_TOL = 1e-6
# beyond b ~ 1e6 the NB is numerically Poisson and gammaln loses precision
LOG_B_MIN, LOG_B_MAX = np.log(1e-8), np.log(1e6)
# With phi + alpha -> 1 the level mu is barely identified and the optimiser can
# drift to absurd values that still add (1 - phi - alpha) * mu of spurious drift.
MU_CAP_FACTOR = 10.0


@dataclass(frozen=True)
class DemandSeries:
    """Non-negative integer demand, one value per period."""

    id: str
    values: np.ndarray
    first_period: int = 1

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 1:
            raise ValueError("values must be one-dimensional")
        if v.size and (np.any(v < 0) or not np.all(np.equal(np.mod(v, 1), 0))):
            raise ValueError("demand values must be non-negative integers")
        v = v.astype(np.int64)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def start_index(self) -> int:
        """0-based index of the first strictly positive value (len(values) if none)."""
        nz = np.flatnonzero(self.values > 0)
        return int(nz[0]) if nz.size else int(self.values.size)

    def __len__(self):
        return int(self.values.size)

    def segment(self, stop: int, start: Optional[int] = None) -> "DemandSeries":
        """Sub-series ``values[start:stop]``; ``start`` defaults to the first positive."""
        if start is None:
            start = self.start_index
        return DemandSeries(self.id, self.values[start:stop])


@dataclass(frozen=True)
class DampedParams:
    mu: float
    phi: float
    alpha: float
    b: Optional[float] = None
    loglik: float = float("nan")
    converged: bool = True

    def __post_init__(self):
        if not (self.mu > 0 and self.phi > 0 and self.alpha > 0):
            raise ValueError("mu, phi and alpha must be positive")
        if not self.phi + self.alpha < 1:
            raise ValueError("phi + alpha must be below 1")
        if self.b is not None and not self.b > 0:
            raise ValueError("dispersion b must be positive")

    @property
    def family(self) -> str:
        return "poisson" if self.b is None else "negbin"


def damped_means(y, mu, phi, alpha, init) -> np.ndarray:
    """Mean trace of the damped recursion.

    Returns ``m`` of length ``len(y) + 1``: ``m[t]`` is the mean of ``y[t]``
    and ``m[-1]`` is the mean of the first period after the sample. The
    pre-sample mean and pre-sample observation are both set to ``init``.
    """
    y = np.asarray(y, dtype=float)
    level = (1.0 - phi - alpha) * mu
    drive = np.empty(y.size + 1)
    drive[0] = level + alpha * init
    drive[1:] = level + alpha * y
    m, _ = signal.lfilter([1.0], [1.0, -phi], drive, zi=[phi * init])
    return m


def _loglik(y, m, b=None) -> float:
    if b is None:
        return float(np.sum(special.xlogy(y, m) - m - special.gammaln(y + 1)))
    a = b * m
    return float(
        np.sum(
            special.gammaln(a + y)
            - special.gammaln(a)
            - special.gammaln(y + 1)
            + a * np.log(b / (1.0 + b))
            - y * np.log1p(b)
        )
    )


@njit(cache=True)
def _negll_kernel(y, lgam_y1, mu, phi, alpha, b, init):
    """Negative log-likelihood via the scalar recursion; ``b <= 0`` means Poisson."""
    level = (1.0 - phi - alpha) * mu
    m = init
    prev = init
    total = 0.0
    if b > 0:
        lb = math.log(b / (1.0 + b))
        l1b = math.log1p(b)
    for t in range(y.size):
        m = level + phi * m + alpha * prev
        if m <= 0.0:
            return np.inf
        yt = y[t]
        if b > 0:
            a = b * m
            total += math.lgamma(a + yt) - math.lgamma(a) - lgam_y1[t] + a * lb - yt * l1b
        else:
            total += (yt * math.log(m) if yt > 0 else 0.0) - m - lgam_y1[t]
        prev = yt
    return -total


# unconstrained <-> constrained parameters. (phi, alpha, 1 - phi - alpha) is a
# softmax of (u1, u2, 0), a smooth bijection from R^2 onto the open triangle.
def _to_params(theta, family):
    e1 = math.exp(min(max(theta[1], -700.0), 700.0))
    e2 = math.exp(min(max(theta[2], -700.0), 700.0))
    denom = 1.0 + e1 + e2
    mu = math.exp(min(theta[0], 700.0))
    b = math.exp(min(max(theta[3], LOG_B_MIN), LOG_B_MAX)) if family == "negbin" else None
    return mu, e1 / denom, e2 / denom, b


def _to_theta(mu, phi, alpha, b, family):
    rest = 1.0 - phi - alpha
    theta = [np.log(mu), np.log(phi / rest), np.log(alpha / rest)]
    if family == "negbin":
        theta.append(np.log(b))
    return np.array(theta)


def loglik_damped(y, family, mu, phi, alpha, b=None, init=None) -> float:
    """One-step-ahead log-likelihood of ``y`` under the damped model."""
    y = np.asarray(y, dtype=float)
    if init is None:
        init = y.mean()
    m = damped_means(y, mu, phi, alpha, init)[:-1]
    if np.any(m <= 0):
        return -np.inf
    return _loglik(y, m, b if family == "negbin" else None)


def _check_family(family):
    if family not in FAMILIES:
        raise ValueError(f"family must be one of {FAMILIES}, got {family!r}")


def fit_damped(series: DemandSeries, family: str = "poisson") -> DampedParams:
    """Maximum likelihood fit of the damped Poisson / negative binomial model.

    Nelder-Mead on the unconstrained reparameterisation from five starting
    points; the best converged start wins.

    Raises
    ------
    DegenerateSeries
        Fewer than two positive observations or fewer than 20 periods.
    NonConvergence
        No start converged within the iteration cap.
    """
    _check_family(family)
    y = np.asarray(series.values, dtype=float)
    if np.count_nonzero(y) < 2 or y.size < MIN_FIT_PERIODS:
        raise DegenerateSeries(
            f"series {series.id!r}: need >= 2 positives and >= {MIN_FIT_PERIODS} periods"
        )
    ybar = y.mean()
    var = y.var()
    b0 = ybar / (var - ybar) if var > ybar * 1.01 else 10.0
    b0 = float(np.clip(b0, 0.05, 50.0))
    starts = [(0.3, 0.2), (0.1, 0.1), (0.6, 0.2), (0.2, 0.6), (0.05, 0.05)][:N_STARTS]

    lgam_y1 = special.gammaln(y + 1)
    mu_cap = MU_CAP_FACTOR * y.max()

    def negll(theta):
        mu, phi, alpha, b = _to_params(theta, family)
        if not (phi > 0 and alpha > 0 and phi + alpha < 1 and 0 < mu <= mu_cap):
            return np.inf
        val = _negll_kernel(y, lgam_y1, mu, phi, alpha, -1.0 if b is None else b, ybar)
        return val if np.isfinite(val) else np.inf

    best = None
    any_converged = False
    for phi0, alpha0 in starts:
        theta0 = _to_theta(ybar, phi0, alpha0, b0, family)
        f0 = negll(theta0)
        res = optimize.minimize(
            negll,
            theta0,
            method="Nelder-Mead",
            options={"maxiter": MAX_ITER, "fatol": FIT_TOL, "xatol": 1e-4},
        )
        cand = (res.fun, res.x, bool(res.success)) if res.fun <= f0 else (f0, theta0, False)
        any_converged |= cand[2]
        if best is None or cand[0] < best[0]:
            best = cand
    if not any_converged or not np.isfinite(best[0]):
        raise NonConvergence(f"series {series.id!r}: no start converged in {MAX_ITER} iterations")
    mu, phi, alpha, b = _to_params(best[1], family)
    # keep strictly inside the admissible region despite float saturation
    phi = min(max(phi, 1e-12), 1 - 2e-12)
    alpha = min(max(alpha, 1e-12), 1 - phi - 1e-12)
    return DampedParams(mu, phi, alpha, b, loglik=-float(best[0]), converged=best[2])


def simulate_damped(params: DampedParams, series: DemandSeries, h: int, n_sims: int, seed) -> np.ndarray:
    """Sample paths of shape ``(n_sims, h)``; sampled demand feeds the recursion."""
    rng = np.random.default_rng(seed)
    y = np.asarray(series.values, dtype=float)
    init = y.mean() if y.size else params.mu
    m = np.full(n_sims, damped_means(y, params.mu, params.phi, params.alpha, init)[-1])
    level = (1.0 - params.phi - params.alpha) * params.mu
    paths = np.empty((n_sims, h), dtype=np.int64)
    for t in range(h):
        if params.b is None:
            draw = rng.poisson(m)
        else:
            draw = rng.negative_binomial(params.b * m, params.b / (1.0 + params.b))
        paths[:, t] = draw
        m = level + params.phi * m + params.alpha * draw
    return paths


def forecast_damped(
    params: DampedParams,
    series: DemandSeries,
    family: Optional[str] = None,
    h: int = 28,
    n_sims: int = 1000,
    seed=None,
) -> list[QuantileVector]:
    if family is not None:
        _check_family(family)
        if family != params.family:
            raise ValueError(f"parameters are for {params.family!r}, not {family!r}")
    return paths_to_quantiles(simulate_damped(params, series, h, n_sims, seed))


def _transition_probs(nonzero):
    """Add-one smoothed P(nonzero next | current state) for states 0 and 1."""
    cur, nxt = nonzero[:-1], nonzero[1:]
    p = np.empty(2)
    for s in (0, 1):
        mask = cur == s
        p[s] = (np.count_nonzero(nxt[mask]) + 1) / (np.count_nonzero(mask) + 2)
    return p


def wss_paths(series: DemandSeries, h: int, n_sims: int, seed) -> np.ndarray:
    """WSS bootstrap: Markov-chain occurrence times, jittered resampled sizes."""
    y = np.asarray(series.values)
    positives = y[y > 0]
    if positives.size == 0:
        raise DegenerateSeries(f"series {series.id!r} has no positive demand")
    rng = np.random.default_rng(seed)
    nonzero = (y > 0).astype(np.int64)
    p_next = _transition_probs(nonzero)
    state = np.full(n_sims, nonzero[-1])
    occ = np.empty((n_sims, h), dtype=bool)
    for t in range(h):
        state = (rng.random(n_sims) < p_next[state]).astype(np.int64)
        occ[:, t] = state == 1
    x = rng.choice(positives, size=(n_sims, h)).astype(float)
    z = rng.standard_normal((n_sims, h))
    jitter = 1 + np.floor(x + z * np.sqrt(x))
    sizes = np.where(jitter <= 0, x, jitter).astype(np.int64)
    return np.where(occ, sizes, 0)


def wss_forecast(series: DemandSeries, h: int = 28, n_sims: int = 1000, seed=None) -> list[QuantileVector]:
    return paths_to_quantiles(wss_paths(series, h, n_sims, seed))


def zv_paths(series: DemandSeries, h: int, n_sims: int, seed) -> np.ndarray:
    """ZV bootstrap: alternate resampled inter-demand intervals and demand sizes."""
    y = np.asarray(series.values)
    pos_idx = np.flatnonzero(y > 0)
    if pos_idx.size < 2:
        raise DegenerateSeries(f"series {series.id!r}: need >= 2 positive demands")
    intervals = np.diff(pos_idx)
    sizes = y[pos_idx]
    rng = np.random.default_rng(seed)
    paths = np.zeros((n_sims, h), dtype=np.int64)
    rows = np.arange(n_sims)
    # first demand lands at a uniform phase within the first sampled interval
    first = rng.choice(intervals, size=n_sims)
    t = np.floor(rng.random(n_sims) * first).astype(np.int64)
    while True:
        live = t < h
        if not live.any():
            break
        paths[rows[live], t[live]] = rng.choice(sizes, size=int(live.sum()))
        t = np.where(live, t + rng.choice(intervals, size=n_sims), t)
    return paths


def zv_forecast(series: DemandSeries, h: int = 28, n_sims: int = 1000, seed=None) -> list[QuantileVector]:
    return paths_to_quantiles(zv_paths(series, h, n_sims, seed))


def empirical_forecast(series: DemandSeries, h: int = 28) -> list[QuantileVector]:
    """Unconditional nearest-rank quantiles of the history, repeated over horizons."""
    if len(series) == 0:
        raise EmptySeries(f"series {series.id!r} is empty")
    qv = QuantileVector(empirical_quantiles(series.values).astype(float))
    return [qv] * h
