"""Synthetic intermittent demand and stand-in external forecasts.

The hurdle generator draws demand occurrence from a Bernoulli and positive
sizes as ``1 + NegBin``. Occurrence probability controls ADI and the size
dispersion controls CV2, so parameters can target each SBC class.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .forecasters import DemandSeries
from .ingest import split_series
from .pmf import TAU_GRID, QuantileVector


@dataclass(frozen=True)
class HurdleParams:
    p_demand: float
    size_mean: float
    size_dispersion: float

    def sample(self, length: int, rng: np.random.Generator) -> np.ndarray:
        occur = rng.random(length) < self.p_demand
        m = self.size_mean - 1.0
        r = self.size_dispersion
        sizes = 1 + rng.negative_binomial(r, r / (r + m), size=length)
        return np.where(occur, sizes, 0).astype(np.int64)


# ADI ~ 1 / p_demand, CV2 of sizes ~ ((m - 1) + (m - 1)^2 / r) / m^2
CLASS_PARAMS = {
    "smooth": HurdleParams(0.95, 6.0, 60.0),
    "erratic": HurdleParams(0.95, 6.0, 0.5),
    "intermittent": HurdleParams(0.3, 4.0, 60.0),
    "lumpy": HurdleParams(0.3, 6.0, 0.5),
}


def gen_synthetic(n_series: int, length: int = 150, seed=0, params=None) -> list[DemandSeries]:
    """Generate ``n_series`` hurdle series cycling through the four SBC targets.

    ``params`` optionally overrides the per-class generator table. Mean sizes
    are jittered per series (multiplicatively, +-30%) for variety.
    """
    if n_series < 1:
        raise ValueError("n_series must be >= 1")
    if length < 120:
        raise ValueError("length must be >= 120")
    table = list((params or CLASS_PARAMS).values())
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n_series):
        base = table[i % len(table)]
        scale = rng.uniform(0.7, 1.3)
        p = HurdleParams(base.p_demand, max(1.0 + (base.size_mean - 1.0) * scale, 1.05), base.size_dispersion)
        values = p.sample(length, rng)
        # guarantee a usable history: demand in the first period and at least two positives
        values[0] = max(values[0], 1)
        if np.count_nonzero(values) < 2:
            values[length // 2] = 1
        out.append(DemandSeries(f"S{i:04d}", values))
    return out


def _quantiles(dist) -> QuantileVector:
    return QuantileVector(np.asarray(dist.ppf(TAU_GRID), dtype=float))


def _ses_level(y: np.ndarray, alpha: float = 0.1) -> float:
    level = y[: min(10, y.size)].mean()
    for v in y:
        level = alpha * v + (1 - alpha) * level
    return max(level, 1e-3)


def _count_dist(mean: float, dispersion: float):
    """Negative binomial with variance ``dispersion * mean``; Poisson when not overdispersed."""
    mean = max(mean, 1e-3)
    if dispersion <= 1.001:
        return stats.poisson(mean)
    r = mean / (dispersion - 1.0)
    return stats.nbinom(r, r / (r + mean))


def external_benchmarks(series: DemandSeries, h: int = 28) -> dict[str, dict[str, list[QuantileVector]]]:
    """Two simple external forecasters, for both forecast origins.

    ``EXT-SES`` centres a count distribution on an SES level with the whole
    training variance-to-mean ratio; ``EXT-NBMA`` matches mean and variance
    of the last 2h training periods.

    Returns ``{"weight": {method: [...]}, "test": {method: [...]}}``.
    """
    split = split_series(series, h)
    out = {}
    for origin, sl in (("weight", split.train_slice), ("test", split.train_weight_slice)):
        y = series.values[sl].astype(float)
        recent = y[-2 * h:]
        m = max(recent.mean(), 1e-3)
        out[origin] = {
            "EXT-SES": [_quantiles(_count_dist(_ses_level(y), y.var() / max(y.mean(), 1e-3)))] * h,
            "EXT-NBMA": [_quantiles(_count_dist(m, recent.var() / m))] * h,
        }
    return out
