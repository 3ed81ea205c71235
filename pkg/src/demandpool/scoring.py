"""Proper scoring rules and randomized PIT for count forecasts.

Orientation: :func:`log_score`, :func:`brier_score` and :func:`drps` are
negatively oriented (smaller is better). :func:`cl_score` keeps the natural
sign (larger is better) because it is only ever maximised.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import EmptySample
from .pmf import CountPMF, cdf, mix, quantile

EPS = 1e-10
PIT_BINS = 10
PIT_PER_HORIZON = 30


def log_score(pmf: CountPMF, y: int) -> float:
    return -float(np.log(max(pmf.pmf(y), EPS)))


def brier_score(pmf: CountPMF, y: int) -> float:
    p = pmf.probs
    return float(-2.0 * pmf.pmf(y) + np.dot(p, p))


def drps(pmf: CountPMF, y: int) -> float:
    """Discrete ranked probability score, summed over k = 0..max(K, y)."""
    n = max(pmf.support_max, y) + 1
    F = np.ones(n)
    F[: pmf.probs.size] = cdf(pmf).cum
    step = (np.arange(n) >= y).astype(float)
    return float(np.sum((F - step) ** 2))


@dataclass(frozen=True)
class CLRegion:
    """Upper-tail regions ``A_t = {y > threshold_t}`` for a window of times."""

    thresholds: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.thresholds, dtype=np.int64)
        t.setflags(write=False)
        object.__setattr__(self, "thresholds", t)

    def __len__(self):
        return int(self.thresholds.size)

    def contains(self, t: int, y: int) -> bool:
        return bool(y > self.thresholds[t])

    @classmethod
    def whole_support(cls, h: int) -> "CLRegion":
        return cls(np.full(h, -1))

    @classmethod
    def from_pool(cls, pmfs_by_method: Sequence[Sequence[CountPMF]], level: float = 0.9) -> "CLRegion":
        """Thresholds at the ``level`` quantile of the equal-weight pool per time."""
        n = len(pmfs_by_method)
        w = np.full(n, 1.0 / n)
        h = len(pmfs_by_method[0])
        thr = [quantile(mix([pmfs_by_method[i][t] for i in range(n)], w), level) for t in range(h)]
        return cls(np.array(thr))


def censored_mass(pmf: CountPMF, y: int, threshold: int) -> float:
    """In-region probability of ``y``, or the complement mass when ``y`` is outside."""
    if y > threshold:
        return pmf.pmf(y)
    if threshold < 0:
        return 0.0
    return float(np.sum(pmf.probs[: threshold + 1]))


def cl_score(pmf: CountPMF, y: int, threshold: int) -> float:
    """Censored likelihood score for the region ``{k > threshold}``."""
    return float(np.log(max(censored_mass(pmf, y, threshold), EPS)))


def rpit(pmf: CountPMF, y: int, seed=None, size=None):
    """Randomized PIT: uniform draw(s) on ``[F(y - 1), F(y)]``."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    F = cdf(pmf)
    lo, hi = F(y - 1), F(y)
    u = rng.uniform(lo, hi, size=size)
    return np.clip(u, 0.0, 1.0) if size is not None else float(min(max(u, 0.0), 1.0))


def pit_histogram(samples, bins: int = PIT_BINS) -> np.ndarray:
    """Bin densities on equal-width right-closed bins of [0, 1]; uniform -> 1."""
    u = np.asarray(samples, dtype=float).ravel()
    if u.size == 0:
        raise EmptySample("no PIT samples")
    idx = np.clip(np.ceil(u * bins).astype(np.int64) - 1, 0, bins - 1)
    counts = np.bincount(idx, minlength=bins)
    return counts * bins / u.size
