"""Discrete count distributions on {0, 1, ..., K}.

Every forecast in the package ends up as a :class:`CountPMF`. Individual
forecasters emit 99 quantiles per horizon, which are turned into a PMF by
frequency counting (:func:`quantiles_to_pmf`); combination is a weighted sum
of PMFs (:func:`mix`).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    LengthMismatch,
    NegativeMass,
    NegativeSupport,
    NotNormalized,
    TooFewSimulations,
)

#: tau grid 0.01, ..., 0.99 as integer percentages
TAU_PERCENT = np.arange(1, 100)
TAU_GRID = TAU_PERCENT / 100.0

BUILD_TOL = 1e-6
NORM_TOL = 1e-9
# comparisons of a CDF against a probability level; absorbs cumsum drift
CDF_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class CountPMF:
    """Probability mass function with dense support ``0..support_max``.

    Use :func:`make_pmf` or :meth:`from_array` rather than the constructor.
    """

    probs: np.ndarray

    @classmethod
    def from_array(cls, probs, tol: float = BUILD_TOL) -> "CountPMF":
        p = np.array(probs, dtype=float).ravel()
        if p.size == 0:
            raise NotNormalized("empty probability vector")
        if np.any(p < 0):
            raise NegativeMass("probabilities must be non-negative")
        total = p.sum()
        if abs(total - 1.0) > tol:
            raise NotNormalized(f"probabilities sum to {total!r}")
        p /= total
        p.setflags(write=False)
        return cls(p)

    @property
    def support_max(self) -> int:
        return self.probs.size - 1

    def pmf(self, k: int) -> float:
        if k < 0 or k > self.support_max:
            return 0.0
        return float(self.probs[k])

    def cdf(self) -> "CountCDF":
        return cdf(self)

    def quantile(self, tau: float) -> int:
        return quantile(self, tau)

    def mean(self) -> float:
        return float(np.dot(np.arange(self.probs.size), self.probs))

    def padded(self, size: int) -> np.ndarray:
        """Probabilities as a length-``size`` vector, zero-padded on the right."""
        out = np.zeros(max(size, self.probs.size))
        out[: self.probs.size] = self.probs
        return out

    def __eq__(self, other):
        if not isinstance(other, CountPMF):
            return NotImplemented
        n = max(self.probs.size, other.probs.size)
        return bool(np.array_equal(self.padded(n), other.padded(n)))

    def __repr__(self):
        nz = {int(k): round(float(v), 6) for k, v in enumerate(self.probs) if v > 0}
        return f"CountPMF({nz})"


@dataclass(frozen=True, eq=False)
class CountCDF:
    cum: np.ndarray

    @property
    def support_max(self) -> int:
        return self.cum.size - 1

    def __call__(self, k: int) -> float:
        if k < 0:
            return 0.0
        if k >= self.support_max:
            return 1.0
        return float(self.cum[k])


@dataclass(frozen=True, eq=False)
class QuantileVector:
    """Quantiles at tau = 0.01, ..., 0.99 for a single horizon."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float).ravel()
        if v.size != TAU_GRID.size:
            raise ValueError(f"expected 99 quantiles, got {v.size}")
        if np.any(v < 0) or np.any(np.diff(v) < 0):
            raise ValueError("quantiles must be non-negative and non-decreasing")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __eq__(self, other):
        if not isinstance(other, QuantileVector):
            return NotImplemented
        return bool(np.array_equal(self.values, other.values))


def make_pmf(entries: Mapping[int, float]) -> CountPMF:
    """Build a validated PMF from a ``{demand: probability}`` mapping."""
    if not entries:
        raise NotNormalized("no probability mass given")
    keys = [int(k) for k in entries]
    if min(keys) < 0:
        raise NegativeSupport(f"negative support value {min(keys)}")
    probs = np.zeros(max(keys) + 1)
    for k, v in entries.items():
        if v < 0:
            raise NegativeMass(f"negative probability at {k}")
        probs[int(k)] += v
    return CountPMF.from_array(probs)


def cdf(pmf: CountPMF) -> CountCDF:
    cum = np.cumsum(pmf.probs)
    # total is 1 by construction; pin the last entry so cum[K] == 1 exactly
    cum[-1] = 1.0
    np.minimum(cum, 1.0, out=cum)
    cum.setflags(write=False)
    return CountCDF(cum)


def quantile(pmf: CountPMF, tau: float) -> int:
    """Smallest q with F(q) >= tau (left-continuous inverse CDF)."""
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must lie in (0, 1), got {tau}")
    cum = cdf(pmf).cum
    return int(np.searchsorted(cum, tau - CDF_TOL, side="left"))


def mix(pmfs: Sequence[CountPMF], w) -> CountPMF:
    """Linear pool ``sum_i w_i * pmfs[i]``."""
    w = np.asarray(w, dtype=float)
    if len(pmfs) == 0 or len(pmfs) != w.size:
        raise LengthMismatch(f"{len(pmfs)} distributions but {w.size} weights")
    size = max(p.probs.size for p in pmfs)
    out = np.zeros(size)
    for wi, p in zip(w, pmfs):
        out[: p.probs.size] += wi * p.probs
    return CountPMF.from_array(out)


def round_half_away(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def quantiles_to_pmf(q: QuantileVector) -> CountPMF:
    """Frequency PMF of the 99 rounded quantiles plus a duplicated top quantile."""
    r = np.maximum(round_half_away(q.values), 0).astype(np.int64)
    r = np.append(r, r[-1])
    counts = np.bincount(r)
    return CountPMF.from_array(counts / 100.0)


def empirical_quantiles(sample) -> np.ndarray:
    """Nearest-rank quantiles of ``sample`` on the tau grid.

    Rank for tau = j/100 is ceil(j * n / 100), computed in integers.
    """
    s = np.sort(np.asarray(sample))
    n = s.size
    ranks = -(-TAU_PERCENT * n // 100)
    return s[ranks - 1]


def paths_to_quantiles(paths, min_sims: int = 100) -> list[QuantileVector]:
    """Per-horizon nearest-rank quantiles of simulated sample paths.

    Parameters
    ----------
    paths : array_like, shape (n_sims, H)
        Simulated non-negative integer demand.
    """
    paths = np.asarray(paths)
    if paths.ndim != 2:
        raise ValueError("paths must be a 2-d array (n_sims, H)")
    n_sims = paths.shape[0]
    if n_sims < min_sims:
        raise TooFewSimulations(f"need at least {min_sims} simulations, got {n_sims}")
    if np.any(paths < 0):
        raise ValueError("simulated demand must be non-negative")
    s = np.sort(paths, axis=0)
    ranks = -(-TAU_PERCENT * n_sims // 100)
    q = s[ranks - 1, :]
    return [QuantileVector(q[:, j]) for j in range(paths.shape[1])]


def pmf_from_dist(dist, support_max: int) -> CountPMF:
    """Truncate a frozen scipy discrete distribution at ``support_max``.

    Tail mass above ``support_max`` is lumped onto the last support point.
    """
    k = np.arange(support_max + 1)
    p = dist.pmf(k)
    p[-1] += dist.sf(support_max)
    return CountPMF.from_array(p)


def support_bound(max_train: int, q99s: Sequence[float]) -> int:
    """Truncation point for parametric PMFs: max(3 * max demand, top q99) + 1."""
    top = max([0.0, *q99s])
    return int(max(3 * max_train, np.ceil(top))) + 1
