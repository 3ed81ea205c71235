"""Particle swarm search over the probability simplex."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from math import comb
from typing import Callable, Optional

import numpy as np


@dataclass(frozen=True)
class PSOConfig:
    n_particles: int = 50
    inertia: float = 0.72
    cognitive: float = 1.49
    social: float = 1.49
    n_iter: int = 200
    v_max: float = 0.5
    # lattice points scanned before the swarm starts (0 turns the scan off)
    lattice_budget: int = 5151
    n_lattice_seeds: int = 10


def repair(X: np.ndarray) -> np.ndarray:
    """Clamp negatives to zero and renormalise rows; all-zero rows become uniform."""
    X = np.maximum(X, 0.0)
    s = X.sum(axis=1, keepdims=True)
    n = X.shape[1]
    return np.where(s > 0, X / np.where(s > 0, s, 1.0), 1.0 / n)


def lattice_resolution(n: int, budget: int) -> int:
    """Denominator m of the finest lattice {k/m} on the n-simplex within ``budget`` points.

    Rounded down to a multiple of 100 when possible, so the 0.01 lattice is a subset.
    """
    if n == 1:
        return 1
    m = 0
    while comb(m + 1 + n - 1, n - 1) <= budget:
        m += 1
    return m - m % 100 if m >= 100 else m


def simplex_lattice(n: int, m: int) -> np.ndarray:
    """All points of the simplex with coordinates in {0, 1/m, ..., 1}, stars and bars."""
    if m < 1:
        return np.full((1, n), 1.0 / n)
    rows = []
    for bars in combinations(range(m + n - 1), n - 1):
        edges = (-1,) + bars + (m + n - 1,)
        rows.append([edges[i + 1] - edges[i] - 1 for i in range(n)])
    return np.asarray(rows, dtype=float) / m


def _best_lattice_points(objective, n: int, cfg: "PSOConfig", chunk: int = 1024) -> np.ndarray:
    m = lattice_resolution(n, cfg.lattice_budget)
    if m < 1:
        return np.empty((0, n))
    L = simplex_lattice(n, m)
    f = np.concatenate([np.asarray(objective(L[i : i + chunk]), dtype=float) for i in range(0, len(L), chunk)])
    order = np.argsort(f, kind="stable")[: cfg.n_lattice_seeds]
    return L[order]


def initial_swarm(n: int, n_particles: int, rng: np.random.Generator, extra=None) -> np.ndarray:
    """Equal weights first, then every vertex, then ``extra`` points, then uniform simplex draws."""
    seeded = [np.full((1, n), 1.0 / n), np.eye(n)]
    if extra is not None and len(extra):
        seeded.append(np.asarray(extra, dtype=float))
    seeded = np.vstack(seeded)
    n_random = max(n_particles - seeded.shape[0], 0)
    return np.vstack([seeded, rng.dirichlet(np.ones(n), size=n_random)])


def pso_simplex(
    objective: Callable[[np.ndarray], np.ndarray],
    n: int,
    config: Optional[PSOConfig] = None,
    seed=None,
) -> tuple[np.ndarray, float]:
    """Minimise ``objective`` over the simplex in R^n.

    ``objective`` maps an ``(n_particles, n)`` array of weight vectors to an
    array of ``n_particles`` values. The global best is replaced only on
    strict improvement, so ties resolve to the earliest seeded point
    (equal weights).

    Piecewise-constant objectives leave plain swarms stuck on plateaus, so
    the best few points of a simplex lattice (sized by
    ``config.lattice_budget``) join the initial swarm.
    """
    cfg = config or PSOConfig()
    rng = np.random.default_rng(seed)
    extra = _best_lattice_points(objective, n, cfg) if cfg.lattice_budget > 0 else None
    X = initial_swarm(n, cfg.n_particles, rng, extra)
    V = np.zeros_like(X)
    f = np.asarray(objective(X), dtype=float)
    pbest, pf = X.copy(), f.copy()
    g = int(np.argmin(pf))
    gbest, gf = pbest[g].copy(), float(pf[g])
    for _ in range(cfg.n_iter):
        r1 = rng.random(X.shape)
        r2 = rng.random(X.shape)
        V = cfg.inertia * V + cfg.cognitive * r1 * (pbest - X) + cfg.social * r2 * (gbest - X)
        np.clip(V, -cfg.v_max, cfg.v_max, out=V)
        X = repair(X + V)
        f = np.asarray(objective(X), dtype=float)
        better = f < pf
        pbest[better] = X[better]
        pf[better] = f[better]
        g = int(np.argmin(pf))
        if pf[g] < gf:
            gbest, gf = pbest[g].copy(), float(pf[g])
    return gbest, gf
