"""Linear-pool weight estimation.

Every scheme takes a :class:`WeightProblem` (individual PMF forecasts over the
weight-estimation window plus the realised demand) and returns a weight
vector on the simplex, held constant over time and horizons.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from .errors import LengthMismatch, ZeroMethods
from .pmf import CDF_TOL, CountPMF, cdf, mix
from .pso import PSOConfig, pso_simplex
from .scoring import EPS, CLRegion, censored_mass

logger = logging.getLogger(__name__)

SCORE_EPS = 1e-8
WEIGHT_TOL = 1e-9
COST_PAIRS = ((1.0, 4.0), (1.0, 9.0), (1.0, 19.0), (1.0, 99.0))
SCHEMES = ("SA", "log-score", "log-opt", "cl-opt", "brier-opt", "drps-opt", "cost-opt")


@dataclass(frozen=True)
class CostSpec:
    c1: float
    c2: float

    def __post_init__(self):
        if not (self.c1 > 0 and self.c2 > 0):
            raise ValueError("holding and backorder costs must be positive")

    @property
    def tau(self) -> float:
        return self.c2 / (self.c1 + self.c2)

    @property
    def label(self) -> str:
        return f"cost{self.c2:g}-opt"


@dataclass(eq=False)
class WeightProblem:
    """Forecasts ``pmfs[i][t]`` of method ``i`` for window time ``t``, and actuals."""

    pmfs: Sequence[Sequence[CountPMF]]
    actuals: np.ndarray
    methods: Optional[Sequence[str]] = None

    def __post_init__(self):
        self.actuals = np.asarray(self.actuals, dtype=np.int64)
        if len(self.pmfs) == 0:
            raise ZeroMethods("weight problem without methods")
        h = self.actuals.size
        for row in self.pmfs:
            if len(row) != h:
                raise LengthMismatch(f"{len(row)} forecasts for a window of {h} actuals")
        if self.methods is None:
            self.methods = [f"m{i}" for i in range(len(self.pmfs))]
        elif len(self.methods) != len(self.pmfs):
            raise LengthMismatch("method names do not match forecasts")

    @property
    def n(self) -> int:
        return len(self.pmfs)

    @property
    def h(self) -> int:
        return int(self.actuals.size)

    @cached_property
    def support(self) -> int:
        """Common vector length covering every support and every actual."""
        kmax = max(p.support_max for row in self.pmfs for p in row)
        return int(max(kmax, self.actuals.max(initial=0))) + 1

    @cached_property
    def realized(self) -> np.ndarray:
        """``(h, N)`` probabilities each method gives the realised value."""
        return np.array([[row[t].pmf(int(y)) for row in self.pmfs] for t, y in enumerate(self.actuals)])

    @cached_property
    def probs(self) -> np.ndarray:
        """``(h, N, K)`` zero-padded PMFs."""
        K = self.support
        return np.array([[row[t].padded(K) for row in self.pmfs] for t in range(self.h)])

    @cached_property
    def cdfs(self) -> np.ndarray:
        """``(h, N, K)`` CDFs padded with ones."""
        K = self.support
        out = np.ones((self.h, self.n, K))
        for t in range(self.h):
            for i, row in enumerate(self.pmfs):
                c = cdf(row[t]).cum
                out[t, i, : c.size] = c
        return out

    def is_degenerate(self) -> bool:
        """All actuals zero and every forecast a point mass at zero."""
        return bool(np.all(self.actuals == 0) and np.all(self.probs[:, :, 0] == 1.0))


def weights_sa(n: int) -> np.ndarray:
    if n < 1:
        raise ZeroMethods("need at least one method")
    return np.full(n, 1.0 / n)


def check_weights(w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise ValueError("weights must be a non-empty vector")
    if np.any(w < 0) or abs(w.sum() - 1.0) > WEIGHT_TOL:
        raise ValueError(f"invalid weight vector {w}")
    return w


def mixture_log_score(problem: WeightProblem, w) -> float:
    """Window-average log probability of the pool at the realised values."""
    return float(np.mean(np.log(np.maximum(problem.realized, EPS) @ np.asarray(w))))


def weights_logscore(problem: WeightProblem) -> np.ndarray:
    """Weights inversely proportional to each method's mean negated log score."""
    if problem.is_degenerate():
        return weights_sa(problem.n)
    scores = -np.log(np.maximum(problem.realized, EPS)).mean(axis=0)
    inv = 1.0 / (scores + SCORE_EPS)
    return inv / inv.sum()


def _multiplicative_em(F: np.ndarray, tol: float, max_iter: int):
    """Fixed-point iteration maximising mean(log(F @ w)) over the simplex."""
    h, n = F.shape
    w = np.full(n, 1.0 / n)
    history = [float(np.mean(np.log(F @ w)))]
    converged = False
    k = 0
    for k in range(1, max_iter + 1):
        ratio = F / (F @ w)[:, None]
        w_new = w * ratio.mean(axis=0)
        w_new /= w_new.sum()
        step = float(np.linalg.norm(w_new - w))
        w = w_new
        history.append(float(np.mean(np.log(F @ w))))
        if step < tol:
            converged = True
            break
    return w, {"converged": converged, "n_iter": k, "history": history}


def weights_log_opt(problem: WeightProblem, tol: float = 0.001, max_iter: int = 1000, full_output: bool = False):
    """Maximise the window-average log score of the pool.

    With ``full_output=True`` returns ``(w, info)`` where ``info`` holds
    ``converged``, ``n_iter`` and the objective ``history``.
    """
    if problem.is_degenerate():
        w, info = weights_sa(problem.n), {"converged": True, "n_iter": 0, "history": []}
    else:
        w, info = _multiplicative_em(np.maximum(problem.realized, EPS), tol, max_iter)
    if not info["converged"]:
        logger.warning("log-opt stopped at max_iter=%d without converging", max_iter)
    return (w, info) if full_output else w


def censored_matrix(problem: WeightProblem, region: CLRegion) -> np.ndarray:
    if len(region) != problem.h:
        raise LengthMismatch("region thresholds do not cover the window")
    return np.array(
        [
            [censored_mass(row[t], int(y), int(region.thresholds[t])) for row in problem.pmfs]
            for t, y in enumerate(problem.actuals)
        ]
    )


def weights_cl_opt(
    problem: WeightProblem,
    region: Optional[CLRegion] = None,
    tol: float = 0.001,
    max_iter: int = 1000,
    full_output: bool = False,
):
    """Maximise the censored likelihood score; region defaults to the pooled 0.9 quantile."""
    if region is None:
        region = CLRegion.from_pool(problem.pmfs)
    if problem.is_degenerate():
        w, info = weights_sa(problem.n), {"converged": True, "n_iter": 0, "history": []}
    else:
        w, info = _multiplicative_em(np.maximum(censored_matrix(problem, region), EPS), tol, max_iter)
    if not info["converged"]:
        logger.warning("cl-opt stopped at max_iter=%d without converging", max_iter)
    return (w, info) if full_output else w


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto {w >= 0, sum w = 1}."""
    n = v.size
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    rho = np.nonzero(u - css / np.arange(1, n + 1) > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def _quadratic_terms(problem: WeightProblem, kind: str):
    """``Q, c, const`` with objective ``w'Qw - 2c'w + const``."""
    h = problem.h
    if kind == "brier":
        A = problem.probs
        Q = np.einsum("tik,tjk->ij", A, A) / h
        c = problem.realized.mean(axis=0)
        return Q, c, 0.0
    A = problem.cdfs
    step = (np.arange(problem.support)[None, :] >= problem.actuals[:, None]).astype(float)
    Q = np.einsum("tik,tjk->ij", A, A) / h
    c = np.einsum("tik,tk->i", A, step) / h
    const = float(step.sum() / h)
    return Q, c, const


EXACT_QP_MAX_N = 12


def _kkt_on_support(Q, c, support):
    """Stationary point of the QP restricted to ``support`` with sum(w) = 1, or None."""
    S = np.asarray(support)
    k = S.size
    A = np.zeros((k + 1, k + 1))
    A[:k, :k] = 2.0 * Q[np.ix_(S, S)]
    A[:k, k] = -1.0
    A[k, :k] = 1.0
    rhs = np.append(2.0 * c[S], 1.0)
    sol, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    if np.max(np.abs(A @ sol - rhs)) > 1e-9 * max(1.0, np.abs(rhs).max()):
        return None
    ws = sol[:k]
    if ws.min() < -1e-12:
        return None
    w = np.zeros(c.size)
    w[S] = np.maximum(ws, 0.0)
    return w / w.sum()


def _exact_simplex_qp(Q, c, obj):
    """Enumerate supports; keep KKT points; tie-break toward equal weights."""
    n = c.size
    sa = np.full(n, 1.0 / n)
    scale = max(1.0, float(np.abs(Q).max()), float(np.abs(c).max()))
    best = None
    for mask in range(1, 2**n):
        support = [i for i in range(n) if mask >> i & 1]
        w = _kkt_on_support(Q, c, support)
        if w is None:
            continue
        g = 2.0 * (Q @ w) - 2.0 * c
        nu = g[support].min()
        if g.min() < nu - 1e-9 * scale:
            continue
        f = obj(w)
        key = (f, float(np.sum((w - sa) ** 2)))
        if best is None or key[0] < best[0][0] - 1e-12 or (abs(key[0] - best[0][0]) <= 1e-12 and key[1] < best[0][1]):
            best = (key, w)
    return None if best is None else best[1]


def _accelerated_pg(Q, c, obj, tol, max_iter):
    """Monotone accelerated projected gradient from equal weights.

    Stops once the Frank-Wolfe gap, which bounds the distance to the optimal
    objective, drops below ``tol``.
    """
    n = c.size
    w = np.full(n, 1.0 / n)
    f = obj(w)
    L = 2.0 * float(np.linalg.eigvalsh(Q)[-1])
    if L <= 0:
        return w
    z, t = w.copy(), 1.0
    for _ in range(max_iter):
        grad = 2.0 * (Q @ w) - 2.0 * c
        if grad @ w - grad.min() < tol:
            break
        u = project_simplex(z - (2.0 * (Q @ z) - 2.0 * c) / L)
        fu = obj(u)
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        if fu <= f:
            z = u + ((t - 1.0) / t_next) * (u - w)
            w, f = u, fu
        else:
            # rejected step: restart momentum from the current iterate
            z, t_next = w.copy(), 1.0
        t = t_next
    return w


def _minimize_quadratic(Q, c, const, tol=1e-10, max_iter=10_000):
    """Minimise ``w'Qw - 2c'w + const`` over the simplex.

    Small pools are solved exactly by support enumeration; larger ones by
    accelerated projected gradient. The result never scores worse than equal
    weights, which are also returned when the objective is flat.
    """
    n = c.size

    def obj(w):
        return float(w @ Q @ w - 2.0 * c @ w + const)

    sa = np.full(n, 1.0 / n)
    w = _exact_simplex_qp(Q, c, obj) if n <= EXACT_QP_MAX_N else None
    if w is None:
        w = _accelerated_pg(Q, c, obj, tol, max_iter)
    if obj(w) >= obj(sa) - 1e-15:
        w = sa
    return w, obj(w)


def quadratic_objective(problem: WeightProblem, w, kind: str) -> float:
    Q, c, const = _quadratic_terms(problem, kind)
    w = np.asarray(w, dtype=float)
    return float(w @ Q @ w - 2.0 * c @ w + const)


def weights_brier_opt(problem: WeightProblem) -> np.ndarray:
    """Minimise the window-average Brier score of the pool."""
    if problem.is_degenerate():
        return weights_sa(problem.n)
    return _minimize_quadratic(*_quadratic_terms(problem, "brier"))[0]


def weights_drps_opt(problem: WeightProblem) -> np.ndarray:
    """Minimise the window-average DRPS of the pool."""
    if problem.is_degenerate():
        return weights_sa(problem.n)
    return _minimize_quadratic(*_quadratic_terms(problem, "drps"))[0]


def pool_stocks(problem: WeightProblem, W, tau: float) -> np.ndarray:
    """Stock levels (tau-quantiles of the pool) for each row of ``W``: shape (P, h)."""
    W = np.atleast_2d(np.asarray(W, dtype=float))
    C = problem.cdfs
    h, n, K = C.shape
    M = (W @ C.transpose(1, 0, 2).reshape(n, h * K)).reshape(-1, h, K)
    return np.argmax(M >= tau - CDF_TOL, axis=-1)


def window_cost(problem: WeightProblem, W, cost: CostSpec) -> np.ndarray:
    """Window-average holding plus backorder cost for each row of ``W``."""
    stock = pool_stocks(problem, W, cost.tau)
    diff = stock - problem.actuals[None, :]
    return cost.c1 * np.maximum(diff, 0).mean(axis=1) + cost.c2 * np.maximum(-diff, 0).mean(axis=1)


def weights_cost_opt(
    problem: WeightProblem,
    cost: CostSpec,
    config: Optional[PSOConfig] = None,
    seed=None,
) -> np.ndarray:
    """Minimise the newsvendor cost of the pool quantile by particle swarm."""
    if problem.is_degenerate() or problem.n == 1:
        return weights_sa(problem.n)
    w, _ = pso_simplex(lambda W: window_cost(problem, W, cost), problem.n, config, seed)
    return w


def estimate_all(
    problem: WeightProblem,
    schemes: Sequence[str] = SCHEMES,
    cost_pairs: Sequence[tuple[float, float]] = COST_PAIRS,
    seed=None,
    pso_config: Optional[PSOConfig] = None,
) -> dict[str, np.ndarray]:
    """Weights for every requested scheme; ``cost-opt`` expands to one entry per cost pair."""
    out: dict[str, np.ndarray] = {}
    for scheme in schemes:
        if scheme == "SA":
            out[scheme] = weights_sa(problem.n)
        elif scheme == "log-score":
            out[scheme] = weights_logscore(problem)
        elif scheme == "log-opt":
            out[scheme] = weights_log_opt(problem)
        elif scheme == "cl-opt":
            out[scheme] = weights_cl_opt(problem)
        elif scheme == "brier-opt":
            out[scheme] = weights_brier_opt(problem)
        elif scheme == "drps-opt":
            out[scheme] = weights_drps_opt(problem)
        elif scheme == "cost-opt":
            rng = np.random.default_rng(seed)
            for c1, c2 in cost_pairs:
                cs = CostSpec(c1, c2)
                out[cs.label] = weights_cost_opt(problem, cs, pso_config, rng.integers(2**63))
        else:
            raise ValueError(f"unknown scheme {scheme!r}")
    return out


def combine(pmfs: Sequence[CountPMF], w) -> CountPMF:
    return mix(pmfs, check_weights(w))
