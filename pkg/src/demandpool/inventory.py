"""Per-period newsvendor simulation of quantile-based stock levels."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .combiner import CostSpec
from .errors import LengthMismatch, NegativeInput, ZeroSales
from .pmf import CountPMF, quantile


@dataclass(frozen=True)
class InventoryOutcome:
    total_cost: float
    holding_total: float
    backorder_total: float
    cost_ratio: float
    achieved_csl: float
    csl_deviation: float
    investment: float
    backorders_per_sku: float
    n_periods: int = 0
    n_skus: int = 1
    sales: float = 0.0


def stocks_from_forecast(pmfs: Sequence[CountPMF], tau: float) -> np.ndarray:
    return np.array([quantile(p, tau) for p in pmfs], dtype=np.int64)


def simulate_inventory(stocks, actuals, cost: CostSpec) -> InventoryOutcome:
    """Cost and service metrics for one SKU; no stock carries between periods."""
    stocks = np.asarray(stocks)
    actuals = np.asarray(actuals)
    if stocks.shape != actuals.shape or stocks.ndim != 1 or stocks.size == 0:
        raise LengthMismatch("stocks and actuals must be equal-length non-empty vectors")
    if np.any(stocks < 0) or np.any(actuals < 0):
        raise NegativeInput("stocks and actuals must be non-negative")
    holding = np.maximum(stocks - actuals, 0)
    backorder = np.maximum(actuals - stocks, 0)
    total = cost.c1 * holding.mean() + cost.c2 * backorder.mean()
    sales = float(actuals.sum())
    if sales > 0:
        ratio = total / sales
    else:
        ratio = 0.0 if total == 0 else float("inf")
    csl = float(np.mean(stocks >= actuals))
    return InventoryOutcome(
        total_cost=float(total),
        holding_total=float(holding.sum()),
        backorder_total=float(backorder.sum()),
        cost_ratio=float(ratio),
        achieved_csl=csl,
        csl_deviation=csl - cost.tau,
        investment=float(stocks.mean()),
        backorders_per_sku=float(backorder.sum()),
        n_periods=int(stocks.size),
        n_skus=1,
        sales=sales,
    )


def cost_ratio(outcomes: Sequence[InventoryOutcome], actuals: Sequence) -> float:
    """Total simulated cost over total sales across SKUs."""
    sales = float(sum(np.sum(a) for a in actuals))
    if sales <= 0:
        raise ZeroSales("no sales in the evaluation window")
    return float(sum(o.total_cost for o in outcomes)) / sales


def aggregate(outcomes: Sequence[InventoryOutcome], cost: CostSpec) -> InventoryOutcome:
    """Pool per-SKU outcomes; service level and investment average over all SKU-periods."""
    if not outcomes:
        raise ValueError("nothing to aggregate")
    periods = sum(o.n_periods for o in outcomes)
    n_skus = sum(o.n_skus for o in outcomes)
    total = sum(o.total_cost for o in outcomes)
    sales = sum(o.sales for o in outcomes)
    backorders = sum(o.backorder_total for o in outcomes)
    csl = sum(o.achieved_csl * o.n_periods for o in outcomes) / periods
    if sales > 0:
        ratio = total / sales
    else:
        ratio = 0.0 if total == 0 else float("inf")
    return InventoryOutcome(
        total_cost=float(total),
        holding_total=float(sum(o.holding_total for o in outcomes)),
        backorder_total=float(backorders),
        cost_ratio=float(ratio),
        achieved_csl=float(csl),
        csl_deviation=float(csl - cost.tau),
        investment=float(sum(o.investment * o.n_periods for o in outcomes) / periods),
        backorders_per_sku=float(backorders / n_skus),
        n_periods=periods,
        n_skus=n_skus,
        sales=float(sales),
    )
