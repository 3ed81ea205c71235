"""Probabilistic forecast combination for intermittent demand."""

from .combiner import (
    CostSpec,
    WeightProblem,
    weights_brier_opt,
    weights_cl_opt,
    weights_cost_opt,
    weights_drps_opt,
    weights_log_opt,
    weights_logscore,
    weights_sa,
)
from .forecasters import (
    DampedParams,
    DemandSeries,
    empirical_forecast,
    fit_damped,
    forecast_damped,
    wss_forecast,
    zv_forecast,
)
from .ingest import classify_sbc, read_external_quantiles_csv, read_series_csv, split_series
from .inventory import InventoryOutcome, cost_ratio, simulate_inventory, stocks_from_forecast
from .pmf import CountPMF, QuantileVector, cdf, make_pmf, mix, paths_to_quantiles, quantile, quantiles_to_pmf
from .scoring import CLRegion, brier_score, cl_score, drps, log_score, pit_histogram, rpit

__version__ = "0.1.0"
