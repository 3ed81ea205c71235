"""Forecast -> combine -> evaluate orchestration and report writing.

Each series is processed independently with generators seeded from
``(seed, series_id, ...)``, and all outputs are written in series-id order,
so reports are byte-identical for a fixed configuration.
"""

from __future__ import annotations

import csv
import logging
import os
import zlib
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import forecasters as fc
from .combiner import COST_PAIRS, SCHEMES, CostSpec, WeightProblem, estimate_all, mixture_log_score
from .errors import DegenerateSeries, MalformedRow, MissingClass, MissingFile, NonConvergence
from .ingest import (
    SBC_CLASSES,
    classify_sbc,
    read_external_quantiles_csv,
    read_series_csv,
    split_series,
    write_quantiles_csv,
)
from .inventory import aggregate, simulate_inventory, stocks_from_forecast
from .pmf import CountPMF, QuantileVector, mix, quantiles_to_pmf
from .scoring import PIT_BINS, PIT_PER_HORIZON, brier_score, drps, log_score, pit_histogram, rpit

logger = logging.getLogger(__name__)

NATIVE_METHODS = ("POIS", "NB", "WSS", "ZV", "EMP")
ORIGINS = ("weight", "test")
METRICS = ("log", "drps", "brier")
FORECAST_FILES = {o: f"forecasts_{o}.csv" for o in ORIGINS}
WEIGHTS_FILE = "weights.csv"
SKIP_FILE = "skipped.csv"


@dataclass
class RunConfig:
    series: Optional[str] = None
    out: str = "out"
    external: dict = field(default_factory=dict)  # origin -> list of paths
    h: int = 28
    seed: int = 0
    methods: Sequence[str] = NATIVE_METHODS
    schemes: Sequence[str] = SCHEMES
    cost_pairs: Sequence[tuple] = COST_PAIRS
    n_sims: int = 1000
    stratify: bool = True

    def validate(self):
        if self.h < 1:
            raise ValueError("h must be >= 1")
        if self.n_sims < 100:
            raise ValueError("n_sims must be >= 100")
        unknown = set(self.methods) - set(NATIVE_METHODS)
        if unknown:
            raise ValueError(f"unknown methods: {sorted(unknown)}")
        unknown = set(self.schemes) - set(SCHEMES)
        if unknown:
            raise ValueError(f"unknown schemes: {sorted(unknown)}")
        if not self.methods and not any(self.external.values()):
            raise ValueError("enable at least one native method or external forecast file")
        for origin in self.external:
            if origin not in ORIGINS:
                raise ValueError(f"external origin must be one of {ORIGINS}, got {origin!r}")
        for c1, c2 in self.cost_pairs:
            CostSpec(c1, c2)


def series_seed(seed: int, series_id: str, *extra: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed), zlib.crc32(series_id.encode("utf-8")), *extra])


@dataclass
class Prepared:
    series: fc.DemandSeries
    split: object
    sbc: object


def prepare(series_list, h: int, skips: dict) -> dict[str, Prepared]:
    """Split and classify every series; failures go to ``skips``."""
    out = {}
    for s in sorted(series_list, key=lambda s: s.id):
        try:
            split = split_series(s, h)
            sbc = classify_sbc(s)
        except (DegenerateSeries, ValueError) as exc:
            skips[s.id] = f"{type(exc).__name__}: {exc}"
            logger.warning("skipping series %s: %s", s.id, exc)
            continue
        out[s.id] = Prepared(s, split, sbc)
    return out


def native_forecast(series: fc.DemandSeries, method: str, h: int, n_sims: int, seed) -> tuple[list[QuantileVector], bool]:
    """Quantile forecasts for one native method; returns ``(quantiles, used_fallback)``."""
    try:
        if method == "POIS":
            return fc.forecast_damped(fc.fit_damped(series, "poisson"), series, h=h, n_sims=n_sims, seed=seed), False
        if method == "NB":
            return fc.forecast_damped(fc.fit_damped(series, "negbin"), series, h=h, n_sims=n_sims, seed=seed), False
        if method == "WSS":
            return fc.wss_forecast(series, h, n_sims, seed), False
        if method == "ZV":
            return fc.zv_forecast(series, h, n_sims, seed), False
        if method == "EMP":
            return fc.empirical_forecast(series, h), False
    except (DegenerateSeries, NonConvergence) as exc:
        logger.info("series %s, %s: falling back to empirical (%s)", series.id, method, exc)
        return fc.empirical_forecast(series, h), True
    raise ValueError(f"unknown method {method!r}")


def forecast_stage(prepared: dict[str, Prepared], cfg: RunConfig) -> dict[str, dict]:
    """Native forecasts for both origins: ``{origin: {sid: {method: [QV]}}}``."""
    out: dict[str, dict] = {o: {} for o in ORIGINS}
    for sid, p in prepared.items():
        for oi, origin in enumerate(ORIGINS):
            sl = p.split.train_slice if origin == "weight" else p.split.train_weight_slice
            hist = fc.DemandSeries(sid, p.series.values[sl])
            per = {}
            for method in cfg.methods:
                seed = series_seed(cfg.seed, sid, oi, NATIVE_METHODS.index(method))
                per[method], _ = native_forecast(hist, method, cfg.h, cfg.n_sims, seed)
            out[origin][sid] = per
    return out


def write_forecasts(out_dir: str, forecasts: dict[str, dict]) -> None:
    for origin in ORIGINS:
        write_quantiles_csv(os.path.join(out_dir, FORECAST_FILES[origin]), forecasts[origin])


def load_forecasts(out_dir: str, cfg: RunConfig, native: Optional[dict] = None) -> dict[str, dict]:
    """Native forecasts merged with external files.

    Native forecasts are read from ``out_dir`` unless passed in ``native``.
    """
    merged: dict[str, dict] = {}
    for origin in ORIGINS:
        per_origin: dict = defaultdict(dict)
        sources = []
        if native is None:
            sources.append((os.path.join(out_dir, FORECAST_FILES[origin]), None))
        else:
            sources.append(("<native>", native[origin]))
        sources += [(path, None) for path in cfg.external.get(origin, [])]
        for path, table in sources:
            if table is None:
                table = read_external_quantiles_csv(path, cfg.h)
            for sid, methods in table.items():
                for method, qvs in methods.items():
                    if method in per_origin[sid]:
                        raise MalformedRow(0, f"method {method!r} for series {sid!r} given twice ({path})")
                    per_origin[sid][method] = qvs
        merged[origin] = per_origin
    return merged


def method_list(forecasts: dict[str, dict], sid: str) -> Optional[list[str]]:
    """Methods available at both origins for ``sid``, in sorted order."""
    sets = [set(forecasts[o].get(sid, {})) for o in ORIGINS]
    if not sets[0] or sets[0] != sets[1]:
        return None
    return sorted(sets[0])


def to_pmfs(qvs: Sequence[QuantileVector]) -> list[CountPMF]:
    return [quantiles_to_pmf(q) for q in qvs]


def combine_stage(prepared, forecasts, cfg: RunConfig, skips: dict) -> dict[str, dict]:
    """``{sid: {"methods": [...], "weights": {scheme: w}}}``."""
    out = {}
    for sid, p in prepared.items():
        methods = method_list(forecasts, sid)
        if methods is None:
            skips[sid] = "incomplete forecasts: method sets differ between origins or are empty"
            continue
        try:
            pmfs = [to_pmfs(forecasts["weight"][sid][m]) for m in methods]
            actuals = p.series.values[p.split.weight_slice]
            problem = WeightProblem(pmfs, actuals, methods)
            weights = estimate_all(problem, cfg.schemes, cfg.cost_pairs, seed=series_seed(cfg.seed, sid, 7))
        except Exception as exc:  # per-series failures never abort the run
            logger.warning("combination failed for %s: %s", sid, exc)
            skips[sid] = f"{type(exc).__name__}: {exc}"
            continue
        out[sid] = {"methods": methods, "weights": weights}
    return out


def _fmt(x: float) -> str:
    return format(float(x), ".15g")


def write_weights(path: str, combos: dict[str, dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["series_id", "scheme", "method", "weight"])
        for sid in sorted(combos):
            methods = combos[sid]["methods"]
            for scheme, wv in combos[sid]["weights"].items():
                for m, x in zip(methods, wv):
                    w.writerow([sid, scheme, m, repr(float(x))])


def read_weights(path: str) -> dict[str, dict]:
    out: dict = {}
    if not os.path.isfile(path):
        raise MissingFile(f"no such file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["series_id", "scheme", "method", "weight"]:
            raise MalformedRow(1, "expected header series_id,scheme,method,weight")
        for line, row in enumerate(reader, start=2):
            if len(row) != 4:
                raise MalformedRow(line, "expected 4 fields")
            sid, scheme, method, x = row
            entry = out.setdefault(sid, {"methods": [], "weights": {}})
            entry["weights"].setdefault(scheme, []).append((method, float(x)))
    for sid, entry in out.items():
        schemes = entry["weights"]
        first = next(iter(schemes.values()))
        entry["methods"] = [m for m, _ in first]
        entry["weights"] = {s: np.array([x for _, x in pairs]) for s, pairs in schemes.items()}
    return out


def evaluate_series(p: Prepared, test_pmfs: dict[str, list[CountPMF]], weight_pmfs, combo, cfg: RunConfig):
    """Scores, PIT samples and inventory outcomes for all individuals and pools of one series."""
    sid = p.series.id
    methods = combo["methods"]
    actuals = p.series.values[p.split.test_slice]
    weight_actuals = p.series.values[p.split.weight_slice]
    candidates: dict[str, tuple[str, list[CountPMF]]] = {}
    for m in methods:
        candidates[m] = ("individual", test_pmfs[m])
    for scheme, w in combo["weights"].items():
        pooled = [mix([test_pmfs[m][t] for m in methods], w) for t in range(cfg.h)]
        candidates[scheme] = ("combination", pooled)

    scores, pits, inv = {}, {}, {}
    for ci, (name, (_, pmfs)) in enumerate(candidates.items()):
        ys = [int(y) for y in actuals]
        scores[name] = {
            "log": float(np.mean([log_score(f, y) for f, y in zip(pmfs, ys)])),
            "drps": float(np.mean([drps(f, y) for f, y in zip(pmfs, ys)])),
            "brier": float(np.mean([brier_score(f, y) for f, y in zip(pmfs, ys)])),
        }
        rng = np.random.default_rng(series_seed(cfg.seed, sid, 11, zlib.crc32(name.encode())))
        pits[name] = np.concatenate([rpit(f, y, rng, size=PIT_PER_HORIZON) for f, y in zip(pmfs, ys)])

    # weight-window in-sample log score of every pool
    problem = WeightProblem([weight_pmfs[m] for m in methods], weight_actuals, methods)
    in_sample = {s: -mixture_log_score(problem, w) for s, w in combo["weights"].items()}

    for c1, c2 in cfg.cost_pairs:
        cost = CostSpec(c1, c2)
        per = {}
        for name, (kind, pmfs) in candidates.items():
            if name.startswith("cost") and name.endswith("-opt"):
                continue
            per[name] = simulate_inventory(stocks_from_forecast(pmfs, cost.tau), actuals, cost)
        if cost.label in candidates:
            stocks = stocks_from_forecast(candidates[cost.label][1], cost.tau)
            per["cost-opt"] = simulate_inventory(stocks, actuals, cost)
        inv[(c1, c2)] = per
    kinds = {name: kind for name, (kind, _) in candidates.items()}
    return scores, pits, inv, in_sample, kinds


def report_stratified(scores: dict[str, dict], classes: dict[str, str]) -> dict[str, dict]:
    """Per-class mean scores: ``{class: {name: {metric: mean, "n_series": n}}}``."""
    grouped: dict = defaultdict(lambda: defaultdict(lambda: defaultdict(list)))
    for sid in sorted(scores):
        if sid not in classes:
            raise MissingClass(f"series {sid!r} has no SBC class")
        for name, metrics in scores[sid].items():
            for metric, v in metrics.items():
                grouped[classes[sid]][name][metric].append(v)
    out = {}
    for cls in SBC_CLASSES:
        if cls not in grouped:
            continue
        out[cls] = {
            name: {**{m: float(np.mean(v)) for m, v in metrics.items()}, "n_series": len(next(iter(metrics.values())))}
            for name, metrics in grouped[cls].items()
        }
    return out


def _pool_all(scores):
    acc: dict = defaultdict(lambda: defaultdict(list))
    for sid in sorted(scores):
        for name, metrics in scores[sid].items():
            for metric, v in metrics.items():
                acc[name][metric].append(v)
    return {
        name: {**{m: float(np.mean(v)) for m, v in metrics.items()}, "n_series": len(next(iter(metrics.values())))}
        for name, metrics in acc.items()
    }


def _write_score_table(path, table, kinds, metrics=METRICS):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["name", "type", "n_series", *metrics])
        for name, row in table.items():
            w.writerow([name, kinds.get(name, ""), row["n_series"], *[_fmt(row[m]) for m in metrics]])


def evaluate_stage(prepared, forecasts, combos, cfg: RunConfig, skips: dict, out_dir: str) -> dict:
    """Score every series and write the report bundle; returns the summary numbers."""
    all_scores, in_sample_scores, classes = {}, {}, {}
    pit_pool: dict = defaultdict(list)
    inv_pool: dict = defaultdict(lambda: defaultdict(list))
    kinds_all: dict = {}
    order: list[str] = []
    for sid, p in prepared.items():
        if sid not in combos:
            continue
        combo = combos[sid]
        try:
            test_pmfs = {m: to_pmfs(forecasts["test"][sid][m]) for m in combo["methods"]}
            weight_pmfs = {m: to_pmfs(forecasts["weight"][sid][m]) for m in combo["methods"]}
            scores, pits, inv, in_sample, kinds = evaluate_series(p, test_pmfs, weight_pmfs, combo, cfg)
        except Exception as exc:  # per-series failures never abort the run
            logger.warning("evaluation failed for %s: %s", sid, exc)
            skips[sid] = f"{type(exc).__name__}: {exc}"
            continue
        all_scores[sid] = scores
        in_sample_scores[sid] = {s: {"log": v} for s, v in in_sample.items()}
        classes[sid] = p.sbc.label
        for name in scores:
            if name not in order:
                order.append(name)
        kinds_all.update(kinds)
        for name, u in pits.items():
            pit_pool[name].append(u)
        for pair, per in inv.items():
            for name, outcome in per.items():
                inv_pool[pair][name].append(outcome)
    kinds_all["cost-opt"] = "combination"

    overall = _pool_all(all_scores)
    overall = {name: overall[name] for name in order if name in overall}
    _write_score_table(os.path.join(out_dir, "scores_overall.csv"), overall, kinds_all)
    if cfg.stratify:
        strat = report_stratified(all_scores, classes)
        for cls, table in strat.items():
            table = {name: table[name] for name in order if name in table}
            _write_score_table(os.path.join(out_dir, f"scores_{cls}.csv"), table, kinds_all)
    in_sample = _pool_all(in_sample_scores)
    in_sample = {name: in_sample[name] for name in order if name in in_sample}
    _write_score_table(os.path.join(out_dir, "scores_weight_window.csv"), in_sample, kinds_all, ("log",))

    pit_dir = os.path.join(out_dir, "pit")
    os.makedirs(pit_dir, exist_ok=True)
    edges = np.linspace(0.0, 1.0, PIT_BINS + 1)
    for name in order:
        if name not in pit_pool:
            continue
        dens = pit_histogram(np.concatenate(pit_pool[name]))
        with open(os.path.join(pit_dir, f"pit_{name}.csv"), "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["bin_lo", "bin_hi", "density"])
            for lo, hi, d in zip(edges[:-1], edges[1:], dens):
                w.writerow([_fmt(lo), _fmt(hi), _fmt(d)])

    inv_names = [n for n in order if not (n.startswith("cost") and n.endswith("-opt"))]
    if any("cost-opt" in per for per in inv_pool.values()):
        inv_names.append("cost-opt")
    tradeoff_rows = []
    cost_table: dict = defaultdict(dict)
    for c1, c2 in cfg.cost_pairs:
        cost = CostSpec(c1, c2)
        for name in inv_names:
            outcomes = inv_pool[(c1, c2)].get(name)
            if not outcomes:
                continue
            agg = aggregate(outcomes, cost)
            cost_table[name][(c1, c2)] = agg.cost_ratio
            tradeoff_rows.append([name, _fmt(c1), _fmt(c2), _fmt(cost.tau), _fmt(agg.cost_ratio),
                                  _fmt(agg.achieved_csl), _fmt(agg.csl_deviation), _fmt(agg.investment),
                                  _fmt(agg.backorders_per_sku)])
    with open(os.path.join(out_dir, "tradeoff.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scheme", "c1", "c2", "target_csl", "cost_ratio", "achieved_csl", "csl_deviation",
                    "investment", "backorders_per_sku"])
        w.writerows(tradeoff_rows)
    with open(os.path.join(out_dir, "costs.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["name", "type", *[f"cost({c1:g},{c2:g})" for c1, c2 in cfg.cost_pairs]])
        for name in inv_names:
            if name in cost_table:
                w.writerow([name, kinds_all.get(name, ""),
                            *[_fmt(cost_table[name].get(pair, float("nan"))) for pair in cfg.cost_pairs]])

    write_skips(os.path.join(out_dir, SKIP_FILE), skips)
    summary = {
        "n_scored": len(all_scores),
        "n_skipped": len(skips),
        "overall": overall,
        "weight_window": in_sample,
        "classes": {c: sum(1 for v in classes.values() if v == c) for c in SBC_CLASSES},
        "costs": dict(cost_table),
    }
    write_summary(os.path.join(out_dir, "summary.txt"), summary, cfg)
    return summary


def write_skips(path, skips: dict) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for sid in sorted(skips):
            w.writerow([sid, skips[sid]])


def write_summary(path, summary: dict, cfg: RunConfig) -> None:
    lines = [
        f"series scored: {summary['n_scored']}  skipped: {summary['n_skipped']}",
        "SBC classes: " + ", ".join(f"{c}={n}" for c, n in summary["classes"].items()),
        "",
        f"{'name':<14}{'log':>10}{'drps':>10}{'brier':>10}",
    ]
    for name, row in summary["overall"].items():
        lines.append(f"{name:<14}{row['log']:>10.4f}{row['drps']:>10.4f}{row['brier']:>10.4f}")
    lines += ["", "cost ratio by (c1,c2):"]
    header = "".join(f"{f'({c1:g},{c2:g})':>12}" for c1, c2 in cfg.cost_pairs)
    lines.append(f"{'name':<14}{header}")
    for name, per in summary["costs"].items():
        vals = "".join(f"{per.get(pair, float('nan')):>12.4f}" for pair in cfg.cost_pairs)
        lines.append(f"{name:<14}{vals}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_series(cfg: RunConfig):
    if not cfg.series:
        raise ValueError("no series file configured")
    return read_series_csv(cfg.series)


def run_forecast(cfg: RunConfig, skips: Optional[dict] = None):
    skips = {} if skips is None else skips
    prepared = prepare(load_series(cfg), cfg.h, skips)
    os.makedirs(cfg.out, exist_ok=True)
    native = forecast_stage(prepared, cfg)
    write_forecasts(cfg.out, native)
    return prepared, native


def run_combine(cfg: RunConfig, skips: Optional[dict] = None, prepared=None, forecasts=None):
    skips = {} if skips is None else skips
    if prepared is None:
        prepared = prepare(load_series(cfg), cfg.h, skips)
    if forecasts is None:
        forecasts = load_forecasts(cfg.out, cfg)
    combos = combine_stage(prepared, forecasts, cfg, skips)
    write_weights(os.path.join(cfg.out, WEIGHTS_FILE), combos)
    return combos


def run_evaluate(cfg: RunConfig, skips: Optional[dict] = None, prepared=None, forecasts=None, combos=None):
    skips = {} if skips is None else skips
    if prepared is None:
        prepared = prepare(load_series(cfg), cfg.h, skips)
    if forecasts is None:
        forecasts = load_forecasts(cfg.out, cfg)
    if combos is None:
        combos = read_weights(os.path.join(cfg.out, WEIGHTS_FILE))
    for sid in prepared:
        if sid not in combos and sid not in skips:
            skips[sid] = "no weights"
    return evaluate_stage(prepared, forecasts, combos, cfg, skips, cfg.out)


def run_pipeline(cfg: RunConfig) -> dict:
    """All stages. Intermediate files are written but not re-read."""
    cfg.validate()
    skips: dict = {}
    prepared, native = run_forecast(cfg, skips)
    forecasts = load_forecasts(cfg.out, cfg, native=native)
    combos = run_combine(cfg, skips, prepared, forecasts)
    return run_evaluate(cfg, skips, prepared, forecasts, combos)
