"""Command-line interface.

Subcommands: ``synth``, ``forecast``, ``combine``, ``evaluate`` and ``run``.
Settings come from an optional flat ``key = value`` config file, overridden
by command-line flags.

Exit codes: 0 success, 1 usage error, 2 ingest error, 3 internal error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from . import pipeline
from .errors import IngestError
from .ingest import write_quantiles_csv, write_series_csv
from .synth import external_benchmarks, gen_synthetic

logger = logging.getLogger("demandpool")

EXIT_OK, EXIT_USAGE, EXIT_INGEST, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


def read_config_file(path: str) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    if not os.path.isfile(path):
        raise UsageError(f"config file not found: {path}")
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key = value")
            key, value = (part.strip() for part in line.split("=", 1))
            out[key.replace("-", "_")] = value
    return out


def _split_list(value: str) -> list[str]:
    return [v.strip() for v in value.split(",") if v.strip()]


def _parse_cost_pairs(value: str) -> list[tuple[float, float]]:
    pairs = []
    for item in _split_list(value):
        try:
            c1, c2 = item.split(":")
            pairs.append((float(c1), float(c2)))
        except ValueError:
            raise UsageError(f"cost pair {item!r} is not of the form c1:c2") from None
    return pairs


def _parse_external(items: list[str]) -> dict[str, list[str]]:
    out: dict[str, list[str]] = {}
    for item in items:
        origin, sep, path = item.partition("=")
        if not sep or origin not in pipeline.ORIGINS:
            raise UsageError(f"--external expects weight=PATH or test=PATH, got {item!r}")
        out.setdefault(origin, []).append(path)
    return out


def build_config(args) -> pipeline.RunConfig:
    raw = read_config_file(args.config) if getattr(args, "config", None) else {}
    for key in ("series", "out", "seed", "h", "nsims", "methods", "schemes", "cost_pairs", "stratify"):
        v = getattr(args, key, None)
        if v is not None:
            raw[key] = str(v)
    external = list(getattr(args, "external", None) or [])
    if not external and "external" in raw:
        external = _split_list(raw["external"])
    try:
        cfg = pipeline.RunConfig(
            series=raw.get("series"),
            out=raw.get("out", "out"),
            external=_parse_external(external),
            h=int(raw.get("h", 28)),
            seed=int(raw.get("seed", 0)),
            methods=tuple(_split_list(raw["methods"])) if "methods" in raw else pipeline.NATIVE_METHODS,
            schemes=tuple(_split_list(raw["schemes"])) if "schemes" in raw else pipeline.SCHEMES,
            cost_pairs=tuple(_parse_cost_pairs(raw["cost_pairs"])) if "cost_pairs" in raw else pipeline.COST_PAIRS,
            n_sims=int(raw.get("nsims", raw.get("n_sims", 1000))),
            stratify=raw.get("stratify", "true").lower() in ("1", "true", "yes", "on"),
        )
        cfg.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if not cfg.series:
        raise UsageError("no series file given (--series or 'series = ...' in the config)")
    return cfg


def cmd_synth(args) -> int:
    try:
        series = gen_synthetic(args.n, args.length, args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    os.makedirs(args.out, exist_ok=True)
    write_series_csv(os.path.join(args.out, "series.csv"), series)
    if args.external:
        per_origin: dict = {o: {} for o in pipeline.ORIGINS}
        for s in series:
            for origin, methods in external_benchmarks(s, args.h).items():
                per_origin[origin][s.id] = methods
        for origin in pipeline.ORIGINS:
            write_quantiles_csv(os.path.join(args.out, f"external_{origin}.csv"), per_origin[origin])
    print(f"wrote {len(series)} series to {args.out}")
    return EXIT_OK


def cmd_forecast(args) -> int:
    cfg = build_config(args)
    pipeline.run_forecast(cfg)
    print(f"forecasts written to {cfg.out}")
    return EXIT_OK


def cmd_combine(args) -> int:
    cfg = build_config(args)
    pipeline.run_combine(cfg)
    print(f"weights written to {os.path.join(cfg.out, pipeline.WEIGHTS_FILE)}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = build_config(args)
    summary = pipeline.run_evaluate(cfg)
    print(f"scored {summary['n_scored']} series, skipped {summary['n_skipped']}; reports in {cfg.out}")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = build_config(args)
    summary = pipeline.run_pipeline(cfg)
    print(f"scored {summary['n_scored']} series, skipped {summary['n_skipped']}; reports in {cfg.out}")
    return EXIT_OK


def _add_common(p):
    p.add_argument("--config", help="flat key = value configuration file")
    p.add_argument("--series", help="series CSV (series_id,period,value)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--external", action="append", metavar="ORIGIN=PATH",
                   help="external quantile file for origin 'weight' or 'test'; repeatable")
    p.add_argument("--seed", type=int)
    p.add_argument("--h", type=int, help="forecast horizon (default 28)")
    p.add_argument("--nsims", type=int, help="Monte-Carlo paths per forecast (default 1000)")
    p.add_argument("--methods", help="comma-separated native methods (POIS,NB,WSS,ZV,EMP)")
    p.add_argument("--schemes", help="comma-separated combination schemes")
    p.add_argument("--cost-pairs", dest="cost_pairs", help="comma-separated c1:c2 pairs")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="demandpool", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, func, help_ in (
        ("forecast", cmd_forecast, "native forecasts for the weight and test origins"),
        ("combine", cmd_combine, "estimate combination weights"),
        ("evaluate", cmd_evaluate, "score forecasts and simulate inventory"),
        ("run", cmd_run, "all stages"),
    ):
        p = sub.add_parser(name, help=help_)
        _add_common(p)
        p.set_defaults(func=func)
    p = sub.add_parser("synth", help="write a synthetic series file")
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--length", type=int, default=150)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--h", type=int, default=28)
    p.add_argument("--out", default="synth")
    p.add_argument("--external", action="store_true", help="also write two benchmark external forecast files")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except IngestError as exc:
        print(f"ingest error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INGEST
    except Exception as exc:
        logger.exception("internal error")
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
