"""File ingest, train/weight/test splitting and SBC classification."""

from __future__ import annotations

import csv
import logging
import os
import re
from dataclasses import dataclass
from typing import Iterable

import numpy as np
import pandas as pd

from .errors import (
    DegenerateSeries,
    IncompleteGrid,
    MalformedRow,
    MissingFile,
    NegativeValue,
    NonContiguousPeriods,
    TooShort,
    UnknownTau,
)
from .forecasters import DemandSeries
from .pmf import TAU_PERCENT, QuantileVector

logger = logging.getLogger(__name__)

SERIES_HEADER = ["series_id", "period", "value"]
QUANTILE_HEADER = ["series_id", "method", "horizon", "tau", "value"]
TAU_LABELS = [f"0.{j:02d}" for j in TAU_PERCENT]
_TAU_INDEX = {label: i for i, label in enumerate(TAU_LABELS)}

ADI_CUTOFF = 1.32
CV2_CUTOFF = 0.49
SBC_CLASSES = ("smooth", "erratic", "intermittent", "lumpy")
MIN_TRAIN = 20


def _open_csv(path):
    if not os.path.isfile(path):
        raise MissingFile(f"no such file: {path}")
    return open(path, newline="", encoding="utf-8")


def _check_header(reader, expected):
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != expected:
        raise MalformedRow(1, f"expected header {','.join(expected)}")


def read_series_csv(path) -> list[DemandSeries]:
    """Read ``series_id,period,value`` rows into one series per id.

    Series are returned in order of first appearance; values are ordered by
    period.
    """
    rows: dict[str, dict[int, int]] = {}
    with _open_csv(path) as fh:
        reader = csv.reader(fh)
        _check_header(reader, SERIES_HEADER)
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise MalformedRow(line, "expected 3 fields")
            sid, period_s, value_s = row
            try:
                period, value = int(period_s), int(value_s)
            except ValueError:
                raise MalformedRow(line, "period and value must be integers") from None
            if value < 0:
                raise NegativeValue(sid, period)
            per = rows.setdefault(sid, {})
            if period in per:
                raise MalformedRow(line, f"duplicate period {period} for {sid!r}")
            per[period] = value
    out = []
    for sid, per in rows.items():
        periods = sorted(per)
        if periods[-1] - periods[0] + 1 != len(periods):
            raise NonContiguousPeriods(sid)
        values = np.array([per[p] for p in periods], dtype=np.int64)
        out.append(DemandSeries(sid, values, first_period=periods[0]))
    return out


def write_series_csv(path, series: Iterable[DemandSeries]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SERIES_HEADER)
        for s in series:
            for i, v in enumerate(s.values):
                w.writerow([s.id, s.first_period + i, int(v)])


def read_external_quantiles_csv(path, h: int = 28) -> dict[str, dict[str, list[QuantileVector]]]:
    """Read long-format quantile forecasts.

    Returns ``{series_id: {method: [QuantileVector for horizon 1..h]}}``.
    Crossing quantiles are repaired by sorting each horizon's 99 values.
    """
    with _open_csv(path) as fh:
        _check_header(csv.reader(fh), QUANTILE_HEADER)
    try:
        df = pd.read_csv(
            path,
            dtype=str,
            keep_default_na=False,
            skip_blank_lines=True,
            encoding="utf-8",
        )
    except pd.errors.ParserError as exc:
        raise MalformedRow(_parser_line(str(exc)), str(exc)) from None
    if df.empty:
        return {}
    line = np.arange(df.shape[0]) + 2
    bad_tau = ~df["tau"].isin(_TAU_INDEX)
    if bad_tau.any():
        i = int(np.argmax(bad_tau.to_numpy()))
        raise UnknownTau(f"line {line[i]}: unknown tau {df['tau'].iat[i]!r}")
    hz = pd.to_numeric(df["horizon"], errors="coerce")
    val = pd.to_numeric(df["value"], errors="coerce")
    bad = hz.isna() | val.isna() | ~np.isfinite(val) | (hz % 1 != 0)
    if bad.any():
        i = int(np.argmax(bad.to_numpy()))
        raise MalformedRow(int(line[i]), "horizon must be int and value numeric")
    hz = hz.astype(np.int64)
    # to_numeric is not correctly rounded; re-parse the validated strings exactly
    val = df["value"].str.strip().astype(float)
    out_of_range = (hz < 1) | (hz > h)
    if out_of_range.any():
        i = int(np.argmax(out_of_range.to_numpy()))
        raise MalformedRow(int(line[i]), f"horizon {hz.iat[i]} outside 1..{h}")
    frame = pd.DataFrame(
        {
            "sid": df["series_id"],
            "method": df["method"],
            "hz": hz,
            "tau": df["tau"].map(_TAU_INDEX).astype(np.int64),
            "value": val.astype(float),
        }
    )
    dup = frame.duplicated(["sid", "method", "hz", "tau"])
    if dup.any():
        i = int(np.argmax(dup.to_numpy()))
        raise MalformedRow(int(line[i]), "duplicate (series_id, method, horizon, tau)")
    out: dict[str, dict[str, list[QuantileVector]]] = {}
    ntau = len(TAU_LABELS)
    for (sid, method), g in frame.groupby(["sid", "method"], sort=True):
        counts = np.bincount(g["hz"].to_numpy(), minlength=h + 1)[1:]
        short = np.flatnonzero(counts != ntau)
        if short.size:
            raise IncompleteGrid(sid, method, int(short[0]) + 1)
        g = g.sort_values(["hz", "tau"])
        grid = np.sort(g["value"].to_numpy().reshape(h, ntau), axis=1)
        out.setdefault(sid, {})[method] = [QuantileVector(np.maximum(row, 0.0)) for row in grid]
    return out


def _parser_line(msg: str) -> int:
    m = re.search(r"line (\d+)", msg)
    return int(m.group(1)) if m else 0


def _fmt(x: float) -> str:
    x = float(x)
    return str(int(x)) if x.is_integer() else repr(x)


def write_quantiles_csv(path, forecasts: dict[str, dict[str, list[QuantileVector]]]) -> None:
    """Inverse of :func:`read_external_quantiles_csv`; rows sorted by series, method."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(QUANTILE_HEADER)
        for sid in sorted(forecasts):
            for method in sorted(forecasts[sid]):
                for hz, qv in enumerate(forecasts[sid][method], start=1):
                    for label, v in zip(TAU_LABELS, qv.values):
                        w.writerow([sid, method, hz, label, _fmt(v)])


@dataclass(frozen=True)
class SplitSpec:
    """Window boundaries as 1-based inclusive period positions.

    Use the ``*_slice`` properties to index ``series.values``.
    """

    train_start: int
    train_end: int
    weight_start: int
    weight_end: int
    test_start: int
    test_end: int
    h: int = 28

    @property
    def train_slice(self) -> slice:
        return slice(self.train_start - 1, self.train_end)

    @property
    def weight_slice(self) -> slice:
        return slice(self.weight_start - 1, self.weight_end)

    @property
    def test_slice(self) -> slice:
        return slice(self.test_start - 1, self.test_end)

    @property
    def train_weight_slice(self) -> slice:
        """Training segment extended through the weight window (test-origin fit)."""
        return slice(self.train_start - 1, self.weight_end)


def split_series(series: DemandSeries, h: int = 28) -> SplitSpec:
    """Training from the first positive to L - 2h, then two h-period windows."""
    L = len(series)
    start = series.start_index + 1
    if L - start + 1 < 2 * h + MIN_TRAIN:
        raise TooShort(
            f"series {series.id!r}: {L - start + 1} periods from first positive, "
            f"need {2 * h + MIN_TRAIN}"
        )
    return SplitSpec(
        train_start=start,
        train_end=L - 2 * h,
        weight_start=L - 2 * h + 1,
        weight_end=L - h,
        test_start=L - h + 1,
        test_end=L,
        h=h,
    )


@dataclass(frozen=True)
class SBCStats:
    adi: float
    cv2: float
    label: str


def sbc_label(adi: float, cv2: float) -> str:
    if adi < ADI_CUTOFF:
        return "smooth" if cv2 < CV2_CUTOFF else "erratic"
    return "intermittent" if cv2 < CV2_CUTOFF else "lumpy"


def classify_sbc(series: DemandSeries) -> SBCStats:
    """ADI / CV2 demand-pattern class of a series."""
    y = np.asarray(series.values)
    idx = np.flatnonzero(y > 0)
    if idx.size < 2:
        raise DegenerateSeries(f"series {series.id!r}: need >= 2 positive demands")
    adi = float(np.mean(np.diff(idx)))
    sizes = y[idx].astype(float)
    cv2 = float((sizes.std() / sizes.mean()) ** 2)
    return SBCStats(adi, cv2, sbc_label(adi, cv2))
