"""Annual series ingestion, descriptive statistics, forecast metrics and scaling."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError


def _frozen_array(values) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """A gap-free annual series starting at ``start_year``."""

    start_year: int
    values: np.ndarray

    def __post_init__(self):
        values = _frozen_array(self.values)
        if values.ndim != 1 or values.size == 0:
            raise DataError("series must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(values)):
            raise DataError("series contains non-finite values")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "start_year", int(self.start_year))

    def __len__(self) -> int:
        return self.values.size

    @property
    def end_year(self) -> int:
        return self.start_year + self.values.size - 1

    @property
    def years(self) -> np.ndarray:
        return np.arange(self.start_year, self.end_year + 1)

    def index_of(self, year: int) -> int:
        if not self.start_year <= year <= self.end_year:
            raise DataError(f"year {year} outside series range {self.start_year}-{self.end_year}")
        return int(year - self.start_year)

    def value_at(self, year: int) -> float:
        return float(self.values[self.index_of(year)])

    def through(self, year: int) -> "TimeSeries":
        """Prefix of the series ending at ``year`` (inclusive)."""
        return TimeSeries(self.start_year, self.values[: self.index_of(year) + 1])

    def with_values(self, values) -> "TimeSeries":
        return TimeSeries(self.start_year, values)

    def __eq__(self, other):
        if not isinstance(other, TimeSeries):
            return NotImplemented
        return self.start_year == other.start_year and np.array_equal(self.values, other.values)

    __hash__ = None


@dataclass(frozen=True)
class Stats:
    count: int
    mean: float
    sd_population: float
    sd_sample: float
    min: float
    max: float

    def as_dict(self) -> dict:
        return {
            "count": self.count,
            "mean": self.mean,
            "sd_population": self.sd_population,
            "sd_sample": self.sd_sample,
            "min": self.min,
            "max": self.max,
        }


@dataclass(frozen=True)
class Metrics:
    rmse: float
    pp: float
    nrmse: float
    mape: float
    r: float
    n: int

    def as_dict(self) -> dict:
        return {
            "n": self.n,
            "rmse": self.rmse,
            "pp": self.pp,
            "nrmse": self.nrmse,
            "mape": self.mape,
            "r": self.r,
        }


@dataclass(frozen=True)
class Scaler:
    """Standardization by a fixed mean and (population) SD."""

    mean: float
    sd: float

    def __post_init__(self):
        if not self.sd > 0 or not math.isfinite(self.sd):
            raise DataError("scaler SD must be positive and finite")


def load_csv(path) -> TimeSeries:
    """Read a ``year,value`` CSV into a :class:`TimeSeries`.

    Rows may be in any order; they are sorted by year. Errors name the
    offending row (1-based, header is row 1).
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"data file not found: {path}")
    with path.open(newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: no data rows")
        names = [h.strip().lower() for h in header]
        if names[:2] != ["year", "value"]:
            raise DataError(f"{path}: header must be 'year,value', got {','.join(header)!r}")
        rows: dict[int, tuple[float, int]] = {}
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) < 2:
                raise DataError(f"{path}: row {lineno}: expected 2 columns")
            try:
                year = int(row[0].strip())
            except ValueError:
                raise DataError(f"{path}: row {lineno}: non-numeric year {row[0]!r}") from None
            try:
                value = float(row[1].strip())
            except ValueError:
                raise DataError(f"{path}: row {lineno}: non-numeric value {row[1]!r}") from None
            if not math.isfinite(value):
                raise DataError(f"{path}: row {lineno}: non-finite value")
            if year in rows:
                raise DataError(f"{path}: row {lineno}: duplicate year {year} (first at row {rows[year][1]})")
            rows[year] = (value, lineno)
    if not rows:
        raise DataError(f"{path}: no data rows")
    years = sorted(rows)
    for prev, year in zip(years, years[1:]):
        if year != prev + 1:
            missing = prev + 1
            raise DataError(f"{path}: row {rows[year][1]}: gap at {missing}")
    return TimeSeries(years[0], [rows[y][0] for y in years])


def write_csv(ts: TimeSeries, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["year", "value"])
        for year, value in zip(ts.years, ts.values):
            w.writerow([int(year), repr(float(value))])


def descriptive_stats(ts: TimeSeries) -> Stats:
    v = ts.values
    n = v.size
    return Stats(
        count=n,
        mean=float(np.mean(v)),
        sd_population=float(np.std(v)),
        sd_sample=float(np.std(v, ddof=1)) if n > 1 else 0.0,
        min=float(np.min(v)),
        max=float(np.max(v)),
    )


def performance_parameter(rmse: float, sd: float) -> float:
    """``1 - (rmse/sd)**2``; 1 is perfect, 0 matches the constant-mean predictor."""
    return 1.0 - (rmse / sd) ** 2


def compute_metrics(predicted: Sequence[float], observed: Sequence[float]) -> Metrics:
    """Forecast-quality metrics of ``predicted`` against ``observed``.

    PP uses the population SD of the observations so that predicting their
    mean scores exactly zero. MAPE skips zero observations with a warning.
    """
    pred = np.asarray(predicted, dtype=np.float64)
    obs = np.asarray(observed, dtype=np.float64)
    if pred.shape != obs.shape or pred.ndim != 1:
        raise DataError(f"length mismatch: {pred.shape} predicted vs {obs.shape} observed")
    if obs.size == 0:
        raise DataError("cannot compute metrics on empty sequences")
    if not (np.all(np.isfinite(pred)) and np.all(np.isfinite(obs))):
        raise DataError("non-finite values in metric inputs")
    err = pred - obs
    rmse = float(np.sqrt(np.mean(err * err)))
    sd = float(np.std(obs))
    if sd == 0.0:
        raise DataError("observed values have zero SD; PP is undefined")
    mean_obs = float(np.mean(obs))
    nonzero = obs != 0
    if not np.all(nonzero):
        warnings.warn(f"MAPE: skipping {int(np.sum(~nonzero))} zero observation(s)", RuntimeWarning, stacklevel=2)
    # near-zero observations give an infinite MAPE, which is the honest value
    with np.errstate(over="ignore"):
        mape = float(np.mean(np.abs(err[nonzero]) / np.abs(obs[nonzero]))) if np.any(nonzero) else math.nan
    if np.std(pred) == 0.0:
        r = 0.0
    else:
        r = float(np.clip(np.corrcoef(pred, obs)[0, 1], -1.0, 1.0))
    return Metrics(
        rmse=rmse,
        pp=performance_parameter(rmse, sd),
        nrmse=rmse / mean_obs if mean_obs != 0 else math.nan,
        mape=mape,
        r=r,
        n=int(obs.size),
    )


def fit_scaler(values: Iterable[float]) -> Scaler:
    v = np.asarray(list(values) if not isinstance(values, np.ndarray) else values, dtype=np.float64)
    if v.size < 2:
        raise DataError("need at least 2 values to fit a scaler")
    sd = float(np.std(v))
    if sd == 0.0:
        raise DataError("cannot fit scaler on constant values (zero SD)")
    return Scaler(float(np.mean(v)), sd)


def apply_scaler(scaler: Scaler, values) -> np.ndarray:
    return (np.asarray(values, dtype=np.float64) - scaler.mean) / scaler.sd


def invert_scaler(scaler: Scaler, values) -> np.ndarray:
    return np.asarray(values, dtype=np.float64) * scaler.sd + scaler.mean


def format_key_values(d: dict) -> str:
    return "\n".join(f"{k}: {v}" for k, v in d.items())
