"""Lag-window supervised framing of an endpoint matrix and year-range splits."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError

DEFAULT_LAG = 4


@dataclass(frozen=True, eq=False)
class SupervisedSet:
    """Windows of ``L`` consecutive endpoint rows, each paired with the next year's value.

    ``inputs`` has shape ``(n, L, k)``; window ``j`` holds rows for years
    ``target_years[j] - L`` to ``target_years[j] - 1``.
    """

    inputs: np.ndarray
    targets: np.ndarray
    target_years: np.ndarray

    def __post_init__(self):
        inputs = np.asarray(self.inputs, dtype=np.float64)
        if inputs.ndim != 3:
            raise DataError(f"inputs must be (n, L, k), got shape {inputs.shape}")
        targets = np.asarray(self.targets, dtype=np.float64).ravel()
        years = np.asarray(self.target_years, dtype=int).ravel()
        if not inputs.shape[0] == targets.size == years.size:
            raise DataError("inputs, targets and target_years differ in length")
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "target_years", years)

    def __len__(self) -> int:
        return self.targets.size

    @property
    def lag(self) -> int:
        return self.inputs.shape[1]

    @property
    def k(self) -> int:
        return self.inputs.shape[2]

    def select(self, mask) -> "SupervisedSet":
        return SupervisedSet(self.inputs[mask], self.targets[mask], self.target_years[mask])

    def in_years(self, first: int, last: int) -> "SupervisedSet":
        return self.select((self.target_years >= first) & (self.target_years <= last))

    @staticmethod
    def concat(*sets: "SupervisedSet") -> "SupervisedSet":
        sets = [s for s in sets if len(s)]
        if not sets:
            raise DataError("nothing to concatenate")
        return SupervisedSet(
            np.concatenate([s.inputs for s in sets]),
            np.concatenate([s.targets for s in sets]),
            np.concatenate([s.target_years for s in sets]),
        )

    def tail(self, fraction: float) -> tuple["SupervisedSet", "SupervisedSet"]:
        """Split off the last ``fraction`` of pairs (at least one, if the set allows it)."""
        n = len(self)
        n_tail = min(max(int(round(fraction * n)), 1), n - 1) if n > 1 and fraction > 0 else 0
        cut = n - n_tail
        return self.select(slice(0, cut)), self.select(slice(cut, n))


YearRange = tuple[int, int]


@dataclass(frozen=True)
class SplitSpec:
    """Inclusive, contiguous and ordered train/test/forecast year ranges.

    ``forecast`` may be ``None`` for an empty forecast period.
    """

    train: YearRange
    test: YearRange
    forecast: YearRange | None = None

    def __post_init__(self):
        ranges = [("train", self.train), ("test", self.test)]
        if self.forecast is not None:
            ranges.append(("forecast", self.forecast))
        for name, (a, b) in ranges:
            if b < a:
                raise ConfigError(f"{name} range {a}-{b} is empty or reversed")
        for (n1, r1), (n2, r2) in zip(ranges, ranges[1:]):
            if r2[0] <= r1[1]:
                raise ConfigError(f"{n1} range {r1} overlaps or follows {n2} range {r2}")
            if r2[0] != r1[1] + 1:
                raise ConfigError(f"{n1} and {n2} ranges are not contiguous")

    @classmethod
    def paper(cls) -> "SplitSpec":
        return cls(train=(1901, 1980), test=(1981, 1999), forecast=(2000, 2022))

    @property
    def final_train(self) -> YearRange:
        return (self.train[0], self.test[1])

    def as_dict(self) -> dict:
        return {"train": list(self.train), "test": list(self.test), "forecast": list(self.forecast) if self.forecast else None}

    @classmethod
    def from_dict(cls, d: dict) -> "SplitSpec":
        return cls(tuple(d["train"]), tuple(d["test"]), tuple(d["forecast"]) if d.get("forecast") else None)


def _matrix_arrays(e):
    return np.asarray(e.rows), np.asarray(e.targets), np.asarray(e.years)


def frame(e, lag: int = DEFAULT_LAG) -> SupervisedSet:
    """All strictly causal windows of an endpoint matrix.

    The pair for target year ``y`` uses rows ``y-L .. y-1`` and the target
    ``J_y``; row ``y`` itself never enters its own input.
    """
    rows, targets, years = _matrix_arrays(e)
    n = rows.shape[0]
    if lag < 1:
        raise ConfigError("lag must be at least 1")
    if lag >= n:
        raise DataError(f"lag {lag} needs more than {lag} rows, matrix has {n}")
    idx = np.arange(lag, n)
    windows = np.stack([rows[i - lag : i] for i in idx])
    return SupervisedSet(windows, targets[idx], years[idx])


def split(s: SupervisedSet, spec: SplitSpec) -> tuple[SupervisedSet, SupervisedSet, SupervisedSet]:
    """Route pairs to train/test/forecast by target year.

    The head of the train range may be missing (lag truncation); the rest of
    every range must be covered by ``s``.
    """
    have = set(int(y) for y in s.target_years)
    if spec.train[1] not in have:
        raise DataError(f"train range end {spec.train[1]} has no supervised pair")
    needed = list(range(spec.test[0], spec.test[1] + 1))
    if spec.forecast is not None:
        needed += list(range(spec.forecast[0], spec.forecast[1] + 1))
    missing = [y for y in needed if y not in have]
    if missing:
        raise DataError(f"years not covered by supervised pairs: {missing[0]}..{missing[-1]}")
    train = s.in_years(*spec.train)
    test = s.in_years(*spec.test)
    if spec.forecast is None:
        forecast = s.select(np.zeros(len(s), dtype=bool))
    else:
        forecast = s.in_years(*spec.forecast)
    return train, test, forecast


def last_window(e, lag: int = DEFAULT_LAG) -> np.ndarray:
    """The final ``lag`` rows, i.e. the input for forecasting the year after the matrix ends."""
    rows = np.asarray(e.rows)
    if lag < 1:
        raise ConfigError("lag must be at least 1")
    if rows.shape[0] < lag:
        raise DataError(f"need {lag} rows for a window, matrix has {rows.shape[0]}")
    return rows[-lag:].copy()


def write_supervised_csv(s: SupervisedSet, path) -> None:
    """Flattened windows, columns ``c{l}_{t-j}`` for mode ``l`` and lag ``j``."""
    cols = [f"c{l}_t-{j}" for j in range(s.lag, 0, -1) for l in range(1, s.k + 1)]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([*cols, "target", "target_year"])
        for x, t, y in zip(s.inputs, s.targets, s.target_years):
            w.writerow([*(repr(float(v)) for v in x.ravel()), repr(float(t)), int(y)])
