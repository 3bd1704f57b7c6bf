"""Progressive decomposition with a moving front.

For every front year ``y`` the series is decomposed over ``[y_1, y]`` and
only the final sample of each component is kept. Stacking those rows gives
an endpoint matrix whose rows never change when later data arrive, so a
train/test split of its rows cannot leak future information.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .emd import EmdDecomposer, SiftConfig
from .errors import ConfigError, DataError, NumericError
from .ewt import EwtDecomposer, GammaShrunkWarning, ModeReductionWarning
from .series import TimeSeries

FORMAT_VERSION = 1
DEFAULT_WARMUP_LENGTH = 31
ROW_RTOL = 1e-6


def decomposer_from_params(params: dict):
    params = dict(params)
    kind = params.pop("kind", "ewt")
    if kind == "ewt":
        return EwtDecomposer(**params)
    if kind in ("emd", "eemd"):
        return EmdDecomposer(SiftConfig(**params), ensemble=kind == "eemd")
    raise ConfigError(f"unknown decomposer kind {kind!r}")


def make_decomposer(kind: str = "ewt", k: int = 9, gamma: float = 0.2, seed: int = 0):
    """Decomposer producing exactly ``k`` columns per front."""
    if kind == "ewt":
        return EwtDecomposer(n_modes=k, gamma=gamma)
    if kind in ("emd", "eemd"):
        if k < 2:
            raise ConfigError("EMD-family decomposers need k >= 2 (IMFs plus residue)")
        return EmdDecomposer(SiftConfig(max_imfs=k - 1, seed=seed), ensemble=kind == "eemd")
    raise ConfigError(f"decomposer {kind!r} cannot drive a moving front")


@dataclass(frozen=True, eq=False)
class EndpointMatrix:
    """One row of component endpoints per front year, paired with that year's value."""

    series_start_year: int
    warmup_year: int
    rows: np.ndarray
    targets: np.ndarray
    mode_labels: tuple[str, ...]
    decomposer: object
    source_values: np.ndarray = field(repr=False)

    def __post_init__(self):
        rows = np.array(self.rows, dtype=np.float64, ndmin=2)
        targets = np.array(self.targets, dtype=np.float64).ravel()
        if rows.shape[0] != targets.size:
            raise DataError("rows and targets differ in length")
        for arr in (rows, targets):
            arr.setflags(write=False)
        src = np.array(self.source_values, dtype=np.float64)
        src.setflags(write=False)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "source_values", src)
        object.__setattr__(self, "mode_labels", tuple(self.mode_labels))

    @property
    def k(self) -> int:
        return self.rows.shape[1]

    @property
    def n_rows(self) -> int:
        return self.rows.shape[0]

    @property
    def end_year(self) -> int:
        return self.warmup_year + self.n_rows - 1

    @property
    def years(self) -> np.ndarray:
        return np.arange(self.warmup_year, self.end_year + 1)

    @property
    def decomposer_id(self) -> str:
        return self.decomposer.id

    def row(self, year: int) -> np.ndarray:
        return self.rows[self._index(year)]

    def _index(self, year: int) -> int:
        if not self.warmup_year <= year <= self.end_year:
            raise DataError(f"year {year} outside endpoint range {self.warmup_year}-{self.end_year}")
        return int(year - self.warmup_year)

    def through(self, year: int) -> "EndpointMatrix":
        """Rows up to and including ``year``."""
        i = self._index(year) + 1
        n_src = year - self.series_start_year + 1
        return replace(self, rows=self.rows[:i], targets=self.targets[:i], source_values=self.source_values[:n_src])


def _front_row(ts_values: np.ndarray, start_year: int, decomposer) -> np.ndarray:
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        m = decomposer(ts_values, start_year=start_year)
    for w in caught:
        if issubclass(w.category, ModeReductionWarning):
            front = start_year + ts_values.size - 1
            raise DataError(
                f"front {front}: decomposition gave {m.k} modes instead of {decomposer.k}; "
                "lengthen the warm-up span or lower k"
            )
        if not issubclass(w.category, GammaShrunkWarning):
            warnings.warn_explicit(w.message, w.category, w.filename, w.lineno)
    if m.k != decomposer.k:
        raise DataError(f"decomposer returned {m.k} columns, expected {decomposer.k}")
    return m.modes[:, -1].copy()


def _front_rows(ts: TimeSeries, first_front: int, last_front: int, decomposer) -> tuple[np.ndarray, np.ndarray]:
    rows, targets = [], []
    for year in range(first_front, last_front + 1):
        prefix = ts.values[: ts.index_of(year) + 1]
        row = _front_row(prefix, ts.start_year, decomposer)
        target = prefix[-1]
        if abs(row.sum() - target) > ROW_RTOL * max(abs(target), 1e-300):
            raise NumericError(f"front {year}: endpoint row sums to {row.sum()!r}, expected {target!r}")
        rows.append(row)
        targets.append(target)
    return np.array(rows).reshape(-1, decomposer.k), np.array(targets)


def build_endpoint_matrix(ts: TimeSeries, warmup_year: int | None = None, k: int | None = None, decomposer=None) -> EndpointMatrix:
    """Endpoint matrix from ``warmup_year`` to the end of ``ts``.

    Args:
        ts: the full series; decomposition always starts at its first year.
        warmup_year: first front. Defaults to 31 samples into the series.
        k: number of components; builds a default EWT when ``decomposer``
            is not given (9 if both are omitted).
        decomposer: callable ``(values, start_year) -> ModeMatrix`` with
            ``k``, ``id`` and ``labels()``; fronts must all yield ``k`` modes.

    Raises:
        DataError: warm-up span too short, or a front yields fewer modes.
    """
    if decomposer is None:
        decomposer = EwtDecomposer(n_modes=k or 9)
    elif k is not None and decomposer.k != k:
        raise ConfigError(f"k={k} conflicts with decomposer k={decomposer.k}")
    if warmup_year is None:
        warmup_year = ts.start_year + DEFAULT_WARMUP_LENGTH - 1
    if warmup_year > ts.end_year:
        raise DataError(f"warm-up year {warmup_year} is after the series end {ts.end_year}")
    span = warmup_year - ts.start_year + 1
    if span < decomposer.min_length:
        raise DataError(f"warm-up span of {span} samples is shorter than the minimum {decomposer.min_length}")
    rows, targets = _front_rows(ts, warmup_year, ts.end_year, decomposer)
    return EndpointMatrix(
        series_start_year=ts.start_year,
        warmup_year=warmup_year,
        rows=rows,
        targets=targets,
        mode_labels=decomposer.labels(),
        decomposer=decomposer,
        source_values=ts.values,
    )


def extend_endpoint_matrix(e: EndpointMatrix, ts_extended: TimeSeries) -> EndpointMatrix:
    """Append one row per new year; existing rows are carried over untouched.

    Raises:
        DataError: ``ts_extended`` does not reproduce the history ``e`` was built from.
    """
    n_old = e.source_values.size
    if (
        ts_extended.start_year != e.series_start_year
        or len(ts_extended) < n_old
        or not np.array_equal(ts_extended.values[:n_old], e.source_values)
    ):
        raise DataError("extended series disagrees with the history the matrix was built from")
    if len(ts_extended) == n_old:
        return e
    rows, targets = _front_rows(ts_extended, e.end_year + 1, ts_extended.end_year, e.decomposer)
    return replace(
        e,
        rows=np.vstack([e.rows, rows]),
        targets=np.concatenate([e.targets, targets]),
        source_values=ts_extended.values,
    )


@dataclass(frozen=True)
class LeakReport:
    component: str
    component_index: int
    front_year: int
    first_year: int
    years: np.ndarray
    before: np.ndarray
    after: np.ndarray
    changes: np.ndarray
    max_change: float
    num_changed: int
    tolerance: float


def leak_demo(ts: TimeSeries, front_year: int, component=-1, k: int = 9, decomposer=None, tolerance: float = 1e-10) -> LeakReport:
    """Compare one component decomposed over ``[y_1, m]`` and over ``[y_1, m+1]``.

    ``changes`` holds the absolute difference for every year up to ``m``;
    ``num_changed`` counts interior years (strictly between ``y_1`` and ``m``)
    whose change exceeds ``tolerance``.
    """
    decomposer = decomposer or EwtDecomposer(n_modes=k)
    if not ts.start_year <= front_year < ts.end_year:
        raise DataError(f"front {front_year} and {front_year + 1} must both lie in {ts.start_year}-{ts.end_year}")
    labels = decomposer.labels()
    if isinstance(component, str):
        if component not in labels:
            raise ConfigError(f"unknown component {component!r}; have {labels}")
        idx = labels.index(component)
    else:
        idx = int(component) % len(labels)
    n = ts.index_of(front_year) + 1
    if n < decomposer.min_length:
        raise DataError(f"span {ts.start_year}-{front_year} too short to decompose")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", GammaShrunkWarning)
        before = decomposer(ts.values[:n], start_year=ts.start_year).modes[idx]
        after = decomposer(ts.values[: n + 1], start_year=ts.start_year).modes[idx][:n]
    changes = np.abs(before - after)
    interior = changes[1:-1]
    return LeakReport(
        component=labels[idx],
        component_index=idx,
        front_year=front_year,
        first_year=ts.start_year,
        years=np.arange(ts.start_year, front_year + 1),
        before=before,
        after=after,
        changes=changes,
        max_change=float(changes.max()),
        num_changed=int(np.sum(interior > tolerance)),
        tolerance=tolerance,
    )


def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".json")


def write_endpoint_matrix(e: EndpointMatrix, path) -> None:
    """CSV ``year,c1..ck,target`` plus a JSON sidecar with everything needed to extend it."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["year", *(f"c{j}" for j in range(1, e.k + 1)), "target"])
        for year, row, target in zip(e.years, e.rows, e.targets):
            w.writerow([int(year), *(repr(float(v)) for v in row), repr(float(target))])
    meta = {
        "format_version": FORMAT_VERSION,
        "decomposer_id": e.decomposer_id,
        "decomposer": e.decomposer.params(),
        "k": e.k,
        "mode_labels": list(e.mode_labels),
        "warmup_year": e.warmup_year,
        "series_start_year": e.series_start_year,
        "source_values": [float(v) for v in e.source_values],
    }
    sidecar_path(path).write_text(json.dumps(meta, indent=1))


def read_endpoint_matrix(path) -> EndpointMatrix:
    path = Path(path)
    side = sidecar_path(path)
    if not path.is_file() or not side.is_file():
        raise DataError(f"endpoint matrix {path} or its sidecar {side} is missing")
    try:
        meta = json.loads(side.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{side}: corrupt sidecar ({exc})") from None
    if meta.get("format_version") != FORMAT_VERSION:
        raise DataError(f"{side}: unsupported format version {meta.get('format_version')}")
    k = int(meta["k"])
    years, rows, targets = [], [], []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) != k + 2:
            raise DataError(f"{path}: expected {k + 2} columns")
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            try:
                years.append(int(rec[0]))
                rows.append([float(v) for v in rec[1 : k + 1]])
                targets.append(float(rec[k + 1]))
            except (ValueError, IndexError):
                raise DataError(f"{path}: row {lineno}: malformed") from None
    if not years or years[0] != meta["warmup_year"] or any(b != a + 1 for a, b in zip(years, years[1:])):
        raise DataError(f"{path}: years must run consecutively from the warm-up year")
    return EndpointMatrix(
        series_start_year=int(meta["series_start_year"]),
        warmup_year=int(meta["warmup_year"]),
        rows=np.array(rows),
        targets=np.array(targets),
        mode_labels=tuple(meta["mode_labels"]),
        decomposer=decomposer_from_params(meta["decomposer"]),
        source_values=np.array(meta["source_values"], dtype=np.float64),
    )
