"""Component-series container shared by all decomposers, plus its CSV form."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError


@dataclass(frozen=True, eq=False)
class ModeMatrix:
    """``k`` component series over consecutive years.

    ``modes`` has shape ``(k, n)``; row ``l`` is the ``l``-th component.
    Their pointwise sum reproduces the decomposed signal.
    """

    start_year: int
    modes: np.ndarray
    labels: tuple[str, ...]
    decomposer_id: str = "unknown"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        modes = np.array(self.modes, dtype=np.float64, ndmin=2)
        modes.setflags(write=False)
        if modes.shape[0] != len(self.labels):
            raise DataError(f"{modes.shape[0]} modes but {len(self.labels)} labels")
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def k(self) -> int:
        return self.modes.shape[0]

    @property
    def n(self) -> int:
        return self.modes.shape[1]

    @property
    def end_year(self) -> int:
        return self.start_year + self.n - 1

    @property
    def years(self) -> np.ndarray:
        return np.arange(self.start_year, self.end_year + 1)

    def reconstruct(self) -> np.ndarray:
        return self.modes.sum(axis=0)

    def mode(self, label_or_index) -> np.ndarray:
        if isinstance(label_or_index, str):
            try:
                return self.modes[self.labels.index(label_or_index)]
            except ValueError:
                raise DataError(f"no mode labelled {label_or_index!r}; have {self.labels}") from None
        return self.modes[label_or_index]


def mode_sd_profile(m: ModeMatrix) -> dict[str, float]:
    """Population SD of every mode (in order) plus that of the reconstruction."""
    profile = {label: float(np.std(row)) for label, row in zip(m.labels, m.modes)}
    profile["signal"] = float(np.std(m.reconstruct()))
    return profile


def flatness(sds) -> float:
    """Max over mean of the mode SDs; 1 means evenly spread, 0 for an all-zero profile."""
    sds = np.asarray(list(sds), dtype=np.float64)
    mean = sds.mean() if sds.size else 0.0
    return float(sds.max() / mean) if mean > 0 else 0.0


def write_mode_csv(m: ModeMatrix, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["year", *m.labels])
        for j, year in enumerate(m.years):
            w.writerow([int(year), *(repr(float(v)) for v in m.modes[:, j])])


def read_mode_csv(path, decomposer_id: str = "imported") -> ModeMatrix:
    """Load a ModeMatrix written by :func:`write_mode_csv` or computed elsewhere."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"mode file not found: {path}")
    with path.open(newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0].strip().lower() != "year" or len(header) < 2:
            raise DataError(f"{path}: header must be 'year,<mode labels...>'")
        years, rows = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: row {lineno}: expected {len(header)} columns")
            try:
                years.append(int(row[0]))
                rows.append([float(c) for c in row[1:]])
            except ValueError:
                raise DataError(f"{path}: row {lineno}: non-numeric cell") from None
    if not rows:
        raise DataError(f"{path}: no data rows")
    if any(b != a + 1 for a, b in zip(years, years[1:])):
        raise DataError(f"{path}: years must be consecutive and ascending")
    return ModeMatrix(
        start_year=years[0],
        modes=np.array(rows).T,
        labels=tuple(h.strip() for h in header[1:]),
        decomposer_id=decomposer_id,
    )
