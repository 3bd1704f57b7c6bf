"""Plain and ensemble empirical mode decomposition, used as a comparison baseline.

The number of IMFs is decided by the data, unlike the EWT where it is chosen.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import ConfigError, DataError
from .modes import ModeMatrix


@dataclass(frozen=True)
class SiftConfig:
    max_imfs: int = 10
    sift_sd_threshold: float = 0.2
    max_sift_iterations: int = 100
    ensemble_size: int = 100
    noise_amplitude: float = 0.2
    mirror_extrema: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.max_imfs < 1 or self.max_sift_iterations < 1 or self.ensemble_size < 1:
            raise ConfigError("max_imfs, max_sift_iterations and ensemble_size must be positive")
        if not 0 < self.sift_sd_threshold < 1:
            raise ConfigError("sift_sd_threshold must lie in (0, 1)")
        if self.noise_amplitude < 0:
            raise ConfigError("noise_amplitude must be non-negative")
        if self.mirror_extrema < 1:
            raise ConfigError("mirror_extrema must be positive")


def find_extrema(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Indices of local maxima and minima; a flat top counts once, at its centre."""
    dx = np.diff(x)
    # drop zero steps so plateaus collapse onto their edges
    nz = np.flatnonzero(dx != 0)
    if nz.size < 2:
        return np.empty(0, dtype=int), np.empty(0, dtype=int)
    sign = np.sign(dx[nz])
    turn = np.flatnonzero(sign[1:] != sign[:-1])
    maxima, minima = [], []
    for t in turn:
        start = nz[t] + 1
        stop = nz[t + 1]
        centre = (start + stop) // 2
        (maxima if sign[t] > 0 else minima).append(centre)
    return np.array(maxima, dtype=int), np.array(minima, dtype=int)


def count_zero_crossings(x: np.ndarray) -> int:
    s = np.sign(x)
    s = s[s != 0]
    return int(np.sum(s[1:] != s[:-1]))


def _envelope(idx: np.ndarray, x: np.ndarray, n: int, nbsym: int) -> np.ndarray:
    # mirror the nearest extrema about both signal ends so the spline is anchored
    left = idx[:nbsym]
    right = idx[-nbsym:]
    t = np.concatenate([-left[::-1], idx, 2 * (n - 1) - right[::-1]])
    v = np.concatenate([x[left[::-1]], x[idx], x[right[::-1]]])
    t, keep = np.unique(t, return_index=True)
    v = v[keep]
    if t.size < 2:
        return np.full(n, v[0] if v.size else 0.0)
    if t.size == 2:
        return np.interp(np.arange(n), t, v)
    return CubicSpline(t, v, bc_type="natural")(np.arange(n))


def _is_imf(h: np.ndarray) -> bool:
    maxima, minima = find_extrema(h)
    return abs(maxima.size + minima.size - count_zero_crossings(h)) <= 1


def _sift(x: np.ndarray, cfg: SiftConfig) -> np.ndarray:
    n = x.size
    h = x.copy()
    for _ in range(cfg.max_sift_iterations):
        maxima, minima = find_extrema(h)
        if maxima.size + minima.size < 2:
            break
        upper = _envelope(maxima, h, n, cfg.mirror_extrema) if maxima.size else h
        lower = _envelope(minima, h, n, cfg.mirror_extrema) if minima.size else h
        new = h - 0.5 * (upper + lower)
        denom = np.sum(h * h)
        sd = np.sum((h - new) ** 2) / denom if denom > 0 else 0.0
        h = new
        if sd < cfg.sift_sd_threshold and _is_imf(h):
            break
    return h


def _imf_labels(n_imfs: int) -> tuple[str, ...]:
    return tuple(f"IMF{j}" for j in range(1, n_imfs + 1)) + ("residue",)


def _emd_imfs(x: np.ndarray, cfg: SiftConfig) -> tuple[list[np.ndarray], np.ndarray]:
    imfs = []
    residue = x.copy()
    while len(imfs) < cfg.max_imfs:
        maxima, minima = find_extrema(residue)
        if maxima.size + minima.size < 2:
            break
        imf = _sift(residue, cfg)
        imfs.append(imf)
        residue = residue - imf
    return imfs, residue


def _check_signal(signal) -> np.ndarray:
    x = np.asarray(signal, dtype=np.float64).ravel()
    if x.size < 8:
        raise DataError(f"EMD needs at least 8 samples, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise DataError("signal contains non-finite values")
    return x


def emd(signal, cfg: SiftConfig = SiftConfig(), *, start_year: int = 0) -> ModeMatrix:
    """Empirical mode decomposition into IMFs (fastest first) plus a residue.

    Envelopes are natural cubic splines through the extrema, with the
    nearest extrema mirrored about each end. Sifting stops when the Cauchy
    SD criterion drops below the threshold and the candidate satisfies the
    IMF extrema/zero-crossing condition, or after ``max_sift_iterations``.
    The residue is what remains after removing each IMF, so the modes add
    back up to the signal exactly.
    """
    x = _check_signal(signal)
    imfs, residue = _emd_imfs(x, cfg)
    return ModeMatrix(
        start_year=start_year,
        modes=np.vstack(imfs + [residue]),
        labels=_imf_labels(len(imfs)),
        decomposer_id="emd",
        meta={"n_imfs": len(imfs)},
    )


def eemd(signal, cfg: SiftConfig = SiftConfig(), *, start_year: int = 0) -> ModeMatrix:
    """Ensemble EMD: average the IMFs of noise-perturbed copies of the signal.

    Each realization adds white noise with SD ``noise_amplitude * SD(signal)``
    drawn from a generator seeded with ``cfg.seed``. IMF sets are zero-padded
    to the largest count before averaging, and the residue is taken as the
    signal minus the averaged IMFs so the reconstruction stays exact.
    """
    x = _check_signal(signal)
    if cfg.ensemble_size < 2:
        raise ConfigError("eemd needs ensemble_size >= 2")
    if cfg.noise_amplitude == 0:
        # every realization is the noise-free signal
        m = emd(x, cfg, start_year=start_year)
        return ModeMatrix(m.start_year, m.modes, m.labels, "eemd", dict(m.meta))
    rng = np.random.default_rng(cfg.seed)
    sigma = cfg.noise_amplitude * float(np.std(x))
    runs = []
    for _ in range(cfg.ensemble_size):
        imfs, _ = _emd_imfs(x + sigma * rng.standard_normal(x.size), cfg)
        runs.append(imfs)
    n_imfs = max(len(r) for r in runs)
    total = np.zeros((n_imfs, x.size))
    for imfs in runs:
        for j, imf in enumerate(imfs):
            total[j] += imf
    mean_imfs = total / cfg.ensemble_size
    residue = x - mean_imfs.sum(axis=0)
    return ModeMatrix(
        start_year=start_year,
        modes=np.vstack([mean_imfs, residue]),
        labels=_imf_labels(n_imfs),
        decomposer_id="eemd",
        meta={"n_imfs": n_imfs, "seed": cfg.seed},
    )


def pad_modes(m: ModeMatrix, n_imfs: int) -> ModeMatrix:
    """Zero-pad (in mode index) to exactly ``n_imfs`` IMFs before the residue."""
    have = m.k - 1
    if have > n_imfs:
        raise DataError(f"{have} IMFs exceed the requested {n_imfs}")
    pad = np.zeros((n_imfs - have, m.n))
    modes = np.vstack([m.modes[:-1], pad, m.modes[-1:]])
    return ModeMatrix(m.start_year, modes, _imf_labels(n_imfs), m.decomposer_id, dict(m.meta))


@dataclass(frozen=True)
class EmdDecomposer:
    """EMD/EEMD with a fixed column count: ``max_imfs`` IMF slots plus the residue.

    Fronts that yield fewer IMFs get zero columns so all rows share ``k``.
    """

    cfg: SiftConfig = SiftConfig()
    ensemble: bool = False

    @property
    def kind(self) -> str:
        return "eemd" if self.ensemble else "emd"

    @property
    def k(self) -> int:
        return self.cfg.max_imfs + 1

    @property
    def id(self) -> str:
        c = self.cfg
        if self.ensemble:
            return f"eemd(max_imfs={c.max_imfs},ensemble={c.ensemble_size},noise={c.noise_amplitude:g},seed={c.seed})"
        return f"emd(max_imfs={c.max_imfs},sd={c.sift_sd_threshold:g})"

    @property
    def min_length(self) -> int:
        return 8

    def labels(self) -> tuple[str, ...]:
        return _imf_labels(self.cfg.max_imfs)

    def params(self) -> dict:
        return {"kind": self.kind, **asdict(self.cfg)}

    def __call__(self, values, start_year: int = 0) -> ModeMatrix:
        fn = eemd if self.ensemble else emd
        return pad_modes(fn(values, self.cfg, start_year=start_year), self.cfg.max_imfs)
