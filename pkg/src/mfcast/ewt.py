"""Empirical wavelet transform with a user-chosen number of modes.

The spectrum is segmented at midpoints between its largest local maxima and
a Meyer-type filterbank is built on those segments. Filters form a partition
of unity (they sum to one at every frequency), so the modes add back up to
the input exactly, up to rounding.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError
from .modes import ModeMatrix

DEFAULT_GAMMA = 0.2


class ModeReductionWarning(UserWarning):
    """Fewer spectral maxima than requested modes; the mode count was lowered."""


class GammaShrunkWarning(UserWarning):
    """Transition ratio lowered so that neighbouring transition bands do not overlap."""


@dataclass(frozen=True, eq=False)
class Filterbank:
    boundaries: np.ndarray
    gamma: float
    filters: np.ndarray
    convention: str = "partition"

    @property
    def k(self) -> int:
        return self.filters.shape[0]

    def completeness(self) -> np.ndarray:
        """Per-bin sum that the convention requires to be exactly one."""
        if self.convention == "tight":
            return np.sum(self.filters**2, axis=0)
        return np.sum(self.filters, axis=0)


def meyer_beta(x):
    """Quartic Meyer transition polynomial, clamped to [0, 1] outside the unit interval."""
    x = np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0)
    return x**4 * (35.0 - 84.0 * x + 70.0 * x**2 - 20.0 * x**3)


def _lowpass_step(abs_w: np.ndarray, boundary: float, gamma: float) -> np.ndarray:
    # 1 below (1-gamma)*boundary, 0 above (1+gamma)*boundary
    lo = (1.0 - gamma) * boundary
    hi = (1.0 + gamma) * boundary
    x = (abs_w - lo) / (2.0 * gamma * boundary)
    out = np.cos(0.5 * np.pi * meyer_beta(x)) ** 2
    out[abs_w <= lo] = 1.0
    out[abs_w >= hi] = 0.0
    return out


def filter_responses(abs_w, boundaries, gamma: float) -> np.ndarray:
    """Partition-of-unity responses, shape ``(len(boundaries) + 1, len(abs_w))``.

    Band ``j`` is the difference of consecutive low-pass steps, so the bank
    telescopes to one at every frequency.
    """
    abs_w = np.abs(np.asarray(abs_w, dtype=np.float64))
    steps = [_lowpass_step(abs_w, b, gamma) for b in boundaries]
    bank = np.empty((len(steps) + 1, abs_w.size))
    prev = np.zeros_like(abs_w)
    for j, step in enumerate(steps):
        bank[j] = step - prev
        prev = step
    bank[-1] = 1.0 - prev
    return bank


def admissible_gamma(boundaries) -> float:
    """Supremum of transition ratios for which no two transition bands overlap."""
    b = np.asarray(boundaries, dtype=np.float64)
    if b.size == 0:
        return 1.0
    ratios = list((b[1:] - b[:-1]) / (b[1:] + b[:-1]))
    ratios.append((np.pi - b[-1]) / (np.pi + b[-1]))
    return float(min(1.0, min(ratios)))


def _check_boundaries(boundaries) -> np.ndarray:
    b = np.asarray(boundaries, dtype=np.float64).ravel()
    if b.size and (np.any(b <= 0) or np.any(b >= np.pi)):
        raise ConfigError("boundaries must lie strictly inside (0, pi)")
    if np.any(np.diff(b) <= 0):
        raise ConfigError("boundaries must be strictly increasing")
    return b


def _resolve_gamma(boundaries: np.ndarray, gamma: float, grid_length: int) -> float:
    if not 0 < gamma < 1:
        raise ConfigError(f"gamma must lie in (0, 1), got {gamma}")
    bound = admissible_gamma(boundaries)
    if gamma >= bound:
        shrunk = bound * (1.0 - 1.0 / max(grid_length, 2))
        warnings.warn(
            f"gamma {gamma:g} makes transition bands overlap; using {shrunk:.6g}",
            GammaShrunkWarning,
            stacklevel=3,
        )
        return shrunk
    return float(gamma)


def build_filterbank(boundaries, signal_length: int, gamma: float = DEFAULT_GAMMA, convention: str = "partition") -> Filterbank:
    """Filterbank over the full FFT grid of a ``signal_length``-point signal.

    ``convention="tight"`` returns the square roots of the partition filters,
    which are the classic Meyer responses (their squares sum to one).
    """
    if convention not in ("partition", "tight"):
        raise ConfigError(f"unknown convention {convention!r}")
    if signal_length < 1:
        raise ConfigError("signal_length must be positive")
    b = _check_boundaries(boundaries)
    g = _resolve_gamma(b, gamma, signal_length) if b.size else float(gamma)
    abs_w = np.abs(2.0 * np.pi * np.fft.fftfreq(signal_length))
    bank = filter_responses(abs_w, b, g)
    if convention == "tight":
        bank = np.sqrt(np.clip(bank, 0.0, None))
    return Filterbank(boundaries=b, gamma=g, filters=bank, convention=convention)


def local_maxima(spectrum) -> np.ndarray:
    """Indices of strict interior local maxima."""
    s = np.asarray(spectrum, dtype=np.float64)
    if s.size < 3:
        return np.empty(0, dtype=int)
    return np.flatnonzero((s[1:-1] > s[:-2]) & (s[1:-1] > s[2:])) + 1


def detect_boundaries(spectrum, n_modes: int, signal_length: int | None = None) -> np.ndarray:
    """Boundaries midway between the ``n_modes`` largest local maxima.

    Args:
        spectrum: magnitude spectrum sampled on ``[0, pi]``.
        n_modes: requested number of bands.
        signal_length: FFT length the spectrum came from; bin ``i`` then sits
            at ``2*pi*i/signal_length``. If omitted the spectrum is taken to
            span ``[0, pi]`` inclusive.

    Returns:
        Ascending normalized frequencies, ``n_modes - 1`` of them unless the
        spectrum has too few maxima, in which case fewer are returned and a
        :class:`ModeReductionWarning` is issued. Equal maxima prefer the lower
        frequency.
    """
    s = np.asarray(spectrum, dtype=np.float64)
    if n_modes < 1:
        raise ConfigError("n_modes must be at least 1")
    if s.size < 4:
        raise DataError("spectrum needs at least 4 bins")
    if n_modes == 1:
        return np.empty(0)
    peaks = local_maxima(s)
    if peaks.size < n_modes:
        warnings.warn(
            f"spectrum has {peaks.size} local maxima; reducing modes from {n_modes} to {max(peaks.size, 1)}",
            ModeReductionWarning,
            stacklevel=2,
        )
    # stable sort on descending magnitude keeps the lower bin on ties
    order = np.argsort(-s[peaks], kind="stable")
    kept = np.sort(peaks[order[:n_modes]])
    mids = 0.5 * (kept[:-1] + kept[1:])
    scale = 2.0 * np.pi / signal_length if signal_length else np.pi / (s.size - 1)
    return mids * scale


def mirror_extend(x: np.ndarray, extension: int | None = None) -> tuple[np.ndarray, int]:
    """Symmetric extension adding ``extension`` samples split over both ends (default ``len(x)``)."""
    n = x.size
    ext = n if extension is None else int(extension)
    if ext < 0:
        raise ConfigError("extension must be non-negative")
    left = ext // 2
    return np.pad(x, (left, ext - left), mode="symmetric"), left


DETECTION_POLICIES = ("mirror", "raw")


def _detection_spectra(x: np.ndarray, extension: int | None, detection: str):
    centred = x - x.mean()
    mirrored, _ = mirror_extend(centred, extension)
    if detection == "mirror":
        # spectrum of the sequence that is actually filtered, interpolated by zero-padding
        for pad in (4, 8, 16):
            length = pad * mirrored.size
            yield np.abs(np.fft.rfft(mirrored, n=length)), length
        return
    # finest raw-signal resolution first; the mirrored signal doubles the lobe count for short inputs
    for pad in (1, 2, 4, 8):
        length = pad * centred.size
        yield np.abs(np.fft.rfft(centred, n=length)), length
    for pad in (1, 2):
        length = pad * mirrored.size
        yield np.abs(np.fft.rfft(mirrored, n=length)), length


def find_boundaries(signal, n_modes: int, extension: int | None = None, detection: str = "mirror") -> np.ndarray:
    """Boundary detection as used by :func:`ewt_decompose`.

    ``detection="mirror"`` reads peaks off the zero-padded spectrum of the
    mirror-extended signal. ``"raw"`` uses the spectrum of the signal itself
    and falls back to the mirrored one when it has too few peaks; it keeps a
    pure tone inside one band, whereas mirroring can split a tone whose phase
    does not match the reflection.
    """
    if detection not in DETECTION_POLICIES:
        raise ConfigError(f"detection must be one of {DETECTION_POLICIES}, got {detection!r}")
    x = np.asarray(signal, dtype=np.float64)
    if n_modes == 1:
        return np.empty(0)
    if np.ptp(x) == 0.0:
        # no oscillation anywhere: every non-residue band is empty, lay bands out evenly
        return np.pi * np.arange(1, n_modes) / n_modes
    best = None
    for spectrum, length in _detection_spectra(x, extension, detection):
        count = local_maxima(spectrum).size
        if count >= n_modes:
            best = (spectrum, length)
            break
        if best is None or count > local_maxima(best[0]).size:
            best = (spectrum, length)
    return detect_boundaries(best[0], n_modes, signal_length=best[1])


def mode_labels(k: int) -> tuple[str, ...]:
    return ("residue",) + tuple(f"WL{j}" for j in range(1, k))


def ewt_decompose(
    signal,
    n_modes: int,
    gamma: float = DEFAULT_GAMMA,
    *,
    start_year: int = 0,
    boundaries=None,
    extension: int | None = None,
    detection: str = "mirror",
) -> ModeMatrix:
    """Split ``signal`` into ``n_modes`` band-limited components.

    The lowest band is labelled ``residue`` and the rest ``WL1`` upwards in
    increasing frequency. Filtering is done on a mirror-extended copy of the
    signal which is cropped afterwards. Passing ``boundaries`` skips
    detection, which makes the transform linear in ``signal``; otherwise
    ``detection`` selects the spectrum searched for peaks (see
    :func:`find_boundaries`).

    If detection finds fewer spectral peaks than requested, fewer modes are
    returned; ``meta["requested_modes"]`` keeps the original request.
    """
    x = np.asarray(signal, dtype=np.float64).ravel()
    if n_modes < 1:
        raise ConfigError("n_modes must be at least 1")
    if x.size < max(2 * n_modes, 4):
        raise DataError(f"signal of length {x.size} too short for {n_modes} modes (need {max(2 * n_modes, 4)})")
    if not np.all(np.isfinite(x)):
        raise DataError("signal contains non-finite values")
    if boundaries is None:
        b = find_boundaries(x, n_modes, extension, detection)
    else:
        b = _check_boundaries(boundaries)
    extended, left = mirror_extend(x, extension)
    g = _resolve_gamma(b, gamma, extended.size) if b.size else float(gamma)
    spectrum = np.fft.rfft(extended)
    abs_w = 2.0 * np.pi * np.fft.rfftfreq(extended.size)
    bank = filter_responses(abs_w, b, g)
    modes = np.fft.irfft(bank * spectrum, n=extended.size, axis=-1)[:, left : left + x.size]
    k = b.size + 1
    return ModeMatrix(
        start_year=start_year,
        modes=modes,
        labels=mode_labels(k),
        decomposer_id=f"ewt(k={n_modes},gamma={gamma:g})",
        meta={
            "requested_modes": n_modes,
            "boundaries": tuple(float(v) for v in b),
            "gamma": g,
        },
    )


@dataclass(frozen=True)
class EwtDecomposer:
    """Configured EWT, usable wherever a decomposer callable is expected."""

    n_modes: int = 9
    gamma: float = DEFAULT_GAMMA
    extension: int | None = None
    detection: str = "mirror"

    kind = "ewt"

    @property
    def k(self) -> int:
        return self.n_modes

    @property
    def id(self) -> str:
        ext = "full" if self.extension is None else str(self.extension)
        return f"ewt(k={self.n_modes},gamma={self.gamma:g},extension={ext},detection={self.detection})"

    @property
    def min_length(self) -> int:
        return max(2 * self.n_modes, 4)

    def labels(self) -> tuple[str, ...]:
        return mode_labels(self.n_modes)

    def params(self) -> dict:
        return {"kind": self.kind, "n_modes": self.n_modes, "gamma": self.gamma, "extension": self.extension, "detection": self.detection}

    def __call__(self, values, start_year: int = 0) -> ModeMatrix:
        return ewt_decompose(values, self.n_modes, self.gamma, start_year=start_year, extension=self.extension, detection=self.detection)
