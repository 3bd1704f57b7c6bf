"""SVG line plots: observed vs predicted, mode panels, SD profiles, leak traces."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed metadata keeps the SVG bytes stable across runs
_SVG_META = {"Date": None, "Creator": None}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path, format="svg", metadata=_SVG_META)
    plt.close(fig)
    return path


def plot_predictions(years, observed, predicted, path, title: str = "") -> Path:
    fig, ax = plt.subplots(figsize=(8, 3.5))
    ax.plot(years, observed, "k-o", ms=3, lw=1, label="observed")
    ax.plot(years, predicted, "r-s", ms=3, lw=1, label="predicted")
    ax.set_xlabel("year")
    ax.set_title(title)
    ax.legend(loc="best")
    fig.tight_layout()
    return _save(fig, path)


def plot_modes(m, path, title: str = "") -> Path:
    """One stacked panel per mode, signal on top."""
    fig, axes = plt.subplots(m.k + 1, 1, figsize=(8, 1.2 * (m.k + 1)), sharex=True)
    axes[0].plot(m.years, m.reconstruct(), "k-", lw=1)
    axes[0].set_ylabel("signal", rotation=0, ha="right")
    for ax, label, row in zip(axes[1:], m.labels, m.modes):
        ax.plot(m.years, row, lw=1)
        ax.set_ylabel(label, rotation=0, ha="right")
    axes[0].set_title(title)
    axes[-1].set_xlabel("year")
    fig.tight_layout()
    return _save(fig, path)


def plot_sd_profiles(rows, path) -> Path:
    """SD of each mode per decomposer, with the signal SD as a dashed line."""
    fig, ax = plt.subplots(figsize=(7, 3.5))
    for r in rows:
        ax.plot(np.arange(1, len(r.sds) + 1), r.sds, "-o", ms=3, label=f"{r.decomposer} (flatness {r.flatness:.2f})")
    if rows:
        ax.axhline(rows[0].signal_sd, color="k", ls="--", lw=1, label="signal SD")
    ax.set_xlabel("mode index")
    ax.set_ylabel("SD")
    ax.legend(loc="best", fontsize="small")
    fig.tight_layout()
    return _save(fig, path)


def plot_leak(report, path) -> Path:
    fig, ax = plt.subplots(figsize=(8, 3.5))
    ax.plot(report.years, report.before, "b-", lw=1, label=f"through {report.front_year}")
    ax.plot(report.years[: len(report.after)], report.after[: len(report.years)], "r--", lw=1, label=f"through {report.front_year + 1}")
    ax.set_title(f"{report.component}: max change {report.max_change:.3g}")
    ax.set_xlabel("year")
    ax.legend(loc="best")
    fig.tight_layout()
    return _save(fig, path)
