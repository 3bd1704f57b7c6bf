"""Leak-free moving-front decomposition (EWT/EMD) feeding an LSTM forecaster."""

from .errors import ConfigError, DataError, MfcastError, NumericError, TrainingDiverged
from .series import TimeSeries, compute_metrics, descriptive_stats, load_csv

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DataError",
    "MfcastError",
    "NumericError",
    "TrainingDiverged",
    "TimeSeries",
    "compute_metrics",
    "descriptive_stats",
    "load_csv",
]
