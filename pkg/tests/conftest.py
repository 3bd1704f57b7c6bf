import numpy as np
import pytest

from mfcast.framing import SplitSpec
from mfcast.lstm import TrainConfig
from mfcast.pipeline import PipelineConfig
from mfcast.series import TimeSeries, write_csv


def sinusoid_series(n=152, start=1871, seed=7):
    """The synthetic benchmark: two tones plus Gaussian noise."""
    rng = np.random.default_rng(seed)
    t = np.arange(n)
    values = 850 + 60 * np.sin(2 * np.pi * t / 11) + 40 * np.sin(2 * np.pi * t / 3.6) + rng.normal(0, 15, n)
    return TimeSeries(start, values)


@pytest.fixture
def small_series():
    return sinusoid_series(n=60, start=1900, seed=3)


@pytest.fixture
def small_config():
    return PipelineConfig(
        warmup_year=1915,
        k=3,
        lag=3,
        split=SplitSpec((1900, 1940), (1941, 1950), (1951, 1959)),
        train=TrainConfig(hidden_dim=4, learning_rate=0.01, max_epochs=30, patience=10, n_runs=2),
    )


@pytest.fixture
def small_csv(tmp_path, small_series):
    p = tmp_path / "series.csv"
    write_csv(small_series, p)
    return p


# (sort key, line) per acceptance criterion, printed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)
