import warnings

import numpy as np
import pytest

from mfcast.errors import ConfigError, DataError
from mfcast.ewt import EwtDecomposer
from mfcast.moving_front import (
    build_endpoint_matrix,
    extend_endpoint_matrix,
    leak_demo,
    make_decomposer,
    read_endpoint_matrix,
    write_endpoint_matrix,
)
from mfcast.series import TimeSeries


def _series(n, seed=0, start=1900):
    rng = np.random.default_rng(seed)
    t = np.arange(n)
    return TimeSeries(start, 800 + 50 * np.sin(2 * np.pi * t / 9) + rng.normal(0, 20, n))


class TestBuild:
    def test_shape_and_years(self):
        ts = _series(50)
        e = build_endpoint_matrix(ts, k=4)
        assert e.warmup_year == 1930
        assert e.rows.shape == (20, 4)
        assert list(e.years) == list(range(1930, 1950))
        assert np.array_equal(e.targets, ts.values[30:])

    def test_rows_sum_to_targets(self):
        e = build_endpoint_matrix(_series(60, seed=3), warmup_year=1920, k=5)
        assert np.all(np.abs(e.rows.sum(axis=1) - e.targets) <= 1e-6 * np.abs(e.targets))

    def test_prefix_rows_bit_identical(self):
        ts = _series(55, seed=1)
        full = build_endpoint_matrix(ts, warmup_year=1915, k=4)
        part = build_endpoint_matrix(ts.through(1940), warmup_year=1915, k=4)
        assert np.array_equal(part.rows, full.rows[: part.n_rows])

    def test_future_perturbation_leaves_past(self):
        ts = _series(45, seed=2)
        values = ts.values.copy()
        values[40:] += 500.0
        e1 = build_endpoint_matrix(ts, warmup_year=1915, k=4)
        e2 = build_endpoint_matrix(TimeSeries(1900, values), warmup_year=1915, k=4)
        assert np.array_equal(e1.through(1939).rows, e2.through(1939).rows)
        assert not np.array_equal(e1.row(1940), e2.row(1940))

    def test_through(self):
        e = build_endpoint_matrix(_series(40), warmup_year=1920, k=3)
        sub = e.through(1925)
        assert sub.end_year == 1925 and sub.source_values.size == 26
        with pytest.raises(DataError):
            e.through(1919)

    def test_warmup_too_short(self):
        with pytest.raises(DataError, match="shorter"):
            build_endpoint_matrix(_series(40), warmup_year=1902, k=9)

    def test_warmup_after_end(self):
        with pytest.raises(DataError):
            build_endpoint_matrix(_series(20), warmup_year=1950, k=3)

    def test_k_conflict(self):
        with pytest.raises(ConfigError):
            build_endpoint_matrix(_series(40), k=3, decomposer=EwtDecomposer(n_modes=4))

    def test_emd_decomposer(self):
        d = make_decomposer("emd", k=4)
        e = build_endpoint_matrix(_series(40), warmup_year=1925, decomposer=d)
        assert e.k == 4
        assert np.allclose(e.rows.sum(axis=1), e.targets, rtol=1e-6)

    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            make_decomposer("ceemdan")


class TestExtend:
    def test_equals_full_build(self):
        ts = _series(50, seed=4)
        full = build_endpoint_matrix(ts, warmup_year=1920, k=4)
        part = build_endpoint_matrix(ts.through(1935), warmup_year=1920, k=4)
        ext = extend_endpoint_matrix(part, ts)
        assert np.array_equal(ext.rows, full.rows)
        assert np.array_equal(ext.rows[: part.n_rows], part.rows)

    def test_no_new_years(self):
        ts = _series(40)
        e = build_endpoint_matrix(ts, warmup_year=1920, k=3)
        assert extend_endpoint_matrix(e, ts) is e

    def test_tampered_history(self):
        ts = _series(40)
        e = build_endpoint_matrix(ts.through(1930), warmup_year=1920, k=3)
        values = ts.values.copy()
        values[5] += 1.0
        with pytest.raises(DataError, match="disagrees"):
            extend_endpoint_matrix(e, TimeSeries(1900, values))


class TestLeakDemo:
    def test_noisy_series_leaks(self):
        r = leak_demo(_series(60, seed=5), 1940, component="WL3", k=4)
        assert r.max_change > 0 and r.num_changed > 0
        assert r.years.size == 41 and r.changes.size == 41

    def test_constant_series(self):
        r = leak_demo(TimeSeries(1871, np.full(60, 850.0)), 1901, component="WL8")
        assert r.max_change <= 1e-10
        assert r.num_changed == 0

    def test_unknown_component(self):
        with pytest.raises(ConfigError):
            leak_demo(_series(40), 1930, component="IMF1", k=3)

    def test_front_at_end(self):
        with pytest.raises(DataError):
            leak_demo(_series(40), 1939, k=3)


class TestPersistence:
    def test_roundtrip_and_extend(self, tmp_path):
        ts = _series(45, seed=6)
        e = build_endpoint_matrix(ts.through(1935), warmup_year=1920, k=4)
        p = tmp_path / "mf.csv"
        write_endpoint_matrix(e, p)
        back = read_endpoint_matrix(p)
        assert np.array_equal(back.rows, e.rows) and np.array_equal(back.targets, e.targets)
        assert back.decomposer_id == e.decomposer_id
        assert np.array_equal(extend_endpoint_matrix(back, ts).rows, build_endpoint_matrix(ts, warmup_year=1920, k=4).rows)

    def test_missing_sidecar(self, tmp_path):
        e = build_endpoint_matrix(_series(35), warmup_year=1925, k=3)
        p = tmp_path / "mf.csv"
        write_endpoint_matrix(e, p)
        p.with_suffix(".json").unlink()
        with pytest.raises(DataError, match="sidecar"):
            read_endpoint_matrix(p)

    def test_malformed_row(self, tmp_path):
        e = build_endpoint_matrix(_series(35), warmup_year=1925, k=3)
        p = tmp_path / "mf.csv"
        write_endpoint_matrix(e, p)
        lines = p.read_text().splitlines()
        lines[2] = lines[2].replace(",", ",x", 1)
        p.write_text("\n".join(lines) + "\n")
        with pytest.raises(DataError, match="row 3"):
            read_endpoint_matrix(p)
