import csv
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mfcast.errors import ConfigError, DataError
from mfcast.framing import SplitSpec, SupervisedSet, frame, last_window, split, write_supervised_csv


def _matrix(n, k=2, start=2000, seed=0):
    rng = np.random.default_rng(seed)
    rows = rng.normal(size=(n, k))
    return SimpleNamespace(rows=rows, targets=rows.sum(axis=1), years=np.arange(start, start + n))


class TestFrame:
    def test_ten_rows_lag_three(self):
        e = _matrix(10)
        s = frame(e, 3)
        assert len(s) == 7
        assert s.inputs.shape == (7, 3, 2)
        assert list(s.target_years) == list(range(2003, 2010))

    def test_window_contents(self):
        e = _matrix(10)
        s = frame(e, 3)
        for j, y in enumerate(s.target_years):
            i = y - 2000
            assert np.array_equal(s.inputs[j], e.rows[i - 3 : i])
            assert s.targets[j] == e.targets[i]

    @given(st.integers(2, 40), st.integers(1, 8), st.integers(0, 1000))
    @settings(max_examples=50)
    def test_strictly_causal(self, n, lag, seed):
        if lag >= n:
            return
        e = _matrix(n, seed=seed)
        s = frame(e, lag)
        assert len(s) == n - lag
        for j, y in enumerate(s.target_years):
            i = y - 2000
            # the target-year row never appears in its own window
            assert not any(np.array_equal(w, e.rows[i]) for w in s.inputs[j])

    def test_constant_matrix(self):
        e = SimpleNamespace(rows=np.ones((6, 3)), targets=np.full(6, 3.0), years=np.arange(6))
        s = frame(e, 2)
        assert np.all(s.inputs == 1.0) and np.all(s.targets == 3.0)

    def test_lag_too_large(self):
        with pytest.raises(DataError):
            frame(_matrix(4), 4)

    def test_lag_zero(self):
        with pytest.raises(ConfigError):
            frame(_matrix(4), 0)


class TestSplit:
    def test_routes_by_target_year(self):
        s = frame(_matrix(30, start=1990), 4)
        spec = SplitSpec((1990, 2005), (2006, 2012), (2013, 2019))
        tr, te, fc = split(s, spec)
        assert tr.target_years[0] == 1994 and tr.target_years[-1] == 2005
        assert list(te.target_years) == list(range(2006, 2013))
        assert list(fc.target_years) == list(range(2013, 2020))

    def test_empty_forecast(self):
        s = frame(_matrix(20, start=1990), 2)
        _, _, fc = split(s, SplitSpec((1990, 2000), (2001, 2009)))
        assert len(fc) == 0 and fc.inputs.shape[1:] == (2, 2)

    def test_uncovered_test_year(self):
        s = frame(_matrix(20, start=1990), 2)
        with pytest.raises(DataError, match="not covered"):
            split(s, SplitSpec((1990, 2000), (2001, 2012)))

    def test_train_end_missing(self):
        s = frame(_matrix(10, start=1990), 4)
        with pytest.raises(DataError):
            split(s, SplitSpec((1980, 1992), (1993, 1999)))

    @pytest.mark.parametrize(
        "train, test, forecast",
        [((2000, 1990), (2001, 2005), None), ((1990, 2000), (2000, 2005), None), ((1990, 2000), (2002, 2005), None), ((1990, 2000), (2001, 2005), (2005, 2007))],
    )
    def test_bad_spec(self, train, test, forecast):
        with pytest.raises(ConfigError):
            SplitSpec(train, test, forecast)

    def test_spec_dict_roundtrip(self):
        spec = SplitSpec.paper()
        assert SplitSpec.from_dict(spec.as_dict()) == spec
        assert spec.final_train == (1901, 1999)


class TestSupervisedSet:
    def test_tail(self):
        s = frame(_matrix(25), 3)
        head, tail = s.tail(0.1)
        assert len(tail) == 2 and len(head) == 20
        assert tail.target_years[0] == head.target_years[-1] + 1

    def test_tail_at_least_one(self):
        _, tail = frame(_matrix(5), 2).tail(0.01)
        assert len(tail) == 1

    def test_concat(self):
        s = frame(_matrix(12), 2)
        a, b = s.tail(0.5)
        c = SupervisedSet.concat(a, b)
        assert np.array_equal(c.inputs, s.inputs) and np.array_equal(c.target_years, s.target_years)

    def test_shape_check(self):
        with pytest.raises(DataError):
            SupervisedSet(np.zeros((3, 2)), np.zeros(3), np.arange(3))


class TestLastWindow:
    def test_matches_frame(self):
        e = _matrix(12)
        s = frame(e, 4)
        longer = SimpleNamespace(rows=np.vstack([e.rows, np.zeros((1, 2))]), targets=np.append(e.targets, 0.0), years=np.arange(2000, 2013))
        assert np.array_equal(last_window(e, 4), frame(longer, 4).inputs[-1])
        assert np.array_equal(last_window(SimpleNamespace(rows=e.rows[:-1]), 4), s.inputs[-1])

    def test_too_short(self):
        with pytest.raises(DataError):
            last_window(_matrix(3), 4)


def test_supervised_csv(tmp_path):
    s = frame(_matrix(6, k=2), 2)
    p = tmp_path / "sup.csv"
    write_supervised_csv(s, p)
    with p.open() as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["c1_t-2", "c2_t-2", "c1_t-1", "c2_t-1", "target", "target_year"]
    assert len(rows) == 5
    assert float(rows[1][2]) == s.inputs[0, 1, 0]
    assert int(rows[-1][-1]) == 2005
