import csv
import json
from dataclasses import replace

import numpy as np
import pytest

from mfcast.errors import ConfigError, DataError
from mfcast.framing import SplitSpec
from mfcast.modes import ModeMatrix
from mfcast.pipeline import (
    PipelineConfig,
    compare_decomposers,
    finalize_model,
    forecast_batch,
    load_forecaster,
    prepare,
    read_phase_csv,
    run_all,
    save_forecaster,
    wfv_no_retrain,
    wfv_retrain,
    write_profile_csv,
    write_report,
)
from mfcast.series import TimeSeries


class TestConfig:
    def test_json_roundtrip_keeps_hash(self, small_config):
        back = PipelineConfig.from_json(small_config.to_json())
        assert back == small_config
        assert back.hash() == small_config.hash()

    def test_hash_changes_with_any_field(self, small_config):
        assert replace(small_config, lag=4).hash() != small_config.hash()
        assert replace(small_config, train=replace(small_config.train, seed=1)).hash() != small_config.hash()

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="unknown"):
            PipelineConfig.from_dict({"lags": 3})

    def test_bad_json(self):
        with pytest.raises(ConfigError):
            PipelineConfig.from_json("{not json")

    def test_bad_decomposer(self):
        with pytest.raises(ConfigError):
            PipelineConfig(decomposer="wavelet")


class TestPrepare:
    def test_scalers_from_train_range_only(self, small_config, small_series):
        ws = prepare(small_config, small_series)
        assert ws.train.target_years[-1] == 1940
        assert ws.y_scaler.mean == pytest.approx(ws.train.targets.mean(), rel=1e-15)
        flat = ws.train.inputs.reshape(-1, 3)
        assert np.allclose(ws.x_mean, flat.mean(axis=0))

    def test_future_perturbation_leaves_training_frame(self, small_config, small_series):
        values = small_series.values.copy()
        values[-5:] += 300.0
        a = prepare(small_config, small_series)
        b = prepare(small_config, TimeSeries(small_series.start_year, values))
        assert np.array_equal(a.train.inputs, b.train.inputs)
        assert np.array_equal(a.test.inputs, b.test.inputs)
        assert np.array_equal(a.x_mean, b.x_mean) and a.y_scaler == b.y_scaler

    def test_uncovered_forecast(self, small_config, small_series):
        cfg = replace(small_config, split=SplitSpec((1900, 1940), (1941, 1950), (1951, 1965)))
        with pytest.raises(DataError):
            prepare(cfg, small_series)


class TestWalkForward:
    def test_batch_equals_no_retrain_bit_exact(self, small_config, small_series):
        ws = prepare(small_config, small_series)
        f = finalize_model(small_config, ws=ws)
        batch = forecast_batch(f, ws.forecast)
        walk = wfv_no_retrain(f, ws.e, small_config.split)
        assert np.array_equal(batch.years, walk.years)
        assert np.array_equal(batch.predicted, walk.predicted)

    def test_zero_learning_rate_retrain_equals_no_retrain(self, small_config, small_series):
        ws = prepare(small_config, small_series)
        f = finalize_model(small_config, ws=ws)
        cfg0 = replace(small_config, train=replace(small_config.train, learning_rate=0.0))
        walk = wfv_no_retrain(f, ws.e, small_config.split)
        retrained = wfv_retrain(cfg0, ws=ws, final=f)
        assert np.array_equal(retrained.predicted, walk.predicted)

    def test_retrain_changes_predictions(self, small_config, small_series):
        ws = prepare(small_config, small_series)
        f = finalize_model(small_config, ws=ws)
        retrained = wfv_retrain(small_config, ws=ws, final=f)
        walk = wfv_no_retrain(f, ws.e, small_config.split)
        # the first year uses the final model in both
        assert retrained.predicted[0] == walk.predicted[0]
        assert not np.array_equal(retrained.predicted[1:], walk.predicted[1:])

    def test_open_ended_forecast_has_no_metrics(self, small_config, small_series):
        cfg = replace(small_config, split=SplitSpec((1900, 1940), (1941, 1959), (1960, 1960)))
        ws = prepare(replace(cfg, split=SplitSpec((1900, 1940), (1941, 1959))), small_series)
        f = finalize_model(cfg, ws=ws)
        r = wfv_no_retrain(f, ws.e, cfg.split)
        assert list(r.years) == [1960] and np.isnan(r.observed[0]) and r.metrics is None


class TestReport:
    def test_written_files_agree(self, small_config, small_series, tmp_path):
        report = run_all(small_config, small_series)
        assert set(report.phases) == {"train", "test", "forecast_batch", "wfv_no_retrain", "wfv_retrain"}
        d = write_report(report, tmp_path / "out")
        with (d / "metrics.csv").open() as fh:
            rows = {r["phase"]: r for r in csv.DictReader(fh)}
        for name, phase in report.phases.items():
            years, obs, pred = read_phase_csv(d / f"predictions_{name}.csv")
            assert np.array_equal(pred, phase.predicted) and np.array_equal(years, phase.years)
            sd = obs.std()
            rmse = np.sqrt(np.mean((pred - obs) ** 2))
            assert float(rows[name]["pp"]) == pytest.approx(1 - (rmse / sd) ** 2, rel=1e-9, abs=1e-12)
        meta = json.loads((d / "report.json").read_text())
        assert meta["config_hash"] == small_config.hash()

    def test_forecaster_roundtrip(self, small_config, small_series, tmp_path):
        ws = prepare(small_config, small_series)
        f = finalize_model(small_config, ws=ws, path=tmp_path / "model")
        g = load_forecaster(tmp_path / "model")
        assert np.array_equal(f.predict(ws.forecast.inputs), g.predict(ws.forecast.inputs))
        save_forecaster(g, tmp_path / "again")
        assert (tmp_path / "model" / "forecaster.json").read_text() == (tmp_path / "again" / "forecaster.json").read_text()

    def test_missing_forecaster(self, tmp_path):
        with pytest.raises(DataError):
            load_forecaster(tmp_path)


class TestCompare:
    def test_constant_series_all_zero(self):
        rows = compare_decomposers(TimeSeries(1900, np.full(40, 5.0)), k=4, kinds=("ewt", "emd"))
        for r in rows:
            assert all(v <= 1e-9 for v in r.sds)

    def test_imported(self, small_series, tmp_path):
        modes = np.vstack([small_series.values - small_series.values.mean(), np.full(len(small_series), small_series.values.mean())])
        imp = ModeMatrix(small_series.start_year, modes, ("IMF1", "residue"))
        rows = compare_decomposers(small_series, k=4, kinds=("ewt",), imported={"ceemdan": imp})
        assert [r.decomposer for r in rows] == ["ewt", "ceemdan"]
        assert rows[1].sds[0] == pytest.approx(small_series.values.std())
        write_profile_csv(rows, tmp_path / "p.csv")
        assert (tmp_path / "p.csv").read_text().count("\n") == 3

    def test_imported_length_mismatch(self, small_series):
        imp = ModeMatrix(1900, np.zeros((2, 10)), ("IMF1", "residue"))
        with pytest.raises(DataError):
            compare_decomposers(small_series, kinds=(), imported={"x": imp})
