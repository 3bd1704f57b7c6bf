import csv
import json

import numpy as np
import pytest

from mfcast import cli
from mfcast.cli import main
from mfcast.errors import TrainingDiverged
from mfcast.moving_front import read_endpoint_matrix
from mfcast.pipeline import read_phase_csv

SMALL = [
    "--warmup-year", "1915", "--k", "3", "--lag", "3",
    "--train-range", "1900-1940", "--test-range", "1941-1950", "--forecast-range", "1951-1959",
    "--hidden", "4", "--lr", "0.01", "--max-epochs", "20", "--patience", "5", "--n-runs", "2",
]  # fmt: skip


class TestExitCodes:
    def test_missing_data_file(self, tmp_path, capsys):
        assert main(["stats", str(tmp_path / "none.csv")]) == 3
        assert "not found" in capsys.readouterr().err

    def test_malformed_data(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("year,value\n1901,1\n1903,2\n")
        assert main(["stats", str(p)]) == 3

    def test_bad_config_value(self, small_csv, tmp_path):
        assert main(["train", "--data", str(small_csv), *SMALL, "--lag", "0", "--out", str(tmp_path / "o")]) == 2

    def test_bad_config_file(self, small_csv, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"no_such_option": 1}))
        assert main(["train", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2

    def test_argparse_error_is_two(self):
        with pytest.raises(SystemExit) as exc:
            main(["decompose"])
        assert exc.value.code == 2

    def test_numeric_failure_is_four(self, small_csv, tmp_path, capsys, monkeypatch):
        # saturating gates keep the loss finite, so force the failure at the training step
        def diverge(cfg):
            raise TrainingDiverged("epoch 3: non-finite weights")

        monkeypatch.setattr(cli, "run_train_test", diverge)
        assert main(["train", "--data", str(small_csv), *SMALL, "--out", str(tmp_path / "o")]) == 4
        assert "TrainingDiverged" in capsys.readouterr().err


class TestCommands:
    def test_stats(self, small_csv, capsys):
        assert main(["stats", str(small_csv), "--format", "csv"]) == 0
        rows = list(csv.reader(capsys.readouterr().out.splitlines()))
        assert "count" in rows[0] and rows[1][rows[0].index("count")] == "60"

    def test_decompose_and_plot(self, small_csv, tmp_path):
        out, svg = tmp_path / "modes.csv", tmp_path / "modes.svg"
        assert main(["decompose", str(small_csv), "--k", "4", "--out", str(out), "--plot", str(svg)]) == 0
        assert out.read_text().splitlines()[0] == "year,residue,WL1,WL2,WL3"
        assert svg.read_text().lstrip().startswith("<?xml")
        assert main(["plot", "modes", str(out), "--out", str(tmp_path / "again.svg")]) == 0

    def test_build_and_extend(self, small_series, tmp_path):
        from mfcast.series import write_csv

        short, full = tmp_path / "short.csv", tmp_path / "full.csv"
        write_csv(small_series.through(1940), short)
        write_csv(small_series, full)
        a, b, c = tmp_path / "a.csv", tmp_path / "b.csv", tmp_path / "c.csv"
        assert main(["build-mf", str(short), "--k", "3", "--warmup-year", "1915", "--out", str(a)]) == 0
        assert main(["build-mf", str(full), "--extend", str(a), "--out", str(b)]) == 0
        assert main(["build-mf", str(full), "--k", "3", "--warmup-year", "1915", "--out", str(c)]) == 0
        assert np.array_equal(read_endpoint_matrix(b).rows, read_endpoint_matrix(c).rows)

    def test_leak_demo(self, small_csv, tmp_path, capsys):
        out = tmp_path / "leak.csv"
        assert main(["leak-demo", str(small_csv), "--front", "1930", "--k", "4", "--component", "WL3", "--out", str(out)]) == 0
        text = capsys.readouterr().out
        assert "component: WL3" in text and "num_changed" in text
        assert len(out.read_text().splitlines()) == 32

    def test_train_finalize_forecast_wfv(self, small_csv, tmp_path, capsys):
        data = ["--data", str(small_csv)]
        assert main(["train", *data, *SMALL, "--out", str(tmp_path / "train")]) == 0
        assert (tmp_path / "train" / "predictions_test.csv").is_file()
        assert main(["finalize", *data, *SMALL, "--out", str(tmp_path / "model")]) == 0
        assert main(["forecast", "--model", str(tmp_path / "model"), "--out", str(tmp_path / "fc")]) == 0
        assert main(["wfv", "--model", str(tmp_path / "model"), "--out", str(tmp_path / "wfv")]) == 0
        assert "next year 1960" in capsys.readouterr().out
        _, _, batch = read_phase_csv(tmp_path / "fc" / "predictions_forecast_batch.csv")
        _, _, walk = read_phase_csv(tmp_path / "wfv" / "predictions_wfv_no_retrain.csv")
        assert np.array_equal(batch, walk)
        assert main(["plot", "predictions", str(tmp_path / "fc" / "predictions_forecast_batch.csv"), "--out", str(tmp_path / "p.svg")]) == 0

    def test_compare_with_import(self, small_csv, tmp_path, capsys):
        modes = tmp_path / "imp.csv"
        assert main(["decompose", str(small_csv), "--method", "emd", "--out", str(modes)]) == 0
        out = tmp_path / "profile.csv"
        argv = ["compare", str(small_csv), "--k", "4", "--methods", "ewt", "--import", f"ceemdan={modes}", "--out", str(out), "--plot", str(tmp_path / "sd.svg")]
        assert main(argv) == 0
        assert "ceemdan: flatness=" in capsys.readouterr().out
        assert main(["compare", str(small_csv), "--import", "nopath"]) == 2
