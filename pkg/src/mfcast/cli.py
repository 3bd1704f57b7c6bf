"""Command-line entry point: ``mfcast <subcommand> ...``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import sys
import warnings
from dataclasses import replace
from pathlib import Path


from . import plots
from .emd import SiftConfig, eemd, emd
from .errors import ConfigError, DataError, MfcastError
from .ewt import EwtDecomposer
from .framing import SplitSpec, last_window
from .lstm import TrainConfig
from .modes import read_mode_csv, write_mode_csv
from .moving_front import (
    build_endpoint_matrix,
    extend_endpoint_matrix,
    leak_demo,
    make_decomposer,
    read_endpoint_matrix,
    write_endpoint_matrix,
)
from .pipeline import (
    PipelineConfig,
    RunReport,
    compare_decomposers,
    finalize_model,
    forecast_batch,
    load_forecaster,
    prepare,
    read_phase_csv,
    run_train_test,
    wfv_no_retrain,
    wfv_retrain,
    write_phase_csv,
    write_profile_csv,
    write_report,
)
from .series import descriptive_stats, format_key_values, load_csv


def _year_range(text: str) -> tuple[int, int]:
    try:
        a, b = text.split("-")
        return int(a), int(b)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a year range like 1901-1980, got {text!r}") from None


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("pipeline configuration (flags override --config)")
    g.add_argument("--config", help="JSON file with PipelineConfig fields")
    g.add_argument("--data", dest="data_path", help="year,value CSV")
    g.add_argument("--warmup-year", type=int)
    g.add_argument("--k", type=int)
    g.add_argument("--gamma", type=float)
    g.add_argument("--detection", choices=("mirror", "raw"))
    g.add_argument("--lag", type=int)
    g.add_argument("--decomposer", choices=("ewt", "emd", "eemd"))
    g.add_argument("--train-range", type=_year_range)
    g.add_argument("--test-range", type=_year_range)
    g.add_argument("--forecast-range", type=_year_range)
    g.add_argument("--hidden", dest="hidden_dim", type=int)
    g.add_argument("--lr", dest="learning_rate", type=float)
    g.add_argument("--max-epochs", type=int)
    g.add_argument("--patience", type=int)
    g.add_argument("--batch-size", type=int)
    g.add_argument("--optimizer", choices=("adam", "sgd"))
    g.add_argument("--n-runs", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--candidate", choices=("tanh", "sigmoid"))
    g.add_argument("--bias", dest="use_bias", action="store_const", const=True)
    g.add_argument("--wfv-single", action="store_true", help="retrain one seeded model per WFV step instead of the whole ensemble")
    g.add_argument("--cold-start", action="store_true", help="retrain each WFV step from fresh weights")


_TRAIN_FLAGS = ("hidden_dim", "learning_rate", "max_epochs", "patience", "batch_size", "optimizer", "n_runs", "seed", "candidate", "use_bias")


def config_from_args(args) -> PipelineConfig:
    base = {}
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        base = PipelineConfig.from_json(path.read_text(encoding="utf-8")).as_dict()
    cfg = PipelineConfig.from_dict(base)
    top = {}
    for name in ("data_path", "warmup_year", "k", "gamma", "detection", "lag", "decomposer"):
        if getattr(args, name, None) is not None:
            top[name] = getattr(args, name)
    train = {n: getattr(args, n) for n in _TRAIN_FLAGS if getattr(args, n, None) is not None}
    if train:
        top["train"] = replace(cfg.train, **train)
    if args.train_range or args.test_range or args.forecast_range:
        top["split"] = SplitSpec(
            args.train_range or cfg.split.train,
            args.test_range or cfg.split.test,
            args.forecast_range or cfg.split.forecast,
        )
    if args.wfv_single:
        top["wfv_ensemble"] = False
    if args.cold_start:
        top["wfv_warm_start"] = False
    try:
        return replace(cfg, **top)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def _out_dir(path) -> Path:
    d = Path(path)
    d.mkdir(parents=True, exist_ok=True)
    return d


def cmd_stats(args) -> int:
    s = descriptive_stats(load_csv(args.data))
    if args.format == "csv":
        w = csv.writer(sys.stdout)
        d = s.as_dict()
        w.writerow(list(d))
        w.writerow(list(d.values()))
    else:
        print(format_key_values(s.as_dict()))
    return 0


def _decompose(ts, method: str, k: int, gamma: float, detection: str, seed: int):
    if method == "ewt":
        return EwtDecomposer(n_modes=k, gamma=gamma, detection=detection)(ts.values, ts.start_year)
    fn = eemd if method == "eemd" else emd
    return fn(ts.values, SiftConfig(seed=seed), start_year=ts.start_year)


def cmd_decompose(args) -> int:
    ts = load_csv(args.data)
    m = _decompose(ts, args.method, args.k, args.gamma, args.detection, args.seed)
    write_mode_csv(m, args.out)
    if args.plot:
        plots.plot_modes(m, args.plot, title=m.decomposer_id)
    print(f"wrote {m.k} modes ({', '.join(m.labels)}) to {args.out}")
    return 0


def cmd_build_mf(args) -> int:
    ts = load_csv(args.data)
    if args.extend:
        e = extend_endpoint_matrix(read_endpoint_matrix(args.extend), ts)
    else:
        dec = make_decomposer(args.decomposer, args.k, args.gamma, args.seed)
        if args.decomposer == "ewt":
            dec = replace(dec, detection=args.detection)
        e = build_endpoint_matrix(ts, args.warmup_year, decomposer=dec)
    write_endpoint_matrix(e, args.out)
    print(f"wrote {e.n_rows} endpoint rows ({int(e.years[0])}-{e.end_year}, k={e.k}) to {args.out}")
    return 0


def cmd_leak_demo(args) -> int:
    ts = load_csv(args.data)
    component = args.component
    if component.lstrip("-").isdigit():
        component = int(component)
    rep = leak_demo(ts, args.front, component=component, decomposer=EwtDecomposer(n_modes=args.k, detection=args.detection))
    print(
        format_key_values(
            {
                "component": rep.component,
                "fronts": f"{rep.front_year}->{rep.front_year + 1}",
                "max_change": rep.max_change,
                "num_changed": rep.num_changed,
                "interior_years": max(len(rep.years) - 2, 0),
            }
        )
    )
    if args.out:
        with Path(args.out).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["year", "before", "after", "change"])
            for row in zip(rep.years, rep.before, rep.after, rep.changes):
                w.writerow([int(row[0]), *(repr(float(v)) for v in row[1:])])
    if args.plot:
        plots.plot_leak(rep, args.plot)
    return 0


def _print_phases(report: RunReport) -> None:
    for name, p in report.phases.items():
        if p.metrics is None:
            print(f"{name}: n={len(p)} (no metrics)")
        else:
            m = p.metrics
            print(f"{name}: n={m.n} pp={m.pp:.4f} rmse={m.rmse:.3f} r={m.r:.4f} mape={m.mape:.4f}")


def cmd_train(args) -> int:
    cfg = config_from_args(args)
    report = run_train_test(cfg)
    out = _out_dir(args.out)
    write_report(report, out)
    (out / "config.json").write_text(cfg.to_json(), encoding="utf-8")
    _print_phases(report)
    print(f"config hash {report.config_hash}; report in {out}")
    return 0


def cmd_finalize(args) -> int:
    cfg = config_from_args(args)
    f = finalize_model(cfg, path=args.out)
    (Path(args.out) / "config.json").write_text(cfg.to_json(), encoding="utf-8")
    print(f"final ensemble of {len(f.models)} models trained through {cfg.split.test[1]}; saved to {args.out}")
    return 0


def _model_config(args) -> PipelineConfig:
    # the model directory remembers the config it was trained with; flags still override
    saved = Path(args.model) / "config.json"
    if args.config is None and saved.is_file():
        args.config = str(saved)
    return config_from_args(args)


def cmd_forecast(args) -> int:
    cfg = _model_config(args)
    f = load_forecaster(args.model)
    ws = prepare(cfg)
    out = _out_dir(args.out)
    report = RunReport(cfg.as_dict(), cfg.hash())
    report.phases["forecast_batch"] = forecast_batch(f, ws.forecast)
    write_report(report, out)
    _print_phases(report)
    nxt = f.predict(last_window(ws.e, f.lag))[0]
    print(f"next year {ws.e.end_year + 1}: {nxt:.2f}")
    return 0


def cmd_wfv(args) -> int:
    cfg = _model_config(args)
    f = load_forecaster(args.model)
    ws = prepare(cfg)
    report = RunReport(cfg.as_dict(), cfg.hash())
    report.phases["wfv_no_retrain"] = wfv_no_retrain(f, ws.e, cfg.split)
    if args.retrain:
        report.phases["wfv_retrain"] = wfv_retrain(cfg, ws=ws, final=f)
    out = _out_dir(args.out)
    write_report(report, out)
    _print_phases(report)
    return 0


def cmd_compare(args) -> int:
    ts = load_csv(args.data)
    imported = {}
    for spec in args.imported or []:
        name, _, path = spec.partition("=")
        if not path:
            raise ConfigError(f"--import expects NAME=PATH, got {spec!r}")
        imported[name] = read_mode_csv(path, decomposer_id=name)
    rows = compare_decomposers(ts, args.k, kinds=args.methods, imported=imported, seed=args.seed)
    for r in rows:
        print(f"{r.decomposer}: flatness={r.flatness:.4f} sds=[{', '.join(f'{v:.2f}' for v in r.sds)}]")
    if args.out:
        write_profile_csv(rows, args.out)
    if args.plot:
        plots.plot_sd_profiles(rows, args.plot)
    return 0


def cmd_plot(args) -> int:
    if args.kind == "predictions":
        years, obs, pred = read_phase_csv(args.input)
        plots.plot_predictions(years, obs, pred, args.out, title=args.title or Path(args.input).stem)
    else:
        m = read_mode_csv(args.input)
        plots.plot_modes(m, args.out, title=args.title or Path(args.input).stem)
    print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mfcast", description="Leak-free moving-front decomposition and LSTM forecasting.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", help="descriptive statistics of a series")
    p.add_argument("data")
    p.add_argument("--format", choices=("text", "csv"), default="text")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("decompose", help="decompose a whole series into modes")
    p.add_argument("data")
    p.add_argument("--method", choices=("ewt", "emd", "eemd"), default="ewt")
    p.add_argument("--k", type=int, default=9)
    p.add_argument("--gamma", type=float, default=0.2)
    p.add_argument("--detection", choices=("mirror", "raw"), default="mirror")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--plot", help="also write an SVG of the mode panels")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("build-mf", help="build or extend the endpoint matrix")
    p.add_argument("data")
    p.add_argument("--warmup-year", type=int)
    p.add_argument("--k", type=int, default=9)
    p.add_argument("--gamma", type=float, default=0.2)
    p.add_argument("--detection", choices=("mirror", "raw"), default="mirror")
    p.add_argument("--decomposer", choices=("ewt", "emd", "eemd"), default="ewt")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--extend", help="existing matrix CSV to extend with the new years of DATA")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_mf)

    p = sub.add_parser("leak-demo", help="show how one more year changes earlier coefficients")
    p.add_argument("data")
    p.add_argument("--front", type=int, required=True)
    p.add_argument("--component", default="WL8")
    p.add_argument("--k", type=int, default=9)
    p.add_argument("--detection", choices=("mirror", "raw"), default="mirror")
    p.add_argument("--out")
    p.add_argument("--plot")
    p.set_defaults(func=cmd_leak_demo)

    p = sub.add_parser("train", help="train on the train range and score train and test ranges")
    _add_config_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("finalize", help="retrain on train+test ranges and save the ensemble")
    _add_config_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_finalize)

    p = sub.add_parser("forecast", help="batch forecast over the forecast range with a saved ensemble")
    _add_config_flags(p)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("wfv", help="walk-forward validation with a saved ensemble")
    _add_config_flags(p)
    p.add_argument("--model", required=True)
    p.add_argument("--retrain", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_wfv)

    p = sub.add_parser("compare", help="SD profiles of EWT and EMD-family decompositions")
    p.add_argument("data")
    p.add_argument("--k", type=int, default=9)
    p.add_argument("--methods", nargs="+", default=["ewt", "emd", "eemd"], choices=("ewt", "emd", "eemd"))
    p.add_argument("--import", dest="imported", action="append", metavar="NAME=PATH", help="mode CSV computed elsewhere")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.add_argument("--plot")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("plot", help="SVG from a predictions or modes CSV")
    p.add_argument("kind", choices=("predictions", "modes"))
    p.add_argument("input")
    p.add_argument("--out", required=True)
    p.add_argument("--title")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return args.func(args)
    except MfcastError as exc:
        print(f"mfcast {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"mfcast {args.command}: {exc}", file=sys.stderr)
        return DataError.exit_code


if __name__ == "__main__":
    sys.exit(main())
