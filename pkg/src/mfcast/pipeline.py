"""End-to-end runs: endpoint matrix, LSTM ensemble, batch forecast and walk-forward validation."""

from __future__ import annotations

import csv
import hashlib
import json
import time
import warnings
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .emd import EmdDecomposer, SiftConfig, eemd, emd
from .errors import ConfigError, DataError, TrainingDiverged
from .ewt import DEFAULT_GAMMA, EwtDecomposer
from .framing import DEFAULT_LAG, SplitSpec, SupervisedSet, frame, last_window, split
from .lstm import LstmModel, TrainConfig, load_model, predict_ensemble, save_model, train
from .modes import ModeMatrix, flatness, mode_sd_profile
from .moving_front import DEFAULT_WARMUP_LENGTH, EndpointMatrix, build_endpoint_matrix, extend_endpoint_matrix
from .series import Metrics, Scaler, TimeSeries, compute_metrics, fit_scaler, load_csv

DECOMPOSERS = ("ewt", "emd", "eemd")


@dataclass(frozen=True)
class PipelineConfig:
    """Everything that determines a run; its hash is stamped into reports.

    ``warmup_year=None`` means the year ``DEFAULT_WARMUP_LENGTH - 1`` after
    the series start. ``wfv_ensemble`` retrains every ensemble member in
    walk-forward validation (otherwise only the first seed is carried), and
    ``wfv_warm_start=False`` retrains each step from a fresh seeded draw.
    """

    data_path: str | None = None
    warmup_year: int | None = None
    k: int = 9
    gamma: float = DEFAULT_GAMMA
    detection: str = "mirror"
    lag: int = DEFAULT_LAG
    split: SplitSpec = field(default_factory=SplitSpec.paper)
    train: TrainConfig = field(default_factory=TrainConfig)
    decomposer: str = "ewt"
    wfv_ensemble: bool = True
    wfv_warm_start: bool = True

    def __post_init__(self):
        if self.decomposer not in DECOMPOSERS:
            raise ConfigError(f"decomposer must be one of {DECOMPOSERS} for a pipeline run, got {self.decomposer!r}")
        if self.k < 1 or self.lag < 1:
            raise ConfigError("k and lag must be positive")

    def make_decomposer(self):
        if self.decomposer == "ewt":
            return EwtDecomposer(n_modes=self.k, gamma=self.gamma, detection=self.detection)
        if self.k < 2:
            raise ConfigError("EMD-family decomposers need k >= 2")
        return EmdDecomposer(SiftConfig(max_imfs=self.k - 1, seed=self.train.seed), ensemble=self.decomposer == "eemd")

    def as_dict(self) -> dict:
        d = asdict(self)
        d["split"] = self.split.as_dict()
        d["train"] = self.train.as_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        d = dict(d)
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            if "split" in d and not isinstance(d["split"], SplitSpec):
                d["split"] = SplitSpec.from_dict(d["split"])
            if "train" in d and not isinstance(d["train"], TrainConfig):
                d["train"] = TrainConfig.from_dict(d["train"])
            return cls(**d)
        except (TypeError, KeyError) as exc:
            raise ConfigError(f"invalid config: {exc}") from None

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "PipelineConfig":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None

    def hash(self) -> str:
        canon = json.dumps(self.as_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class Forecaster:
    """A trained ensemble with the scalers it was trained under; predicts in data units."""

    models: tuple
    lag: int
    x_mean: np.ndarray
    x_sd: np.ndarray
    y_scaler: Scaler

    def scale_inputs(self, windows) -> np.ndarray:
        return (np.asarray(windows, dtype=np.float64) - self.x_mean) / self.x_sd

    def predict(self, windows) -> np.ndarray:
        w = np.asarray(windows, dtype=np.float64)
        if w.ndim == 2:
            w = w[None]
        if w.shape[0] == 0:
            return np.empty(0)
        scaled = predict_ensemble(self.models, self.scale_inputs(w))
        return scaled * self.y_scaler.sd + self.y_scaler.mean

    def with_models(self, models) -> "Forecaster":
        return replace(self, models=tuple(models))


def save_forecaster(f: Forecaster, directory) -> Path:
    """One binary file per ensemble member plus ``forecaster.json`` with scalers and lag."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    names = []
    for j, m in enumerate(f.models):
        name = f"member_{j:02d}.lstm"
        save_model(m, d / name)
        names.append(name)
    manifest = {
        "format_version": 1,
        "lag": f.lag,
        "x_mean": [float(v).hex() for v in f.x_mean],
        "x_sd": [float(v).hex() for v in f.x_sd],
        "y_mean": float(f.y_scaler.mean).hex(),
        "y_sd": float(f.y_scaler.sd).hex(),
        "members": names,
    }
    (d / "forecaster.json").write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    return d


def load_forecaster(directory) -> Forecaster:
    d = Path(directory)
    path = d / "forecaster.json"
    if not path.is_file():
        raise DataError(f"no forecaster.json in {d}")
    try:
        meta = json.loads(path.read_text(encoding="utf-8"))
        if meta.get("format_version") != 1:
            raise DataError(f"unsupported forecaster format {meta.get('format_version')}")
        return Forecaster(
            models=tuple(load_model(d / name) for name in meta["members"]),
            lag=int(meta["lag"]),
            x_mean=np.array([float.fromhex(v) for v in meta["x_mean"]]),
            x_sd=np.array([float.fromhex(v) for v in meta["x_sd"]]),
            y_scaler=Scaler(float.fromhex(meta["y_mean"]), float.fromhex(meta["y_sd"])),
        )
    except (KeyError, ValueError, json.JSONDecodeError) as exc:
        if isinstance(exc, DataError):
            raise
        raise DataError(f"malformed forecaster manifest: {exc}") from None


@dataclass
class PhaseResult:
    name: str
    years: np.ndarray
    observed: np.ndarray
    predicted: np.ndarray
    metrics: Metrics | None
    runtime_s: float = 0.0
    notes: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.years)

    def summary(self) -> dict:
        return {
            "n": len(self),
            "years": [int(self.years[0]), int(self.years[-1])] if len(self) else None,
            "metrics": self.metrics.as_dict() if self.metrics else None,
            "runtime_s": round(self.runtime_s, 3),
            "notes": list(self.notes),
        }


def _phase(name: str, years, observed, predicted, runtime: float, notes=()) -> PhaseResult:
    years = np.asarray(years, dtype=int)
    observed = np.asarray(observed, dtype=np.float64)
    predicted = np.asarray(predicted, dtype=np.float64)
    has_obs = np.isfinite(observed)
    metrics = compute_metrics(predicted[has_obs], observed[has_obs]) if has_obs.sum() >= 2 else None
    return PhaseResult(name, years, observed, predicted, metrics, runtime, list(notes))


@dataclass
class RunReport:
    config: dict
    config_hash: str
    phases: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)
    forecaster: Forecaster | None = field(default=None, repr=False)

    def pp(self, phase: str) -> float:
        m = self.phases[phase].metrics
        if m is None:
            raise DataError(f"phase {phase!r} has no metrics")
        return m.pp

    def as_dict(self) -> dict:
        return {
            "config": self.config,
            "config_hash": self.config_hash,
            "phases": {k: v.summary() for k, v in self.phases.items()},
            "notes": self.notes,
        }


@dataclass(frozen=True, eq=False)
class Workspace:
    """Series, endpoint matrix, framed pairs and training-range scalers for one config."""

    cfg: PipelineConfig
    ts: TimeSeries
    e: EndpointMatrix
    pairs: SupervisedSet
    train: SupervisedSet
    test: SupervisedSet
    forecast: SupervisedSet
    x_mean: np.ndarray
    x_sd: np.ndarray
    y_scaler: Scaler

    def scale(self, s: SupervisedSet) -> SupervisedSet:
        return SupervisedSet(
            (s.inputs - self.x_mean) / self.x_sd,
            (s.targets - self.y_scaler.mean) / self.y_scaler.sd,
            s.target_years,
        )


def load_series(cfg: PipelineConfig) -> TimeSeries:
    if not cfg.data_path:
        raise ConfigError("no data path configured")
    return load_csv(cfg.data_path)


def _default_warmup(cfg: PipelineConfig, ts: TimeSeries) -> int:
    return cfg.warmup_year if cfg.warmup_year is not None else ts.start_year + DEFAULT_WARMUP_LENGTH - 1


def _input_scaling(train: SupervisedSet) -> tuple[np.ndarray, np.ndarray]:
    # per endpoint column over every row seen in training windows
    flat = train.inputs.reshape(-1, train.k)
    mean = flat.mean(axis=0)
    sd = flat.std(axis=0)
    # a column that never varies (an empty band) is only centred
    sd = np.where(sd > 0, sd, 1.0)
    return mean, sd


def prepare(cfg: PipelineConfig, ts: TimeSeries | None = None, e: EndpointMatrix | None = None) -> Workspace:
    """Build (or reuse) the endpoint matrix, frame it, split it and fit the training-range scalers."""
    ts = load_series(cfg) if ts is None else ts
    if e is None:
        e = build_endpoint_matrix(ts, _default_warmup(cfg, ts), decomposer=cfg.make_decomposer())
    pairs = frame(e, cfg.lag)
    tr, te, fc = split(pairs, cfg.split)
    x_mean, x_sd = _input_scaling(tr)
    return Workspace(cfg, ts, e, pairs, tr, te, fc, x_mean, x_sd, fit_scaler(tr.targets))


def _fit_members(cfg: TrainConfig, scaled: SupervisedSet, init=None, notes=None) -> list[LstmModel]:
    """Train ``n_runs`` members on scaled pairs, holding out the last pairs for early stopping.

    With ``init`` (one model per member) a diverging member keeps its
    previous weights; without it, diverged members are dropped.
    """
    fit, val = scaled.tail(cfg.validation_fraction)
    models = []
    for r in range(cfg.n_runs if init is None else len(init)):
        start = None if init is None else init[r]
        try:
            m, _ = train(replace(cfg, seed=cfg.seed + r), fit, val, start)
        except TrainingDiverged as exc:
            msg = f"member {r} diverged: {exc}"
            if notes is not None:
                notes.append(msg)
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
            if start is None:
                continue
            m = start
        models.append(m)
    if 2 * len(models) < (cfg.n_runs if init is None else len(init)):
        raise TrainingDiverged(f"only {len(models)} ensemble members survived")
    return models


def fit_forecaster(ws: Workspace, pairs: SupervisedSet) -> Forecaster:
    models = _fit_members(ws.cfg.train, ws.scale(pairs))
    return Forecaster(tuple(models), ws.cfg.lag, ws.x_mean, ws.x_sd, ws.y_scaler)


def _evaluate(name: str, f: Forecaster, s: SupervisedSet, runtime=0.0, notes=()) -> PhaseResult:
    t0 = time.perf_counter()
    pred = f.predict(s.inputs)
    return _phase(name, s.target_years, s.targets, pred, runtime + time.perf_counter() - t0, notes)


def _new_report(cfg: PipelineConfig, ws: Workspace) -> RunReport:
    notes = [
        f"decomposer {ws.e.decomposer_id}; endpoint rows {int(ws.e.years[0])}-{ws.e.end_year}",
        f"train targets start {int(ws.train.target_years[0])} (first {cfg.lag} rows only feed windows)",
        f"seeds {cfg.train.seed}..{cfg.train.seed + cfg.train.n_runs - 1}",
    ]
    return RunReport(cfg.as_dict(), cfg.hash(), notes=notes)


def run_train_test(cfg: PipelineConfig, ts: TimeSeries | None = None, ws: Workspace | None = None) -> RunReport:
    """Train the ensemble on the train range and score it on train and test ranges."""
    ws = prepare(cfg, ts) if ws is None else ws
    report = _new_report(cfg, ws)
    t0 = time.perf_counter()
    f = fit_forecaster(ws, ws.train)
    elapsed = time.perf_counter() - t0
    report.phases["train"] = _evaluate("train", f, ws.train, elapsed, ["in-sample fit"])
    report.phases["test"] = _evaluate("test", f, ws.test)
    report.forecaster = f
    return report


def finalize_model(cfg: PipelineConfig, ts: TimeSeries | None = None, ws: Workspace | None = None, path=None) -> Forecaster:
    """Retrain on train and test ranges together with unchanged hyperparameters.

    Scalers stay those of the train range. If ``path`` is given the
    forecaster is persisted there.
    """
    ws = prepare(cfg, ts) if ws is None else ws
    f = fit_forecaster(ws, SupervisedSet.concat(ws.train, ws.test))
    if path is not None:
        save_forecaster(f, path)
    return f


def forecast_batch(f: Forecaster, forecast_set: SupervisedSet) -> PhaseResult:
    """All forecast windows in one pass through a frozen model."""
    return _evaluate("forecast_batch", f, forecast_set, notes=["in-sample forecast: all windows scored at once by a frozen model"])


def _years(spec_range) -> range:
    return range(spec_range[0], spec_range[1] + 1) if spec_range else range(0)


def wfv_no_retrain(f: Forecaster, e: EndpointMatrix, spec: SplitSpec) -> PhaseResult:
    """Step through the forecast years, predicting each from the trailing window of rows before it."""
    t0 = time.perf_counter()
    years, obs, pred = [], [], []
    for y in _years(spec.forecast):
        window = last_window(e.through(y - 1), f.lag)
        years.append(y)
        pred.append(f.predict(window)[0])
        obs.append(_target(e, y))
    return _phase("wfv_no_retrain", years, obs, pred, time.perf_counter() - t0)


def _target(e: EndpointMatrix, y: int) -> float:
    if y > e.end_year:
        return float("nan")
    return float(np.asarray(e.targets)[y - int(e.years[0])])


def wfv_retrain(
    cfg: PipelineConfig,
    spec: SplitSpec | None = None,
    ts: TimeSeries | None = None,
    ws: Workspace | None = None,
    final: Forecaster | None = None,
) -> PhaseResult:
    """Walk forward one year at a time, retraining as each new observation arrives.

    The first forecast year is predicted by ``final`` (trained through the
    year before it). For each later year ``y`` the endpoint matrix is
    extended through ``y - 1``, the ensemble is retrained on every pair up
    to ``y - 1`` (warm-started from the previous step unless configured
    otherwise) and ``y`` is predicted. A member whose training diverges
    keeps its previous weights and the year is flagged.
    """
    ws = prepare(cfg, ts) if ws is None else ws
    spec = cfg.split if spec is None else spec
    t0 = time.perf_counter()
    if not spec.forecast:
        return _phase("wfv_retrain", [], [], [], 0.0)
    if final is None:
        final = finalize_model(cfg, ws=ws)
    tcfg = cfg.train
    current = final if cfg.wfv_ensemble else final.with_models(final.models[:1])
    first = spec.forecast[0]
    e = ws.e.through(first - 1)
    notes = [f"{len(current.models)} member(s) per step, {'warm' if cfg.wfv_warm_start else 'cold'} start"]
    years, obs, pred = [], [], []
    for y in _years(spec.forecast):
        if y > first:
            e = extend_endpoint_matrix(e, ws.ts.through(y - 1))
            pairs = frame(e, cfg.lag).in_years(spec.train[0], y - 1)
            step_notes = []
            init = list(current.models) if cfg.wfv_warm_start else None
            step_cfg = tcfg if cfg.wfv_ensemble else replace(tcfg, n_runs=1)
            models = _fit_members(step_cfg, ws.scale(pairs), init, step_notes)
            notes.extend(f"{y}: {n}" for n in step_notes)
            current = current.with_models(models)
        years.append(y)
        pred.append(current.predict(last_window(e, cfg.lag))[0])
        obs.append(_target(ws.e, y))
    return _phase("wfv_retrain", years, obs, pred, time.perf_counter() - t0, notes)


def run_all(cfg: PipelineConfig, ts: TimeSeries | None = None, phases=("train_test", "finalize", "batch", "wfv", "wfv_retrain")) -> RunReport:
    """Every phase in order, sharing one endpoint matrix."""
    ws = prepare(cfg, ts)
    report = run_train_test(cfg, ws=ws) if "train_test" in phases else _new_report(cfg, ws)
    t0 = time.perf_counter()
    final = finalize_model(cfg, ws=ws)
    report.notes.append(f"final model trained on targets {int(ws.train.target_years[0])}-{cfg.split.test[1]} in {time.perf_counter() - t0:.1f}s")
    report.forecaster = final
    if "batch" in phases:
        report.phases["forecast_batch"] = forecast_batch(final, ws.forecast)
    if "wfv" in phases:
        report.phases["wfv_no_retrain"] = wfv_no_retrain(final, ws.e, cfg.split)
    if "wfv_retrain" in phases:
        report.phases["wfv_retrain"] = wfv_retrain(cfg, ws=ws, final=final)
    return report


def write_phase_csv(p: PhaseResult, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["year", "observed", "predicted"])
        for y, o, q in zip(p.years, p.observed, p.predicted):
            w.writerow([int(y), repr(float(o)) if np.isfinite(o) else "", repr(float(q))])


def read_phase_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    years, obs, pred = [], [], []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            years.append(int(row["year"]))
            obs.append(float(row["observed"]) if row["observed"] else np.nan)
            pred.append(float(row["predicted"]))
    return np.array(years), np.array(obs), np.array(pred)


METRIC_COLUMNS = ("n", "rmse", "pp", "nrmse", "mape", "r")


def write_report(report: RunReport, directory) -> Path:
    """``predictions_<phase>.csv`` per phase, ``metrics.csv`` and ``report.json``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for name, p in report.phases.items():
        write_phase_csv(p, d / f"predictions_{name}.csv")
    with (d / "metrics.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["phase", *METRIC_COLUMNS])
        for name, p in report.phases.items():
            if p.metrics is not None:
                m = p.metrics.as_dict()
                w.writerow([name, *(m[c] for c in METRIC_COLUMNS)])
    (d / "report.json").write_text(json.dumps(report.as_dict(), indent=2, sort_keys=True, default=float), encoding="utf-8")
    return d


@dataclass(frozen=True)
class ProfileRow:
    decomposer: str
    labels: tuple
    sds: tuple
    signal_sd: float
    flatness: float


def _profile_row(name: str, m: ModeMatrix) -> ProfileRow:
    prof = mode_sd_profile(m)
    signal_sd = prof.pop("signal")
    return ProfileRow(name, tuple(prof), tuple(prof.values()), signal_sd, flatness(prof.values()))


def compare_decomposers(ts: TimeSeries, k: int = 9, kinds=("ewt", "emd", "eemd"), imported: dict | None = None, seed: int = 0) -> list[ProfileRow]:
    """Per-mode SD profile and flatness score of each decomposition of the whole series.

    EMD-family rows keep only the IMFs the data produced. ``imported`` maps a
    name to a :class:`ModeMatrix` computed elsewhere (e.g. CEEMDAN output).
    """
    rows = []
    for kind in kinds:
        if kind == "ewt":
            m = EwtDecomposer(n_modes=k)(ts.values, ts.start_year)
        elif kind in ("emd", "eemd"):
            fn = eemd if kind == "eemd" else emd
            m = fn(ts.values, SiftConfig(seed=seed), start_year=ts.start_year)
        else:
            raise ConfigError(f"unknown decomposer {kind!r}")
        rows.append(_profile_row(kind, m))
    for name, m in (imported or {}).items():
        if m.n != len(ts):
            raise DataError(f"imported modes {name!r} cover {m.n} years, series has {len(ts)}")
        rows.append(_profile_row(name, m))
    return rows


def write_profile_csv(rows: list[ProfileRow], path) -> None:
    width = max(len(r.sds) for r in rows)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["decomposer", "signal_sd", "flatness", *(f"mode{j}" for j in range(1, width + 1)), "labels"])
        for r in rows:
            sds = [repr(v) for v in r.sds] + [""] * (width - len(r.sds))
            w.writerow([r.decomposer, repr(r.signal_sd), repr(r.flatness), *sds, "|".join(r.labels)])
