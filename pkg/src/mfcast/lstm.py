"""Single-layer LSTM regressor written against numpy, trained with BPTT.

One cell step::

    f = sigmoid(W_f x + U_f h_prev [+ b_f])
    i = sigmoid(W_i x + U_i h_prev [+ b_i])
    o = sigmoid(W_o x + U_o h_prev [+ b_o])
    g = act(W_c x + U_c h_prev [+ b_c])        # act is tanh or sigmoid
    c = f * c_prev + i * g
    h = o * tanh(c)
    y = W_out h

A window of ``L`` rows is threaded through from ``h = c = 0`` and the
prediction is ``y`` after the last row.
"""

from __future__ import annotations

import struct
import warnings
import zlib
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.special import expit

from .errors import ConfigError, DataError, NumericError, TrainingDiverged

GATES = ("f", "i", "o", "c")
CANDIDATES = ("tanh", "sigmoid")

MAGIC = b"MFLSTM\x00\x00"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<8sHIIB")  # magic, version, k, H, flags
_FLAG_BIAS = 1
_FLAG_SIGMOID = 2


def _sigmoid(z):
    return expit(z)


def param_names(use_bias: bool) -> tuple[str, ...]:
    names = [f"W_{g}" for g in GATES] + [f"U_{g}" for g in GATES] + ["W_out"]
    if use_bias:
        names += [f"b_{g}" for g in GATES]
    return tuple(names)


def param_shapes(k: int, hidden: int, use_bias: bool) -> dict[str, tuple[int, ...]]:
    shapes = {}
    for name in param_names(use_bias):
        kind = name.split("_")[0]
        if name == "W_out":
            shapes[name] = (1, hidden)
        elif kind == "W":
            shapes[name] = (hidden, k)
        elif kind == "U":
            shapes[name] = (hidden, hidden)
        else:
            shapes[name] = (hidden,)
    return shapes


@dataclass(frozen=True, eq=False)
class LstmModel:
    """Weights of a one-layer LSTM with a linear read-out. Treated as immutable."""

    input_dim: int
    hidden_dim: int
    params: dict
    candidate: str = "tanh"

    def __post_init__(self):
        if self.candidate not in CANDIDATES:
            raise ConfigError(f"candidate activation must be one of {CANDIDATES}")
        use_bias = "b_f" in self.params
        expected = param_shapes(self.input_dim, self.hidden_dim, use_bias)
        if set(self.params) != set(expected):
            raise ConfigError(f"parameter set {sorted(self.params)} does not match {sorted(expected)}")
        clean = {}
        for name, shape in expected.items():
            a = np.array(self.params[name], dtype=np.float64)
            if a.shape != shape:
                raise ConfigError(f"{name} has shape {a.shape}, expected {shape}")
            if not np.all(np.isfinite(a)):
                raise NumericError(f"{name} contains non-finite weights")
            a.setflags(write=False)
            clean[name] = a
        object.__setattr__(self, "params", clean)

    @property
    def use_bias(self) -> bool:
        return "b_f" in self.params

    @classmethod
    def zeros(cls, k: int, hidden: int, *, use_bias: bool = False, candidate: str = "tanh") -> "LstmModel":
        return cls(k, hidden, {n: np.zeros(s) for n, s in param_shapes(k, hidden, use_bias).items()}, candidate)

    @classmethod
    def random(cls, k: int, hidden: int, rng: np.random.Generator, *, use_bias: bool = False, candidate: str = "tanh") -> "LstmModel":
        """Uniform weights in ``[-1/sqrt(H), 1/sqrt(H)]``; biases start at zero."""
        scale = 1.0 / np.sqrt(hidden)
        params = {}
        for name, shape in param_shapes(k, hidden, use_bias).items():
            params[name] = np.zeros(shape) if name.startswith("b_") else rng.uniform(-scale, scale, size=shape)
        return cls(k, hidden, params, candidate)

    def with_params(self, params: dict) -> "LstmModel":
        return LstmModel(self.input_dim, self.hidden_dim, params, self.candidate)

    def n_params(self) -> int:
        return sum(a.size for a in self.params.values())


@dataclass(frozen=True, eq=False)
class LstmState:
    h: np.ndarray
    c: np.ndarray

    @classmethod
    def zeros(cls, hidden: int) -> "LstmState":
        return cls(np.zeros(hidden), np.zeros(hidden))


def _candidate(z, kind: str):
    return np.tanh(z) if kind == "tanh" else _sigmoid(z)


def _affine(m: LstmModel, gate: str, x, h):
    p = m.params
    z = x @ p[f"W_{gate}"].T + h @ p[f"U_{gate}"].T
    if m.use_bias:
        z = z + p[f"b_{gate}"]
    return z


def forward_step(m: LstmModel, x, s: LstmState | None = None) -> tuple[LstmState, float]:
    """Advance the cell by one input row and read out the prediction."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (m.input_dim,):
        raise DataError(f"input has shape {x.shape}, model expects ({m.input_dim},)")
    if s is None:
        s = LstmState.zeros(m.hidden_dim)
    if s.h.shape != (m.hidden_dim,) or s.c.shape != (m.hidden_dim,):
        raise DataError("state does not match hidden_dim")
    with np.errstate(over="ignore", invalid="ignore"):
        acts = {}
        for gate in GATES:
            z = _affine(m, gate, x, s.h)
            acts[gate] = _candidate(z, m.candidate) if gate == "c" else _sigmoid(z)
            if not np.all(np.isfinite(acts[gate])):
                name = "candidate" if gate == "c" else f"{gate} gate"
                raise NumericError(f"non-finite value in {name}")
        c = acts["f"] * s.c + acts["i"] * acts["c"]
        h = acts["o"] * np.tanh(c)
        y = float(m.params["W_out"][0] @ h)
    if not (np.all(np.isfinite(c)) and np.isfinite(y)):
        raise NumericError("non-finite cell state or output")
    return LstmState(h, c), y


def forward_sequence(m: LstmModel, window) -> float:
    """Prediction after threading an ``(L, k)`` window from the zero state."""
    w = np.asarray(window, dtype=np.float64)
    if w.ndim != 2 or w.shape[0] < 1:
        raise DataError(f"window must be (L, k) with L >= 1, got shape {w.shape}")
    s = LstmState.zeros(m.hidden_dim)
    y = 0.0
    for row in w:
        s, y = forward_step(m, row, s)
    return y


def predict(m: LstmModel, windows) -> np.ndarray:
    """One :func:`forward_sequence` per window, so results never depend on batching."""
    w = np.asarray(windows, dtype=np.float64)
    if w.ndim != 3:
        raise DataError(f"windows must be (n, L, k), got shape {w.shape}")
    return np.array([forward_sequence(m, x) for x in w])


class _Layout:
    """Flat parameter vector with per-gate blocks adjacent, so the four gates fuse into one matmul."""

    def __init__(self, k: int, hidden: int, use_bias: bool):
        self.k, self.H, self.use_bias = k, hidden, use_bias
        self.shapes = param_shapes(k, hidden, use_bias)
        self.offsets = {}
        pos = 0
        for name in param_names(use_bias):
            self.offsets[name] = pos
            pos += int(np.prod(self.shapes[name]))
        self.size = pos

    def pack(self, params: dict) -> np.ndarray:
        return np.concatenate([np.asarray(params[n], dtype=np.float64).ravel() for n in param_names(self.use_bias)])

    def unpack(self, flat: np.ndarray) -> dict:
        return {n: flat[o : o + int(np.prod(self.shapes[n]))].reshape(self.shapes[n]).copy() for n, o in self.offsets.items()}

    def fused(self, flat: np.ndarray):
        k, H = self.k, self.H
        w0 = self.offsets["W_f"]
        u0 = self.offsets["U_f"]
        o0 = self.offsets["W_out"]
        W = flat[w0 : w0 + 4 * H * k].reshape(4 * H, k)
        U = flat[u0 : u0 + 4 * H * H].reshape(4 * H, H)
        w_out = flat[o0 : o0 + H]
        b = flat[self.offsets["b_f"] : self.offsets["b_f"] + 4 * H] if self.use_bias else None
        return W, U, w_out, b


def _fused_forward(layout: _Layout, flat: np.ndarray, X: np.ndarray, candidate: str):
    W, U, w_out, b = layout.fused(flat)
    n, L, _ = X.shape
    H = layout.H
    XW = X @ W.T
    if b is not None:
        XW = XW + b
    h = np.zeros((n, H))
    c = np.zeros((n, H))
    cache = []
    for t in range(L):
        z = XW[:, t, :] + h @ U.T
        gates = expit(z[:, : 3 * H])
        f, i, o = gates[:, :H], gates[:, H : 2 * H], gates[:, 2 * H :]
        g = np.tanh(z[:, 3 * H :]) if candidate == "tanh" else expit(z[:, 3 * H :])
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        cache.append((h, c, f, i, o, g, tc))
        h = o * tc
        c = c_new
    return h @ w_out, h, cache


def _fused_loss_grad(layout: _Layout, flat: np.ndarray, X: np.ndarray, t: np.ndarray, candidate: str):
    W, U, w_out, b = layout.fused(flat)
    n, L, _ = X.shape
    H = layout.H
    with np.errstate(over="ignore", invalid="ignore"):
        y, h_last, cache = _fused_forward(layout, flat, X, candidate)
        err = y - t
        loss = float(np.mean(err * err))
    if not np.isfinite(loss):
        raise NumericError("non-finite loss")
    grad = np.zeros_like(flat)
    gW = grad[layout.offsets["W_f"] : layout.offsets["W_f"] + 4 * H * layout.k].reshape(4 * H, layout.k)
    gU = grad[layout.offsets["U_f"] : layout.offsets["U_f"] + 4 * H * H].reshape(4 * H, H)
    dy = 2.0 * err / n
    o0 = layout.offsets["W_out"]
    grad[o0 : o0 + H] = dy @ h_last
    dh = np.outer(dy, w_out)
    dc = np.zeros_like(dh)
    dZ = np.empty((n, L, 4 * H))
    for step in range(L - 1, -1, -1):
        h_prev, c_prev, f, i, o, g, tc = cache[step]
        dc = dc + dh * o * (1.0 - tc * tc)
        dz = dZ[:, step, :]
        dz[:, :H] = dc * c_prev * f * (1.0 - f)
        dz[:, H : 2 * H] = dc * g * i * (1.0 - i)
        dz[:, 2 * H : 3 * H] = dh * tc * o * (1.0 - o)
        dz[:, 3 * H :] = dc * i * ((1.0 - g * g) if candidate == "tanh" else g * (1.0 - g))
        gU += dz.T @ h_prev
        dh = dz @ U
        dc = dc * f
    gW += dZ.reshape(-1, 4 * H).T @ X.reshape(-1, layout.k)
    if b is not None:
        b0 = layout.offsets["b_f"]
        grad[b0 : b0 + 4 * H] = dZ.sum(axis=(0, 1))
    return loss, grad


def _layout_of(m: LstmModel) -> _Layout:
    return _Layout(m.input_dim, m.hidden_dim, m.use_bias)


def loss_and_gradients(m: LstmModel, batch) -> tuple[float, dict[str, np.ndarray]]:
    """Mean squared error over ``batch`` and its gradient for every weight.

    ``batch`` is anything with ``inputs`` of shape ``(n, L, k)`` and
    ``targets`` of shape ``(n,)``. Gradients come from backpropagation
    through the ``L`` steps.
    """
    X = np.asarray(batch.inputs, dtype=np.float64)
    t = np.asarray(batch.targets, dtype=np.float64)
    if X.ndim != 3 or X.shape[0] == 0:
        raise DataError("empty batch")
    if X.shape[2] != m.input_dim:
        raise DataError(f"batch has {X.shape[2]} features, model expects {m.input_dim}")
    layout = _layout_of(m)
    loss, grad = _fused_loss_grad(layout, layout.pack(m.params), X, t, m.candidate)
    return loss, layout.unpack(grad)


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for one training run and for the ensemble around it.

    ``batch_size=None`` means full-batch updates. ``optimizer`` is ``"adam"``
    or ``"sgd"`` (plain gradient descent).
    """

    hidden_dim: int = 32
    learning_rate: float = 1e-3
    max_epochs: int = 2000
    patience: int = 50
    batch_size: int | None = None
    optimizer: str = "adam"
    seed: int = 0
    n_runs: int = 20
    candidate: str = "tanh"
    use_bias: bool = False
    validation_fraction: float = 0.1

    def __post_init__(self):
        if self.hidden_dim < 1 or self.max_epochs < 1 or self.n_runs < 1:
            raise ConfigError("hidden_dim, max_epochs and n_runs must be positive")
        if self.learning_rate < 0 or not np.isfinite(self.learning_rate):
            raise ConfigError("learning_rate must be finite and non-negative")
        if not 0 <= self.patience <= self.max_epochs:
            raise ConfigError("patience must lie in [0, max_epochs]")
        if self.batch_size is not None and self.batch_size < 1:
            raise ConfigError("batch_size must be positive")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.candidate not in CANDIDATES:
            raise ConfigError(f"candidate must be one of {CANDIDATES}")
        if not 0 <= self.validation_fraction < 1:
            raise ConfigError("validation_fraction must lie in [0, 1)")

    def as_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown training options: {sorted(unknown)}")
        return cls(**d)


@dataclass
class History:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    best_epoch: int = -1
    stopped_early: bool = False

    def as_dict(self) -> dict:
        return asdict(self)


class _Adam:
    def __init__(self, size: int, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, theta: np.ndarray, g: np.ndarray) -> None:
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * g
        self.v = self.b2 * self.v + (1 - self.b2) * g * g
        m_hat = self.m / (1.0 - self.b1**self.t)
        v_hat = self.v / (1.0 - self.b2**self.t)
        theta -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class _Sgd:
    def __init__(self, size: int, lr: float):
        self.lr = lr

    def step(self, theta: np.ndarray, g: np.ndarray) -> None:
        theta -= self.lr * g


def _monitor_loss(layout, theta, X, T, candidate) -> float:
    with np.errstate(over="ignore", invalid="ignore"):
        y, _, _ = _fused_forward(layout, theta, X, candidate)
    return float(np.mean((y - T) ** 2))


def train(cfg: TrainConfig, train_set, validation_set=None, init: LstmModel | None = None) -> tuple[LstmModel, History]:
    """One seeded training run with early stopping on the validation loss.

    Without a validation set the training loss drives early stopping. With
    ``init`` the run warm-starts from those weights instead of a random draw.
    Training stops after ``max_epochs`` or once the monitored loss has gone
    ``patience`` epochs without improving, and the snapshot with the lowest
    monitored loss is returned.

    Raises:
        TrainingDiverged: the loss became non-finite; ``history`` is attached.
    """
    X = np.asarray(train_set.inputs, dtype=np.float64)
    T = np.asarray(train_set.targets, dtype=np.float64)
    if X.ndim != 3 or X.shape[0] == 0:
        raise DataError("empty training set")
    if validation_set is not None and len(validation_set.targets) == 0:
        validation_set = None
    k = X.shape[2]
    rng = np.random.default_rng(cfg.seed)
    if init is None:
        model = LstmModel.random(k, cfg.hidden_dim, rng, use_bias=cfg.use_bias, candidate=cfg.candidate)
    else:
        if init.input_dim != k:
            raise DataError(f"warm-start model expects {init.input_dim} features, data has {k}")
        model = init
    layout = _layout_of(model)
    theta = layout.pack(model.params)
    opt = (_Adam if cfg.optimizer == "adam" else _Sgd)(layout.size, cfg.learning_rate)

    n = X.shape[0]
    bs = n if cfg.batch_size is None else min(cfg.batch_size, n)
    if validation_set is not None:
        VX = np.asarray(validation_set.inputs, dtype=np.float64)
        VT = np.asarray(validation_set.targets, dtype=np.float64)
    else:
        VX, VT = X, T

    hist = History()
    best = theta.copy()
    best_loss = _monitor_loss(layout, theta, VX, VT, model.candidate)
    since_best = 0
    for epoch in range(cfg.max_epochs):
        order = np.arange(n) if bs == n else rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, bs):
            idx = order[start : start + bs] if bs < n else slice(None)
            try:
                loss, grad = _fused_loss_grad(layout, theta, X[idx], T[idx], model.candidate)
            except NumericError as exc:
                raise TrainingDiverged(f"epoch {epoch}: {exc}", hist) from None
            opt.step(theta, grad)
            epoch_loss += loss * (bs if bs < n else n) / n
        if not np.all(np.isfinite(theta)):
            raise TrainingDiverged(f"epoch {epoch}: non-finite weights", hist)
        mon = _monitor_loss(layout, theta, VX, VT, model.candidate)
        if not np.isfinite(mon):
            raise TrainingDiverged(f"epoch {epoch}: non-finite validation loss", hist)
        hist.train_loss.append(epoch_loss)
        hist.val_loss.append(mon)
        if mon < best_loss:
            best_loss = mon
            best = theta.copy()
            hist.best_epoch = epoch
            since_best = 0
        else:
            since_best += 1
            if since_best > cfg.patience:
                hist.stopped_early = True
                break
    return model.with_params(layout.unpack(best)), hist


def train_ensemble(cfg: TrainConfig, train_set, validation_set=None, init=None) -> list[LstmModel]:
    """``n_runs`` models seeded ``seed, seed+1, ...``; diverged runs are dropped with a warning.

    ``init`` may be a single model or one per run for warm starts.
    """
    models = []
    for r in range(cfg.n_runs):
        start = init[r] if isinstance(init, (list, tuple)) else init
        try:
            m, _ = train(replace(cfg, seed=cfg.seed + r), train_set, validation_set, start)
            models.append(m)
        except TrainingDiverged as exc:
            warnings.warn(f"run {r} (seed {cfg.seed + r}) diverged and was dropped: {exc}", RuntimeWarning, stacklevel=2)
    if 2 * len(models) < cfg.n_runs:
        raise NumericError(f"only {len(models)} of {cfg.n_runs} runs survived training")
    return models


def predict_ensemble(models, windows) -> np.ndarray:
    """Mean over models, accumulated elementwise so a window's result does not depend on its batch."""
    total = np.zeros(np.asarray(windows).shape[0])
    for m in models:
        total = total + predict(m, windows)
    return total / len(models)


def ensemble_predict(cfg: TrainConfig, train_set, eval_windows, validation_set=None) -> np.ndarray:
    """Average prediction of ``cfg.n_runs`` independently seeded models."""
    return predict_ensemble(train_ensemble(cfg, train_set, validation_set), eval_windows)


def to_bytes(m: LstmModel) -> bytes:
    """Serialize: fixed header, then every array row-major as little-endian float64, then a CRC32.

    Header layout (little-endian): 8-byte magic, uint16 version, uint32 k,
    uint32 H, uint8 flags (bit 0 biases present, bit 1 sigmoid candidate).
    Arrays follow in :func:`param_names` order.
    """
    flags = (_FLAG_BIAS if m.use_bias else 0) | (_FLAG_SIGMOID if m.candidate == "sigmoid" else 0)
    body = _HEADER.pack(MAGIC, FORMAT_VERSION, m.input_dim, m.hidden_dim, flags)
    body += b"".join(m.params[n].astype("<f8").tobytes(order="C") for n in param_names(m.use_bias))
    return body + struct.pack("<I", zlib.crc32(body))


def from_bytes(data: bytes) -> LstmModel:
    if len(data) < _HEADER.size + 4:
        raise DataError("model file truncated: header incomplete")
    magic, version, k, hidden, flags = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise DataError("not a model file (bad magic)")
    if version != FORMAT_VERSION:
        raise DataError(f"model format version {version} not supported (expected {FORMAT_VERSION})")
    use_bias = bool(flags & _FLAG_BIAS)
    shapes = param_shapes(k, hidden, use_bias)
    need = _HEADER.size + 8 * sum(int(np.prod(s)) for s in shapes.values()) + 4
    if len(data) != need:
        raise DataError(f"model file truncated or padded: {len(data)} bytes, expected {need}")
    (crc,) = struct.unpack_from("<I", data, need - 4)
    if crc != zlib.crc32(data[: need - 4]):
        raise DataError("model file corrupt: checksum mismatch")
    params = {}
    offset = _HEADER.size
    for name in param_names(use_bias):
        count = int(np.prod(shapes[name]))
        params[name] = np.frombuffer(data, dtype="<f8", count=count, offset=offset).reshape(shapes[name]).astype(np.float64)
        offset += 8 * count
    return LstmModel(k, hidden, params, "sigmoid" if flags & _FLAG_SIGMOID else "tanh")


def save_model(m: LstmModel, path) -> None:
    Path(path).write_bytes(to_bytes(m))


def load_model(path) -> LstmModel:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"model file not found: {path}")
    return from_bytes(path.read_bytes())


def dump_text(m: LstmModel) -> str:
    """Human-readable dump carrying the same information as the binary file."""
    lines = [
        f"mfcast-lstm version {FORMAT_VERSION}",
        f"input_dim {m.input_dim}",
        f"hidden_dim {m.hidden_dim}",
        f"candidate {m.candidate}",
        f"bias {int(m.use_bias)}",
    ]
    for name in param_names(m.use_bias):
        a = np.atleast_2d(m.params[name])
        lines.append(f"{name} {' '.join(str(d) for d in m.params[name].shape)}")
        lines.extend(" ".join(repr(float(v)) for v in row) for row in a)
    return "\n".join(lines) + "\n"


def parse_text(text: str) -> LstmModel:
    lines = iter(text.splitlines())
    try:
        head = next(lines).split()
        if head[:2] != ["mfcast-lstm", "version"] or int(head[2]) != FORMAT_VERSION:
            raise DataError("unsupported text dump header")
        meta = dict([next(lines).split() for _ in range(4)])
        k, hidden = int(meta["input_dim"]), int(meta["hidden_dim"])
        use_bias = meta["bias"] == "1"
        params = {}
        for name, shape in param_shapes(k, hidden, use_bias).items():
            label, *dims = next(lines).split()
            if label != name or tuple(int(d) for d in dims) != shape:
                raise DataError(f"expected block {name} {shape}, found {label} {dims}")
            n_rows = shape[0] if len(shape) == 2 else 1
            rows = [[float(v) for v in next(lines).split()] for _ in range(n_rows)]
            params[name] = np.array(rows).reshape(shape)
    except (StopIteration, KeyError, ValueError, IndexError) as exc:
        raise DataError(f"malformed text dump: {exc}") from None
    return LstmModel(k, hidden, params, meta["candidate"])
