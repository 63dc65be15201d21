"""Fully connected fusion network written directly against numpy.

Hidden layers are ``affine -> batch norm -> ReLU``; the output layer is
``affine -> sigmoid`` with one unit per time step. Inputs are the report
matrix flattened row-major (time-major), as raw 0/1 values. Training
minimizes the mean squared error with Adam.
"""
from __future__ import annotations

import hashlib
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .core import FusionDecision, ReportMatrix, StateVector

PAPER_HIDDEN = (2048, 1024, 512, 256, 128, 64)
DESK_HIDDEN = (256, 128, 64)
CHECKPOINT_FORMAT = "byzfuse-checkpoint"
CHECKPOINT_VERSION = 1


class DimensionError(ValueError):
    pass


class UsageError(RuntimeError):
    pass


class CheckpointError(Exception):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointCorruptError(CheckpointError):
    pass


class CheckpointShapeError(CheckpointError):
    pass


@dataclass(frozen=True)
class NetworkSpec:
    input_size: int
    hidden_sizes: tuple = DESK_HIDDEN
    output_size: int = 1
    batch_norm: Union[bool, tuple] = True
    seed: int = 0
    bn_momentum: float = 0.9
    bn_eps: float = 1e-5
    dtype: str = "float64"

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        if not isinstance(self.batch_norm, bool):
            object.__setattr__(self, "batch_norm", tuple(bool(b) for b in self.batch_norm))
        widths = (self.input_size, *self.hidden_sizes, self.output_size)
        if any(w < 1 for w in widths):
            raise ValueError(f"all layer widths must be >= 1: {widths}")
        if len(self.bn_flags) != len(self.hidden_sizes):
            raise ValueError("batch_norm needs one flag per hidden layer")
        if self.dtype not in ("float64", "float32"):
            raise ValueError("dtype must be float64 or float32")

    @property
    def bn_flags(self) -> tuple:
        if isinstance(self.batch_norm, bool):
            return (self.batch_norm,) * len(self.hidden_sizes)
        return self.batch_norm

    @property
    def widths(self) -> tuple:
        return (self.input_size, *self.hidden_sizes, self.output_size)

    @property
    def n_layers(self) -> int:
        return len(self.hidden_sizes) + 1

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden_sizes"] = list(self.hidden_sizes)
        d["batch_norm"] = self.batch_norm if isinstance(self.batch_norm, bool) else list(self.batch_norm)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        d = dict(d)
        d["hidden_sizes"] = tuple(d["hidden_sizes"])
        if not isinstance(d["batch_norm"], bool):
            d["batch_norm"] = tuple(d["batch_norm"])
        return cls(**d)

    @classmethod
    def for_window(cls, n: int, m: int, hidden_sizes=DESK_HIDDEN, **kw) -> "NetworkSpec":
        return cls(input_size=n * m, hidden_sizes=tuple(hidden_sizes), output_size=m, **kw)


@dataclass
class NetworkParams:
    """Trainable tensors, batch-norm running statistics and the step counter.

    Tensor names are ``layer{i}.weight``, ``layer{i}.bias``,
    ``layer{i}.gamma`` and ``layer{i}.beta``; running statistics are
    ``layer{i}.running_mean`` and ``layer{i}.running_var``.
    """

    spec: NetworkSpec
    tensors: dict
    running: dict
    step: int = 0

    def copy(self) -> "NetworkParams":
        return NetworkParams(
            self.spec,
            {k: v.copy() for k, v in self.tensors.items()},
            {k: v.copy() for k, v in self.running.items()},
            self.step,
        )

    def equals(self, other: "NetworkParams") -> bool:
        """Bit-exact comparison of every tensor, statistic and the step counter."""
        def same(a: dict, b: dict) -> bool:
            return a.keys() == b.keys() and all(
                a[k].dtype == b[k].dtype and a[k].shape == b[k].shape and a[k].tobytes() == b[k].tobytes()
                for k in a
            )
        return (self.spec == other.spec and self.step == other.step
                and same(self.tensors, other.tensors) and same(self.running, other.running))

    def parameter_count(self) -> int:
        return int(sum(v.size for v in self.tensors.values()))


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 150
    batch_size: int = 512
    learning_rate: float = 0.001
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    shuffle_seed: int = 0
    early_stop_loss: Optional[float] = None

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.learning_rate <= 0 or self.adam_epsilon <= 0:
            raise ValueError("epochs, batch_size, learning_rate and adam_epsilon must be positive")
        if not (0 < self.adam_beta1 < 1 and 0 < self.adam_beta2 < 1):
            raise ValueError("Adam betas must lie in (0, 1)")


@dataclass
class EpochRecord:
    loss: float
    val_loss: Optional[float] = None
    val_accuracy: Optional[float] = None


@dataclass
class TrainHistory:
    epochs: list = field(default_factory=list)
    seconds: float = 0.0

    def __len__(self):
        return len(self.epochs)

    @property
    def losses(self) -> list:
        return [e.loss for e in self.epochs]


@dataclass
class AdamState:
    first: dict
    second: dict
    t: int = 0


# ---------------------------------------------------------------------------
# model


def init_network(spec: NetworkSpec) -> NetworkParams:
    """He-normal weights (variance ``2/fan_in``), zero biases, identity batch norm."""
    rng = np.random.default_rng(spec.seed)
    dtype = np.dtype(spec.dtype)
    tensors, running = {}, {}
    widths = spec.widths
    bn = spec.bn_flags
    for i in range(spec.n_layers):
        fan_in, fan_out = widths[i], widths[i + 1]
        tensors[f"layer{i}.weight"] = (rng.standard_normal((fan_in, fan_out)) * np.sqrt(2.0 / fan_in)).astype(dtype)
        tensors[f"layer{i}.bias"] = np.zeros(fan_out, dtype=dtype)
        if i < len(bn) and bn[i]:
            tensors[f"layer{i}.gamma"] = np.ones(fan_out, dtype=dtype)
            tensors[f"layer{i}.beta"] = np.zeros(fan_out, dtype=dtype)
            running[f"layer{i}.running_mean"] = np.zeros(fan_out, dtype=dtype)
            running[f"layer{i}.running_var"] = np.ones(fan_out, dtype=dtype)
    return NetworkParams(spec, tensors, running, 0)


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def forward(params: NetworkParams, batch, mode: str = "infer"):
    """Run the network; returns ``(outputs, cache)``.

    In ``"train"`` mode batch norm uses the batch statistics and updates the
    running statistics in place; in ``"infer"`` mode it uses the running
    statistics and nothing is mutated.
    """
    if mode not in ("train", "infer"):
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    spec = params.spec
    x = np.asarray(batch, dtype=spec.dtype)
    if x.ndim != 2 or x.shape[1] != spec.input_size:
        raise DimensionError(f"expected a batch of shape (B, {spec.input_size}), got {x.shape}")
    t, run = params.tensors, params.running
    momentum, eps = spec.bn_momentum, spec.bn_eps
    layers = []
    a = x
    for i in range(spec.n_layers):
        w, b = t[f"layer{i}.weight"], t[f"layer{i}.bias"]
        z = a @ w + b
        rec = {"input": a}
        if i == spec.n_layers - 1:
            a = _sigmoid(z)
        else:
            if f"layer{i}.gamma" in t:
                if mode == "train":
                    mu = z.mean(axis=0)
                    var = z.var(axis=0)
                    run[f"layer{i}.running_mean"] *= momentum
                    run[f"layer{i}.running_mean"] += (1 - momentum) * mu
                    run[f"layer{i}.running_var"] *= momentum
                    run[f"layer{i}.running_var"] += (1 - momentum) * var
                else:
                    mu = run[f"layer{i}.running_mean"]
                    var = run[f"layer{i}.running_var"]
                inv_std = 1.0 / np.sqrt(var + eps)
                xhat = (z - mu) * inv_std
                y = t[f"layer{i}.gamma"] * xhat + t[f"layer{i}.beta"]
                rec.update(xhat=xhat, inv_std=inv_std)
            else:
                y = z
            rec["pre_relu"] = y
            a = np.maximum(y, 0)
        layers.append(rec)
    cache = {"mode": mode, "layers": layers, "params_id": id(params), "step": params.step}
    return a, cache


def mse_loss(outputs, targets) -> float:
    """Mean over the batch of the per-sample mean squared bit error."""
    o = np.asarray(outputs, dtype=float)
    y = np.asarray(targets, dtype=float)
    if o.shape != y.shape:
        raise DimensionError(f"outputs {o.shape} and targets {y.shape} differ")
    return float(np.mean((y - o) ** 2))


def backward(params: NetworkParams, cache: dict, outputs, targets) -> dict:
    """Exact gradients of :func:`mse_loss` for every tensor in ``params``."""
    if cache.get("mode") != "train":
        raise UsageError("backward needs the cache of a train-mode forward pass")
    if cache.get("params_id") != id(params) or cache.get("step") != params.step:
        raise UsageError("stale cache: parameters changed since the forward pass")
    spec = params.spec
    t = params.tensors
    o = np.asarray(outputs, dtype=spec.dtype)
    y = np.asarray(targets, dtype=spec.dtype)
    if o.shape != y.shape:
        raise DimensionError(f"outputs {o.shape} and targets {y.shape} differ")
    grads = {}
    batch = o.shape[0]
    # d/do of mean((o - y)^2) over batch and bits, through the sigmoid
    delta = 2.0 * (o - y) / o.size * o * (1.0 - o)
    for i in reversed(range(spec.n_layers)):
        rec = cache["layers"][i]
        if i < spec.n_layers - 1:
            dy = delta * (rec["pre_relu"] > 0)
            if f"layer{i}.gamma" in t:
                xhat = rec["xhat"]
                grads[f"layer{i}.gamma"] = (dy * xhat).sum(axis=0)
                grads[f"layer{i}.beta"] = dy.sum(axis=0)
                dxhat = dy * t[f"layer{i}.gamma"]
                delta = rec["inv_std"] / batch * (
                    batch * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0)
                )
            else:
                delta = dy
        grads[f"layer{i}.weight"] = rec["input"].T @ delta
        grads[f"layer{i}.bias"] = delta.sum(axis=0)
        if i > 0:
            delta = delta @ t[f"layer{i}.weight"].T
    return {k: grads[k] for k in t}


def adam_init(tensors: dict) -> AdamState:
    return AdamState({k: np.zeros_like(v) for k, v in tensors.items()},
                     {k: np.zeros_like(v) for k, v in tensors.items()}, 0)


def adam_step(params, gradients: dict, state: Optional[AdamState], config: TrainConfig):
    """One bias-corrected Adam update; returns new ``(params, state)`` without mutating inputs.

    ``params`` may be a :class:`NetworkParams` (its step counter advances)
    or a plain dict of arrays.
    """
    tensors = params.tensors if isinstance(params, NetworkParams) else params
    if state is None:
        state = adam_init(tensors)
    b1, b2 = config.adam_beta1, config.adam_beta2
    t = state.t + 1
    new_tensors, first, second = {}, {}, {}
    for k, p in tensors.items():
        g = np.asarray(gradients[k])
        if g.shape != p.shape:
            raise DimensionError(f"gradient for {k} has shape {g.shape}, expected {p.shape}")
        first[k] = b1 * state.first[k] + (1 - b1) * g
        second[k] = b2 * state.second[k] + (1 - b2) * g * g
        m_hat = first[k] / (1 - b1**t)
        v_hat = second[k] / (1 - b2**t)
        new_tensors[k] = (p - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.adam_epsilon)).astype(p.dtype)
    new_state = AdamState(first, second, t)
    if isinstance(params, NetworkParams):
        return NetworkParams(params.spec, new_tensors, {k: v.copy() for k, v in params.running.items()},
                             params.step + 1), new_state
    return new_tensors, new_state


# ---------------------------------------------------------------------------
# training and inference


def _arrays(data):
    if hasattr(data, "arrays"):
        return data.arrays()
    x, y = data
    return np.asarray(x, dtype=float), np.asarray(y, dtype=float)


def train(dataset, spec: NetworkSpec, config: TrainConfig, validation=None, log=None):
    """Mini-batch Adam on the MSE loss; returns ``(params, history)``.

    ``dataset`` (and ``validation``) is a :class:`~byzfuse.genesis.Dataset`
    or an ``(inputs, targets)`` pair. Shuffling uses
    ``config.shuffle_seed``; the last partial batch is kept. Training stops
    early once an epoch's mean loss drops below ``config.early_stop_loss``.
    """
    x, y = _arrays(dataset)
    if len(x) == 0:
        raise ValueError("training set is empty")
    if x.shape[1] != spec.input_size or y.shape[1] != spec.output_size:
        raise DimensionError(
            f"data shapes {x.shape}/{y.shape} do not match network ({spec.input_size} -> {spec.output_size})")
    x = x.astype(spec.dtype)
    y = y.astype(spec.dtype)
    val = _arrays(validation) if validation is not None else None

    params = init_network(spec)
    state = adam_init(params.tensors)
    rng = np.random.default_rng(config.shuffle_seed)
    history = TrainHistory()
    started = time.perf_counter()
    for epoch in range(config.epochs):
        order = rng.permutation(len(x))
        total = 0.0
        for start in range(0, len(x), config.batch_size):
            idx = order[start:start + config.batch_size]
            xb, yb = x[idx], y[idx]
            out, cache = forward(params, xb, "train")
            total += mse_loss(out, yb) * len(idx)
            grads = backward(params, cache, out, yb)
            params, state = _adam_inplace(params, grads, state, config)
        rec = EpochRecord(total / len(x))
        if val is not None:
            vout, _ = forward(params, val[0], "infer")
            rec.val_loss = mse_loss(vout, val[1])
            rec.val_accuracy = float(np.all((vout >= 0.5) == (val[1] >= 0.5), axis=1).mean())
        history.epochs.append(rec)
        if log is not None:
            log(epoch, rec)
        if config.early_stop_loss is not None and rec.loss < config.early_stop_loss:
            break
    history.seconds = time.perf_counter() - started
    return params, history


def _adam_inplace(params: NetworkParams, grads: dict, state: AdamState, config: TrainConfig):
    # same arithmetic as adam_step, without copying every tensor on each mini-batch
    b1, b2 = config.adam_beta1, config.adam_beta2
    state.t += 1
    c1 = 1 - b1**state.t
    c2 = 1 - b2**state.t
    for k, p in params.tensors.items():
        g = grads[k]
        mk, vk = state.first[k], state.second[k]
        mk *= b1
        mk += (1 - b1) * g
        vk *= b2
        vk += (1 - b2) * g * g
        p -= config.learning_rate * (mk / c1) / (np.sqrt(vk / c2) + config.adam_epsilon)
    params.step += 1
    return params, state


def predict_batch(params: NetworkParams, inputs) -> tuple[np.ndarray, np.ndarray]:
    """Thresholded estimates and raw sigmoid outputs for a batch of flattened matrices."""
    x = np.asarray(inputs, dtype=float)
    if x.ndim == 3:
        x = x.reshape(len(x), -1)
    out, _ = forward(params, x, "infer")
    return (out >= 0.5).astype(np.int8), out


def predict(params: NetworkParams, reports: ReportMatrix) -> FusionDecision:
    spec = params.spec
    if reports.m != spec.output_size or reports.m * reports.n != spec.input_size:
        raise DimensionError(
            f"report matrix {reports.m}x{reports.n} does not fit network "
            f"({spec.input_size} inputs, {spec.output_size} outputs)")
    est, out = predict_batch(params, reports.entries.reshape(1, -1))
    return FusionDecision(StateVector(est[0]), out[0].astype(float), "dl")


# ---------------------------------------------------------------------------
# checkpoints


def _encode(arr: np.ndarray) -> dict:
    return {"dtype": str(arr.dtype), "shape": list(arr.shape),
            "data": [float(v).hex() for v in arr.reshape(-1)]}


def _decode(d: dict) -> np.ndarray:
    arr = np.array([float.fromhex(v) for v in d["data"]], dtype=d["dtype"])
    return arr.reshape(d["shape"])


def _digest(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def save_checkpoint(params: NetworkParams, path) -> Path:
    """Write a self-describing JSON checkpoint with hexadecimal float arrays and a checksum."""
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "spec": params.spec.to_dict(),
        "step": params.step,
        "tensors": {k: _encode(v) for k, v in params.tensors.items()},
        "running": {k: _encode(v) for k, v in params.running.items()},
    }
    doc = dict(payload, checksum=_digest(payload))
    path = Path(path)
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    return path


def load_checkpoint(path) -> NetworkParams:
    try:
        doc = json.loads(Path(path).read_text())
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CheckpointCorruptError(f"checkpoint is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointCorruptError("not a byzfuse checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise CheckpointVersionError(f"checkpoint version {doc.get('version')!r}, expected {CHECKPOINT_VERSION}")
    checksum = doc.pop("checksum", None)
    if checksum != _digest(doc):
        raise CheckpointCorruptError("checksum mismatch")
    try:
        spec = NetworkSpec.from_dict(doc["spec"])
        tensors = {k: _decode(v) for k, v in doc["tensors"].items()}
        running = {k: _decode(v) for k, v in doc["running"].items()}
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointShapeError(f"malformed checkpoint contents: {exc}") from exc
    reference = init_network(spec)
    for group, got in (("tensors", tensors), ("running", running)):
        want = getattr(reference, group)
        if want.keys() != got.keys():
            raise CheckpointShapeError(f"{group} names do not match the network layout")
        for k in want:
            if want[k].shape != got[k].shape:
                raise CheckpointShapeError(f"{k} has shape {got[k].shape}, spec implies {want[k].shape}")
    return NetworkParams(spec, tensors, running, int(doc["step"]))


# ---------------------------------------------------------------------------
# gradient verification


@dataclass
class GradCheckReport:
    max_rel_error: dict          # tensor name -> worst relative error
    worst_index: dict            # tensor name -> flat index of the worst entry
    tolerance: float

    @property
    def worst(self) -> float:
        return max(self.max_rel_error.values())

    @property
    def passed(self) -> bool:
        return self.worst < self.tolerance

    def lines(self) -> list:
        return [f"{k:<20s} max_rel_err={v:.3e} at {self.worst_index[k]}" for k, v in self.max_rel_error.items()]


def relative_error(analytic, numeric, floor: float = 1e-6):
    """``|a - n| / max(|a|, |n|, floor)``; the floor keeps exact zeros from dividing by zero."""
    a = np.asarray(analytic, dtype=float)
    n = np.asarray(numeric, dtype=float)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def gradient_check(spec: NetworkSpec, tolerance: float = 1e-4, batch_size: int = 16,
                   step: float = 1e-5, seed: int = 0) -> GradCheckReport:
    """Compare :func:`backward` with central differences on a random batch."""
    if spec.dtype != "float64":
        raise ValueError("gradient checking needs float64 parameters")
    rng = np.random.default_rng(seed)
    params = init_network(spec)
    for k in params.tensors:
        # move batch-norm parameters off their identity values so every term is exercised
        if k.endswith(".gamma") or k.endswith(".beta") or k.endswith(".bias"):
            params.tensors[k] += 0.1 * rng.standard_normal(params.tensors[k].shape)
    x = rng.integers(0, 2, size=(batch_size, spec.input_size)).astype(float)
    y = rng.integers(0, 2, size=(batch_size, spec.output_size)).astype(float)

    probe = params.copy()
    out, cache = forward(probe, x, "train")
    grads = backward(probe, cache, out, y)

    def loss_at() -> float:
        o, _ = forward(params.copy(), x, "train")
        return mse_loss(o, y)

    worst, where = {}, {}
    for k, tensor in params.tensors.items():
        flat = tensor.reshape(-1)
        numeric = np.empty_like(flat)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + step
            plus = loss_at()
            flat[idx] = orig - step
            minus = loss_at()
            flat[idx] = orig
            numeric[idx] = (plus - minus) / (2 * step)
        err = relative_error(grads[k].reshape(-1), numeric)
        worst[k] = float(err.max())
        where[k] = int(err.argmax())
    return GradCheckReport(worst, where, tolerance)
