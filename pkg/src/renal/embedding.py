"""Recurrent history embeddings trained by one-step prediction.

A single gated recurrent cell maps ``(x_i, h_i)`` to ``h_{i+1}``; an affine
decoder maps ``h_{i+1}`` to a prediction of ``x_{i+1}``. Event sequences get
an extra log inter-event-time input channel and an exponential decay of the
hidden state over the elapsed time. Inputs are z-scored with statistics of
the training sequence, which the model carries along.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Literal

import numpy as np

from renal import _cell
from renal.errors import DataFormatError, DivergenceError, InsufficientDataError, InvalidInputError
from renal.sequence import ObservationSequence

MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    epochs: int = 100
    optimizer: Literal["sgd", "adam"] = "adam"
    seed: int = 0
    bptt_window: int = 32

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise InvalidInputError("learning_rate must be positive")
        if self.epochs < 1:
            raise InvalidInputError("epochs must be at least 1")
        if self.optimizer not in ("sgd", "adam"):
            raise InvalidInputError(f"unknown optimizer {self.optimizer!r}")
        if self.bptt_window < 1:
            raise InvalidInputError("bptt_window must be positive")


@dataclass(frozen=True, eq=False)
class EmbeddingModel:
    kind: str
    hidden_dim: int
    input_dim: int  # network input width: d, plus 1 for event sequences
    output_dim: int  # d
    theta: np.ndarray
    input_mean: np.ndarray
    input_scale: np.ndarray
    h0: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.hidden_dim < 1:
            raise InvalidInputError("hidden_dim must be at least 1")
        _, size = _cell.layout(self.hidden_dim, self.input_dim, self.output_dim)
        theta = np.ascontiguousarray(self.theta, dtype=np.float64).reshape(-1)
        if theta.size != size:
            raise InvalidInputError(f"expected {size} parameters, got {theta.size}")
        h0 = np.zeros(self.hidden_dim) if self.h0 is None else np.asarray(self.h0, dtype=np.float64)
        arrays = [theta, np.asarray(self.input_mean, dtype=np.float64),
                  np.asarray(self.input_scale, dtype=np.float64), h0]
        if not all(np.all(np.isfinite(a)) for a in arrays):
            raise InvalidInputError("model parameters must be finite")
        for name, a in zip(("theta", "input_mean", "input_scale", "h0"), arrays):
            a = np.ascontiguousarray(a)
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @property
    def event(self) -> bool:
        return self.kind == "event"

    @property
    def params(self) -> dict[str, np.ndarray]:
        spec, _ = _cell.layout(self.hidden_dim, self.input_dim, self.output_dim)
        return {
            name: self.theta[off:off + int(np.prod(shape))].reshape(shape)
            for name, (off, shape) in spec.items()
        }

    def _dims(self):
        return self.hidden_dim, self.input_dim, self.output_dim, self.event


def init_model(kind: str, obs_dim: int, hidden_dim: int, seed: int,
               input_mean=None, input_scale=None) -> EmbeddingModel:
    """Fresh model with weights uniform in +-1/sqrt(fan_in) and zero biases."""
    if kind not in ("regular", "event"):
        raise InvalidInputError(f"unknown kind {kind!r}")
    width = obs_dim + (1 if kind == "event" else 0)
    spec, size = _cell.layout(hidden_dim, width, obs_dim)
    rng = np.random.default_rng(seed)
    theta = np.zeros(size)
    for name, (off, shape) in spec.items():
        if len(shape) == 2:
            bound = 1.0 / math.sqrt(shape[1])
            theta[off:off + shape[0] * shape[1]] = rng.uniform(-bound, bound, shape[0] * shape[1])
    return EmbeddingModel(
        kind=kind,
        hidden_dim=hidden_dim,
        input_dim=width,
        output_dim=obs_dim,
        theta=theta,
        input_mean=np.zeros(width) if input_mean is None else input_mean,
        input_scale=np.ones(width) if input_scale is None else input_scale,
    )


def fit_standardizer(seq: ObservationSequence):
    """Per-channel mean and scale of the encoded inputs of ``seq``."""
    cols = [seq.values]
    if seq.kind == "event":
        cols.append(np.log(seq.steps())[:, None])
    feats = np.hstack(cols)
    mean = feats.mean(axis=0)
    scale = feats.std(axis=0)
    scale = np.where(scale > 1e-12, scale, 1.0)
    return mean, scale


def _check_seq(model: EmbeddingModel, seq: ObservationSequence):
    if seq.d != model.output_dim:
        raise InvalidInputError(f"sequence dimension {seq.d} does not match model input dimension {model.output_dim}")
    if seq.kind != model.kind:
        raise InvalidInputError(f"model was built for {model.kind} sequences, got {seq.kind}")


def _encoded(model: EmbeddingModel, seq: ObservationSequence):
    dts = np.ascontiguousarray(seq.steps())
    X = _cell.encode(np.ascontiguousarray(seq.values), dts, model.event, model.input_mean, model.input_scale)
    T = (seq.values - model.input_mean[:seq.d]) / model.input_scale[:seq.d]
    return X, dts, np.ascontiguousarray(T)


def forward_step(model: EmbeddingModel, x, h, dt: float = 1.0) -> np.ndarray:
    """Next embedding from a raw observation ``x`` and current embedding ``h``."""
    x = np.ascontiguousarray(x, dtype=np.float64).reshape(-1)
    h = np.ascontiguousarray(h, dtype=np.float64).reshape(-1)
    if x.size != model.output_dim or h.size != model.hidden_dim:
        raise InvalidInputError(
            f"expected x of size {model.output_dim} and h of size {model.hidden_dim}, got {x.size} and {h.size}"
        )
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(h)) and math.isfinite(dt)):
        raise InvalidInputError("inputs must be finite")
    if model.event and dt <= 0:
        raise InvalidInputError("dt must be positive for event sequences")
    H, D, O, event = model._dims()
    return _cell.step_raw(model.theta, H, D, O, event, x, h, float(dt), model.input_mean, model.input_scale)


def embed_sequence(model: EmbeddingModel, seq: ObservationSequence) -> np.ndarray:
    """Embedding after each observation, shape ``(n, hidden_dim)``."""
    _check_seq(model, seq)
    H, D, O, event = model._dims()
    return _cell.run_raw(
        model.theta, H, D, O, event,
        np.ascontiguousarray(seq.values), np.ascontiguousarray(seq.steps()),
        model.input_mean, model.input_scale, model.h0,
    )


def predictive_mse(model: EmbeddingModel, seq: ObservationSequence) -> float:
    """Mean squared one-step prediction error in standardized units."""
    _check_seq(model, seq)
    H, D, O, event = model._dims()
    X, dts, T = _encoded(model, seq)
    return float(_cell.window_loss(model.theta, H, D, O, event, X[:-1], dts[:-1], T[1:], model.h0))


def loss_and_gradient(model: EmbeddingModel, seq: ObservationSequence):
    """Full-sequence (untruncated) loss and its gradient w.r.t. ``model.theta``."""
    _check_seq(model, seq)
    H, D, O, event = model._dims()
    X, dts, T = _encoded(model, seq)
    grad = np.empty_like(model.theta)
    loss, _ = _cell.window_grad(model.theta, H, D, O, event, X[:-1], dts[:-1], T[1:], model.h0, grad)
    return loss, grad


class _Adam:
    def __init__(self, size, lr, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, theta, grad):
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * grad
        self.v = self.b2 * self.v + (1 - self.b2) * grad * grad
        mhat = self.m / (1 - self.b1 ** self.t)
        vhat = self.v / (1 - self.b2 ** self.t)
        theta -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


class _SGD:
    def __init__(self, size, lr):
        self.lr = lr

    def step(self, theta, grad):
        theta -= self.lr * grad


def train(seq: ObservationSequence, hidden_dim: int, cfg: TrainConfig):
    """Fit cell and decoder on ``seq`` by truncated backpropagation through time.

    The sequence is cut into consecutive windows of ``cfg.bptt_window``
    transitions; the hidden state is carried across windows without gradient
    and parameters are updated once per window. Returns ``(model, losses)``
    where ``losses[e]`` is the full-sequence predictive MSE after epoch ``e``.
    """
    if seq.n < cfg.bptt_window + 1:
        raise InsufficientDataError(
            f"training needs at least bptt_window + 1 = {cfg.bptt_window + 1} observations, got {seq.n}"
        )
    mean, scale = fit_standardizer(seq)
    model = init_model(seq.kind, seq.d, hidden_dim, cfg.seed, mean, scale)
    H, D, O, event = model._dims()
    X, dts, T = _encoded(model, seq)
    X, dts, T = X[:-1], dts[:-1], T[1:]
    n_steps = X.shape[0]
    bounds = [(s, min(s + cfg.bptt_window, n_steps)) for s in range(0, n_steps, cfg.bptt_window)]

    theta = model.theta.copy()
    opt = (_Adam if cfg.optimizer == "adam" else _SGD)(theta.size, cfg.learning_rate)
    grad = np.empty_like(theta)
    losses = []
    for epoch in range(cfg.epochs):
        h = model.h0.copy()
        for a, b in bounds:
            _, h = _cell.window_grad(theta, H, D, O, event, X[a:b], dts[a:b], T[a:b], h, grad)
            if not np.all(np.isfinite(grad)):
                raise DivergenceError(epoch, float("nan"))
            opt.step(theta, grad)
        loss = float(_cell.window_loss(theta, H, D, O, event, X, dts, T, model.h0))
        if not math.isfinite(loss):
            raise DivergenceError(epoch, loss)
        losses.append(loss)
    return replace(model, theta=theta), losses


def gradient_check(model: EmbeddingModel, seq: ObservationSequence, epsilon: float = 1e-5) -> float:
    """Largest relative gap between analytic and central-difference gradients.

    The relative gap for one parameter is ``|a - f| / max(|a|, |f|, 1e-6)``.
    """
    _check_seq(model, seq)
    H, D, O, event = model._dims()
    X, dts, T = _encoded(model, seq)
    X, dts, T = X[:-1], dts[:-1], T[1:]
    grad = np.empty_like(model.theta)
    _cell.window_grad(model.theta, H, D, O, event, X, dts, T, model.h0, grad)
    theta = model.theta.copy()
    worst = 0.0
    for k in range(theta.size):
        orig = theta[k]
        theta[k] = orig + epsilon
        up = _cell.window_loss(theta, H, D, O, event, X, dts, T, model.h0)
        theta[k] = orig - epsilon
        down = _cell.window_loss(theta, H, D, O, event, X, dts, T, model.h0)
        theta[k] = orig
        fd = (up - down) / (2.0 * epsilon)
        rel = abs(grad[k] - fd) / max(abs(grad[k]), abs(fd), 1e-6)
        worst = max(worst, rel)
    return worst


def model_to_dict(model: EmbeddingModel) -> dict:
    params = {name: arr.reshape(-1).tolist() for name, arr in model.params.items()}
    params["input_mean"] = model.input_mean.tolist()
    params["input_scale"] = model.input_scale.tolist()
    params["h0"] = model.h0.tolist()
    return {
        "version": MODEL_FORMAT_VERSION,
        "kind": model.kind,
        "hidden_dim": model.hidden_dim,
        "input_dim": model.input_dim,
        "output_dim": model.output_dim,
        "params": params,
    }


def model_from_dict(doc: dict) -> EmbeddingModel:
    if doc.get("version") != MODEL_FORMAT_VERSION:
        raise DataFormatError(f"unsupported model format version {doc.get('version')!r}")
    try:
        H, D = int(doc["hidden_dim"]), int(doc["input_dim"])
        O = int(doc.get("output_dim", D - (1 if doc["kind"] == "event" else 0)))
        spec, size = _cell.layout(H, D, O)
        p = doc["params"]
        theta = np.zeros(size)
        for name, (off, shape) in spec.items():
            flat = np.asarray(p[name], dtype=np.float64)
            if flat.size != int(np.prod(shape)):
                raise DataFormatError(f"parameter {name} has {flat.size} entries, expected {int(np.prod(shape))}")
            theta[off:off + flat.size] = flat
        return EmbeddingModel(
            kind=doc["kind"], hidden_dim=H, input_dim=D, output_dim=O, theta=theta,
            input_mean=p["input_mean"], input_scale=p["input_scale"], h0=p.get("h0"),
        )
    except KeyError as exc:
        raise DataFormatError(f"model document is missing field {exc}") from None


def save_model(model: EmbeddingModel, path) -> None:
    # repr-based float output round-trips every double exactly
    Path(path).write_text(json.dumps(model_to_dict(model), indent=1) + "\n", encoding="utf-8")


def load_model(path) -> EmbeddingModel:
    return model_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
