"""The outfit scoring model.

A small MLP over the fixed-length outfit representation: fully-connected
hidden layers, each followed by batch normalization, ReLU and dropout,
then a 2-d linear layer with softmax. Trained with cross-entropy via
stochastic gradient descent with momentum. Everything is numpy; all
randomness flows from explicit seeds so runs are bit-reproducible.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Union

import numpy as np

from .catalog import Outfit
from .features import FeatureExtractor, outfit_representation

MODEL_NAMES = {
    "one_fc4096": [4096],
    "one_fc128": [128],
    "two_fc128": [128, 128],
}

CHECKPOINT_MAGIC = b"OGRD1"


class GraderError(Exception):
    pass


class ShapeMismatch(GraderError):
    pass


class DivergenceDetected(GraderError):
    """Training loss became non-finite."""


@dataclass
class MLPConfig:
    input_dim: int
    hidden_dims: list[int] = field(default_factory=lambda: [128])
    name: str = "one_fc128"
    dropout_rate: float = 0.5
    batchnorm: bool = True

    def __post_init__(self):
        if self.input_dim < 1:
            raise ValueError("input_dim must be >= 1")
        if self.name in MODEL_NAMES and self.hidden_dims != MODEL_NAMES[self.name]:
            raise ValueError(
                f"config {self.name!r} requires hidden dims {MODEL_NAMES[self.name]}"
            )
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")

    @classmethod
    def named(cls, name: str, input_dim: int, dropout_rate: float = 0.5,
              batchnorm: bool = True) -> "MLPConfig":
        if name not in MODEL_NAMES:
            raise ValueError(f"unknown model name {name!r}; choose from {sorted(MODEL_NAMES)}")
        return cls(
            input_dim=input_dim,
            hidden_dims=list(MODEL_NAMES[name]),
            name=name,
            dropout_rate=dropout_rate,
            batchnorm=batchnorm,
        )


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    momentum: float = 0.9
    iterations: int = 20_000
    batch_size: int = 64
    seed: int = 0
    weight_decay: float = 0.0
    log_every: int = 100

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")


@dataclass
class Score:
    positive_probability: float
    predicted_label: bool


BN_EPS = 1e-5
BN_MOMENTUM = 0.1  # running = (1 - m) * running + m * batch


class MLPModel:
    """Parameter container; ``params`` maps names to mutable arrays."""

    def __init__(self, config: MLPConfig):
        self.config = config
        self.params: dict[str, np.ndarray] = {}
        self.running: dict[str, np.ndarray] = {}

    @property
    def input_dim(self) -> int:
        return self.config.input_dim

    def param_names(self) -> list[str]:
        """Tensor declaration order, also the checkpoint layout order."""
        names = []
        for i in range(len(self.config.hidden_dims)):
            names += [f"h{i}.W", f"h{i}.b"]
            if self.config.batchnorm:
                names += [f"h{i}.gamma", f"h{i}.beta"]
        names += ["out.W", "out.b"]
        return names

    def running_names(self) -> list[str]:
        if not self.config.batchnorm:
            return []
        names = []
        for i in range(len(self.config.hidden_dims)):
            names += [f"h{i}.running_mean", f"h{i}.running_var"]
        return names


def build_model(config: MLPConfig, seed: int = 0) -> MLPModel:
    """Initialize weights uniform in +-sqrt(6/(fan_in+fan_out)), biases zero,
    batchnorm at identity. Deterministic given the seed."""
    rng = np.random.default_rng(seed)
    model = MLPModel(config)
    fan_in = config.input_dim
    for i, width in enumerate(config.hidden_dims):
        bound = np.sqrt(6.0 / (fan_in + width))
        model.params[f"h{i}.W"] = rng.uniform(-bound, bound, size=(width, fan_in))
        model.params[f"h{i}.b"] = np.zeros(width)
        if config.batchnorm:
            model.params[f"h{i}.gamma"] = np.ones(width)
            model.params[f"h{i}.beta"] = np.zeros(width)
            model.running[f"h{i}.running_mean"] = np.zeros(width)
            model.running[f"h{i}.running_var"] = np.ones(width)
        fan_in = width
    bound = np.sqrt(6.0 / (fan_in + 2))
    model.params["out.W"] = rng.uniform(-bound, bound, size=(2, fan_in))
    model.params["out.b"] = np.zeros(2)
    return model


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def forward(
    model: MLPModel,
    x: np.ndarray,
    mode: str = "eval",
    dropout_rng: Optional[np.random.Generator] = None,
    update_running: bool = False,
):
    """Class probabilities for a batch (columns: [negative, positive]).

    Eval mode uses batchnorm running statistics and no dropout; train
    mode uses batch statistics and a dropout mask from ``dropout_rng``.
    In train mode returns (probs, cache) for backpropagation.
    """
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    if x.shape[1] != model.config.input_dim:
        raise ShapeMismatch(
            f"input dim {x.shape[1]} does not match model input {model.config.input_dim}"
        )
    train = mode == "train"
    cfg = model.config
    cache: dict = {"inputs": [], "bn": [], "relu_in": [], "masks": []}
    h = x
    for i in range(len(cfg.hidden_dims)):
        cache["inputs"].append(h)
        z = h @ model.params[f"h{i}.W"].T + model.params[f"h{i}.b"]
        if cfg.batchnorm:
            if train:
                mu = z.mean(axis=0)
                var = z.var(axis=0)
                if update_running:
                    model.running[f"h{i}.running_mean"] *= 1 - BN_MOMENTUM
                    model.running[f"h{i}.running_mean"] += BN_MOMENTUM * mu
                    model.running[f"h{i}.running_var"] *= 1 - BN_MOMENTUM
                    model.running[f"h{i}.running_var"] += BN_MOMENTUM * var
            else:
                mu = model.running[f"h{i}.running_mean"]
                var = model.running[f"h{i}.running_var"]
            inv_std = 1.0 / np.sqrt(var + BN_EPS)
            xhat = (z - mu) * inv_std
            a = model.params[f"h{i}.gamma"] * xhat + model.params[f"h{i}.beta"]
            cache["bn"].append((z, mu, var, xhat, inv_std))
        else:
            a = z
            cache["bn"].append(None)
        cache["relu_in"].append(a)
        h = np.maximum(a, 0.0)
        if train and cfg.dropout_rate > 0.0:
            if dropout_rng is None:
                raise GraderError("train-mode forward with dropout requires a generator")
            keep = 1.0 - cfg.dropout_rate
            mask = (dropout_rng.random(h.shape) < keep) / keep
            h = h * mask
            cache["masks"].append(mask)
        else:
            cache["masks"].append(None)
    cache["last_hidden"] = h
    logits = h @ model.params["out.W"].T + model.params["out.b"]
    probs = _softmax(logits)
    if squeeze:
        probs = probs[0]
    return (probs, cache) if train else probs


def loss_and_grad(
    model: MLPModel,
    x: np.ndarray,
    y: np.ndarray,
    dropout_rng: Optional[np.random.Generator] = None,
    update_running: bool = False,
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean cross-entropy over the batch and gradients for every parameter.

    Backpropagates through softmax, the output linear layer, dropout,
    ReLU, batch normalization (via batch statistics) and the hidden
    linear layers.
    """
    if len(x) == 0:
        raise GraderError("batch is empty")
    y = np.asarray(y, dtype=int)
    probs, cache = forward(model, x, mode="train", dropout_rng=dropout_rng,
                           update_running=update_running)
    n = len(x)
    eps = 1e-300  # guards log(0); gradients use probs directly
    loss = float(-np.log(probs[np.arange(n), y] + eps).mean())

    grads: dict[str, np.ndarray] = {}
    dlogits = probs.copy()
    dlogits[np.arange(n), y] -= 1.0
    dlogits /= n
    h_last = cache["last_hidden"]
    grads["out.W"] = dlogits.T @ h_last
    grads["out.b"] = dlogits.sum(axis=0)
    dh = dlogits @ model.params["out.W"]

    cfg = model.config
    for i in reversed(range(len(cfg.hidden_dims))):
        mask = cache["masks"][i]
        if mask is not None:
            dh = dh * mask
        dh = dh * (cache["relu_in"][i] > 0.0)
        if cfg.batchnorm:
            z, mu, var, xhat, inv_std = cache["bn"][i]
            grads[f"h{i}.gamma"] = (dh * xhat).sum(axis=0)
            grads[f"h{i}.beta"] = dh.sum(axis=0)
            dxhat = dh * model.params[f"h{i}.gamma"]
            m = z.shape[0]
            # batch statistics are functions of z, so fold their gradients back
            dvar = (dxhat * (z - mu)).sum(axis=0) * (-0.5) * inv_std**3
            dmu = -(dxhat.sum(axis=0)) * inv_std + dvar * (-2.0 / m) * (z - mu).sum(axis=0)
            dz = dxhat * inv_std + dvar * 2.0 * (z - mu) / m + dmu / m
        else:
            dz = dh
        x_in = cache["inputs"][i]
        grads[f"h{i}.W"] = dz.T @ x_in
        grads[f"h{i}.b"] = dz.sum(axis=0)
        dh = dz @ model.params[f"h{i}.W"]
    return loss, grads


@dataclass
class TrainLogEntry:
    iteration: int
    loss: float
    train_accuracy: float


@dataclass
class TrainLog:
    entries: list[TrainLogEntry] = field(default_factory=list)

    def to_csv(self, path: Union[str, Path]) -> None:
        lines = ["iteration,loss,train_accuracy"]
        lines += [f"{e.iteration},{e.loss:.6f},{e.train_accuracy:.6f}" for e in self.entries]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def train(
    model: MLPModel,
    x: np.ndarray,
    y: np.ndarray,
    config: TrainConfig,
    progress_cb: Optional[Callable[[int, int], None]] = None,
) -> tuple[MLPModel, TrainLog]:
    """SGD with momentum on cross-entropy: v <- m*v - lr*g; theta <- theta + v.

    Batches come from a seeded reshuffle each epoch; one iteration is one
    batch. The model is updated in place and also returned.
    """
    if len(x) == 0:
        raise GraderError("training set is empty")
    y = np.asarray(y, dtype=int)
    order_rng = np.random.default_rng(config.seed)
    dropout_rng = np.random.default_rng([config.seed, 1])
    velocity = {k: np.zeros_like(v) for k, v in model.params.items()}
    log = TrainLog()
    n = len(x)
    order = order_rng.permutation(n)
    cursor = 0
    for it in range(1, config.iterations + 1):
        if cursor >= n:
            order = order_rng.permutation(n)
            cursor = 0
        batch_idx = order[cursor : cursor + config.batch_size]
        cursor += config.batch_size
        xb, yb = x[batch_idx], y[batch_idx]
        loss, grads = loss_and_grad(model, xb, yb, dropout_rng=dropout_rng,
                                    update_running=True)
        if not np.isfinite(loss):
            raise DivergenceDetected(f"loss became non-finite at iteration {it}")
        for name, g in grads.items():
            if config.weight_decay > 0.0:
                g = g + config.weight_decay * model.params[name]
            velocity[name] = config.momentum * velocity[name] - config.learning_rate * g
            model.params[name] += velocity[name]
        if it % config.log_every == 0 or it == config.iterations:
            probs = forward(model, xb, mode="eval")
            acc = float((probs.argmax(axis=1) == yb).mean())
            log.entries.append(TrainLogEntry(iteration=it, loss=loss, train_accuracy=acc))
            if progress_cb is not None:
                progress_cb(it, config.iterations)
    return model, log


def positive_probabilities(model: MLPModel, x: np.ndarray) -> np.ndarray:
    """Vectorized positive-class probabilities for a batch of representations."""
    if len(x) == 0:
        return np.zeros(0)
    return forward(model, x, mode="eval")[:, 1]


def score_outfit(model: MLPModel, outfit: Outfit, extractor: FeatureExtractor) -> Score:
    """Compose representation + eval-mode forward; pure and deterministic."""
    rep = outfit_representation(outfit, extractor)
    probs = forward(model, rep, mode="eval")
    p = float(probs[1])
    return Score(positive_probability=p, predicted_label=p >= 0.5)


def predict_labels(model: MLPModel, x: np.ndarray) -> np.ndarray:
    return (positive_probabilities(model, x) >= 0.5).astype(bool)


# ---------------------------------------------------------------------------
# Checkpoints: magic OGRD1, uint32 config-JSON length, config JSON, then
# little-endian float32 tensors in declaration order (running stats last).
# ---------------------------------------------------------------------------


def save_checkpoint(model: MLPModel, path: Union[str, Path]) -> None:
    cfg = model.config
    doc = {
        "name": cfg.name,
        "input_dim": cfg.input_dim,
        "hidden_dims": cfg.hidden_dims,
        "dropout_rate": cfg.dropout_rate,
        "batchnorm": cfg.batchnorm,
    }
    blob = json.dumps(doc, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for name in model.param_names():
            f.write(model.params[name].astype("<f4").tobytes())
        for name in model.running_names():
            f.write(model.running[name].astype("<f4").tobytes())


def load_checkpoint(path: Union[str, Path]) -> MLPModel:
    raw = Path(path).read_bytes()
    if raw[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise GraderError(f"{path}: not a grader checkpoint (bad magic)")
    off = len(CHECKPOINT_MAGIC)
    (blob_len,) = struct.unpack_from("<I", raw, off)
    off += 4
    doc = json.loads(raw[off : off + blob_len].decode("utf-8"))
    off += blob_len
    config = MLPConfig(
        input_dim=doc["input_dim"],
        hidden_dims=list(doc["hidden_dims"]),
        name=doc["name"],
        dropout_rate=doc["dropout_rate"],
        batchnorm=doc["batchnorm"],
    )
    model = build_model(config, seed=0)
    for name in model.param_names():
        count = model.params[name].size
        vals = np.frombuffer(raw, dtype="<f4", count=count, offset=off)
        off += 4 * count
        model.params[name] = vals.astype(np.float64).reshape(model.params[name].shape)
    for name in model.running_names():
        count = model.running[name].size
        vals = np.frombuffer(raw, dtype="<f4", count=count, offset=off)
        off += 4 * count
        model.running[name] = vals.astype(np.float64).reshape(model.running[name].shape)
    if off != len(raw):
        raise GraderError(f"{path}: trailing bytes in checkpoint")
    return model
