"""Student networks trained to imitate the teacher's topic mixtures.

Two shapes exist: a one-hidden-layer net whose hidden width is 2K, and a
two-hidden-layer net with widths 3K and 2K.  Hidden layers use tanh, the
output is a softmax over K topics, and training minimizes the soft-target
cross entropy -sum_i theta_i log f(v)_i by plain minibatch SGD.

The input is the dense TF count vector by default ("none"); an optional l1
mode divides by the document length for corpora with very long documents.
The normalization mode is stored on the model so inference always matches
training.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .corpus import TfVector
from .errors import (
    DimensionMismatchError,
    DivergenceError,
    DomainError,
)

MODEL_FORMAT_VERSION = 1
TWO_LAYER = "2l"
THREE_LAYER = "3l"
_HIDDEN_RULE = {TWO_LAYER: (2,), THREE_LAYER: (3, 2)}


@dataclass(frozen=True)
class MlpArchitecture:
    variant: str
    input_dim: int
    output_dim: int

    def __post_init__(self):
        if self.variant not in _HIDDEN_RULE:
            raise ValueError(f"unknown variant {self.variant!r} (expected '2l' or '3l')")
        if self.input_dim < 1 or self.output_dim < 1:
            raise ValueError("dimensions must be >= 1")

    @property
    def hidden_dims(self) -> tuple[int, ...]:
        return tuple(m * self.output_dim for m in _HIDDEN_RULE[self.variant])

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden_dims, self.output_dim)


@dataclass(eq=False)
class MlpModel:
    architecture: MlpArchitecture
    weights: list[np.ndarray]  # per layer, shape (out, in)
    biases: list[np.ndarray]  # per layer, shape (out,)
    input_norm: str = "none"

    def __post_init__(self):
        dims = self.architecture.layer_dims
        if len(self.weights) != len(dims) - 1 or len(self.biases) != len(dims) - 1:
            raise DimensionMismatchError("layer count does not match architecture")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (dims[i + 1], dims[i]) or b.shape != (dims[i + 1],):
                raise DimensionMismatchError(
                    f"layer {i} has shape {w.shape}/{b.shape}, expected "
                    f"({dims[i + 1]}, {dims[i]})/({dims[i + 1]},)"
                )
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise DivergenceError(f"layer {i} contains non-finite parameters")
        if self.input_norm not in ("none", "l1"):
            raise ValueError(f"unknown input_norm {self.input_norm!r}")

    @property
    def n_parameters(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    epochs: int = 100
    batch_size: int = 16
    seed: int = 0
    lr_decay: float = 0.98
    shuffle: bool = True
    momentum: float = 0.0
    weight_decay: float = 0.0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)


def init_mlp(arch: MlpArchitecture, seed: int, input_norm: str = "none") -> MlpModel:
    """Glorot-uniform weights (±sqrt(6/(fan_in+fan_out))), zero biases."""
    rng = np.random.default_rng(seed)
    dims = arch.layer_dims
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpModel(architecture=arch, weights=weights, biases=biases,
                    input_norm=input_norm)


def _dense_input(model: MlpModel, v) -> np.ndarray:
    if isinstance(v, TfVector):
        if v.indices.size and int(v.indices.max()) >= model.architecture.input_dim:
            raise DimensionMismatchError(
                f"document references word index {int(v.indices.max())}, "
                f"input dimension is {model.architecture.input_dim}"
            )
        x = v.to_dense(model.architecture.input_dim)
    else:
        x = np.asarray(v, dtype=np.float64)
        if x.shape != (model.architecture.input_dim,):
            raise DimensionMismatchError(
                f"input has shape {x.shape}, expected ({model.architecture.input_dim},)"
            )
        x = x.copy()
    if model.input_norm == "l1":
        total = x.sum()
        if total > 0:
            x /= total
    return x


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _forward_batch(model: MlpModel, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    """Returns (softmax probabilities, post-tanh hidden activations per layer)."""
    hidden: list[np.ndarray] = []
    a = x
    for w, b in zip(model.weights[:-1], model.biases[:-1]):
        a = np.tanh(a @ w.T + b)
        hidden.append(a)
    logits = a @ model.weights[-1].T + model.biases[-1]
    return _softmax_rows(logits), hidden


def forward(model: MlpModel, v) -> np.ndarray:
    """Map one TF vector (or dense array) to a point on the K-simplex."""
    x = _dense_input(model, v)[None, :]
    probs, _ = _forward_batch(model, x)
    return probs[0]


def cross_entropy(target: np.ndarray, prediction: np.ndarray) -> float:
    """-sum_i target_i log prediction_i (the per-document distillation loss)."""
    target = np.asarray(target, dtype=np.float64)
    prediction = np.asarray(prediction, dtype=np.float64)
    if target.shape != prediction.shape:
        raise DimensionMismatchError(
            f"target has shape {target.shape}, prediction {prediction.shape}"
        )
    if np.any(prediction <= 0):
        raise DomainError("prediction entries must be strictly positive")
    return float(-(target * np.log(prediction)).sum())


def _log_softmax_rows(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _batch_arrays(model: MlpModel, batch) -> tuple[np.ndarray, np.ndarray]:
    xs = np.stack([_dense_input(model, v) for v, _ in batch])
    ts = np.stack([np.asarray(t, dtype=np.float64) for _, t in batch])
    if ts.shape[1] != model.architecture.output_dim:
        raise DimensionMismatchError(
            f"targets have {ts.shape[1]} entries, model outputs "
            f"{model.architecture.output_dim}"
        )
    return xs, ts


def _loss_and_grads(model: MlpModel, xs: np.ndarray, ts: np.ndarray):
    """Mean cross entropy over the batch plus mean parameter gradients.

    The output-layer pre-activation delta is probs - targets per item;
    hidden deltas follow from tanh'(z) = 1 - tanh(z)^2.
    """
    n = xs.shape[0]
    activations = [xs]
    a = xs
    for w, b in zip(model.weights[:-1], model.biases[:-1]):
        a = np.tanh(a @ w.T + b)
        activations.append(a)
    logits = a @ model.weights[-1].T + model.biases[-1]
    log_probs = _log_softmax_rows(logits)
    loss = float(-(ts * log_probs).sum() / n)

    grads_w = [np.empty_like(w) for w in model.weights]
    grads_b = [np.empty_like(b) for b in model.biases]
    delta = (np.exp(log_probs) - ts) / n  # (n, K); the 1/n makes sums means
    for layer in range(len(model.weights) - 1, -1, -1):
        grads_w[layer] = delta.T @ activations[layer]
        grads_b[layer] = delta.sum(axis=0)
        if layer > 0:
            back = delta @ model.weights[layer]
            delta = back * (1.0 - activations[layer] ** 2)
    return loss, grads_w, grads_b


def gradient(model: MlpModel, batch):
    """Mean-over-batch gradient of the distillation loss.

    `batch` is a non-empty list of (TfVector-or-dense, target mixture)
    pairs; returns (weight gradients, bias gradients) shaped like the model
    parameters.
    """
    if not batch:
        raise ValueError("batch must be non-empty")
    xs, ts = _batch_arrays(model, batch)
    _, grads_w, grads_b = _loss_and_grads(model, xs, ts)
    return grads_w, grads_b


def mean_loss(model: MlpModel, pairs) -> float:
    """Mean cross entropy of the model on (vector, target) pairs."""
    if not pairs:
        raise ValueError("pairs must be non-empty")
    xs, ts = _batch_arrays(model, pairs)
    loss, _, _ = _loss_and_grads(model, xs, ts)
    return loss


def train_sgd(model: MlpModel, train_pairs, config: TrainConfig,
              validation_pairs=None) -> tuple[MlpModel, TrainHistory]:
    """Minibatch SGD on the distillation loss; mutates and returns `model`.

    Per epoch: seeded shuffle (when enabled), gradient steps over
    minibatches, then the learning rate is multiplied by lr_decay.  The
    recorded train loss is the doc-weighted mean of batch losses at the
    parameters each batch saw; validation loss is evaluated after the
    epoch.  Bit-for-bit reproducible for a fixed seed and single thread.
    """
    if not train_pairs:
        raise ValueError("train_pairs must be non-empty")
    train_pairs = list(train_pairs)
    rng = np.random.default_rng(config.seed)
    lr = config.learning_rate
    history = TrainHistory()
    velocity_w = [np.zeros_like(w) for w in model.weights]
    velocity_b = [np.zeros_like(b) for b in model.biases]
    n = len(train_pairs)

    for _ in range(config.epochs):
        order = rng.permutation(n) if config.shuffle else np.arange(n)
        epoch_loss = 0.0
        for start in range(0, n, config.batch_size):
            batch = [train_pairs[i] for i in order[start:start + config.batch_size]]
            xs, ts = _batch_arrays(model, batch)
            loss, grads_w, grads_b = _loss_and_grads(model, xs, ts)
            epoch_loss += loss * len(batch)
            for layer in range(len(model.weights)):
                gw, gb = grads_w[layer], grads_b[layer]
                if config.weight_decay:
                    gw = gw + config.weight_decay * model.weights[layer]
                if config.momentum:
                    velocity_w[layer] = config.momentum * velocity_w[layer] - lr * gw
                    velocity_b[layer] = config.momentum * velocity_b[layer] - lr * gb
                    model.weights[layer] += velocity_w[layer]
                    model.biases[layer] += velocity_b[layer]
                else:
                    model.weights[layer] -= lr * gw
                    model.biases[layer] -= lr * gb
        epoch_loss /= n
        if not np.isfinite(epoch_loss):
            raise DivergenceError(
                f"mean train loss became non-finite ({epoch_loss}); lower the learning rate"
            )
        history.train_loss.append(epoch_loss)
        if validation_pairs:
            history.val_loss.append(mean_loss(model, validation_pairs))
        lr *= config.lr_decay
    return model, history


# ---------------------------------------------------------------------------
# Serialization


def save_model(model: MlpModel, path) -> None:
    payload = {
        "version": MODEL_FORMAT_VERSION,
        "variant": model.architecture.variant,
        "V": model.architecture.input_dim,
        "K": model.architecture.output_dim,
        "input_norm": model.input_norm,
        "layers": [
            {
                "rows": w.shape[0],
                "cols": w.shape[1],
                "weights": w.ravel().tolist(),
                "bias": b.tolist(),
            }
            for w, b in zip(model.weights, model.biases)
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)
        fh.write("\n")


def load_model(path) -> MlpModel:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    version = payload.get("version")
    if version != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model version {version!r}")
    arch = MlpArchitecture(
        variant=payload["variant"],
        input_dim=int(payload["V"]),
        output_dim=int(payload["K"]),
    )
    weights, biases = [], []
    for layer in payload["layers"]:
        w = np.array(layer["weights"], dtype=np.float64).reshape(
            int(layer["rows"]), int(layer["cols"])
        )
        weights.append(w)
        biases.append(np.array(layer["bias"], dtype=np.float64))
    return MlpModel(
        architecture=arch,
        weights=weights,
        biases=biases,
        input_norm=payload.get("input_norm", "none"),
    )
