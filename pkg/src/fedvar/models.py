"""Desk-scale differentiable models with hand-written backpropagation.

Parameter layout (flat, float64), layer by layer::

    LogReg: W (input_dim x num_classes, row-major), b (num_classes)
    MLP:    W1 (input_dim x hidden_dim), b1 (hidden_dim),
            W2 (hidden_dim x num_classes), b2 (num_classes)

The MLP uses a tanh hidden layer; both models end in a softmax with mean
cross-entropy loss.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .params import NonFiniteError, as_vector


class ModelKind(str, Enum):
    LOGREG = "LogReg"
    MLP = "MLP"


@dataclass(frozen=True)
class ModelSpec:
    kind: ModelKind = ModelKind.LOGREG
    input_dim: int = 2
    num_classes: int = 2
    hidden_dim: int = 16
    init_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", ModelKind(self.kind))
        if self.input_dim <= 0 or self.num_classes <= 0:
            raise ValueError("input_dim and num_classes must be positive")
        if self.kind is ModelKind.MLP and self.hidden_dim <= 0:
            raise ValueError("hidden_dim must be positive for MLP")

    def layer_shapes(self) -> list[tuple[int, int]]:
        if self.kind is ModelKind.LOGREG:
            return [(self.input_dim, self.num_classes)]
        return [(self.input_dim, self.hidden_dim), (self.hidden_dim, self.num_classes)]

    @property
    def num_params(self) -> int:
        return sum((fan_in + 1) * fan_out for fan_in, fan_out in self.layer_shapes())


@dataclass(frozen=True)
class Batch:
    features: np.ndarray
    labels: np.ndarray

    def __len__(self) -> int:
        return int(self.labels.shape[0])


def _unpack(spec: ModelSpec, w: np.ndarray):
    w = as_vector(w)
    if w.size != spec.num_params:
        raise ValueError(f"expected {spec.num_params} parameters, got {w.size}")
    layers = []
    off = 0
    for fan_in, fan_out in spec.layer_shapes():
        W = w[off : off + fan_in * fan_out].reshape(fan_in, fan_out)
        off += fan_in * fan_out
        b = w[off : off + fan_out]
        off += fan_out
        layers.append((W, b))
    return layers


def init_params(spec: ModelSpec) -> np.ndarray:
    """LogReg starts at zero; MLP weights are Glorot-uniform, biases zero."""
    if spec.kind is ModelKind.LOGREG:
        return np.zeros(spec.num_params, dtype=np.float64)
    rng = np.random.default_rng(spec.init_seed)
    parts = []
    for fan_in, fan_out in spec.layer_shapes():
        a = math.sqrt(6.0 / (fan_in + fan_out))
        parts.append(rng.uniform(-a, a, size=fan_in * fan_out))
        parts.append(np.zeros(fan_out))
    return np.concatenate(parts).astype(np.float64)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def _check_batch(spec: ModelSpec, X: np.ndarray, y: np.ndarray):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or X.shape[1] != spec.input_dim:
        raise ValueError(f"features must have shape (n, {spec.input_dim}), got {X.shape}")
    if y.shape != (X.shape[0],):
        raise ValueError("labels must be a vector with one entry per row")
    if X.shape[0] == 0:
        raise ValueError("empty batch")
    if y.min() < 0 or y.max() >= spec.num_classes:
        raise ValueError("label out of range")
    return X, y


def logits(spec: ModelSpec, w, X) -> np.ndarray:
    layers = _unpack(spec, w)
    h = np.asarray(X, dtype=np.float64)
    for idx, (W, b) in enumerate(layers):
        h = h @ W + b
        if idx < len(layers) - 1:
            h = np.tanh(h)
    return h


def loss_and_grad(spec: ModelSpec, w, batch: Batch) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over ``batch`` and its exact gradient in flat layout."""
    X, y = _check_batch(spec, batch.features, batch.labels)
    n = X.shape[0]
    layers = _unpack(spec, w)

    acts = [X]
    h = X
    for idx, (W, b) in enumerate(layers):
        h = h @ W + b
        if idx < len(layers) - 1:
            h = np.tanh(h)
        acts.append(h)

    logp = _log_softmax(h)
    loss = -float(logp[np.arange(n), y].mean())
    if not math.isfinite(loss):
        raise NonFiniteError("loss is not finite")

    delta = np.exp(logp)
    delta[np.arange(n), y] -= 1.0
    delta /= n

    grads = []
    for idx in range(len(layers) - 1, -1, -1):
        W, _ = layers[idx]
        inp = acts[idx]
        grads.append((inp.T @ delta, delta.sum(axis=0)))
        if idx > 0:
            # inp is the tanh output of the previous layer
            delta = (delta @ W.T) * (1.0 - inp * inp)
    grads.reverse()
    flat = np.concatenate([np.concatenate([gW.ravel(), gb]) for gW, gb in grads])
    return loss, flat


def predict(spec: ModelSpec, w, X) -> np.ndarray:
    # np.argmax returns the first maximum, i.e. lowest class index wins ties
    return np.argmax(logits(spec, w, X), axis=1)


def evaluate(spec: ModelSpec, w, dataset) -> tuple[float, float]:
    """Full-dataset mean loss and top-1 accuracy.

    ``dataset`` is anything with ``features`` and ``labels`` attributes.
    """
    if len(dataset.labels) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    X, y = _check_batch(spec, dataset.features, dataset.labels)
    out = logits(spec, w, X)
    logp = _log_softmax(out)
    loss = -float(logp[np.arange(len(y)), y].mean())
    acc = float(np.mean(np.argmax(out, axis=1) == y))
    return loss, acc
