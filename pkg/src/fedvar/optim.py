"""First-order optimizers used on both sides of a federated round.

Clients run plain SGD; the server treats the averaged negative drift as a
gradient and feeds it to any of the optimizers below. All updates are
state-in/state-out so the engine can reset client state every round while
persisting the server state.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from .params import as_vector, check_finite


class OptKind(str, Enum):
    SGD = "SGD"
    SGDM = "SGDM"
    ADAM = "Adam"
    ADAMW = "AdamW"
    ADAGRAD = "AdaGrad"


@dataclass(frozen=True)
class OptimizerSpec:
    kind: OptKind = OptKind.SGD
    learning_rate: float = 1.0
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    weight_decay: float = 0.01

    def __post_init__(self):
        object.__setattr__(self, "kind", OptKind(self.kind))
        if not (self.learning_rate > 0 and math.isfinite(self.learning_rate)):
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must lie in [0, 1), got {self.momentum}")
        for name in ("beta1", "beta2"):
            b = getattr(self, name)
            if not 0.0 <= b < 1.0:
                raise ValueError(f"{name} must lie in [0, 1), got {b}")
        if self.epsilon < 0 or (self.epsilon == 0 and self.kind is not OptKind.ADAGRAD):
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be >= 0, got {self.weight_decay}")


@dataclass(frozen=True)
class OptimizerState:
    kind: OptKind
    step: int = 0
    buf: Optional[np.ndarray] = field(default=None, repr=False)  # SGDM momentum
    m: Optional[np.ndarray] = field(default=None, repr=False)
    v: Optional[np.ndarray] = field(default=None, repr=False)
    acc: Optional[np.ndarray] = field(default=None, repr=False)  # AdaGrad


# Table-1 style pairings: FedOpt name -> (FDA-Opt name, server optimizer kind).
# Client optimizer is SGD in every row.
PAIRINGS = {
    "FedAvg": ("FDA-SGD", OptKind.SGD),
    "FedAvgM": ("FDA-SGDM", OptKind.SGDM),
    "FedAdam": ("FDA-Adam", OptKind.ADAM),
    "FedAdamW": ("FDA-AdamW", OptKind.ADAMW),
    "FedAdaGrad": ("FDA-AdaGrad", OptKind.ADAGRAD),
}

FEDAVG_SERVER = OptimizerSpec(OptKind.SGD, learning_rate=1.0)


def init_state(spec: OptimizerSpec, d: int) -> OptimizerState:
    if d <= 0:
        raise ValueError(f"d must be positive, got {d}")
    z = lambda: np.zeros(d, dtype=np.float64)  # noqa: E731
    kind = spec.kind
    if kind is OptKind.SGD:
        return OptimizerState(kind)
    if kind is OptKind.SGDM:
        return OptimizerState(kind, buf=z())
    if kind in (OptKind.ADAM, OptKind.ADAMW):
        return OptimizerState(kind, m=z(), v=z())
    return OptimizerState(kind, acc=z())


def step(spec: OptimizerSpec, state: OptimizerState, w, g):
    """Apply one update; returns ``(new_w, new_state)`` without mutating inputs.

    SGDM is plain heavy-ball without dampening. AdamW applies the decoupled
    decay ``w <- w - lr * wd * w`` before the Adam step. AdaGrad keeps epsilon
    inside the denominator, ``sqrt(acc) + eps``.
    """
    if state.kind is not spec.kind:
        raise ValueError(f"state kind {state.kind.value} does not match spec {spec.kind.value}")
    w, g = as_vector(w), as_vector(g)
    if w.shape != g.shape:
        raise ValueError(f"shape mismatch: w {w.shape} vs g {g.shape}")
    lr = spec.learning_rate
    kind = spec.kind
    n = state.step + 1

    if kind is OptKind.SGD:
        new_w = w - lr * g
        new_state = dataclasses.replace(state, step=n)
    elif kind is OptKind.SGDM:
        buf = spec.momentum * state.buf + g
        new_w = w - lr * buf
        new_state = dataclasses.replace(state, step=n, buf=buf)
    elif kind in (OptKind.ADAM, OptKind.ADAMW):
        m = spec.beta1 * state.m + (1.0 - spec.beta1) * g
        v = spec.beta2 * state.v + (1.0 - spec.beta2) * (g * g)
        m_hat = m / (1.0 - spec.beta1**n)
        v_hat = v / (1.0 - spec.beta2**n)
        base = w
        if kind is OptKind.ADAMW:
            base = w - lr * spec.weight_decay * w
        new_w = base - lr * m_hat / (np.sqrt(v_hat) + spec.epsilon)
        new_state = dataclasses.replace(state, step=n, m=m, v=v)
    else:
        acc = state.acc + g * g
        denom = np.sqrt(acc) + spec.epsilon
        # acc == 0 implies g == 0 there; avoid 0/0 when epsilon is 0
        ratio = np.divide(g, denom, out=np.zeros_like(g), where=denom > 0)
        new_w = w - lr * ratio
        new_state = dataclasses.replace(state, step=n, acc=acc)

    check_finite(new_w, f"{kind.value} update")
    return new_w, new_state
