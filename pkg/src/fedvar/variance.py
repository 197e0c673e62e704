"""Model-variance monitoring: local states, the sketch-based estimator,
the exact variance, the query schedule and the threshold update rule."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .params import as_vector, check_finite
from .sketch import SketchConfig, SketchMatrix, combine, estimate_f2, sketch

DEFAULT_THETA_MIN = 1e-12


@dataclass(frozen=True)
class LocalState:
    """What one client ships at a query step: ``[||drift||^2, sk(drift)]``."""

    drift_norm_sq: float
    drift_sketch: SketchMatrix


@dataclass(frozen=True)
class GlobalState:
    mean_norm_sq: float
    mean_sketch: SketchMatrix
    cohort_size: int


def local_state(config: SketchConfig, delta) -> LocalState:
    delta = check_finite(as_vector(delta), "drift")
    return LocalState(float(np.dot(delta, delta)), sketch(config, delta))


def aggregate(states: Sequence[LocalState]) -> GlobalState:
    if len(states) == 0:
        raise ValueError("cannot aggregate an empty cohort")
    n = len(states)
    total = 0.0
    for s in states:
        total += s.drift_norm_sq
    mean_sk = combine([s.drift_sketch for s in states], [1.0 / n] * n)
    return GlobalState(total / n, mean_sk, n)


def estimate_variance(g: GlobalState) -> float:
    """``mean ||drift||^2 - F2(mean sketch)``; may dip below zero from sketch noise."""
    return g.mean_norm_sq - estimate_f2(g.mean_sketch)


def exact_variance(deltas: Sequence) -> float:
    """Mean squared drift norm minus squared norm of the mean drift.

    Rounding residue below zero is clamped to 0.
    """
    if len(deltas) == 0:
        raise ValueError("no drifts given")
    D = np.stack([as_vector(x) for x in deltas])
    first = float(np.mean(np.einsum("ij,ij->i", D, D)))
    g = D.mean(axis=0)
    return max(first - float(np.dot(g, g)), 0.0)


def query_indices(e_steps: int, tau_tilde: int) -> list[int]:
    """Steps ``e, 2e, ..., floor(tau_tilde / e) * e``; empty when e > tau_tilde."""
    if e_steps < 1 or tau_tilde < 1:
        raise ValueError("e_steps and tau_tilde must be >= 1")
    return list(range(e_steps, tau_tilde + 1, e_steps))


def threshold_adjust(
    var_t: float, s_t: int, tau_tilde: int, theta_min: float = DEFAULT_THETA_MIN
) -> float:
    """Next threshold assuming variance grows linearly with local steps:
    extrapolate the end-of-round variance from ``s_t`` to ``tau_tilde / 2``.

    A zero variance would pin the threshold at 0 forever, so it maps to
    ``theta_min`` instead.
    """
    if s_t < 1:
        raise ValueError(f"s_t must be >= 1, got {s_t}")
    if var_t < 0:
        raise ValueError(f"var_t must be >= 0, got {var_t}")
    if var_t == 0:
        return theta_min
    return (tau_tilde / 2) / s_t * var_t


def extend_tau(tau: int, e_steps: float) -> int:
    """``2 * tau + 8 * ceil(e)``."""
    if tau < 1 or e_steps < 1:
        raise ValueError("tau and e_steps must be >= 1")
    return 2 * int(tau) + 8 * math.ceil(e_steps)

