"""Linear AMS sketches for estimating squared norms of drift vectors.

Each of ``depth`` rows maps coordinate j to bucket ``h_r(j) mod width`` with
sign ``s_r(j)`` and accumulates ``s_r(j) * v_j``. Both ``h_r`` and ``s_r``
are degree-3 polynomials over GF(2^61 - 1) (4-wise independent), with
coefficients drawn from a Philox counter-based generator keyed by the seed.
The sign is the parity bit of the second polynomial.

Hash tables depend only on ``(config, d)`` and are cached, so sketching a
vector costs ``depth`` bincounts.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .params import as_vector, check_finite

MERSENNE_61 = (1 << 61) - 1
_P = np.uint64(MERSENNE_61)
_MASK31 = np.uint64((1 << 31) - 1)
_MASK30 = np.uint64((1 << 30) - 1)


def mulmod61(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """``x * y mod 2^61 - 1`` for uint64 arrays with entries below the prime.

    Splits both factors at bit 31 so every partial product fits in 64 bits,
    then folds the high parts using ``2^61 = 1 (mod p)``.
    """
    x = np.asarray(x, dtype=np.uint64)
    y = np.asarray(y, dtype=np.uint64)
    x1, x0 = x >> np.uint64(31), x & _MASK31
    y1, y0 = y >> np.uint64(31), y & _MASK31
    hi = (x1 * y1) << np.uint64(1)  # x1*y1*2^62 = 2*x1*y1
    mid = x1 * y0 + x0 * y1
    mid = (mid >> np.uint64(30)) + ((mid & _MASK30) << np.uint64(31))
    s = hi + mid + x0 * y0
    s = (s & _P) + (s >> np.uint64(61))
    s = (s & _P) + (s >> np.uint64(61))
    return np.where(s >= _P, s - _P, s)


def addmod61(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    s = np.asarray(x, dtype=np.uint64) + np.asarray(y, dtype=np.uint64)
    return np.where(s >= _P, s - _P, s)


def poly_hash(coeffs: Sequence[int], keys: np.ndarray) -> np.ndarray:
    """Horner evaluation of ``sum_i coeffs[i] * key^(n-1-i)`` over GF(2^61 - 1)."""
    keys = np.asarray(keys, dtype=np.uint64)
    acc = np.full(keys.shape, np.uint64(coeffs[0]), dtype=np.uint64)
    for c in coeffs[1:]:
        acc = addmod61(mulmod61(acc, keys), np.uint64(c))
    return acc


@dataclass(frozen=True)
class SketchConfig:
    depth: int = 7
    width: int = 1024
    seed: int = 0

    def __post_init__(self):
        if self.depth < 1 or self.width < 1:
            raise ValueError(f"depth and width must be >= 1, got {self.depth}x{self.width}")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


@dataclass(frozen=True)
class SketchMatrix:
    config: SketchConfig
    counters: np.ndarray  # (depth, width) float64

    def __add__(self, other: "SketchMatrix") -> "SketchMatrix":
        _same_config([self, other])
        return SketchMatrix(self.config, self.counters + other.counters)

    def __mul__(self, a: float) -> "SketchMatrix":
        return SketchMatrix(self.config, a * self.counters)

    __rmul__ = __mul__


def _coefficients(config: SketchConfig) -> np.ndarray:
    # (depth, 2 polynomials, 4 coefficients), uniform in [0, p)
    gen = np.random.Generator(np.random.Philox(key=config.seed))
    return gen.integers(0, MERSENNE_61, size=(config.depth, 2, 4), dtype=np.uint64)


@lru_cache(maxsize=32)
def hash_tables(config: SketchConfig, d: int) -> tuple[np.ndarray, np.ndarray]:
    """Bucket indices (depth, d) and float signs (depth, d) for coordinates 0..d-1."""
    coeffs = _coefficients(config)
    keys = np.arange(d, dtype=np.uint64)
    buckets = np.empty((config.depth, d), dtype=np.int64)
    signs = np.empty((config.depth, d), dtype=np.float64)
    for r in range(config.depth):
        h = poly_hash([int(c) for c in coeffs[r, 0]], keys)
        buckets[r] = (h % np.uint64(config.width)).astype(np.int64)
        parity = poly_hash([int(c) for c in coeffs[r, 1]], keys) & np.uint64(1)
        signs[r] = np.where(parity == 0, 1.0, -1.0)
    buckets.setflags(write=False)
    signs.setflags(write=False)
    return buckets, signs


def sketch(config: SketchConfig, v) -> SketchMatrix:
    v = check_finite(as_vector(v), "sketch input")
    buckets, signs = hash_tables(config, v.size)
    counters = np.empty((config.depth, config.width), dtype=np.float64)
    for r in range(config.depth):
        counters[r] = np.bincount(buckets[r], weights=signs[r] * v, minlength=config.width)
    return SketchMatrix(config, counters)


def estimate_f2(s: SketchMatrix) -> float:
    """Median over rows of the row's sum of squared counters (lower median for even depth)."""
    row_sums = np.sort(np.einsum("ij,ij->i", s.counters, s.counters))
    return float(row_sums[(row_sums.size - 1) // 2])


def _same_config(sketches: Sequence[SketchMatrix]) -> SketchConfig:
    cfg = sketches[0].config
    for s in sketches[1:]:
        if s.config != cfg:
            raise ValueError(f"sketch config mismatch: {s.config} vs {cfg}")
    return cfg


def combine(sketches: Sequence[SketchMatrix], weights: Sequence[float]) -> SketchMatrix:
    """Weighted sum of counter grids, accumulated in the given order."""
    if len(sketches) == 0:
        raise ValueError("nothing to combine")
    if len(sketches) != len(weights):
        raise ValueError(f"{len(sketches)} sketches but {len(weights)} weights")
    cfg = _same_config(sketches)
    acc = weights[0] * sketches[0].counters
    for s, wt in zip(sketches[1:], weights[1:]):
        acc = acc + wt * s.counters
    return SketchMatrix(cfg, acc)


def sketch_bytes(config: SketchConfig) -> int:
    """Payload size of one sketch: 8-byte reals, depth x width of them."""
    return config.depth * config.width * 8
