"""Deterministic numerical primitives.

All arrays are float64 numpy arrays.  Reductions that feed into reported
numbers are written as explicit, sequential accumulations so that a batched
computation and the equivalent per-row loop agree bit for bit and results do
not depend on the BLAS build or thread count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, NumericError, ShapeError

__all__ = [
    "AdamState",
    "Rng",
    "adam_init",
    "adam_step",
    "as_matrix",
    "as_vector",
    "column_sums",
    "finite_diff_grad",
    "matmul",
    "row_sq_sums",
    "seeded_rng",
]


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ShapeError(f"{name} must be a non-empty 2-D array, got shape {arr.shape}")
    return arr


def as_vector(x, name: str = "vector") -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise ShapeError(f"{name} must be 1-D, got shape {arr.shape}")
    return arr


def matmul(a, b) -> np.ndarray:
    """Matrix product accumulated in ascending order of the inner index.

    ``out[i, j] = ((a[i,0]*b[0,j] + a[i,1]*b[1,j]) + ...)``, evaluated the
    same way for every (i, j), so row subsets of ``a`` give bitwise
    identical rows of the product.
    """
    a = as_matrix(a, "left operand")
    b = as_matrix(b, "right operand")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    out = np.zeros((a.shape[0], b.shape[1]))
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(a.shape[1]):
            out += a[:, k, None] * b[None, k, :]
    if not np.isfinite(out).all():
        raise NumericError("matrix product overflowed to a non-finite value")
    return out


def row_sq_sums(diff: np.ndarray) -> np.ndarray:
    """Sequential sum of squares over the last axis."""
    acc = np.zeros(diff.shape[:-1])
    for k in range(diff.shape[-1]):
        acc += diff[..., k] * diff[..., k]
    return acc


def column_sums(a: np.ndarray) -> np.ndarray:
    """Sequential sum over rows (axis 0)."""
    acc = np.zeros(a.shape[1:])
    for row in a:
        acc += row
    return acc


@dataclass(frozen=True)
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_init(shape, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    return AdamState(np.zeros(shape), np.zeros(shape), 0, beta1, beta2, eps)


def adam_step(params, grads, state: AdamState, lr: float) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam update.  Returns new arrays; inputs are untouched."""
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape or state.m.shape != params.shape:
        raise ShapeError(
            f"adam shapes disagree: params {params.shape}, grads {grads.shape}, state {state.m.shape}"
        )
    if lr < 0:
        raise DomainError(f"learning rate must be non-negative, got {lr}")
    t = state.t + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    v = state.beta2 * state.v + (1.0 - state.beta2) * (grads * grads)
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    new_params = params - lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return new_params, replace(state, m=m, v=v, t=t)


def finite_diff_grad(f: Callable[[np.ndarray], float], x, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function."""
    if not h > 0:
        raise DomainError(f"step h must be positive, got {h}")
    x = as_vector(x, "x").copy()
    grad = np.empty_like(x)
    for i in range(x.size):
        orig = x[i]
        x[i] = orig + h
        f_plus = float(f(x))
        x[i] = orig - h
        f_minus = float(f(x))
        x[i] = orig
        if not (math.isfinite(f_plus) and math.isfinite(f_minus)):
            raise NumericError(f"f is not finite near coordinate {i}")
        grad[i] = (f_plus - f_minus) / (2.0 * h)
    return grad


_MASK64 = (1 << 64) - 1
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def _splitmix64(counters: np.ndarray, seed: np.uint64) -> np.ndarray:
    z = seed + (counters + np.uint64(1)) * _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


class Rng:
    """Counter-based SplitMix64 generator.

    Output word ``i`` is ``splitmix64_mix(seed + (i + 1) * 0x9E3779B97F4A7C15)``
    in wrapping 64-bit arithmetic, so the stream is a pure function of the
    seed and the number of words already consumed.

    Derived draws:

    * uniform: ``(word >> 11) * 2**-53`` in [0, 1), then scaled to [a, b);
    * normal: Box-Muller on two consecutive uniforms ``u1, u2``,
      ``sqrt(-2 ln(1 - u1)) * cos(2 pi u2)`` (one normal per two words);
    * integers below ``n``: multiply-shift ``(word * n) >> 64``.
    """

    def __init__(self, seed: int):
        if not 0 <= int(seed) <= _MASK64:
            raise DomainError(f"seed must fit in 64 unsigned bits, got {seed}")
        self.seed = int(seed)
        self.counter = 0

    def words(self, n: int) -> np.ndarray:
        idx = np.arange(self.counter, self.counter + n, dtype=np.uint64)
        self.counter += n
        with np.errstate(over="ignore"):
            return _splitmix64(idx, np.uint64(self.seed))

    def uniform(self, a: float = 0.0, b: float = 1.0, size=None):
        n = 1 if size is None else int(np.prod(size))
        u = (self.words(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53
        u = a + (b - a) * u
        return float(u[0]) if size is None else u.reshape(size)

    def normal(self, size=None):
        n = 1 if size is None else int(np.prod(size))
        u = (self.words(2 * n) >> np.uint64(11)).astype(np.float64) * 2.0**-53
        u1, u2 = u[0::2], u[1::2]
        z = np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * np.pi * u2)
        return float(z[0]) if size is None else z.reshape(size)

    def integers(self, n: int, size: int) -> list[int]:
        """``size`` integers uniform in ``[0, n)``."""
        if n < 1:
            raise DomainError(f"upper bound must be positive, got {n}")
        return [(int(w) * n) >> 64 for w in self.words(size)]

    def below(self, n: int) -> int:
        return self.integers(n, 1)[0]

    def shuffle(self, items: Sequence) -> list:
        """Fisher-Yates permutation, returned as a new list."""
        out = list(items)
        for i in range(len(out) - 1, 0, -1):
            j = self.below(i + 1)
            out[i], out[j] = out[j], out[i]
        return out

    def choice(self, n: int, k: int) -> list[int]:
        """``k`` distinct integers from ``range(n)`` in draw order.

        Partial Fisher-Yates over a virtual ``range(n)``; memory is O(k).
        """
        if not 0 <= k <= n:
            raise DomainError(f"cannot choose {k} of {n} without replacement")
        swapped: dict[int, int] = {}
        out = []
        for i in range(k):
            j = i + self.below(n - i)
            vi, vj = swapped.get(i, i), swapped.get(j, j)
            swapped[j] = vi
            out.append(vj)
        return out


def seeded_rng(seed: int) -> Rng:
    return Rng(seed)
