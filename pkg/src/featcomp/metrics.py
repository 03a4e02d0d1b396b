"""Distance measure, training objectives and their gradients.

The distance ``d`` is the per-dimension mean squared error.  Three
objectives are supported: ``SIM`` (reconstruction MSE), ``DIS`` (the
margin hinge on anchor/positive/negative distances) and ``COMBINED``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ShapeError
from .numcore import as_vector, row_sq_sums

DEFAULT_MARGIN = 0.3


class LossKind(enum.Enum):
    SIM = "sim"
    DIS = "dis"
    COMBINED = "combined"

    @classmethod
    def parse(cls, name: str) -> "LossKind":
        try:
            return cls(name.lower())
        except ValueError:
            raise DomainError(f"unknown loss kind {name!r}; expected sim, dis or combined") from None


@dataclass(frozen=True)
class LossSpec:
    kind: LossKind = LossKind.COMBINED
    alpha: float = DEFAULT_MARGIN
    weight_sim: float = 1.0
    weight_dis: float = 1.0

    def __post_init__(self):
        if self.alpha < 0:
            raise DomainError(f"margin must be non-negative, got {self.alpha}")
        if self.weight_sim < 0 or self.weight_dis < 0:
            raise DomainError("loss weights must be non-negative")
        if self.kind is LossKind.COMBINED and self.weight_sim + self.weight_dis <= 0:
            raise DomainError("combined loss needs a positive total weight")


@dataclass(frozen=True)
class Triplet:
    anchor: np.ndarray
    positive: np.ndarray
    negative: np.ndarray

    def __post_init__(self):
        a = as_vector(self.anchor, "anchor")
        p = as_vector(self.positive, "positive")
        n = as_vector(self.negative, "negative")
        if not a.shape == p.shape == n.shape:
            raise ShapeError(f"triplet members differ in length: {a.size}, {p.size}, {n.size}")
        object.__setattr__(self, "anchor", a)
        object.__setattr__(self, "positive", p)
        object.__setattr__(self, "negative", n)


def _pair(x, y) -> tuple[np.ndarray, np.ndarray]:
    x = as_vector(x, "x")
    y = as_vector(y, "y")
    if x.shape != y.shape:
        raise ShapeError(f"length mismatch: {x.size} vs {y.size}")
    if x.size == 0:
        raise DomainError("distance of empty vectors is undefined")
    return x, y


def mse_distance(x, y) -> float:
    x, y = _pair(x, y)
    return float(row_sq_sums(x - y) / x.size)


def sim_loss(recon, orig) -> float:
    return mse_distance(recon, orig)


def sim_loss_grad(recon, orig) -> np.ndarray:
    """Gradient of ``sim_loss`` with respect to ``recon``."""
    recon, orig = _pair(recon, orig)
    return (2.0 / recon.size) * (recon - orig)


def hinge(d_ap: float, d_an: float, alpha: float) -> float:
    return max(d_ap - d_an + alpha, 0.0)


def dis_loss(t: Triplet, alpha: float = DEFAULT_MARGIN) -> float:
    if alpha < 0:
        raise DomainError(f"margin must be non-negative, got {alpha}")
    return hinge(mse_distance(t.anchor, t.positive), mse_distance(t.anchor, t.negative), alpha)


def dis_loss_grads(t: Triplet, alpha: float = DEFAULT_MARGIN) -> tuple[np.ndarray, ...]:
    """Subgradient of ``dis_loss`` w.r.t. anchor, positive and negative.

    Zero everywhere on the clamped side of the hinge, including the boundary.
    """
    a, p, n = t.anchor, t.positive, t.negative
    if dis_loss(t, alpha) <= 0.0:
        zero = np.zeros_like(a)
        return zero, zero.copy(), zero.copy()
    c = 2.0 / a.size
    g_p = c * (p - a)
    g_n = -c * (n - a)
    g_a = c * ((a - p) - (a - n))
    return g_a, g_p, g_n


def combined_loss(recon: Triplet, orig: Triplet, spec: LossSpec) -> float:
    """Weighted sum of the mean reconstruction error over the three members
    and the hinge evaluated on the reconstructions."""
    if spec.kind is not LossKind.COMBINED:
        raise DomainError(f"combined_loss needs a COMBINED spec, got {spec.kind.name}")
    sim = (
        sim_loss(recon.anchor, orig.anchor)
        + sim_loss(recon.positive, orig.positive)
        + sim_loss(recon.negative, orig.negative)
    ) / 3.0
    return spec.weight_sim * sim + spec.weight_dis * dis_loss(recon, spec.alpha)
