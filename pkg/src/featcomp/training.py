"""PK-batch sampling, hardest-triplet mining and the optimization loop."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .codec import Activation, CodecConfig, CodecParams, backward_batch, forward_batch, init_codec
from .corpus import FeatureCorpus, Role
from .errors import DataError, DomainError, NumericError, ShapeError
from .evaluator import pairwise_distances
from .metrics import LossKind, LossSpec
from .numcore import AdamState, Rng, adam_init, adam_step, row_sq_sums, seeded_rng

log = logging.getLogger(__name__)

# Full-scale defaults for the face track; desk-scale runs override epochs/iters.
DEFAULT_EPOCHS = 300
DEFAULT_ITERS_PER_EPOCH = 3125


@dataclass(frozen=True)
class TrainConfig:
    ic_bytes: int
    loss: LossSpec = field(default_factory=LossSpec)
    classes_per_batch: int = 8
    samples_per_class: int = 16
    epochs: int = DEFAULT_EPOCHS
    iters_per_epoch: int = DEFAULT_ITERS_PER_EPOCH
    lr0: float = 0.001
    seed: int = 0
    activation: Activation = Activation.IDENTITY

    def __post_init__(self):
        if self.classes_per_batch < 2:
            raise DomainError("a PK batch needs at least 2 classes to form negatives")
        if self.samples_per_class < 2:
            raise DomainError("a PK batch needs at least 2 samples per class to form positives")
        if not self.lr0 > 0:
            raise DomainError(f"initial learning rate must be positive, got {self.lr0}")
        if self.epochs < 0 or self.iters_per_epoch < 1:
            raise DomainError("epochs must be non-negative and iters_per_epoch positive")

    @property
    def total_iters(self) -> int:
        return self.epochs * self.iters_per_epoch


@dataclass
class PkBatch:
    groups: list[list[int]]  # P lists of K corpus row indices
    features: np.ndarray  # (P*K, dim)
    labels: np.ndarray  # (P*K,)

    @property
    def indices(self) -> list[int]:
        return [i for g in self.groups for i in g]


@dataclass(frozen=True)
class MinedTriplet:
    anchor: int
    positive: int
    negative: int
    loss: float


@dataclass
class TrainHistory:
    iteration: list[int] = field(default_factory=list)
    lr: list[float] = field(default_factory=list)
    loss: list[float] = field(default_factory=list)

    def append(self, it: int, lr: float, loss: float) -> None:
        self.iteration.append(it)
        self.lr.append(lr)
        self.loss.append(loss)

    def epoch_means(self, iters_per_epoch: int) -> list[float]:
        losses = np.asarray(self.loss)
        return [float(losses[i : i + iters_per_epoch].mean()) for i in range(0, losses.size, iters_per_epoch)]

    def __len__(self) -> int:
        return len(self.iteration)


def sample_pk_batch(corpus: FeatureCorpus, P: int, K: int, rng: Rng) -> PkBatch:
    """Draw P training classes without replacement and K samples of each.

    A class with fewer than K training samples contributes every one of its
    samples once (shuffled) and is topped up by draws with replacement.
    """
    train_rows = corpus.rows_with_role(Role.TRAIN)
    by_class: dict[int, list[int]] = {}
    for row in train_rows.tolist():
        by_class.setdefault(int(corpus.labels[row]), []).append(row)
    classes = sorted(by_class)
    if len(classes) < P:
        raise DataError(f"need {P} training classes for a PK batch, corpus has {len(classes)}")
    groups = []
    for c in rng.choice(len(classes), P):
        members = by_class[classes[c]]
        if len(members) >= K:
            groups.append([members[j] for j in rng.choice(len(members), K)])
        else:
            fill = rng.integers(len(members), K - len(members))
            groups.append(rng.shuffle(members) + [members[j] for j in fill])
    rows = [i for g in groups for i in g]
    return PkBatch(groups, corpus.values[rows], corpus.labels[rows].astype(np.int64))


def mine_hardest_triplets(recons, labels, alpha: float) -> list[MinedTriplet]:
    """One triplet per class: the anchor whose batch-hard hinge loss is largest.

    For every anchor the hardest positive is the farthest same-class row and
    the hardest negative the closest other-class row.  All ties resolve to
    the lowest row index.  Classes are visited in ascending label order.
    """
    recons = np.asarray(recons, dtype=np.float64)
    labels = np.asarray(labels)
    if recons.ndim != 2 or labels.shape != (recons.shape[0],):
        raise ShapeError(f"labels {labels.shape} do not align with reconstructions {recons.shape}")
    dist = pairwise_distances(recons, recons)
    n = labels.size
    same = labels[:, None] == labels[None, :]
    not_self = ~np.eye(n, dtype=bool)
    pos_mask = same & not_self
    neg_mask = ~same
    mined = []
    for label in np.unique(labels).tolist():
        rows = np.flatnonzero(labels == label)
        if rows.size < 2:
            log.warning("class %s has a single sample in the batch; no positive available", label)
            continue
        if not neg_mask[rows[0]].any():
            raise DataError("batch holds a single class; no negative available")
        best = None
        for a in rows.tolist():
            p = int(np.argmax(np.where(pos_mask[a], dist[a], -np.inf)))
            q = int(np.argmin(np.where(neg_mask[a], dist[a], np.inf)))
            loss = max(dist[a, p] - dist[a, q] + alpha, 0.0)
            if best is None or loss > best.loss:
                best = MinedTriplet(a, p, q, float(loss))
        mined.append(best)
    return mined


def cosine_lr(lr0: float, t: int, T: int) -> float:
    if T < 1:
        raise DomainError(f"schedule length must be at least 1, got {T}")
    if not 0 <= t <= T:
        raise DomainError(f"iteration {t} outside schedule [0, {T}]")
    return max(lr0 * 0.5 * (1.0 + math.cos(math.pi * t / T)), 0.0)


def batch_loss_and_grads(
    params: CodecParams, X: np.ndarray, labels: np.ndarray, spec: LossSpec
) -> tuple[float, dict[str, np.ndarray], list[MinedTriplet]]:
    """Objective value and parameter gradients for one batch.

    SIM averages the reconstruction error over every row.  DIS averages the
    hinge over the mined triplets and only those rows receive gradient.
    COMBINED is the weighted sum of the two.
    """
    _, recons, cache = forward_batch(params, X)
    n, dim = recons.shape
    grad = np.zeros_like(recons)
    loss = 0.0
    mined: list[MinedTriplet] = []
    w_sim = {LossKind.SIM: 1.0, LossKind.DIS: 0.0, LossKind.COMBINED: spec.weight_sim}[spec.kind]
    w_dis = {LossKind.SIM: 0.0, LossKind.DIS: 1.0, LossKind.COMBINED: spec.weight_dis}[spec.kind]
    if w_sim > 0:
        diff = recons - X
        per_row = row_sq_sums(diff) / dim
        loss += w_sim * float(per_row.sum() / n)
        grad += (w_sim * 2.0 / (dim * n)) * diff
    if w_dis > 0:
        mined = mine_hardest_triplets(recons, labels, spec.alpha)
        if mined:
            scale = w_dis / len(mined)
            loss += scale * sum(t.loss for t in mined)
            c = 2.0 / dim
            for t in mined:
                if t.loss <= 0.0:
                    continue
                a, p, q = recons[t.anchor], recons[t.positive], recons[t.negative]
                grad[t.anchor] += scale * c * ((a - p) - (a - q))
                grad[t.positive] += scale * c * (p - a)
                grad[t.negative] += scale * -c * (q - a)
    return loss, backward_batch(params, cache, grad), mined


def init_optimizer(params: CodecParams) -> dict[str, AdamState]:
    return {name: adam_init(t.shape) for name, t in params.tensors().items()}


def train_step(
    params: CodecParams,
    opt_states: dict[str, AdamState],
    batch: PkBatch,
    spec: LossSpec,
    lr: float,
) -> tuple[CodecParams, dict[str, AdamState], float]:
    loss, grads, _ = batch_loss_and_grads(params, batch.features, batch.labels, spec)
    new_tensors, new_states = {}, {}
    for name, value in params.tensors().items():
        new_tensors[name], new_states[name] = adam_step(value, grads[name], opt_states[name], lr)
    return params.replace_tensors(new_tensors), new_states, loss


def train(
    corpus: FeatureCorpus, config: TrainConfig, init: CodecParams | None = None
) -> tuple[CodecParams, TrainHistory]:
    """Run ``epochs * iters_per_epoch`` Adam steps with a cosine schedule.

    The schedule spans iterations ``0 .. T-1`` so that the first step uses
    ``lr0`` and the last uses 0.  Everything random derives from
    ``config.seed``: the codec initialization first, then the batches.
    """
    rng = seeded_rng(config.seed)
    codec_config = CodecConfig(corpus.dim, config.ic_bytes, config.activation)
    params = init_codec(codec_config, rng) if init is None else init
    if params.input_dim != corpus.dim:
        raise ShapeError(f"codec input_dim {params.input_dim} does not match corpus dimension {corpus.dim}")
    history = TrainHistory()
    total = config.total_iters
    if total == 0:
        return params, history
    states = init_optimizer(params)
    horizon = max(total - 1, 1)
    for it in range(total):
        lr = cosine_lr(config.lr0, it, horizon)
        batch = sample_pk_batch(corpus, config.classes_per_batch, config.samples_per_class, rng)
        params, states, loss = train_step(params, states, batch, config.loss, lr)
        if not math.isfinite(loss):
            raise NumericError(f"non-finite loss {loss} at iteration {it} (lr={lr})")
        history.append(it, lr, loss)
        if (it + 1) % config.iters_per_epoch == 0:
            epoch = (it + 1) // config.iters_per_epoch
            log.debug("epoch %d mean loss %.6g", epoch, np.mean(history.loss[-config.iters_per_epoch :]))
    return params, history
