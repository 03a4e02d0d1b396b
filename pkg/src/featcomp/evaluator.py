"""Retrieval and verification metrics on (reconstructed) features, class
separation statistics, and a deterministic 2-D PCA projection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, EvaluationError, ShapeError
from .numcore import Rng, as_matrix, row_sq_sums


@dataclass(frozen=True)
class RetrievalReport:
    rank1: float
    cmc: np.ndarray
    map: float
    num_queries: int
    num_excluded: int = 0

    def items(self) -> list[tuple[str, float | int]]:
        out: list[tuple[str, float | int]] = [
            ("rank1", self.rank1),
            ("map", self.map),
            ("num_queries", self.num_queries),
            ("num_excluded", self.num_excluded),
        ]
        out += [(f"cmc{r + 1}", float(v)) for r, v in enumerate(self.cmc)]
        return out


@dataclass(frozen=True)
class VerificationReport:
    best_threshold: float
    accuracy: float
    num_pairs: int

    def items(self) -> list[tuple[str, float | int]]:
        return [("accuracy", self.accuracy), ("best_threshold", self.best_threshold), ("num_pairs", self.num_pairs)]


@dataclass(frozen=True)
class DiscriminabilityStats:
    mean_intra: float
    mean_inter: float
    ratio: float | None  # None when mean_intra == 0

    def items(self) -> list[tuple[str, float]]:
        out = [("mean_intra", self.mean_intra), ("mean_inter", self.mean_inter)]
        if self.ratio is not None:
            out.append(("inter_intra_ratio", self.ratio))
        return out


def format_value(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return format(float(v), ".17g")


def format_report(items) -> str:
    """``name=value`` lines, floats with 17 significant digits."""
    return "".join(f"{k}={format_value(v)}\n" for k, v in items)


def pairwise_distances(queries, gallery) -> np.ndarray:
    """Mean squared error between every query row and every gallery row."""
    Q = as_matrix(queries, "queries")
    G = as_matrix(gallery, "gallery")
    if Q.shape[1] != G.shape[1]:
        raise ShapeError(f"feature dimensions differ: {Q.shape[1]} vs {G.shape[1]}")
    acc = np.zeros((Q.shape[0], G.shape[0]))
    for k in range(Q.shape[1]):
        diff = Q[:, k, None] - G[None, :, k]
        acc += diff * diff
    return acc / Q.shape[1]


def _match_matrix(distmat, query_labels, gallery_labels) -> tuple[np.ndarray, np.ndarray]:
    distmat = as_matrix(distmat, "distance matrix")
    ql = np.asarray(query_labels)
    gl = np.asarray(gallery_labels)
    if distmat.shape != (ql.size, gl.size):
        raise ShapeError(f"distance matrix {distmat.shape} does not match {ql.size} queries x {gl.size} gallery")
    order = np.argsort(distmat, axis=1, kind="stable")
    matches = gl[order] == ql[:, None]
    valid = matches.any(axis=1)
    if not valid.any():
        raise EvaluationError("no query has a same-label gallery item")
    return matches[valid], valid


def cmc_and_rank1(distmat, query_labels, gallery_labels, max_rank: int = 10) -> tuple[float, np.ndarray]:
    """CMC curve over ranks 1..max_rank; queries without a match are skipped.

    Gallery items at equal distance keep gallery order.
    """
    matches, _ = _match_matrix(distmat, query_labels, gallery_labels)
    first_hit = matches.argmax(axis=1)
    cmc = np.array([(first_hit <= r).mean() for r in range(max_rank)])
    return float(cmc[0]), cmc


def mean_ap(distmat, query_labels, gallery_labels) -> float:
    matches, _ = _match_matrix(distmat, query_labels, gallery_labels)
    aps = []
    for row in matches:
        ranks = np.flatnonzero(row) + 1
        precision = np.arange(1, ranks.size + 1) / ranks
        aps.append(precision.mean())
    return float(np.mean(aps))


def evaluate_retrieval(query_feats, query_labels, gallery_feats, gallery_labels, max_rank: int = 10) -> RetrievalReport:
    dist = pairwise_distances(query_feats, gallery_feats)
    _, valid = _match_matrix(dist, query_labels, gallery_labels)
    rank1, cmc = cmc_and_rank1(dist, query_labels, gallery_labels, max_rank)
    return RetrievalReport(
        rank1, cmc, mean_ap(dist, query_labels, gallery_labels), int(valid.sum()), int((~valid).sum())
    )


def verification_accuracy(pos_dists, neg_dists) -> VerificationReport:
    """Best single-threshold accuracy; a pair is called "same" iff its
    distance is <= threshold.

    Candidates are one value below the minimum, the midpoints between
    adjacent distinct sorted distances, and the maximum.  The first (smallest)
    threshold reaching the best accuracy wins.
    """
    pos = np.asarray(pos_dists, dtype=np.float64).ravel()
    neg = np.asarray(neg_dists, dtype=np.float64).ravel()
    if pos.size == 0 or neg.size == 0:
        raise DataError("verification needs at least one positive and one negative pair")
    values = np.unique(np.concatenate([pos, neg]))
    thresholds = np.concatenate(
        [[np.nextafter(values[0], -np.inf)], values[:-1] + (values[1:] - values[:-1]) / 2, [values[-1]]]
    )
    pos_sorted, neg_sorted = np.sort(pos), np.sort(neg)
    tp = np.searchsorted(pos_sorted, thresholds, side="right")
    tn = neg.size - np.searchsorted(neg_sorted, thresholds, side="right")
    correct = tp + tn
    best = int(np.argmax(correct))
    total = pos.size + neg.size
    return VerificationReport(float(thresholds[best]), float(correct[best] / total), total)


def discriminability_stats(features, labels) -> DiscriminabilityStats:
    """Mean distance over same-class pairs and over cross-class pairs."""
    X = as_matrix(features, "features")
    labels = np.asarray(labels)
    if labels.shape != (X.shape[0],):
        raise ShapeError("one label per feature row is required")
    classes, counts = np.unique(labels, return_counts=True)
    if classes.size < 2 or counts.min() < 2:
        raise DataError("need at least 2 classes with at least 2 samples each")
    dist = pairwise_distances(X, X)
    iu, ju = np.triu_indices(X.shape[0], k=1)
    d = dist[iu, ju]
    same = labels[iu] == labels[ju]
    intra = float(d[same].mean())
    inter = float(d[~same].mean())
    return DiscriminabilityStats(intra, inter, inter / intra if intra > 0 else None)


PCA_MAX_ITERS = 200
PCA_TOL = 1e-10
_PCA_START_SEED = 0x5EED


def _power_iteration(C: np.ndarray, scale: float) -> tuple[np.ndarray, float]:
    d = C.shape[0]
    v = Rng(_PCA_START_SEED).normal(d)
    v /= np.sqrt(row_sq_sums(v))
    for _ in range(PCA_MAX_ITERS):
        w = C @ v
        norm = float(np.sqrt(row_sq_sums(w)))
        if norm <= 1e-12 * scale:
            return np.zeros(d), 0.0
        w /= norm
        converged = float(np.sqrt(row_sq_sums(w - v))) < PCA_TOL
        v = w
        if converged:
            break
    i = int(np.argmax(np.abs(v)))
    if v[i] < 0:
        v = -v
    return v, float(v @ C @ v)


def pca_directions(features, n_components: int = 2) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Mean, principal directions (rows) and their variances, by power
    iteration with deflation on the covariance matrix."""
    X = as_matrix(features, "features")
    mean = X.mean(axis=0)
    Xc = X - mean
    C = Xc.T @ Xc / X.shape[0]
    scale = float(np.trace(C))
    dirs, variances = [], []
    for _ in range(n_components):
        if scale <= 0:
            v, lam = np.zeros(X.shape[1]), 0.0
        else:
            v, lam = _power_iteration(C, scale)
        dirs.append(v)
        variances.append(lam)
        C = C - lam * np.outer(v, v)
    return mean, np.array(dirs), np.array(variances)


def pca_project_2d(features) -> np.ndarray:
    X = as_matrix(features, "features")
    if X.shape[0] < 3:
        raise DataError("2-D projection needs at least 3 samples")
    mean, dirs, _ = pca_directions(X, 2)
    return (X - mean) @ dirs.T
