"""Train/evaluate plumbing shared by the CLI commands and the sweep."""

from __future__ import annotations

import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .codec import CodecParams, QuantSpec, decode, forward_batch, quantize_code
from .corpus import FeatureCorpus, Role, check_compatible
from .errors import DataError, DomainError, FeatcompError
from .evaluator import (
    discriminability_stats,
    evaluate_retrieval,
    format_value,
    verification_accuracy,
)
from .metrics import LossKind
from .numcore import row_sq_sums
from .training import TrainConfig, TrainHistory, train

DEFAULT_ICS = (16, 32, 64, 128, 256)
LOSS_ORDER = (LossKind.SIM, LossKind.DIS, LossKind.COMBINED)


def evaluation_rows(corpus: FeatureCorpus) -> np.ndarray:
    """Query and gallery rows, or every row when the corpus has neither."""
    rows = corpus.rows_with_role(Role.QUERY, Role.GALLERY)
    return rows if rows.size else np.arange(len(corpus))


def reconstruct(params: CodecParams, X: np.ndarray, quant_levels: int | None = None) -> np.ndarray:
    """Encode and decode ``X``; optionally quantize the codes in between.

    The quantizer range is fitted to the codes of ``X`` itself.
    """
    codes, recons, _ = forward_batch(params, X)
    if quant_levels is None:
        return recons
    _, deq = quantize_code(codes, QuantSpec.fit(codes, quant_levels))
    return np.stack([decode(params, row) for row in deq])


def _stats_items(features, labels):
    try:
        return discriminability_stats(features, labels).items()
    except DataError:
        return []


def evaluate_codec(
    params: CodecParams,
    corpus: FeatureCorpus,
    pairs: list[tuple[int, int, bool]] | None = None,
    max_rank: int = 10,
    quant_levels: int | None = None,
) -> list[tuple[str, float | int]]:
    """Retrieval report (query vs gallery) or, when ``pairs`` is given,
    verification report; both followed by discriminability statistics of
    the reconstructed evaluation features."""
    check_compatible(params, corpus)
    if pairs is None:
        q = corpus.rows_with_role(Role.QUERY)
        g = corpus.rows_with_role(Role.GALLERY)
        if q.size == 0 or g.size == 0:
            raise DataError("retrieval evaluation needs query and gallery features")
        rows = np.concatenate([q, g])
        recons = reconstruct(params, corpus.values[rows], quant_levels)
        rq, rg = recons[: q.size], recons[q.size :]
        report = evaluate_retrieval(rq, corpus.labels[q], rg, corpus.labels[g], max_rank)
        items = [("mode", "retrieval")] + report.items()
    else:
        if not pairs:
            raise DataError("verification evaluation needs at least one pair")
        row_of = corpus.row_of_id()
        try:
            used = sorted({row_of[i] for a, b, _ in pairs for i in (a, b)})
        except KeyError as exc:
            raise DataError(f"pair references id {exc.args[0]} which is not in the corpus") from None
        recons = reconstruct(params, corpus.values[used], quant_levels)
        local = {r: k for k, r in enumerate(used)}
        a = recons[[local[row_of[p[0]]] for p in pairs]]
        b = recons[[local[row_of[p[1]]] for p in pairs]]
        d = row_sq_sums(a - b) / corpus.dim
        same = np.array([p[2] for p in pairs])
        report = verification_accuracy(d[same], d[~same])
        items = [("mode", "verification")] + report.items()
        rows = np.array(used)
    return items + list(_stats_items(recons, corpus.labels[rows]))


def format_items(items) -> str:
    return "".join(f"{k}={v if isinstance(v, str) else format_value(v)}\n" for k, v in items)


def history_csv(history: TrainHistory) -> str:
    buf = io.StringIO()
    buf.write("iteration,lr,loss\n")
    for it, lr, loss in zip(history.iteration, history.lr, history.loss):
        buf.write(f"{it},{format_value(lr)},{format_value(loss)}\n")
    return buf.getvalue()


@dataclass(frozen=True)
class SweepPlan:
    base: TrainConfig
    ics: tuple[int, ...] = DEFAULT_ICS
    losses: tuple[LossKind, ...] = LOSS_ORDER
    max_rank: int = 10
    quant_levels: int | None = None
    pairs: tuple = field(default=(), compare=False)

    def __post_init__(self):
        if not self.ics or not self.losses:
            raise DomainError("a sweep needs at least one capacity and one loss kind")

    def cells(self) -> list[tuple[int, int, LossKind]]:
        """(cell index, ic, loss) in (ic, loss-kind) order."""
        ordered_losses = [k for k in LOSS_ORDER if k in self.losses]
        cells = [(ic, kind) for ic in sorted(set(self.ics)) for kind in ordered_losses]
        return [(i, ic, kind) for i, (ic, kind) in enumerate(cells)]

    def config_for(self, index: int, ic: int, kind: LossKind) -> TrainConfig:
        return replace(self.base, ic_bytes=ic, loss=replace(self.base.loss, kind=kind), seed=self.base.seed + index)


class SweepCellError(FeatcompError):
    pass


def _run_cell(args) -> dict:
    plan, corpus, index, ic, kind = args
    config = plan.config_for(index, ic, kind)
    try:
        params, history = train(corpus, config)
        items = evaluate_codec(params, corpus, list(plan.pairs) or None, plan.max_rank, plan.quant_levels)
    except FeatcompError as exc:
        raise SweepCellError(f"cell {index} (ic={ic}, loss={kind.value}) failed: {exc}") from exc
    row = {"ic": ic, "loss": kind.value, "seed": config.seed}
    row.update({k: v for k, v in items if k != "mode" and not k.startswith("cmc")})
    row["final_loss"] = history.loss[-1] if history.loss else float("nan")
    return row


def run_sweep(plan: SweepPlan, corpus: FeatureCorpus, jobs: int = 1) -> list[dict]:
    tasks = [(plan, corpus, i, ic, kind) for i, ic, kind in plan.cells()]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_run_cell, tasks))
    return [_run_cell(t) for t in tasks]


RETRIEVAL_COLUMNS = (
    "ic", "loss", "seed", "rank1", "map", "num_queries", "num_excluded",
    "mean_intra", "mean_inter", "inter_intra_ratio", "final_loss",
)
VERIFICATION_COLUMNS = (
    "ic", "loss", "seed", "accuracy", "best_threshold", "num_pairs",
    "mean_intra", "mean_inter", "inter_intra_ratio", "final_loss",
)


def sweep_csv(rows: list[dict], verification: bool = False) -> str:
    """Fixed header per mode; a statistic that is undefined is left empty."""
    columns = VERIFICATION_COLUMNS if verification else RETRIEVAL_COLUMNS
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        cells = []
        for c in columns:
            v = row.get(c)
            cells.append("" if v is None else v if isinstance(v, str) else format_value(v))
        writer.writerow(cells)
    return buf.getvalue()
