"""Command-line entry point: ``featcomp <command> [flags]``.

Commands: gen, split, pairs, train, eval, sweep, project.  Every command is
deterministic for fixed flags.  On failure a single line
``error: <ErrorType>: <message>`` goes to stderr and the exit status is 1
(2 for flag/usage errors).
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import __version__
from .codec import Activation, identity_codec
from .corpus import (
    Profile,
    Role,
    SynthSpec,
    check_compatible,
    generate_synthetic,
    make_verification_pairs,
    read_checkpoint,
    read_corpus,
    read_pairs,
    read_text_corpus,
    split_query_gallery,
    write_checkpoint,
    write_corpus,
    write_pairs,
)
from .errors import FeatcompError
from .evaluator import discriminability_stats, format_value, pca_project_2d
from .metrics import DEFAULT_MARGIN, LossKind, LossSpec
from .numcore import seeded_rng
from .pipeline import (
    DEFAULT_ICS,
    SweepPlan,
    evaluate_codec,
    evaluation_rows,
    format_items,
    history_csv,
    reconstruct,
    run_sweep,
    sweep_csv,
)
from .training import DEFAULT_EPOCHS, DEFAULT_ITERS_PER_EPOCH, TrainConfig, train

log = logging.getLogger("featcomp")


def _int_list(text: str) -> list[int]:
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values or min(values) < 1:
        raise argparse.ArgumentTypeError("capacities must be positive integers")
    return values


def _loss_list(text: str) -> list[LossKind]:
    try:
        return [LossKind.parse(v) for v in text.split(",") if v.strip()]
    except FeatcompError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def load_corpus(path: str):
    if path.endswith(".txt"):
        return read_text_corpus(path)
    return read_corpus(path)


def _write_text(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _add_train_flags(p: argparse.ArgumentParser, with_loss: bool = True) -> None:
    p.add_argument("--corpus", required=True)
    if with_loss:
        p.add_argument("--loss", default="combined", choices=[k.value for k in LossKind])
    p.add_argument("--alpha", type=float, default=DEFAULT_MARGIN, help="hinge margin (default 0.3)")
    p.add_argument("--w-sim", type=float, default=1.0)
    p.add_argument("--w-dis", type=float, default=1.0)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--epochs", type=int, default=DEFAULT_EPOCHS)
    p.add_argument("--iters", type=int, default=DEFAULT_ITERS_PER_EPOCH, help="iterations per epoch")
    p.add_argument("--p", type=int, default=8, help="classes per batch")
    p.add_argument("--k", type=int, default=16, help="samples per class")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--activation", default="identity", choices=["identity", "relu"])


def _train_config(args, ic: int) -> TrainConfig:
    return TrainConfig(
        ic_bytes=ic,
        loss=LossSpec(LossKind.parse(args.loss), args.alpha, args.w_sim, args.w_dis),
        classes_per_batch=args.p,
        samples_per_class=args.k,
        epochs=args.epochs,
        iters_per_epoch=args.iters,
        lr0=args.lr,
        seed=args.seed,
        activation=Activation.parse(args.activation),
    )


def cmd_gen(args) -> None:
    spec = SynthSpec(
        args.classes, args.dim, args.per_class, Profile.parse(args.profile), args.seed,
        args.center_spread, args.intra_spread,
    )
    corpus = generate_synthetic(spec)
    write_corpus(corpus, args.out)
    if args.classes >= 2 and args.per_class >= 2:
        print(format_items(discriminability_stats(corpus.values, corpus.labels).items()), end="")


def cmd_split(args) -> None:
    corpus = load_corpus(args.corpus)
    out = split_query_gallery(corpus, args.query_fraction, seeded_rng(args.seed), args.train_per_class)
    write_corpus(out, args.out)
    counts = {r.name.lower(): int((out.roles == r).sum()) for r in Role}
    print("".join(f"{k}={v}\n" for k, v in counts.items()), end="")


def cmd_pairs(args) -> None:
    corpus = load_corpus(args.corpus)
    pool = corpus.subset(evaluation_rows(corpus))
    pairs = make_verification_pairs(pool, args.n_pos, args.n_neg, seeded_rng(args.seed))
    write_pairs(pairs, args.out)


def cmd_train(args) -> None:
    corpus = load_corpus(args.corpus)
    config = _train_config(args, args.ic)
    params, history = train(corpus, config)
    write_checkpoint(params, args.out)
    if args.history:
        _write_text(args.history, history_csv(history))
    if history.loss:
        print(f"iterations={len(history)}\nfinal_loss={format_value(history.loss[-1])}")


def _load_params(args, corpus):
    if args.identity:
        return identity_codec(corpus.dim)
    if not args.checkpoint:
        raise FeatcompError("--checkpoint is required")
    params, _ = read_checkpoint(args.checkpoint)
    check_compatible(params, corpus)
    return params


def cmd_eval(args) -> None:
    corpus = load_corpus(args.corpus)
    params = _load_params(args, corpus)
    pairs = read_pairs(args.pairs) if args.pairs else None
    items = evaluate_codec(params, corpus, pairs, args.max_rank, args.quantize)
    _write_text(args.out, format_items(items))


def cmd_sweep(args) -> None:
    corpus = load_corpus(args.corpus)
    pairs = tuple(read_pairs(args.pairs)) if args.pairs else ()
    plan = SweepPlan(
        base=_train_config(args, args.ics[0]),
        ics=tuple(args.ics),
        losses=tuple(args.losses),
        max_rank=args.max_rank,
        quant_levels=args.quantize,
        pairs=pairs,
    )
    rows = run_sweep(plan, corpus, args.jobs)
    _write_text(args.out, sweep_csv(rows, verification=bool(pairs)))


def cmd_project(args) -> None:
    corpus = load_corpus(args.corpus)
    params = _load_params(args, corpus)
    rows = evaluation_rows(corpus)
    coords = pca_project_2d(reconstruct(params, corpus.values[rows], args.quantize))
    lines = ["id,label,role,x,y\n"]
    for r, (x, y) in zip(rows.tolist(), coords):
        role = Role(int(corpus.roles[r])).name.lower()
        lines.append(f"{corpus.ids[r]},{corpus.labels[r]},{role},{format_value(x)},{format_value(y)}\n")
    _write_text(args.out, "".join(lines))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="featcomp", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="write a synthetic labeled-feature corpus")
    p.add_argument("--profile", default="simdis", help="simdis, sim or dis")
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--per-class", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--center-spread", type=float, default=None)
    p.add_argument("--intra-spread", type=float, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("split", help="assign train/query/gallery roles per class")
    p.add_argument("--corpus", required=True)
    p.add_argument("--train-per-class", type=int, default=0)
    p.add_argument("--query-fraction", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("pairs", help="write a verification pair list")
    p.add_argument("--corpus", required=True)
    p.add_argument("--n-pos", type=int, required=True)
    p.add_argument("--n-neg", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pairs)

    p = sub.add_parser("train", help="train a codec and write a checkpoint")
    _add_train_flags(p)
    p.add_argument("--ic", type=int, required=True, help="information capacity in bytes")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--history", help="per-iteration CSV (iteration,lr,loss)")
    p.set_defaults(func=cmd_train)

    for name, func, help_text in (
        ("eval", cmd_eval, "evaluate reconstructed features"),
        ("project", cmd_project, "2-D PCA coordinates of reconstructed features"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--corpus", required=True)
        p.add_argument("--checkpoint")
        p.add_argument("--quantize", type=int, default=None, metavar="LEVELS")
        p.add_argument("--identity", action="store_true", help=argparse.SUPPRESS)
        p.add_argument("--out", required=True)
        if name == "eval":
            p.add_argument("--pairs", help="pair file; switches to verification mode")
            p.add_argument("--max-rank", type=int, default=10)
        p.set_defaults(func=func)

    p = sub.add_parser("sweep", help="train and evaluate every (capacity, loss) cell")
    _add_train_flags(p, with_loss=False)
    p.set_defaults(loss="combined")
    p.add_argument("--ics", type=_int_list, default=list(DEFAULT_ICS))
    p.add_argument("--losses", type=_loss_list, default=list(LossKind))
    p.add_argument("--pairs")
    p.add_argument("--max-rank", type=int, default=10)
    p.add_argument("--quantize", type=int, default=None, metavar="LEVELS")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except FeatcompError as exc:
        print(f"error: {type(exc).__name__}: {exc}".replace("\n", " "), file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {type(exc).__name__}: {exc}".replace("\n", " "), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
