"""Labeled feature corpora: synthetic generation, evaluation splits,
verification pairs, and the binary corpus / checkpoint file formats.

Corpus file (little-endian)::

    offset 0   magic  b"DMFC"
           4   version u16 (=1), 2 pad bytes
           8   dim u32
          12   count u32
          16   reserved u64 (=0)
          24   count records of: id u32, label u32, role u8, pad u8, dim x f64

Checkpoint file (little-endian)::

    magic b"DMCK", version u16 (=1), input_dim u32, bottleneck_dim u32,
    activation u8, then enc_weight, enc_bias, dec_weight, dec_bias as f64
    row-major.
"""

from __future__ import annotations

import enum
import math
import struct
from collections.abc import Iterator
from dataclasses import dataclass, field

import numpy as np

from .codec import Activation, CodecConfig, CodecParams
from .errors import DataError, DomainError, FormatError, ShapeError, VersionError
from .numcore import Rng, seeded_rng


class Role(enum.IntEnum):
    TRAIN = 0
    QUERY = 1
    GALLERY = 2

    @property
    def letter(self) -> str:
        return "TQG"[self.value]

    @classmethod
    def from_letter(cls, letter: str) -> "Role":
        try:
            return cls("TQG".index(letter.upper()))
        except ValueError:
            raise DomainError(f"unknown role letter {letter!r}") from None


@dataclass(frozen=True)
class LabeledFeature:
    id: int
    label: int
    role: Role
    values: np.ndarray


@dataclass
class FeatureCorpus:
    """Column-oriented corpus: row ``i`` is one labeled feature."""

    ids: np.ndarray
    labels: np.ndarray
    roles: np.ndarray
    values: np.ndarray
    class_index: dict[int, list[int]] = field(init=False, repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[1] < 1:
            raise ShapeError(f"feature values must be (count, dim), got {self.values.shape}")
        n = self.values.shape[0]
        self.ids = np.asarray(self.ids, dtype=np.uint32)
        self.labels = np.asarray(self.labels, dtype=np.uint32)
        self.roles = np.asarray(self.roles, dtype=np.uint8)
        if not self.ids.shape == self.labels.shape == self.roles.shape == (n,):
            raise ShapeError("ids, labels and roles must each have one entry per feature")
        if np.unique(self.ids).size != n:
            raise DataError("feature ids must be unique")
        if n and self.roles.max() > Role.GALLERY:
            raise DataError("role codes must be 0, 1 or 2")
        if not np.isfinite(self.values).all():
            raise DataError("feature values must be finite")
        self.class_index = {}
        for fid, lab in zip(self.ids.tolist(), self.labels.tolist()):
            self.class_index.setdefault(lab, []).append(fid)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def __len__(self) -> int:
        return self.values.shape[0]

    def __iter__(self) -> Iterator[LabeledFeature]:
        for i in range(len(self)):
            yield self.feature(i)

    def feature(self, i: int) -> LabeledFeature:
        return LabeledFeature(int(self.ids[i]), int(self.labels[i]), Role(int(self.roles[i])), self.values[i])

    def rows_with_role(self, *roles: Role) -> np.ndarray:
        return np.flatnonzero(np.isin(self.roles, [int(r) for r in roles]))

    def subset(self, rows) -> "FeatureCorpus":
        rows = np.asarray(rows, dtype=np.int64)
        return FeatureCorpus(self.ids[rows], self.labels[rows], self.roles[rows], self.values[rows])

    def with_roles(self, roles) -> "FeatureCorpus":
        return FeatureCorpus(self.ids.copy(), self.labels.copy(), roles, self.values.copy())

    def row_of_id(self) -> dict[int, int]:
        return {fid: i for i, fid in enumerate(self.ids.tolist())}

    def equals(self, other: "FeatureCorpus") -> bool:
        return (
            self.values.shape == other.values.shape
            and self.values.tobytes() == other.values.tobytes()
            and np.array_equal(self.ids, other.ids)
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.roles, other.roles)
        )


class Profile(enum.Enum):
    SIMDIS = "simdis"
    SIM = "sim"
    DIS = "dis"

    @classmethod
    def parse(cls, name: str) -> "Profile":
        key = name.lower().removesuffix("feat")
        try:
            return cls(key)
        except ValueError:
            raise DomainError(f"unknown profile {name!r}; expected simdis, sim or dis") from None


# (center spread, intra-class spread).  Calibration constants of this package.
PROFILE_SPREADS = {
    Profile.SIMDIS: (4.0, 1.4),
    Profile.SIM: (2.0, 1.4),
    Profile.DIS: (5.6, 3.2),
}


@dataclass(frozen=True)
class SynthSpec:
    num_classes: int
    dim: int
    samples_per_class: int
    profile: Profile = Profile.SIMDIS
    seed: int = 0
    center_spread: float | None = None
    intra_spread: float | None = None

    def __post_init__(self):
        if min(self.num_classes, self.dim, self.samples_per_class) < 1:
            raise DomainError("class count, dimension and samples per class must be positive")
        for s in self.spreads:
            if not s > 0:
                raise DomainError(f"spreads must be positive, got {self.spreads}")

    @property
    def spreads(self) -> tuple[float, float]:
        sb, sw = PROFILE_SPREADS[self.profile]
        return (
            sb if self.center_spread is None else self.center_spread,
            sw if self.intra_spread is None else self.intra_spread,
        )


def generate_synthetic(spec: SynthSpec, rng: Rng | None = None) -> FeatureCorpus:
    """Isotropic Gaussian classes: all centers are drawn first, then the
    per-sample noise in class-major order.  Every sample gets role TRAIN."""
    rng = seeded_rng(spec.seed) if rng is None else rng
    sigma_b, sigma_w = spec.spreads
    c, m, d = spec.num_classes, spec.samples_per_class, spec.dim
    centers = sigma_b * rng.normal((c, d))
    noise = sigma_w * rng.normal((c * m, d))
    values = np.repeat(centers, m, axis=0) + noise
    n = c * m
    return FeatureCorpus(
        np.arange(n, dtype=np.uint32),
        np.repeat(np.arange(c, dtype=np.uint32), m),
        np.zeros(n, dtype=np.uint8),
        values,
    )


def split_query_gallery(
    corpus: FeatureCorpus, query_fraction: float, rng: Rng, train_per_class: int = 0
) -> FeatureCorpus:
    """Reassign roles class by class.

    Members of each class are shuffled; the first ``train_per_class`` keep
    role TRAIN and the remaining ``n`` evaluation samples are split into
    ``ceil(query_fraction * n)`` queries (at least one) and gallery items.
    """
    if not 0.0 < query_fraction < 1.0:
        raise DomainError(f"query fraction must lie in (0, 1), got {query_fraction}")
    roles = np.zeros(len(corpus), dtype=np.uint8)
    for label in sorted(corpus.class_index):
        rows = rng.shuffle(np.flatnonzero(corpus.labels == label).tolist())
        evaluation = rows[train_per_class:]
        if len(evaluation) < 2:
            raise DataError(
                f"class {label} has {len(evaluation)} evaluation samples after holding out "
                f"{train_per_class} for training; need at least 2"
            )
        n_query = max(1, math.ceil(query_fraction * len(evaluation)))
        if n_query >= len(evaluation):
            n_query = len(evaluation) - 1
        roles[evaluation[:n_query]] = Role.QUERY
        roles[evaluation[n_query:]] = Role.GALLERY
    return corpus.with_roles(roles)


def make_verification_pairs(
    corpus: FeatureCorpus, n_pos: int, n_neg: int, rng: Rng
) -> list[tuple[int, int, bool]]:
    """Distinct unordered (id_a, id_b, same_class) pairs over the whole corpus.

    Positives come first, then negatives, each in draw order; ``id_a < id_b``.
    """
    order = np.argsort(corpus.ids, kind="stable")
    ids = corpus.ids[order].astype(np.int64)
    labels = corpus.labels[order]
    ia, ib = np.triu_indices(ids.size, k=1)
    same = labels[ia] == labels[ib]
    pos = np.flatnonzero(same)
    neg = np.flatnonzero(~same)
    if n_pos > pos.size or n_neg > neg.size:
        raise DataError(
            f"requested {n_pos} positive / {n_neg} negative pairs but only "
            f"{pos.size} / {neg.size} distinct pairs exist"
        )
    pairs = []
    for pool, count, flag in ((pos, n_pos, True), (neg, n_neg, False)):
        for j in rng.choice(pool.size, count):
            k = pool[j]
            pairs.append((int(ids[ia[k]]), int(ids[ib[k]]), flag))
    return pairs


def write_pairs(pairs, path) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("id_a,id_b,same\n")
        for a, b, same in pairs:
            fh.write(f"{a},{b},{int(same)}\n")


def read_pairs(path) -> list[tuple[int, int, bool]]:
    pairs = []
    with open(path, encoding="ascii") as fh:
        header = fh.readline().strip()
        if header != "id_a,id_b,same":
            raise FormatError(f"unexpected pair-file header {header!r}", 1)
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                a, b, s = line.strip().split(",")
                pairs.append((int(a), int(b), bool(int(s))))
            except ValueError:
                raise FormatError(f"malformed pair line {line.strip()!r}", lineno) from None
    return pairs


CORPUS_MAGIC = b"DMFC"
CORPUS_VERSION = 1
_CORPUS_HEADER = struct.Struct("<4sHxxIIQ")


def _record_dtype(dim: int) -> np.dtype:
    return np.dtype(
        [("id", "<u4"), ("label", "<u4"), ("role", "u1"), ("pad", "u1"), ("values", "<f8", (dim,))]
    )


def write_corpus(corpus: FeatureCorpus, path) -> None:
    records = np.zeros(len(corpus), dtype=_record_dtype(corpus.dim))
    records["id"] = corpus.ids
    records["label"] = corpus.labels
    records["role"] = corpus.roles
    records["values"] = corpus.values
    with open(path, "wb") as fh:
        fh.write(_CORPUS_HEADER.pack(CORPUS_MAGIC, CORPUS_VERSION, corpus.dim, len(corpus), 0))
        fh.write(records.tobytes())


def read_corpus(path) -> FeatureCorpus:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _CORPUS_HEADER.size:
        raise FormatError(f"truncated corpus header: {len(data)} of {_CORPUS_HEADER.size} bytes", len(data))
    magic, version, dim, count, reserved = _CORPUS_HEADER.unpack_from(data)
    if magic != CORPUS_MAGIC:
        raise FormatError(f"bad corpus magic {magic!r}", 0)
    if version != CORPUS_VERSION:
        raise VersionError("corpus", version, CORPUS_VERSION)
    if dim == 0:
        raise FormatError("corpus dimension must be positive", 8)
    if reserved != 0:
        raise FormatError("reserved header field is not zero", 16)
    dtype = _record_dtype(dim)
    expected = _CORPUS_HEADER.size + count * dtype.itemsize
    if len(data) != expected:
        kind = "truncated" if len(data) < expected else "oversized"
        raise FormatError(f"{kind} corpus: {len(data)} bytes, header implies {expected}", min(len(data), expected))
    records = np.frombuffer(data, dtype=dtype, offset=_CORPUS_HEADER.size, count=count)
    bad_role = np.flatnonzero(records["role"] > Role.GALLERY)
    if bad_role.size:
        raise FormatError("invalid role code", _CORPUS_HEADER.size + int(bad_role[0]) * dtype.itemsize + 8)
    bad_value = np.flatnonzero(~np.isfinite(records["values"]).all(axis=1))
    if bad_value.size:
        raise FormatError("non-finite feature value", _CORPUS_HEADER.size + int(bad_value[0]) * dtype.itemsize + 10)
    try:
        return FeatureCorpus(
            records["id"].copy(), records["label"].copy(), records["role"].copy(), records["values"].copy()
        )
    except DataError as exc:
        raise FormatError(str(exc), _CORPUS_HEADER.size) from None


def read_text_corpus(path) -> FeatureCorpus:
    """Plain-text fixtures: one feature per line, ``label role v1 ... vd``.

    ``role`` is T, Q or G.  Blank lines and ``#`` comments are skipped; ids
    are assigned in file order starting at 0.  ``FormatError.offset`` is the
    1-based line number.
    """
    labels, roles, rows = [], [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.replace(",", " ").split()
            try:
                label = int(parts[0])
                role = Role.from_letter(parts[1])
                values = [float(v) for v in parts[2:]]
            except (IndexError, ValueError, DomainError) as exc:
                raise FormatError(f"cannot parse feature line: {exc}", lineno) from None
            if not values or (rows and len(values) != len(rows[0])):
                raise FormatError(f"line has {len(values)} values, expected {len(rows[0]) if rows else '>0'}", lineno)
            labels.append(label)
            roles.append(int(role))
            rows.append(values)
    if not rows:
        raise FormatError("no features found", 0)
    n = len(rows)
    return FeatureCorpus(np.arange(n), labels, roles, np.array(rows))


CHECKPOINT_MAGIC = b"DMCK"
CHECKPOINT_VERSION = 1
_CHECKPOINT_HEADER = struct.Struct("<4sHIIB")


def write_checkpoint(params: CodecParams, path, config: CodecConfig | None = None) -> None:
    config = params.config if config is None else config
    if (config.input_dim, config.bottleneck_dim) != (params.input_dim, params.bottleneck_dim):
        raise ShapeError(f"config {config} does not describe the given parameters")
    with open(path, "wb") as fh:
        fh.write(
            _CHECKPOINT_HEADER.pack(
                CHECKPOINT_MAGIC, CHECKPOINT_VERSION, config.input_dim, config.bottleneck_dim, int(config.activation)
            )
        )
        for name in CodecParams.TENSORS:
            fh.write(np.ascontiguousarray(getattr(params, name), dtype="<f8").tobytes())


def read_checkpoint(path) -> tuple[CodecParams, CodecConfig]:
    with open(path, "rb") as fh:
        data = fh.read()
    size = _CHECKPOINT_HEADER.size
    if len(data) < size:
        raise FormatError(f"truncated checkpoint header: {len(data)} of {size} bytes", len(data))
    magic, version, d, k, act = _CHECKPOINT_HEADER.unpack_from(data)
    if magic != CHECKPOINT_MAGIC:
        raise FormatError(f"bad checkpoint magic {magic!r}", 0)
    if version != CHECKPOINT_VERSION:
        raise VersionError("checkpoint", version, CHECKPOINT_VERSION)
    if d == 0 or k == 0:
        raise FormatError("checkpoint dimensions must be positive", 6)
    try:
        activation = Activation(act)
    except ValueError:
        raise FormatError(f"unknown activation code {act}", 14) from None
    shapes = {"enc_weight": (k, d), "enc_bias": (k,), "dec_weight": (d, k), "dec_bias": (d,)}
    expected = size + 8 * sum(math.prod(s) for s in shapes.values())
    if len(data) != expected:
        kind = "truncated" if len(data) < expected else "oversized"
        raise FormatError(f"{kind} checkpoint: {len(data)} bytes, header implies {expected}", min(len(data), expected))
    tensors, offset = {}, size
    for name, shape in shapes.items():
        n = math.prod(shape)
        arr = np.frombuffer(data, dtype="<f8", count=n, offset=offset).astype(np.float64).reshape(shape)
        if not np.isfinite(arr).all():
            raise FormatError(f"non-finite value in {name}", offset)
        tensors[name] = arr
        offset += 8 * n
    config = CodecConfig(d, k, activation)
    return CodecParams(**tensors, activation=activation), config


def check_compatible(params: CodecParams, corpus: FeatureCorpus) -> None:
    if params.input_dim != corpus.dim:
        raise ShapeError(f"checkpoint input_dim {params.input_dim} does not match corpus dimension {corpus.dim}")

