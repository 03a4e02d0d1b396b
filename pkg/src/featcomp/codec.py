"""Two-layer fully connected feature codec.

The encoder maps a feature to a bottleneck whose width equals the
information capacity in bytes (one 8-bit channel per dimension); the decoder
maps back to the feature dimension.  The decoder is always affine, the
encoder optionally applies a ReLU.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ShapeError
from .numcore import Rng, as_matrix, as_vector, column_sums, matmul


class Activation(enum.IntEnum):
    IDENTITY = 0
    RELU = 1

    @classmethod
    def parse(cls, name: str) -> "Activation":
        try:
            return cls[name.upper()]
        except KeyError:
            raise DomainError(f"unknown activation {name!r}; expected identity or relu") from None


def ic_to_bottleneck(ic_bytes: int) -> int:
    if ic_bytes < 1:
        raise DomainError(f"information capacity must be at least one byte, got {ic_bytes}")
    return int(ic_bytes)


@dataclass(frozen=True)
class CodecConfig:
    input_dim: int
    ic_bytes: int
    activation: Activation = Activation.IDENTITY

    def __post_init__(self):
        if self.input_dim < 1:
            raise DomainError(f"input_dim must be positive, got {self.input_dim}")
        ic_to_bottleneck(self.ic_bytes)

    @property
    def bottleneck_dim(self) -> int:
        return ic_to_bottleneck(self.ic_bytes)


@dataclass
class CodecParams:
    enc_weight: np.ndarray  # (bottleneck, input)
    enc_bias: np.ndarray  # (bottleneck,)
    dec_weight: np.ndarray  # (input, bottleneck)
    dec_bias: np.ndarray  # (input,)
    activation: Activation = Activation.IDENTITY

    TENSORS = ("enc_weight", "enc_bias", "dec_weight", "dec_bias")

    def __post_init__(self):
        self.enc_weight = as_matrix(self.enc_weight, "enc_weight")
        self.dec_weight = as_matrix(self.dec_weight, "dec_weight")
        self.enc_bias = as_vector(self.enc_bias, "enc_bias")
        self.dec_bias = as_vector(self.dec_bias, "dec_bias")
        self.activation = Activation(self.activation)
        k, d = self.enc_weight.shape
        if self.dec_weight.shape != (d, k) or self.enc_bias.shape != (k,) or self.dec_bias.shape != (d,):
            raise ShapeError(
                "inconsistent codec tensors: "
                f"enc_weight {self.enc_weight.shape}, enc_bias {self.enc_bias.shape}, "
                f"dec_weight {self.dec_weight.shape}, dec_bias {self.dec_bias.shape}"
            )
        for name in self.TENSORS:
            if not np.isfinite(getattr(self, name)).all():
                raise DomainError(f"{name} contains non-finite entries")

    @property
    def input_dim(self) -> int:
        return self.enc_weight.shape[1]

    @property
    def bottleneck_dim(self) -> int:
        return self.enc_weight.shape[0]

    @property
    def config(self) -> CodecConfig:
        return CodecConfig(self.input_dim, self.bottleneck_dim, self.activation)

    def tensors(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in self.TENSORS}

    def replace_tensors(self, tensors: dict[str, np.ndarray]) -> "CodecParams":
        return CodecParams(**tensors, activation=self.activation)

    def equals(self, other: "CodecParams") -> bool:
        """Bitwise equality of all tensors and the activation."""
        return self.activation == other.activation and all(
            getattr(self, n).shape == getattr(other, n).shape
            and getattr(self, n).tobytes() == getattr(other, n).tobytes()
            for n in self.TENSORS
        )


def xavier_bound(fan_in: int, fan_out: int) -> float:
    return math.sqrt(6.0 / (fan_in + fan_out))


def init_codec(config: CodecConfig, rng: Rng) -> CodecParams:
    """Xavier-uniform weights (encoder drawn first), zero biases."""
    d, k = config.input_dim, config.bottleneck_dim
    bound = xavier_bound(d, k)
    enc = rng.uniform(-bound, bound, size=(k, d))
    dec = rng.uniform(-bound, bound, size=(d, k))
    return CodecParams(enc, np.zeros(k), dec, np.zeros(d), config.activation)


def identity_codec(dim: int) -> CodecParams:
    """Square pass-through codec, used to evaluate original features."""
    eye = np.eye(dim)
    return CodecParams(eye, np.zeros(dim), eye.copy(), np.zeros(dim), Activation.IDENTITY)


@dataclass
class ForwardCache:
    inputs: np.ndarray
    pre_activation: np.ndarray
    codes: np.ndarray


def _check_input(params: CodecParams, X: np.ndarray) -> np.ndarray:
    X = as_matrix(X, "input batch")
    if X.shape[1] != params.input_dim:
        raise ShapeError(f"codec expects {params.input_dim} input columns, got {X.shape[1]}")
    return X


def _encode_rows(params: CodecParams, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    pre = matmul(X, params.enc_weight.T) + params.enc_bias
    if params.activation is Activation.RELU:
        return pre, np.maximum(pre, 0.0)
    return pre, pre


def _decode_rows(params: CodecParams, codes: np.ndarray) -> np.ndarray:
    return matmul(codes, params.dec_weight.T) + params.dec_bias


def encode(params: CodecParams, x) -> np.ndarray:
    x = as_vector(x, "feature")
    if x.size != params.input_dim:
        raise ShapeError(f"codec expects length {params.input_dim}, got {x.size}")
    return _encode_rows(params, x[None, :])[1][0]


def decode(params: CodecParams, code) -> np.ndarray:
    code = as_vector(code, "code")
    if code.size != params.bottleneck_dim:
        raise ShapeError(f"decoder expects length {params.bottleneck_dim}, got {code.size}")
    return _decode_rows(params, code[None, :])[0]


def forward_batch(params: CodecParams, X) -> tuple[np.ndarray, np.ndarray, ForwardCache]:
    X = _check_input(params, X)
    pre, codes = _encode_rows(params, X)
    recons = _decode_rows(params, codes)
    return codes, recons, ForwardCache(X, pre, codes)


def backward_batch(params: CodecParams, cache: ForwardCache, recon_grads) -> dict[str, np.ndarray]:
    """Parameter gradients given dLoss/dRecon for every batch row."""
    G = as_matrix(recon_grads, "reconstruction gradients")
    if G.shape != (cache.inputs.shape[0], params.input_dim):
        raise ShapeError(f"gradient shape {G.shape} does not match batch {cache.inputs.shape}")
    g_dec_w = matmul(G.T, cache.codes)
    g_dec_b = column_sums(G)
    g_code = matmul(G, params.dec_weight)
    if params.activation is Activation.RELU:
        g_code = g_code * (cache.pre_activation > 0.0)
    g_enc_w = matmul(g_code.T, cache.inputs)
    g_enc_b = column_sums(g_code)
    return {"enc_weight": g_enc_w, "enc_bias": g_enc_b, "dec_weight": g_dec_w, "dec_bias": g_dec_b}


@dataclass(frozen=True)
class QuantSpec:
    lo: float
    hi: float
    levels: int = 256

    def __post_init__(self):
        if not self.lo < self.hi:
            raise DomainError(f"quantizer range needs lo < hi, got [{self.lo}, {self.hi}]")
        if self.levels < 2:
            raise DomainError(f"quantizer needs at least 2 levels, got {self.levels}")

    @classmethod
    def fit(cls, codes, levels: int = 256) -> "QuantSpec":
        """Range spanning every value in ``codes``."""
        codes = np.asarray(codes, dtype=np.float64)
        lo, hi = float(codes.min()), float(codes.max())
        if lo == hi:
            hi = lo + 1.0
        return cls(lo, hi, levels)


def quantize_code(code, q: QuantSpec) -> tuple[np.ndarray, np.ndarray]:
    """Uniform mid-rise quantizer; returns bin indices and bin centres."""
    code = np.asarray(code, dtype=np.float64)
    width = (q.hi - q.lo) / q.levels
    clamped = np.clip(code, q.lo, q.hi)
    idx = np.minimum(np.floor((clamped - q.lo) / width), q.levels - 1).astype(np.int64)
    return idx, q.lo + (idx + 0.5) * width
