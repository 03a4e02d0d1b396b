import math

import numpy as np
import pytest

from featcomp.codec import (
    Activation,
    CodecConfig,
    CodecParams,
    QuantSpec,
    backward_batch,
    decode,
    encode,
    forward_batch,
    ic_to_bottleneck,
    identity_codec,
    init_codec,
    quantize_code,
)
from featcomp.errors import DomainError, ShapeError
from featcomp.numcore import finite_diff_grad, seeded_rng


def toy_params(enc_w, enc_b, dec_w, dec_b, act=Activation.IDENTITY):
    return CodecParams(np.array(enc_w, float), np.array(enc_b, float), np.array(dec_w, float), np.array(dec_b, float), act)


@pytest.mark.parametrize("ic,k", [(16, 16), (256, 256), (1, 1)])
def test_ic_to_bottleneck(ic, k):
    assert ic_to_bottleneck(ic) == k


def test_ic_rejects_zero():
    with pytest.raises(DomainError):
        ic_to_bottleneck(0)


class TestInit:
    def test_biases_zero_and_deterministic(self):
        cfg = CodecConfig(20, 4, Activation.RELU)
        a = init_codec(cfg, seeded_rng(5))
        b = init_codec(cfg, seeded_rng(5))
        assert a.equals(b)
        assert not a.enc_bias.any() and not a.dec_bias.any()
        assert a.activation is Activation.RELU

    def test_xavier_bound(self):
        params = init_codec(CodecConfig(2048, 16), seeded_rng(0))
        bound = math.sqrt(6.0 / 2064)
        assert np.abs(params.enc_weight).max() <= bound
        assert np.abs(params.dec_weight).max() <= bound
        # the draw should actually use the range, not a sliver of it
        assert np.abs(params.enc_weight).max() > 0.99 * bound

    def test_inconsistent_tensors(self):
        with pytest.raises(ShapeError):
            CodecParams(np.zeros((2, 3)), np.zeros(2), np.zeros((2, 3)), np.zeros(3))


class TestEncodeDecode:
    def test_zero_params(self):
        p = toy_params(np.zeros((2, 3)), [0, 0], np.zeros((3, 2)), [0, 0, 0])
        np.testing.assert_array_equal(encode(p, [1.0, -2.0, 3.0]), [0.0, 0.0])
        np.testing.assert_array_equal(decode(p, [0.0, 0.0]), [0.0, 0.0, 0.0])

    def test_identity(self):
        x = np.array([1.5, -2.0, 0.25])
        p = identity_codec(3)
        np.testing.assert_array_equal(encode(p, x), x)
        np.testing.assert_array_equal(decode(p, x), x)

    def test_encode_hand_case(self):
        p = toy_params([[1, 1]], [0.5], [[0], [0]], [0, 0])
        np.testing.assert_array_equal(encode(p, [1, 2]), [3.5])

    def test_decode_hand_case(self):
        p = toy_params([[0, 0]], [0], [[2], [0]], [1, 1])
        np.testing.assert_array_equal(decode(p, [3]), [7, 1])

    def test_relu_clamps_code(self):
        p = toy_params([[1, 0], [0, 1]], [0, 0], np.eye(2), [0, 0], Activation.RELU)
        np.testing.assert_array_equal(encode(p, [-1.0, 2.0]), [0.0, 2.0])

    def test_shape_errors(self):
        p = identity_codec(3)
        with pytest.raises(ShapeError):
            encode(p, [1.0, 2.0])
        with pytest.raises(ShapeError):
            forward_batch(p, np.zeros((2, 4)))


class TestForwardBatch:
    @pytest.mark.parametrize("act", list(Activation))
    def test_matches_per_row_bitwise(self, act):
        params = init_codec(CodecConfig(8, 3, act), seeded_rng(1))
        X = seeded_rng(2).normal((4, 8))
        codes, recons, _ = forward_batch(params, X)
        for i in range(4):
            c = encode(params, X[i])
            assert codes[i].tobytes() == c.tobytes()
            assert recons[i].tobytes() == decode(params, c).tobytes()

    def test_row_permutation(self):
        params = init_codec(CodecConfig(6, 2), seeded_rng(3))
        X = seeded_rng(4).normal((5, 6))
        perm = [3, 0, 4, 1, 2]
        _, r1, _ = forward_batch(params, X)
        _, r2, _ = forward_batch(params, X[perm])
        assert r1[perm].tobytes() == r2.tobytes()


def _flat_loss(params, X, W, names, act):
    """Loss = sum(W * recon) + 0.5 * sum(recon^2), as a function of the
    concatenated parameter vector."""
    shapes = [getattr(params, n).shape for n in names]
    sizes = [int(np.prod(s)) for s in shapes]

    def unflat(v):
        out, i = {}, 0
        for n, s, k in zip(names, shapes, sizes):
            out[n] = v[i : i + k].reshape(s)
            i += k
        return CodecParams(**out, activation=act)

    def f(v):
        _, r, _ = forward_batch(unflat(v), X)
        return float(np.sum(W * r) + 0.5 * np.sum(r * r))

    return f


class TestBackward:
    def test_zero_grads(self):
        params = init_codec(CodecConfig(5, 2), seeded_rng(0))
        _, recons, cache = forward_batch(params, seeded_rng(1).normal((3, 5)))
        for g in backward_batch(params, cache, np.zeros_like(recons)).values():
            assert not g.any()

    def test_scalar_chain_rule(self):
        # recon = v*(w*x + b) + c, loss = recon
        w, b, v, c, x = 1.5, -0.5, 2.0, 0.25, 3.0
        p = toy_params([[w]], [b], [[v]], [c])
        _, _, cache = forward_batch(p, [[x]])
        g = backward_batch(p, cache, [[1.0]])
        assert g["dec_weight"][0, 0] == w * x + b
        assert g["dec_bias"][0] == 1.0
        assert g["enc_weight"][0, 0] == v * x
        assert g["enc_bias"][0] == v

    @pytest.mark.parametrize("act", list(Activation))
    @pytest.mark.parametrize("seed", range(3))
    def test_matches_finite_differences(self, act, seed):
        rng = seeded_rng(100 + seed)
        params = init_codec(CodecConfig(32, 8, act), rng)
        params = params.replace_tensors({**params.tensors(), "enc_bias": rng.normal(8) * 0.1, "dec_bias": rng.normal(32) * 0.1})
        X = rng.normal((4, 32))
        W = rng.normal((4, 32))
        _, recons, cache = forward_batch(params, X)
        if act is Activation.RELU:
            assert np.abs(cache.pre_activation).min() > 1e-4  # away from the kink
        grads = backward_batch(params, cache, W + recons)
        names = CodecParams.TENSORS
        x0 = np.concatenate([getattr(params, n).ravel() for n in names])
        fd = finite_diff_grad(_flat_loss(params, X, W, names, act), x0, 1e-5)
        analytic = np.concatenate([grads[n].ravel() for n in names])
        assert np.linalg.norm(analytic - fd) <= 1e-6 * np.linalg.norm(fd)


class TestQuantizer:
    def test_hand_case(self):
        idx, deq = quantize_code(np.array([0.6]), QuantSpec(0.0, 1.0, 4))
        assert idx.tolist() == [2]
        assert deq.tolist() == [0.625]

    def test_endpoints(self):
        q = QuantSpec(-1.0, 3.0, 16)
        idx, _ = quantize_code(np.array([-1.0, 3.0]), q)
        assert idx.tolist() == [0, 15]

    def test_error_bound(self):
        q = QuantSpec(-2.0, 5.0, 256)
        x = seeded_rng(0).uniform(-2.0, 5.0, size=10000)
        _, deq = quantize_code(x, q)
        assert np.abs(x - deq).max() <= (q.hi - q.lo) / (2 * q.levels) * (1 + 1e-12)

    def test_fit_covers_codes(self):
        codes = np.array([[0.5, -1.0], [2.0, 0.0]])
        q = QuantSpec.fit(codes, 8)
        assert (q.lo, q.hi) == (-1.0, 2.0)

    def test_bad_spec(self):
        with pytest.raises(DomainError):
            QuantSpec(1.0, 1.0)
        with pytest.raises(DomainError):
            QuantSpec(0.0, 1.0, 1)
