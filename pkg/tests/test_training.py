import math

import numpy as np
import pytest

from oracles import exhaustive_mining, exhaustive_mining_batch_hard
from featcomp.codec import CodecConfig, forward_batch, identity_codec, init_codec, CodecParams
from featcomp.corpus import Role, SynthSpec, generate_synthetic
from featcomp.errors import DataError, DomainError
from featcomp.metrics import LossKind, LossSpec
from featcomp.numcore import seeded_rng
from featcomp.training import (
    PkBatch,
    TrainConfig,
    cosine_lr,
    init_optimizer,
    mine_hardest_triplets,
    sample_pk_batch,
    train,
    train_step,
)


def corpus(classes=4, per=10, dim=8, seed=0):
    return generate_synthetic(SynthSpec(classes, dim, per, seed=seed))


class TestPkSampling:
    def test_batch_size(self):
        b = sample_pk_batch(corpus(10, 20), 8, 16, seeded_rng(0))
        assert b.features.shape == (128, 8)
        assert len(b.groups) == 8 and all(len(g) == 16 for g in b.groups)

    def test_all_classes_when_exactly_p(self):
        c = corpus(4, 10)
        b = sample_pk_batch(c, 4, 3, seeded_rng(1))
        assert sorted(set(b.labels.tolist())) == [0, 1, 2, 3]

    def test_groups_are_single_class_distinct(self):
        c = corpus(6, 10)
        b = sample_pk_batch(c, 3, 5, seeded_rng(2))
        for g in b.groups:
            assert len(set(c.labels[g].tolist())) == 1
            assert len(set(g)) == 5

    def test_small_class_fill(self):
        c = corpus(2, 3)
        b = sample_pk_batch(c, 2, 16, seeded_rng(3))
        for g in b.groups:
            members = set(np.flatnonzero(c.labels == c.labels[g[0]]).tolist())
            assert set(g) == members and len(g) == 16

    def test_only_train_rows(self):
        c = corpus(3, 6)
        roles = np.array([Role.TRAIN, Role.TRAIN, Role.TRAIN, Role.TRAIN, Role.QUERY, Role.GALLERY] * 3)
        c = c.with_roles(roles)
        b = sample_pk_batch(c, 3, 4, seeded_rng(0))
        assert (c.roles[b.indices] == Role.TRAIN).all()

    def test_not_enough_classes(self):
        with pytest.raises(DataError):
            sample_pk_batch(corpus(3, 4), 4, 2, seeded_rng(0))


class TestMining:
    def test_hand_case(self):
        # class a = {[0], [4]}, class b = {[1], [9]}, alpha 0.3.  Per anchor:
        #   [0]: 16 - 1 + 0.3 = 15.3     [4]: 16 - 9 + 0.3 = 7.3
        #   [1]: 64 - 1 + 0.3 = 63.3     [9]: 64 - 25 + 0.3 = 39.3
        # The larger loss of each class wins.
        recons = np.array([[0.0], [4.0], [1.0], [9.0]])
        mined = mine_hardest_triplets(recons, [0, 0, 1, 1], 0.3)
        assert [(t.anchor, t.positive, t.negative) for t in mined] == [(0, 1, 2), (2, 3, 0)]
        assert mined[0].loss == pytest.approx(15.3, abs=1e-12)
        assert mined[1].loss == pytest.approx(63.3, abs=1e-12)
        # restricting each class to its second sample as the only anchor
        # leaves the smaller per-anchor losses
        for anchor, loss in ((1, 7.3), (3, 39.3)):
            p = anchor - 1
            neg = [r for r in range(4) if r // 2 != anchor // 2]
            d = lambda i, j: float((recons[i, 0] - recons[j, 0]) ** 2)
            assert d(anchor, p) - min(d(anchor, q) for q in neg) + 0.3 == pytest.approx(loss, abs=1e-12)

    def test_identical_rows(self):
        mined = mine_hardest_triplets(np.ones((6, 3)), [0, 0, 1, 1, 2, 2], 0.3)
        assert [t.anchor for t in mined] == [0, 2, 4]
        assert all(t.loss == 0.3 for t in mined)

    @pytest.mark.parametrize("seed", range(40))
    def test_matches_exhaustive_oracle(self, seed):
        rng = np.random.default_rng(seed)
        n_cls, per, dim = rng.integers(2, 5), rng.integers(2, 5), rng.integers(1, 5)
        labels = np.repeat(np.arange(n_cls), per)
        recons = rng.integers(-2, 3, size=(labels.size, dim)).astype(float)  # small ints force ties
        got = [(t.anchor, t.positive, t.negative, t.loss) for t in mine_hardest_triplets(recons, labels, 0.3)]
        assert got == exhaustive_mining(recons.tolist(), labels.tolist(), 0.3)
        assert got == exhaustive_mining_batch_hard(recons.tolist(), labels.tolist(), 0.3)

    def test_single_class_batch(self):
        with pytest.raises(DataError):
            mine_hardest_triplets(np.zeros((3, 2)), [1, 1, 1], 0.3)

    def test_singleton_class_skipped(self):
        mined = mine_hardest_triplets(np.arange(5.0)[:, None], [0, 0, 1, 2, 2], 0.3)
        assert len(mined) == 2


class TestCosine:
    def test_endpoints(self):
        assert cosine_lr(0.001, 0, 100) == 0.001
        assert cosine_lr(0.001, 100, 100) == 0.0
        assert abs(cosine_lr(0.001, 50, 100) - 0.0005) <= 1e-15

    def test_monotone(self):
        lrs = [cosine_lr(1.0, t, 37) for t in range(38)]
        assert all(a >= b for a, b in zip(lrs, lrs[1:]))

    def test_domain(self):
        with pytest.raises(DomainError):
            cosine_lr(0.1, 5, 4)
        with pytest.raises(DomainError):
            cosine_lr(0.1, 0, 0)


def _batch(c, rows):
    return PkBatch([rows], c.values[rows], c.labels[rows].astype(np.int64))


class TestTrainStep:
    def test_zero_lr(self):
        c = corpus()
        params = init_codec(CodecConfig(8, 2), seeded_rng(0))
        batch = sample_pk_batch(c, 4, 2, seeded_rng(1))
        new, _, loss = train_step(params, init_optimizer(params), batch, LossSpec(), 0.0)
        assert new.equals(params) and loss > 0

    def test_identity_codec_sim(self):
        c = corpus()
        params = identity_codec(8)
        batch = sample_pk_batch(c, 4, 2, seeded_rng(1))
        new, _, loss = train_step(params, init_optimizer(params), batch, LossSpec(LossKind.SIM), 0.01)
        assert loss == 0.0
        assert new.equals(params)

    def test_dis_step_decreases_mined_loss(self):
        # 1-dim codec; recons are a*x + c for scalar a, c.
        params = CodecParams([[0.5]], [0.0], [[1.0]], [0.0])
        X = np.array([[0.0], [1.0], [1.5], [3.0]])
        labels = np.array([0, 0, 1, 1])
        batch = PkBatch([[0, 1], [2, 3]], X, labels)
        spec = LossSpec(LossKind.DIS)

        def mined_loss(p):
            _, r, _ = forward_batch(p, X)
            ts = mine_hardest_triplets(r, labels, spec.alpha)
            return sum(t.loss for t in ts) / len(ts)

        before = mined_loss(params)
        assert before > 0
        new, _, _ = train_step(params, init_optimizer(params), batch, spec, 1e-3)
        assert mined_loss(new) < before


class TestTrain:
    def test_epochs_zero_returns_init(self):
        cfg = TrainConfig(3, epochs=0, iters_per_epoch=5, seed=11)
        params, history = train(corpus(), cfg)
        fresh = init_codec(CodecConfig(8, 3), seeded_rng(11))
        assert params.equals(fresh) and len(history) == 0

    def test_deterministic(self):
        cfg = TrainConfig(2, classes_per_batch=4, samples_per_class=2, epochs=2, iters_per_epoch=5, seed=4)
        a, ha = train(corpus(), cfg)
        b, hb = train(corpus(), cfg)
        assert a.equals(b)
        assert ha.loss == hb.loss and ha.lr == hb.lr

    def test_schedule_in_history(self):
        cfg = TrainConfig(2, classes_per_batch=4, samples_per_class=2, epochs=1, iters_per_epoch=7, lr0=0.01)
        _, h = train(corpus(), cfg)
        assert h.lr[0] == 0.01 and h.lr[-1] == 0.0 and h.iteration == list(range(7))

    def test_sim_toy_converges(self):
        c = corpus(4, 10, 8, seed=2)
        cfg = TrainConfig(8, LossSpec(LossKind.SIM), 4, 2, epochs=1, iters_per_epoch=200, lr0=0.05, seed=0)
        init = init_codec(CodecConfig(8, 8), seeded_rng(0))
        _, r0, _ = forward_batch(init, c.values)
        initial = float(np.mean((r0 - c.values) ** 2))
        params, _ = train(c, cfg)
        _, r1, _ = forward_batch(params, c.values)
        final = float(np.mean((r1 - c.values) ** 2))
        assert final * 10 <= initial

    def test_epoch_means_decrease(self):
        c = corpus(4, 10, 8, seed=2)
        cfg = TrainConfig(4, LossSpec(LossKind.SIM), 4, 2, epochs=5, iters_per_epoch=40, lr0=0.02, seed=0)
        _, h = train(c, cfg)
        means = h.epoch_means(40)
        assert all(a > b for a, b in zip(means, means[1:]))

    def test_config_validation(self):
        with pytest.raises(DomainError):
            TrainConfig(2, classes_per_batch=1)
        with pytest.raises(DomainError):
            TrainConfig(2, samples_per_class=1)
        with pytest.raises(DomainError):
            TrainConfig(2, lr0=0.0)
        assert math.isclose(TrainConfig(2).loss.alpha, 0.3)
