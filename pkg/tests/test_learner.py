"""One-hidden-layer MLP: gradients, SGD updates, evaluation, checkpoints."""

import math

import numpy as np
import pytest

from ttfedsim.learner import (
    MlpArch,
    TrainConfig,
    class_probabilities,
    evaluate,
    init_params,
    load_params,
    local_update,
    loss_and_gradient,
    save_params,
)

ARCH = MlpArch()


def random_batch(n, seed, arch=ARCH):
    rng = np.random.default_rng(seed)
    images = rng.uniform(0.0, 1.0, size=(n, arch.in_dim))
    labels = rng.integers(0, arch.out_dim, size=n)
    return images, labels


class TestArchitecture:
    def test_default_param_count(self):
        assert ARCH.param_count == 39760

    def test_small_arch_count(self):
        assert MlpArch(in_dim=3, hidden=2, out_dim=4).param_count == 3 * 2 + 2 + 2 * 4 + 4

    def test_bad_sizes(self):
        with pytest.raises(ValueError):
            MlpArch(in_dim=0)

    def test_config_validation(self):
        TrainConfig(learning_rate=0.0)  # zero step is a legal no-op
        with pytest.raises(ValueError):
            TrainConfig(learning_rate=-0.1)
        with pytest.raises(ValueError):
            TrainConfig(local_epochs=0)
        with pytest.raises(ValueError):
            TrainConfig(batch_size=0)


class TestInit:
    def test_deterministic(self):
        assert np.array_equal(init_params(7), init_params(7))
        assert not np.array_equal(init_params(7), init_params(8))

    def test_length_and_zero_biases(self):
        w = init_params(0)
        assert w.shape == (39760,)
        n1 = 784 * 50
        assert (w[n1 : n1 + 50] == 0.0).all()
        assert (w[-10:] == 0.0).all()

    def test_weight_scale(self):
        w = init_params(3)
        lim1 = math.sqrt(6.0 / (784 + 50))
        lim2 = math.sqrt(6.0 / (50 + 10))
        n1 = 784 * 50
        assert np.abs(w[:n1]).max() <= lim1
        assert np.abs(w[n1 + 50 : n1 + 50 + 500]).max() <= lim2
        assert np.abs(w[:n1]).max() > 0.9 * lim1  # actually fills the range


class TestLossAndGradient:
    def test_uniform_logits_give_log10(self):
        images, labels = random_batch(16, 0)
        loss, _ = loss_and_gradient(np.zeros(ARCH.param_count), images, labels)
        assert loss == pytest.approx(math.log(10.0), rel=1e-12)

    def test_softmax_rows_sum_to_one(self):
        images, _ = random_batch(32, 1)
        probs = class_probabilities(init_params(1), images)
        assert probs.shape == (32, 10)
        assert probs.min() > 0.0
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-9)

    def test_duplicated_batch_unchanged(self):
        images, labels = random_batch(8, 2)
        w = init_params(2)
        loss_a, grad_a = loss_and_gradient(w, images, labels)
        loss_b, grad_b = loss_and_gradient(
            w, np.concatenate([images, images]), np.concatenate([labels, labels])
        )
        assert loss_b == pytest.approx(loss_a, rel=1e-12)
        np.testing.assert_allclose(grad_b, grad_a, rtol=1e-10, atol=1e-15)

    def test_empty_batch(self):
        with pytest.raises(ValueError):
            loss_and_gradient(init_params(0), np.zeros((0, 784)), np.zeros(0, dtype=int))

    def test_wrong_length_vector(self):
        images, labels = random_batch(4, 3)
        with pytest.raises(ValueError):
            loss_and_gradient(np.zeros(10), images, labels)

    @pytest.mark.parametrize("seed", range(10))
    def test_gradient_matches_central_differences(self, seed):
        images, labels = random_batch(6, 100 + seed)
        w = init_params(seed)
        _, grad = loss_and_gradient(w, images, labels)
        rng = np.random.default_rng(200 + seed)
        coords = rng.choice(ARCH.param_count, size=50, replace=False)
        h = 1e-5
        worst = 0.0
        for c in coords:
            wp, wm = w.copy(), w.copy()
            wp[c] += h
            wm[c] -= h
            lp, _ = loss_and_gradient(wp, images, labels)
            lm, _ = loss_and_gradient(wm, images, labels)
            numeric = (lp - lm) / (2.0 * h)
            rel = abs(grad[c] - numeric) / max(abs(grad[c]), abs(numeric), 1e-6)
            worst = max(worst, rel)
        assert worst <= 1e-4

    def test_gradient_finite(self):
        images, labels = random_batch(8, 4)
        loss, grad = loss_and_gradient(init_params(4), images, labels)
        assert math.isfinite(loss)
        assert np.isfinite(grad).all()


class TestLocalUpdate:
    def test_zero_rate_is_identity(self):
        images, labels = random_batch(10, 5)
        w = init_params(5)
        out = local_update(
            w, images, labels, TrainConfig(learning_rate=0.0), np.random.default_rng(0)
        )
        assert np.array_equal(out, w)
        assert out is not w

    def test_full_batch_single_step_exact(self):
        images, labels = random_batch(10, 6)
        w = init_params(6)
        cfg = TrainConfig(learning_rate=0.05, local_epochs=1, batch_size=10)
        out = local_update(w, images, labels, cfg, np.random.default_rng(0))
        _, grad = loss_and_gradient(w, images, labels)
        assert np.array_equal(out, w - 0.05 * grad)

    def test_oversized_batch_same_as_full(self):
        images, labels = random_batch(10, 6)
        w = init_params(6)
        a = local_update(
            w, images, labels, TrainConfig(batch_size=10), np.random.default_rng(0)
        )
        b = local_update(
            w, images, labels, TrainConfig(batch_size=999), np.random.default_rng(1)
        )
        assert np.array_equal(a, b)

    @pytest.mark.parametrize("seed", range(10))
    def test_descent_on_full_batch(self, seed):
        images, labels = random_batch(20, 300 + seed)
        w = init_params(seed)
        loss_before, _ = loss_and_gradient(w, images, labels)
        cfg = TrainConfig(learning_rate=0.01, local_epochs=1, batch_size=20)
        out = local_update(w, images, labels, cfg, np.random.default_rng(0))
        loss_after, _ = loss_and_gradient(out, images, labels)
        assert loss_after < loss_before

    def test_shuffled_minibatches_deterministic(self):
        images, labels = random_batch(30, 7)
        w = init_params(7)
        cfg = TrainConfig(learning_rate=0.02, local_epochs=3, batch_size=8)
        a = local_update(w, images, labels, cfg, np.random.default_rng(99))
        b = local_update(w, images, labels, cfg, np.random.default_rng(99))
        c = local_update(w, images, labels, cfg, np.random.default_rng(100))
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)  # different shuffle, different result

    def test_updates_stay_finite(self):
        images, labels = random_batch(30, 8)
        w = init_params(8)
        cfg = TrainConfig(learning_rate=0.5, local_epochs=5, batch_size=8)
        out = local_update(w, images, labels, cfg, np.random.default_rng(0))
        assert np.isfinite(out).all()

    def test_empty_shard(self):
        with pytest.raises(ValueError):
            local_update(
                init_params(0),
                np.zeros((0, 784)),
                np.zeros(0, dtype=int),
                TrainConfig(),
                np.random.default_rng(0),
            )


class TestEvaluate:
    def test_constant_model_is_chance(self):
        # zero weights give identical logits; ties resolve to class 0
        images = np.random.default_rng(9).uniform(size=(100, 784))
        labels = np.repeat(np.arange(10), 10)
        acc, loss = evaluate(np.zeros(ARCH.param_count), images, labels)
        assert acc == pytest.approx(0.1)
        assert loss == pytest.approx(math.log(10.0), rel=1e-12)

    def test_perfect_model(self):
        # craft logits through b2 alone on a one-sample-per-class set
        arch = MlpArch(in_dim=4, hidden=3, out_dim=10)
        images = np.zeros((10, 4))
        labels = np.arange(10)
        accs = []
        for target in range(10):
            w = np.zeros(arch.param_count)
            w[-10 + target] = 50.0  # bias pushes every prediction to `target`
            acc, _ = evaluate(w, images, labels, arch)
            accs.append(acc)
        assert accs == [pytest.approx(0.1)] * 10  # each constant guess hits once

    def test_trained_beats_chance(self):
        images, labels = random_batch(50, 10)
        w = init_params(10)
        cfg = TrainConfig(learning_rate=0.5, local_epochs=40, batch_size=50)
        out = local_update(w, images, labels, cfg, np.random.default_rng(0))
        acc_after, _ = evaluate(out, images, labels)
        assert acc_after > 0.5  # memorizes a 50-sample batch

    def test_deterministic(self):
        images, labels = random_batch(20, 11)
        w = init_params(11)
        assert evaluate(w, images, labels) == evaluate(w, images, labels)

    def test_empty_set(self):
        with pytest.raises(ValueError):
            evaluate(init_params(0), np.zeros((0, 784)), np.zeros(0, dtype=int))


class TestCheckpoint:
    def test_round_trip_bitwise(self, tmp_path):
        arch = MlpArch(in_dim=12, hidden=5, out_dim=10)
        rng = np.random.default_rng(12)
        w = rng.standard_normal(arch.param_count)
        path = str(tmp_path / "model.bin")
        save_params(path, w, arch)
        w2, arch2 = load_params(path)
        assert arch2 == arch
        assert np.array_equal(w2, w)
        assert w2.tobytes() == w.tobytes()

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"NOPE" + bytes(64))
        with pytest.raises(ValueError, match="checkpoint"):
            load_params(str(path))

    def test_truncated_payload(self, tmp_path):
        arch = MlpArch(in_dim=12, hidden=5, out_dim=10)
        path = str(tmp_path / "model.bin")
        save_params(path, np.zeros(arch.param_count), arch)
        data = open(path, "rb").read()
        with open(path, "wb") as fh:
            fh.write(data[:-8])
        with pytest.raises(ValueError, match="payload"):
            load_params(path)

    def test_wrong_length_save(self, tmp_path):
        with pytest.raises(ValueError):
            save_params(str(tmp_path / "m.bin"), np.zeros(3), MlpArch())
