import math

import numpy as np
import pytest

from topicdistill import distill, evalsuite
from topicdistill.distill import MlpArchitecture, TrainConfig
from topicdistill.errors import DimensionMismatchError, DivergenceError, DomainError

from conftest import make_tf


def small_arch(variant="2l", v=6, k=3):
    return MlpArchitecture(variant=variant, input_dim=v, output_dim=k)


def zero_model(variant="2l", v=6, k=3):
    model = distill.init_mlp(small_arch(variant, v, k), seed=0)
    for w in model.weights:
        w[:] = 0.0
    return model


def random_pairs(rng, v, k, n):
    pairs = []
    for _ in range(n):
        x = rng.integers(0, 4, size=v).astype(np.float64)
        t = rng.dirichlet(np.ones(k))
        pairs.append((x, t))
    return pairs


class TestArchitecture:
    def test_two_layer_rule(self):
        arch = MlpArchitecture(variant="2l", input_dim=2388, output_dim=10)
        assert arch.hidden_dims == (20,)
        assert arch.layer_dims == (2388, 20, 10)

    def test_three_layer_rule(self):
        arch = MlpArchitecture(variant="3l", input_dim=100, output_dim=10)
        assert arch.hidden_dims == (30, 20)

    def test_rejects_unknown_variant(self):
        with pytest.raises(ValueError):
            MlpArchitecture(variant="4l", input_dim=5, output_dim=2)


class TestInit:
    def test_shapes_for_paper_scale(self):
        model = distill.init_mlp(MlpArchitecture("2l", 2388, 10), seed=0)
        assert model.weights[0].shape == (20, 2388)
        assert model.weights[1].shape == (10, 20)

    def test_deterministic(self):
        m1 = distill.init_mlp(small_arch(), seed=5)
        m2 = distill.init_mlp(small_arch(), seed=5)
        for w1, w2 in zip(m1.weights, m2.weights):
            assert np.array_equal(w1, w2)

    def test_seed_changes_weights(self):
        m1 = distill.init_mlp(small_arch(), seed=5)
        m2 = distill.init_mlp(small_arch(), seed=6)
        assert not np.array_equal(m1.weights[0], m2.weights[0])

    def test_glorot_bounds_and_zero_bias(self):
        arch = small_arch("3l", v=40, k=4)
        model = distill.init_mlp(arch, seed=1)
        dims = arch.layer_dims
        for i, (w, b) in enumerate(zip(model.weights, model.biases)):
            limit = math.sqrt(6.0 / (dims[i] + dims[i + 1]))
            assert np.abs(w).max() <= limit
            assert np.all(b == 0.0)


class TestForward:
    def test_zero_parameters_give_uniform(self):
        model = zero_model(k=3)
        out = distill.forward(model, make_tf({0: 2, 3: 1}))
        assert np.allclose(out, 1.0 / 3.0, atol=1e-15)

    def test_final_bias_shift_invariance(self):
        rng = np.random.default_rng(2)
        model = distill.init_mlp(small_arch("3l"), seed=2)
        v = make_tf({0: 1, 2: 3, 5: 1})
        base = distill.forward(model, v)
        model.biases[-1] += 7.25
        assert np.abs(distill.forward(model, v) - base).max() < 1e-12

    def test_hand_weighted_network(self):
        # 2 inputs -> 4 hidden (tanh, the 2K rule) -> 2 outputs, input (1, 0)
        w1 = np.array([[0.5, -1.0], [2.0, 0.25], [-0.3, 0.8], [1.5, -2.0]])
        b1 = np.array([0.1, -0.2, 0.0, 0.4])
        w2 = np.array([[1.0, -0.5, 0.25, 0.0], [0.75, 0.5, -1.0, 0.6]])
        b2 = np.array([0.0, 0.3])
        model = distill.MlpModel(
            architecture=MlpArchitecture("2l", input_dim=2, output_dim=2),
            weights=[w1, w2],
            biases=[b1, b2],
        )
        x = np.array([1.0, 0.0])
        h = np.tanh(w1 @ x + b1)
        logits = w2 @ h + b2
        expected = np.exp(logits) / np.exp(logits).sum()
        got = distill.forward(model, x)
        assert np.abs(got - expected).max() < 1e-14

    def test_output_on_simplex(self):
        rng = np.random.default_rng(3)
        for variant in ("2l", "3l"):
            model = distill.init_mlp(small_arch(variant, v=9, k=4), seed=4)
            for _ in range(20):
                x = rng.uniform(0, 10, size=9)
                out = distill.forward(model, x)
                assert out.sum() == pytest.approx(1.0, abs=1e-8)
                assert np.all(out >= 0)

    def test_dimension_mismatch(self):
        model = zero_model(v=6)
        with pytest.raises(DimensionMismatchError):
            distill.forward(model, np.zeros(7))
        with pytest.raises(DimensionMismatchError):
            distill.forward(model, make_tf({6: 1}))

    def test_l1_input_norm_scale_invariance(self):
        model = distill.init_mlp(small_arch(), seed=7, input_norm="l1")
        a = distill.forward(model, np.array([2.0, 0, 0, 1, 0, 1]))
        b = distill.forward(model, np.array([4.0, 0, 0, 2, 0, 2]))
        assert np.abs(a - b).max() < 1e-15


class TestCrossEntropy:
    def test_uniform_self_entropy(self):
        u = np.full(4, 0.25)
        assert distill.cross_entropy(u, u) == pytest.approx(math.log(4), rel=1e-12)

    def test_one_hot_target(self):
        t = np.array([0.0, 1.0, 0.0])
        q = np.array([0.2, 0.5, 0.3])
        assert distill.cross_entropy(t, q) == pytest.approx(-math.log(0.5), rel=1e-12)

    def test_gibbs_inequality(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            k = int(rng.integers(2, 8))
            p = rng.dirichlet(np.ones(k))
            q = rng.dirichlet(np.ones(k))
            assert distill.cross_entropy(p, q) >= distill.cross_entropy(p, p) - 1e-12

    def test_excess_over_entropy_is_kl(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            p = rng.dirichlet(np.ones(5))
            q = rng.dirichlet(np.ones(5))
            excess = distill.cross_entropy(p, q) - distill.cross_entropy(p, p)
            assert excess == pytest.approx(evalsuite.kl_divergence(p, q), abs=1e-10)

    def test_domain_error_on_nonpositive_prediction(self):
        with pytest.raises(DomainError):
            distill.cross_entropy(np.array([0.5, 0.5]), np.array([1.0, 0.0]))


def finite_difference(model, batch, step=1e-5):
    """Central differences of the mean batch loss through every parameter."""
    fd_w = [np.zeros_like(w) for w in model.weights]
    fd_b = [np.zeros_like(b) for b in model.biases]
    for layer, w in enumerate(model.weights):
        for idx in np.ndindex(w.shape):
            orig = w[idx]
            w[idx] = orig + step
            hi = distill.mean_loss(model, batch)
            w[idx] = orig - step
            lo = distill.mean_loss(model, batch)
            w[idx] = orig
            fd_w[layer][idx] = (hi - lo) / (2 * step)
    for layer, b in enumerate(model.biases):
        for idx in np.ndindex(b.shape):
            orig = b[idx]
            b[idx] = orig + step
            hi = distill.mean_loss(model, batch)
            b[idx] = orig - step
            lo = distill.mean_loss(model, batch)
            b[idx] = orig
            fd_b[layer][idx] = (hi - lo) / (2 * step)
    return fd_w, fd_b


def assert_grad_close(analytic, numeric, rel=1e-4):
    for g, fd in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(g), np.abs(fd)), 1e-6)
        assert (np.abs(g - fd) / denom).max() < rel


class TestGradient:
    def test_zero_when_prediction_equals_target(self):
        model = zero_model(k=3)  # uniform output
        batch = [(make_tf({0: 1}), np.full(3, 1.0 / 3.0))]
        grads_w, grads_b = distill.gradient(model, batch)
        # delta at the output layer is exactly zero, so every gradient is
        assert np.abs(grads_b[-1]).max() == 0.0
        for g in grads_w + grads_b:
            assert np.abs(g).max() < 1e-15

    @pytest.mark.parametrize("variant", ["2l", "3l"])
    def test_matches_finite_differences(self, variant):
        rng = np.random.default_rng(6)
        model = distill.init_mlp(small_arch(variant), seed=8)
        batch = random_pairs(rng, 6, 3, 4)
        grads_w, grads_b = distill.gradient(model, batch)
        fd_w, fd_b = finite_difference(model, batch)
        assert_grad_close(grads_w, fd_w)
        assert_grad_close(grads_b, fd_b)

    def test_batch_gradient_is_mean_of_singles(self):
        rng = np.random.default_rng(7)
        model = distill.init_mlp(small_arch(), seed=9)
        pair_a, pair_b = random_pairs(rng, 6, 3, 2)
        gw_ab, gb_ab = distill.gradient(model, [pair_a, pair_b])
        gw_a, gb_a = distill.gradient(model, [pair_a])
        gw_b, gb_b = distill.gradient(model, [pair_b])
        for combined, a, b in zip(gw_ab + gb_ab, gw_a + gb_a, gw_b + gb_b):
            assert np.abs(combined - (a + b) / 2.0).max() < 1e-12

    def test_rejects_empty_batch(self):
        with pytest.raises(ValueError):
            distill.gradient(zero_model(), [])


class TestTrainSgd:
    def test_single_pair_converges_to_target_entropy(self):
        rng = np.random.default_rng(8)
        target = rng.dirichlet(np.ones(3))
        model = distill.init_mlp(small_arch(), seed=10)
        pair = (np.array([1.0, 0, 2, 0, 0, 1]), target)
        config = TrainConfig(learning_rate=0.1, epochs=200, batch_size=1,
                             seed=0, lr_decay=1.0)
        model, history = distill.train_sgd(model, [pair], config)
        entropy = float(-(target * np.log(target)).sum())
        assert history.train_loss[-1] == pytest.approx(entropy, abs=1e-3)

    def test_deterministic_history_and_weights(self):
        rng = np.random.default_rng(9)
        pairs = random_pairs(rng, 6, 3, 30)
        config = TrainConfig(epochs=10, seed=3)
        m1, h1 = distill.train_sgd(distill.init_mlp(small_arch(), seed=11), list(pairs), config)
        m2, h2 = distill.train_sgd(distill.init_mlp(small_arch(), seed=11), list(pairs), config)
        assert h1.train_loss == h2.train_loss
        for w1, w2 in zip(m1.weights, m2.weights):
            assert np.array_equal(w1, w2)

    def test_loss_eventually_decreases_on_synthetic_set(self):
        rng = np.random.default_rng(10)
        pairs = random_pairs(rng, 10, 4, 50)
        model = distill.init_mlp(small_arch("3l", v=10, k=4), seed=12)
        config = TrainConfig(learning_rate=0.01, epochs=40, seed=4)
        _, history = distill.train_sgd(model, pairs, config)
        assert history.train_loss[-1] < history.train_loss[0]

    def test_validation_loss_recorded(self):
        rng = np.random.default_rng(11)
        pairs = random_pairs(rng, 6, 3, 10)
        val = random_pairs(rng, 6, 3, 4)
        config = TrainConfig(epochs=5, seed=5)
        _, history = distill.train_sgd(distill.init_mlp(small_arch(), seed=13),
                                       pairs, config, val)
        assert len(history.val_loss) == 5
        assert all(np.isfinite(v) for v in history.val_loss)

    def test_divergence_error(self):
        # lr * weight_decay > 2 multiplies the weights geometrically each
        # step until they overflow and the loss turns nan
        rng = np.random.default_rng(12)
        pairs = random_pairs(rng, 6, 3, 8)
        config = TrainConfig(learning_rate=1e6, epochs=10, batch_size=1,
                             seed=6, weight_decay=1e6)
        with pytest.raises(DivergenceError), np.errstate(all="ignore"), \
                np.testing.suppress_warnings() as sup:
            sup.filter(RuntimeWarning)
            distill.train_sgd(distill.init_mlp(small_arch(), seed=14), pairs, config)

    def test_rejects_empty_training_set(self):
        with pytest.raises(ValueError):
            distill.train_sgd(zero_model(), [], TrainConfig())


class TestSerialization:
    @pytest.mark.parametrize("variant", ["2l", "3l"])
    def test_round_trip_bitwise(self, tmp_path, variant):
        model = distill.init_mlp(small_arch(variant, v=11, k=4), seed=15,
                                 input_norm="l1")
        rng = np.random.default_rng(16)
        for w in model.weights:
            w += rng.normal(size=w.shape) * 0.1
        path = tmp_path / "dnn.json"
        distill.save_model(model, path)
        back = distill.load_model(path)
        assert back.architecture == model.architecture
        assert back.input_norm == "l1"
        for w1, w2 in zip(back.weights, model.weights):
            assert np.array_equal(w1, w2)
        for b1, b2 in zip(back.biases, model.biases):
            assert np.array_equal(b1, b2)

    def test_version_check(self, tmp_path):
        path = tmp_path / "dnn.json"
        path.write_text('{"version": 42}')
        with pytest.raises(ValueError):
            distill.load_model(path)
