"""Backbone module: forward passes, optimizers, gradient checking, checkpoints."""

import numpy as np
import pytest

from noisyrec.backbone import (
    ClassifierHead,
    EmbeddingTable,
    Optimizer,
    TransitionNetwork,
    finite_difference_check,
    load_checkpoint,
    predict_posterior,
    predict_score,
    predict_transition,
    save_checkpoint,
    softmax,
)
from noisyrec.exceptions import NumericError


def make_parts(seed=0, m=6, n=7, d=4, K=3):
    rng = np.random.default_rng(seed)
    emb = EmbeddingTable(m, n, d, rng)
    head = ClassifierHead(2 * d, K, rng)
    net = TransitionNetwork(2 * d, K, rng)
    return emb, head, net


class TestSoftmaxPosterior:
    def test_zero_logits_uniform(self):
        assert np.allclose(softmax(np.zeros((2, 5))), 0.2)

    def test_saturation(self):
        p = softmax(np.array([[10.0, 0.0, 0.0]]))
        assert p[0, 0] > 0.999

    def test_posterior_normalized(self):
        emb, head, _ = make_parts()
        users = np.arange(6)
        items = np.arange(6)
        probs = predict_posterior(emb, head, users, items)
        assert np.all(probs >= 0)
        assert np.abs(probs.sum(axis=1) - 1.0).max() < 1e-7

    def test_zero_head_gives_uniform(self):
        emb, head, _ = make_parts()
        for p in head.params().values():
            p[...] = 0.0
        probs = predict_posterior(emb, head, np.array([0]), np.array([0]))
        assert np.allclose(probs, 1.0 / 3)


class TestPredictScore:
    def test_zero_vectors(self):
        emb, _, _ = make_parts()
        emb.user_vecs[...] = 0.0
        assert predict_score(emb, np.array([0]), np.array([0]))[0] == 0.0

    def test_unit_dot(self):
        emb, _, _ = make_parts()
        emb.user_vecs[0] = np.array([1.0, 0, 0, 0])
        emb.item_vecs[0] = np.array([1.0, 0, 0, 0])
        assert predict_score(emb, np.array([0]), np.array([0]))[0] == pytest.approx(1.0)

    def test_matches_naive_sum(self):
        emb, _, _ = make_parts(seed=3)
        users = np.array([0, 2, 5])
        items = np.array([1, 1, 6])
        got = predict_score(emb, users, items)
        for k, (u, i) in enumerate(zip(users, items)):
            naive = sum(float(emb.user_vecs[u, j]) * float(emb.item_vecs[i, j]) for j in range(4))
            assert got[k] == pytest.approx(naive, rel=1e-12)


class TestPredictTransition:
    def test_zero_net_uniform_rows(self):
        _, _, net = make_parts()
        for p in net.params().values():
            p[...] = 0.0
        T = predict_transition(net, np.zeros(8))
        assert np.allclose(T, 1.0 / 3)

    def test_rows_stochastic(self):
        _, _, net = make_parts(seed=9)
        X = np.random.default_rng(1).normal(size=(10, 8))
        T = predict_transition(net, X)
        assert T.shape == (10, 3, 3)
        assert np.all(T >= 0)
        assert np.abs(T.sum(axis=2) - 1.0).max() < 1e-7


class TestOptimizer:
    def test_sgd_step_arithmetic(self):
        params = {"w": np.array([1.0])}
        opt = Optimizer(lr=0.1, mode="sgd")
        opt.apply_gradients(params, {"w": np.array([0.5])})
        assert params["w"][0] == pytest.approx(0.95)
        assert opt.step == 1

    def test_zero_grads_no_change_sgd(self):
        params = {"w": np.array([1.0, -2.0])}
        Optimizer(lr=0.1, mode="sgd").apply_gradients(params, {"w": np.zeros(2)})
        assert np.array_equal(params["w"], [1.0, -2.0])

    def test_shape_mismatch(self):
        opt = Optimizer(lr=0.1)
        with pytest.raises(ValueError):
            opt.apply_gradients({"w": np.zeros(2)}, {"w": np.zeros(3)})

    def test_unknown_param(self):
        opt = Optimizer(lr=0.1)
        with pytest.raises(ValueError):
            opt.apply_gradients({"w": np.zeros(2)}, {"v": np.zeros(2)})

    @pytest.mark.parametrize("mode", ["sgd", "adam"])
    def test_quadratic_bowl_descent(self, mode):
        # closed-form gradient of 0.5 * ||p||^2 is p itself
        params = {"p": np.array([3.0, -4.0, 1.5])}
        opt = Optimizer(lr=0.05, mode=mode)
        norms = [np.linalg.norm(params["p"])]
        for _ in range(100):
            opt.apply_gradients(params, {"p": params["p"].copy()})
            norms.append(np.linalg.norm(params["p"]))
        assert all(b <= a + 1e-12 for a, b in zip(norms, norms[1:]))
        assert norms[-1] < norms[0] * 0.2

    def test_bad_lr(self):
        with pytest.raises(ValueError):
            Optimizer(lr=0.0)


class TestFiniteDifference:
    def test_sum_of_squares(self):
        params = {"p": np.array([1.0, -2.0, 0.5])}

        def loss(ps):
            return float((ps["p"] ** 2).sum()), {"p": 2.0 * ps["p"]}

        assert finite_difference_check(loss, params) < 1e-6

    def test_constant_loss(self):
        params = {"p": np.array([1.0, 2.0])}

        def loss(ps):
            return 3.0, {"p": np.zeros(2)}

        assert finite_difference_check(loss, params) < 1e-6

    def test_non_finite_loss(self):
        def loss(ps):
            return float("nan"), {"p": np.zeros(1)}

        with pytest.raises(NumericError):
            finite_difference_check(loss, {"p": np.zeros(1)})

    def test_epsilon_range(self):
        with pytest.raises(ValueError):
            finite_difference_check(lambda p: (0.0, {}), {}, epsilon=0.5)


class TestCheckpoint:
    def test_bit_exact_round_trip(self, tmp_path):
        rng = np.random.default_rng(7)
        tensors = {
            "user_vecs": rng.normal(size=(5, 3)),
            "bias": rng.normal(size=4),
            "scalar": np.array(1.0 / 3.0),
        }
        path = tmp_path / "ckpt.txt"
        save_checkpoint(path, tensors)
        loaded = load_checkpoint(path)
        assert set(loaded) == set(tensors)
        for name in tensors:
            assert loaded[name].shape == np.asarray(tensors[name]).shape
            assert np.array_equal(loaded[name], tensors[name])

    def test_rewrite_is_byte_identical(self, tmp_path):
        tensors = {"w": np.random.default_rng(0).normal(size=(3, 3))}
        p1, p2 = tmp_path / "a.txt", tmp_path / "b.txt"
        save_checkpoint(p1, tensors)
        save_checkpoint(p2, load_checkpoint(p1))
        assert p1.read_bytes() == p2.read_bytes()
