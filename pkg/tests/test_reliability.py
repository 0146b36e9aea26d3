"""Reliability module: co-occurrence, feature standardization, EM mixture, weights."""

import numpy as np
import pytest

from noisyrec.backbone import EmbeddingTable
from noisyrec.reliability import (
    ReliabilityMixture,
    build_features,
    cooccurrence_counts,
    cooccurrence_feature,
    effective_sample_size,
    fit_gmm,
    fit_reliability_model,
    load_gmm,
    reliability_weight,
    save_gmm,
    standardize,
)
from helpers import dataset_from_pairs


def brute_force_cooccurrence(u, v, pairs, include_self=True):
    items_of = {}
    for uu, ii in pairs:
        items_of.setdefault(uu, set()).add(ii)
    I_u = items_of.get(u, set())
    count = 0
    for u2, its in items_of.items():
        if v in its and (include_self or u2 != u):
            if len(I_u & its) > 1:
                count += 1
    return count


class TestCooccurrence:
    # toy graph: A:{1,2,3}, B:{2,3}, C:{3}
    TOY = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]

    def _toy_dataset(self):
        pairs = np.array(self.TOY)
        labels = np.ones(len(pairs), dtype=np.int64)
        return dataset_from_pairs(pairs, labels, num_classes=5)

    def test_toy_hand_count(self):
        ds = self._toy_dataset()
        # c(A, 3): users of item 3 are A, B, C; A shares {1,2,3} with itself (3 > 1),
        # {2,3} with B (2 > 1), {3} with C (1, not > 1) -> 2
        assert cooccurrence_feature(ds.user_index["u0"], ds.item_index["i3"], ds) == 2

    def test_self_counts_with_two_items(self):
        ds = self._toy_dataset()
        u = ds.user_index["u0"]
        v = ds.item_index["i1"]
        assert cooccurrence_feature(u, v, ds) >= 1
        assert cooccurrence_feature(u, v, ds, include_self=False) == cooccurrence_feature(u, v, ds) - 1

    def test_empty_train(self):
        ds = dataset_from_pairs(np.empty((0, 2), dtype=int), np.empty(0, dtype=int), 5)
        assert cooccurrence_counts(ds).size == 0

    def test_matches_brute_force(self):
        rng = np.random.default_rng(2)
        pairs = np.unique(rng.integers(0, (8, 12), size=(60, 2)), axis=0)
        ds = dataset_from_pairs(pairs, np.ones(len(pairs), dtype=np.int64), 5)
        dense = {(ds.user_index[f"u{u}"], ds.item_index[f"i{i}"]): (u, i) for u, i in pairs}
        for include_self in (True, False):
            counts = cooccurrence_counts(ds, include_self=include_self)
            for (du, di), (u, i) in dense.items():
                expect = brute_force_cooccurrence(
                    du, di,
                    [(ds.user_index[f"u{a}"], ds.item_index[f"i{b}"]) for a, b in pairs],
                    include_self,
                )
                assert counts[du, di] == expect
                assert cooccurrence_feature(du, di, ds, include_self=include_self) == expect

    def test_bounds_error(self):
        ds = self._toy_dataset()
        with pytest.raises(IndexError):
            cooccurrence_feature(99, 0, ds)


class TestBuildFeatures:
    def test_constant_scores_zeroed(self):
        ds = dataset_from_pairs(np.array([(0, 0), (1, 1), (2, 2)]), np.ones(3, dtype=int), 5)
        emb = EmbeddingTable(3, 3, 4, np.random.default_rng(0))
        emb.user_vecs[...] = 0.0  # all scores 0
        pairs = np.array([(0, 0), (1, 1), (2, 2)])
        raw, std, _, _ = build_features(pairs, emb, ds)
        assert np.allclose(std[:, 0], 0.0)

    def test_two_point_standardization(self):
        z, mean, sd = standardize(np.array([[0.0, 1.0], [2.0, 1.0]]))
        assert np.allclose(z[:, 0], [-1.0, 1.0])
        assert np.allclose(z[:, 1], 0.0)  # constant column
        assert mean[0] == pytest.approx(1.0)

    def test_batch_mean_zero(self):
        rng = np.random.default_rng(1)
        z, _, _ = standardize(rng.normal(size=(50, 2)) * [3.0, 40.0] + [1.0, 7.0])
        assert np.abs(z.mean(axis=0)).max() < 1e-9
        assert np.allclose(z.std(axis=0), 1.0)


class TestFitGmm:
    def sample_two_clusters(self, seed, n_each=500, sep=5.0):
        rng = np.random.default_rng(seed)
        a = rng.normal(size=(n_each, 2)) + [-sep, -sep]
        b = rng.normal(size=(n_each, 2)) + [sep, sep]
        return np.vstack([a, b])

    def test_recovers_known_clusters(self):
        for seed in range(10):
            X = self.sample_two_clusters(seed)
            g = fit_gmm(X)
            means = g.means_[np.argsort(g.means_[:, 0])]
            assert np.abs(means[0] - [-5.0, -5.0]).max() < 0.3
            assert np.abs(means[1] - [5.0, 5.0]).max() < 0.3
            assert np.abs(g.weights_ - 0.5).max() < 0.05

    def test_log_likelihood_monotone(self):
        X = self.sample_two_clusters(3, sep=2.0)
        g = fit_gmm(X)
        lls = g.log_likelihoods_
        assert len(lls) >= 2
        assert all(b >= a - 1e-8 for a, b in zip(lls, lls[1:]))

    def test_identical_points_degenerate(self):
        X = np.tile([2.0, -1.0], (10, 1))
        g = fit_gmm(X)
        for k in range(2):
            assert np.allclose(g.means_[k], [2.0, -1.0])
            assert np.allclose(g.covariances_[k], 1e-6 * np.eye(2))

    def test_deterministic(self):
        X = self.sample_two_clusters(7)
        a, b = fit_gmm(X), fit_gmm(X)
        assert np.array_equal(a.means_, b.means_)
        assert np.array_equal(a.covariances_, b.covariances_)
        assert a.reliable_index_ == b.reliable_index_

    def test_too_few_points(self):
        with pytest.raises(ValueError):
            fit_gmm(np.zeros((3, 2)))

    def test_reliable_index_larger_norm(self):
        X = self.sample_two_clusters(0)
        g = fit_gmm(X)
        norms = (g.means_ ** 2).sum(axis=1)
        assert g.reliable_index_ == int(np.argmax(norms))


class TestReliabilityWeight:
    def _mixture(self, mu0, mu1, pi=(0.5, 0.5)):
        g = ReliabilityMixture()
        g.weights_ = np.asarray(pi, dtype=float)
        g.means_ = np.array([mu0, mu1], dtype=float)
        g.covariances_ = np.stack([np.eye(2), np.eye(2)])
        g.reliable_index_ = int(np.argmax((g.means_ ** 2).sum(axis=1)))
        return g

    def test_identical_components_half(self):
        g = self._mixture([1.0, 1.0], [1.0, 1.0])
        for x in ([0.0, 0.0], [5.0, -3.0]):
            assert reliability_weight(np.array(x), g) == pytest.approx(0.5)

    def test_well_separated_saturates(self):
        g = self._mixture([10.0, 10.0], [0.0, 0.0])
        assert reliability_weight(g.means_[g.reliable_index_], g) > 0.999

    def test_batch_in_unit_interval_and_complementary(self):
        X = np.random.default_rng(0).normal(size=(200, 2)) * 3
        g = fit_gmm(X)
        w = g.reliability_weight(X)
        assert np.all((0.0 <= w) & (w <= 1.0))
        both = g.predict_proba(X)
        assert np.abs(both.sum(axis=1) - 1.0).max() < 1e-9

    def test_far_tail_does_not_crash(self):
        g = self._mixture([1.0, 0.0], [-1.0, 0.0])
        w = reliability_weight(np.array([1e3, 1e3]), g)
        assert 0.0 <= w <= 1.0


class TestEffectiveSampleSize:
    def test_equal_weights(self):
        assert effective_sample_size(np.ones(17)) == pytest.approx(17.0)

    def test_single_nonzero(self):
        assert effective_sample_size([0.0, 0.0, 0.7]) == pytest.approx(1.0)

    def test_hand_value(self):
        assert effective_sample_size([1.0, 1.0, 0.5]) == pytest.approx(2.5 ** 2 / 2.25)

    def test_never_exceeds_n(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            w = rng.random(rng.integers(1, 30))
            ess = effective_sample_size(w)
            assert ess <= len(w) + 1e-12

    def test_all_zero_rejected(self):
        with pytest.raises(ValueError):
            effective_sample_size([0.0, 0.0])

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            effective_sample_size([-1.0, 2.0])


class TestGmmSerialization:
    def test_round_trip(self, tmp_path):
        X = np.random.default_rng(4).normal(size=(100, 2)) + [[2.0, 3.0]]
        g = fit_gmm(X)
        path = tmp_path / "gmm.txt"
        save_gmm(path, g)
        g2 = load_gmm(path)
        assert np.array_equal(g.weights_, g2.weights_)
        assert np.array_equal(g.means_, g2.means_)
        assert np.array_equal(g.covariances_, g2.covariances_)
        assert g.reliable_index_ == g2.reliable_index_


class TestReliabilityModel:
    def test_weight_uses_fit_batch_stats(self):
        rng = np.random.default_rng(0)
        raw = np.vstack([
            rng.normal(size=(300, 2)) * [0.2, 2.0] + [0.1, 3.0],
            rng.normal(size=(100, 2)) * [0.2, 2.0] + [1.5, 30.0],
        ])
        model = fit_reliability_model(raw)
        w = model.weight(raw)
        assert w.shape == (400,)
        assert np.all((w >= 0) & (w <= 1))
        # the high-score/high-count minority should be the reliable side here
        assert w[300:].mean() > w[:300].mean()
