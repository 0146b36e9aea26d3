"""Ranking metrics, transition-matrix quality measurement, and the
variance-comparison experiment for the two transition estimators.

The Bayes-label estimator conditions on the deterministic argmax label of
the clean posterior; the plug-in baseline conditions on labels drawn from
that posterior, which adds label uncertainty and hence variance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .noise import l1_matrix_error

DEGENERATE_MARGIN = 1e-6


def ranking_scores(probs, mode="top-class"):
    """Scalar relevance per row of a (B, K) posterior.

    "top-class" is the probability of the highest rating class; "expected-rating"
    is sum_k k * p_k.
    """
    probs = np.asarray(probs, dtype=np.float64)
    if mode == "top-class":
        return probs[:, -1]
    if mode == "expected-rating":
        return probs @ np.arange(1, probs.shape[1] + 1, dtype=np.float64)
    raise ValueError(f"unknown ranking score mode '{mode}'")


def rank_items(scores, exclude=()):
    """Item indices sorted by descending score, ties broken by item index.

    Items in `exclude` are dropped from the ranking.
    """
    scores = np.asarray(scores, dtype=np.float64)
    order = np.argsort(-scores, kind="stable")
    if exclude:
        exclude = set(exclude)
        order = np.array([i for i in order.tolist() if i not in exclude], dtype=np.int64)
    return order


def recall_at_k(ranked, relevant, k):
    """|top-k intersect relevant| / |relevant|; 0 when nothing is relevant."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not relevant:
        return 0.0
    top = set(np.asarray(ranked)[:k].tolist())
    return len(top & set(relevant)) / len(relevant)


def ndcg_at_k(ranked, relevant, k):
    """Binary-gain NDCG with discount 1 / log2(rank + 1)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not relevant:
        return 0.0
    relevant = set(relevant)
    dcg = 0.0
    for pos, item in enumerate(np.asarray(ranked)[:k].tolist()):
        if item in relevant:
            dcg += 1.0 / np.log2(pos + 2)
    ideal = sum(1.0 / np.log2(pos + 2) for pos in range(min(k, len(relevant))))
    return dcg / ideal


def evaluate_ranking(predict_proba, n_items, train_items, test_items, ks,
                     score_mode="top-class"):
    """Mean Recall@K / NDCG@K over users with a non-empty test set.

    `predict_proba(pairs)` maps an (N, 2) array of (user, item) indices to an
    (N, K) posterior. A user's candidate list is every item outside their
    training interactions.
    """
    sums = {("recall", k): 0.0 for k in ks}
    sums.update({("ndcg", k): 0.0 for k in ks})
    n_scored = 0
    all_items = np.arange(n_items, dtype=np.int64)
    for user in sorted(test_items):
        relevant = test_items[user]
        if not relevant:
            continue
        pairs = np.column_stack([np.full(n_items, user, dtype=np.int64), all_items])
        scores = ranking_scores(predict_proba(pairs), mode=score_mode)
        ranked = rank_items(scores, exclude=train_items.get(user, ()))
        n_scored += 1
        for k in ks:
            sums[("recall", k)] += recall_at_k(ranked, relevant, k)
            sums[("ndcg", k)] += ndcg_at_k(ranked, relevant, k)
    if n_scored == 0:
        return {key: 0.0 for key in sums}, 0
    return {key: v / n_scored for key, v in sums.items()}, n_scored


def evaluate_matrix(estimates, truth):
    """Mean L1 error of per-instance estimates against the ground-truth matrix.

    `truth` is either one K x K matrix shared by all instances or a stack of
    per-instance matrices.
    """
    estimates = np.asarray(estimates, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if truth.ndim == 2:
        truth = np.broadcast_to(truth, estimates.shape)
    return l1_matrix_error(estimates, truth)


@dataclass(frozen=True)
class VarianceReport:
    var_bltm: float
    var_cltm: float
    ratio: float
    n_trials: int
    n_per_trial: int


def _check_variance_inputs(p, eta):
    if not DEGENERATE_MARGIN <= p <= 1.0 - DEGENERATE_MARGIN:
        raise ValueError("clean posterior p is degenerate; label uncertainty vanishes")
    if not 0.0 <= eta < 0.5:
        raise ValueError("flip rate must satisfy eta < 1/2 (bounded noise)")


def simulate_transition_estimates(p, eta, n_trials, n_per_trial, seed):
    """Per-trial estimates of the conditioned diagonal transition entry.

    Binary instance: clean label 1 with probability p, symmetric flips at
    rate eta. Both estimators target P(noisy = i | conditioning label = i)
    where i is the argmax class of (p, 1-p). The Bayes-label estimator
    conditions on that deterministic label; the plug-in estimator conditions
    on labels drawn independently from the posterior, with fallback estimate
    1/2 for the (vanishingly rare) trials where the conditioning set is empty.
    """
    _check_variance_inputs(p, eta)
    rng = np.random.default_rng(seed)
    clean_is_1 = rng.random((n_trials, n_per_trial)) < p
    flip = rng.random((n_trials, n_per_trial)) < eta
    noisy_is_1 = clean_is_1 ^ flip

    target_is_1 = p >= 0.5  # argmax of (p, 1-p); tie resolves to class 1
    hit = noisy_is_1 if target_is_1 else ~noisy_is_1

    bltm = hit.mean(axis=1)

    plug_is_target = (rng.random((n_trials, n_per_trial)) < p) == target_is_1
    counts = plug_is_target.sum(axis=1)
    matches = (hit & plug_is_target).sum(axis=1)
    cltm = np.where(counts > 0, matches / np.maximum(counts, 1), 0.5)
    return bltm, cltm


def variance_comparison(p, eta, n_trials, n_per_trial, seed):
    """Empirical variances of the two estimators over Monte Carlo trials."""
    bltm, cltm = simulate_transition_estimates(p, eta, n_trials, n_per_trial, seed)
    var_b = float(np.var(bltm, ddof=1))
    var_c = float(np.var(cltm, ddof=1))
    ratio = var_c / var_b if var_b > 0 else np.inf
    return VarianceReport(var_b, var_c, float(ratio), n_trials, n_per_trial)


def variance_order_confidence(p, eta, n_trials, n_per_trial, seed, n_boot=1000):
    """Bootstrap confidence that var_bltm < var_cltm (one-sided).

    Trials are resampled with replacement; the return value is the fraction
    of bootstrap replicates in which the Bayes-label estimator has the
    smaller variance.
    """
    bltm, cltm = simulate_transition_estimates(p, eta, n_trials, n_per_trial, seed)
    rng = np.random.default_rng(seed + 1)
    wins = 0
    for _ in range(n_boot):
        idx = rng.integers(0, n_trials, size=n_trials)
        if np.var(bltm[idx], ddof=1) < np.var(cltm[idx], ddof=1):
            wins += 1
    return wins / n_boot


def save_metric_table(path, rows):
    """Write metric rows as comma-delimited text with a header.

    Each row is (metric, k, value, std); std may be None for single runs.
    """
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("metric,k,value,std\n")
        for metric, k, value, std in rows:
            std_txt = "" if std is None else repr(float(std))
            fh.write(f"{metric},{k},{repr(float(value))},{std_txt}\n")
