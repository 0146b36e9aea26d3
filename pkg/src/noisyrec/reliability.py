"""Reliability features and the two-component Gaussian mixture that weights them.

A pair's reliability feature is (inner-product score, co-occurrence count),
z-scored over the batch. The mixture is fit by EM with a deterministic
two-point initialization; the component with the larger mean norm is the
"reliable" one and a sample's weight is its posterior responsibility there.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

DENSITY_FLOOR = 1e-300


def cooccurrence_counts(train, include_self=True):
    """Dense (n_users, n_items) matrix of co-occurrence counts.

    Entry (u, v) counts users u' who interacted with v and share more than
    one item with u. The sum ranges over all of v's users, so u itself is
    counted when it interacted with v and owns at least two items; pass
    ``include_self=False`` to drop that self term.
    """
    m, n = train.n_users, train.n_items
    A = np.zeros((m, n), dtype=np.float64)
    A[train.users, train.items] = 1.0
    overlap = A @ A.T
    share = (overlap > 1.0).astype(np.float64)
    if not include_self:
        np.fill_diagonal(share, 0.0)
    return share @ A


def cooccurrence_feature(u, v, train, include_self=True):
    """Co-occurrence count for one (user, item) pair, by direct set arithmetic."""
    if not (0 <= u < train.n_users and 0 <= v < train.n_items):
        raise IndexError("user or item index out of range")
    items_of = train.items_by_user()
    I_u = items_of.get(u, set())
    count = 0
    for u2, its in items_of.items():
        if v not in its:
            continue
        if u2 == u and not include_self:
            continue
        if len(I_u & its) > 1:
            count += 1
    return count


def standardize(features):
    """Z-score each column; zero-variance columns map to all zeros.

    Returns (standardized, mean, std) where std holds the raw per-column
    standard deviation (0 marks a constant column).
    """
    features = np.asarray(features, dtype=np.float64)
    mean = features.mean(axis=0)
    std = features.std(axis=0)
    safe = np.where(std > 0, std, 1.0)
    out = (features - mean) / safe
    out[:, std == 0] = 0.0
    return out, mean, std


def apply_standardization(features, mean, std):
    features = np.asarray(features, dtype=np.float64)
    safe = np.where(std > 0, std, 1.0)
    out = (features - mean) / safe
    out[:, std == 0] = 0.0
    return out


def build_features(pairs, embeddings, train, counts=None, include_self=True):
    """Raw and z-scored reliability features for a batch of (u, v) pairs.

    Returns (raw (B, 2), standardized (B, 2), mean, std). ``counts`` may carry
    a precomputed co-occurrence matrix to amortize repeated calls.
    """
    pairs = np.asarray(pairs, dtype=np.int64)
    if counts is None:
        counts = cooccurrence_counts(train, include_self=include_self)
    scores = embeddings.scores(pairs[:, 0], pairs[:, 1])
    raw = np.stack([scores, counts[pairs[:, 0], pairs[:, 1]]], axis=1)
    standardized, mean, std = standardize(raw)
    return raw, standardized, mean, std


def _gaussian_log_density(X, mean, cov):
    p = X.shape[1]
    chol = np.linalg.cholesky(cov)
    solved = np.linalg.solve(chol, (X - mean).T)
    logdet = 2.0 * np.log(np.diag(chol)).sum()
    return -0.5 * (p * np.log(2.0 * np.pi) + logdet + (solved ** 2).sum(axis=0))


class ReliabilityMixture(BaseEstimator):
    """Two-component full-covariance Gaussian mixture fit by EM.

    Initialization is deterministic: component means seeded from the rows
    with the largest and smallest first coordinate, equal mixing weights,
    identity covariances. Covariances are regularized by +cov_reg * I every
    M-step. ``random_state`` is accepted for interface symmetry; the fit
    itself consumes no randomness.
    """

    def __init__(self, tol=1e-6, max_iter=200, cov_reg=1e-6, random_state=None):
        self.tol = tol
        self.max_iter = max_iter
        self.cov_reg = cov_reg
        self.random_state = random_state

    def fit(self, X, y=None):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2:
            raise ValueError("features must be a 2-D array")
        n, p = X.shape
        if n < 4:
            raise ValueError(f"need at least 4 points to fit the mixture, got {n}")
        if self.tol <= 0:
            raise ValueError("tol must be positive")

        means = np.stack([X[int(np.argmax(X[:, 0]))], X[int(np.argmin(X[:, 0]))]])
        covs = np.stack([np.eye(p), np.eye(p)])
        pis = np.array([0.5, 0.5])

        log_likelihoods = []
        prev_ll = -np.inf
        converged = False
        for _ in range(self.max_iter):
            log_r, ll = self._estep(X, pis, means, covs)
            log_likelihoods.append(ll)
            r = np.exp(log_r)
            nk = np.maximum(r.sum(axis=0), 1e-12)
            pis = nk / n
            means = (r.T @ X) / nk[:, None]
            for k in range(2):
                diff = X - means[k]
                cov = np.einsum("n,ni,nj->ij", r[:, k], diff, diff) / nk[k]
                covs[k] = 0.5 * (cov + cov.T) + self.cov_reg * np.eye(p)
            if abs(ll - prev_ll) < self.tol:
                converged = True
                break
            prev_ll = ll

        self.weights_ = pis
        self.means_ = means
        self.covariances_ = covs
        self.reliable_index_ = int(np.argmax((means ** 2).sum(axis=1)))
        self.log_likelihoods_ = log_likelihoods
        self.converged_ = converged
        self.n_iter_ = len(log_likelihoods)
        return self

    @staticmethod
    def _estep(X, pis, means, covs):
        logw = np.stack(
            [np.log(np.maximum(pis[k], 1e-300)) + _gaussian_log_density(X, means[k], covs[k]) for k in range(2)],
            axis=1,
        )
        top = logw.max(axis=1, keepdims=True)
        lse = top + np.log(np.exp(logw - top).sum(axis=1, keepdims=True))
        return logw - lse, float(lse.sum())

    def _check_fitted(self):
        if not hasattr(self, "means_"):
            raise NotFittedError("ReliabilityMixture is not fitted")

    def predict_proba(self, X):
        """Posterior responsibilities (n, 2), densities floored at 1e-300."""
        self._check_fitted()
        X = np.asarray(X, dtype=np.float64)
        dens = np.stack(
            [np.exp(_gaussian_log_density(X, self.means_[k], self.covariances_[k])) for k in range(2)],
            axis=1,
        )
        dens = np.maximum(dens, DENSITY_FLOOR)
        weighted = self.weights_ * dens
        return weighted / weighted.sum(axis=1, keepdims=True)

    def reliability_weight(self, X):
        """Responsibility of the reliable component per row, in [0, 1]."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            return float(self.predict_proba(X[None])[0, self.reliable_index_])
        return self.predict_proba(X)[:, self.reliable_index_]


def fit_gmm(features, tol=1e-6, max_iter=200, seed=None):
    """Fit the two-component reliability mixture (functional form)."""
    return ReliabilityMixture(tol=tol, max_iter=max_iter, random_state=seed).fit(features)


def reliability_weight(x, mixture):
    """Posterior responsibility of the reliable component at x."""
    return mixture.reliability_weight(x)


@dataclass
class ReliabilityModel:
    """Fitted mixture plus the standardization stats of its fit batch."""

    mixture: ReliabilityMixture
    mean: np.ndarray
    std: np.ndarray

    def weight(self, raw_features):
        return self.mixture.reliability_weight(apply_standardization(raw_features, self.mean, self.std))


def fit_reliability_model(raw_features, tol=1e-6, max_iter=200):
    standardized, mean, std = standardize(raw_features)
    return ReliabilityModel(ReliabilityMixture(tol=tol, max_iter=max_iter).fit(standardized), mean, std)


def effective_sample_size(weights):
    """(sum w)^2 / sum w^2: equivalent count of unit-weight samples."""
    weights = np.asarray(weights, dtype=np.float64)
    if weights.size == 0 or np.any(weights < 0):
        raise ValueError("weights must be non-negative and non-empty")
    total_sq = weights.sum() ** 2
    denom = (weights ** 2).sum()
    if denom == 0:
        raise ValueError("all weights are zero")
    return float(total_sq / denom)


def save_gmm(path, mixture):
    """Serialize mixture parameters: pi, mean rows, covariance rows, reliable index."""
    mixture._check_fitted()
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\t".join(format(v, ".17g") for v in mixture.weights_) + "\n")
        for k in range(2):
            fh.write("\t".join(format(v, ".17g") for v in mixture.means_[k]) + "\n")
        for k in range(2):
            for row in mixture.covariances_[k]:
                fh.write("\t".join(format(v, ".17g") for v in row) + "\n")
        fh.write(f"{mixture.reliable_index_}\n")


def load_gmm(path):
    with open(path, "r", encoding="utf-8") as fh:
        rows = [line.strip().split("\t") for line in fh if line.strip()]
    pis = np.array([float(v) for v in rows[0]])
    p = len(rows[1])
    means = np.array([[float(v) for v in rows[1]], [float(v) for v in rows[2]]])
    covs = np.array(
        [
            [[float(v) for v in rows[3 + i]] for i in range(p)],
            [[float(v) for v in rows[3 + p + i]] for i in range(p)],
        ]
    )
    out = ReliabilityMixture()
    out.weights_ = pis
    out.means_ = means
    out.covariances_ = covs
    out.reliable_index_ = int(rows[3 + 2 * p][0])
    out.log_likelihoods_ = []
    out.converged_ = True
    out.n_iter_ = 0
    return out
