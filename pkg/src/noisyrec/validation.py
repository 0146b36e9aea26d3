"""Input validation helpers shared by estimators and metric functions."""

import numpy as np

ROW_SUM_TOL = 1e-9
PROB_SUM_TOL = 1e-7


def check_pairs(X, n_users=None, n_items=None):
    """Validate an (N, 2) array of dense (user, item) index pairs.

    Returns the pair array as int64. Bounds are checked only when
    ``n_users`` / ``n_items`` are given.
    """
    X = np.asarray(X)
    if X.ndim != 2 or X.shape[1] != 2:
        raise ValueError(f"pairs must have shape (N, 2), got {X.shape}")
    X = X.astype(np.int64, copy=False)
    if X.size and X.min() < 0:
        raise IndexError("pair indices must be non-negative")
    if n_users is not None and X.size and X[:, 0].max() >= n_users:
        raise IndexError(f"user index {X[:, 0].max()} out of range for {n_users} users")
    if n_items is not None and X.size and X[:, 1].max() >= n_items:
        raise IndexError(f"item index {X[:, 1].max()} out of range for {n_items} items")
    return X


def check_labels(y, num_classes):
    """Validate a label vector with values in 1..num_classes; returns int64 array."""
    y = np.asarray(y)
    if y.ndim != 1:
        raise ValueError(f"labels must be 1-D, got shape {y.shape}")
    y = y.astype(np.int64, copy=False)
    if y.size and (y.min() < 1 or y.max() > num_classes):
        raise ValueError(f"labels must lie in 1..{num_classes}")
    return y


def check_posterior(p, tol=PROB_SUM_TOL):
    """Validate a probability vector or a batch of row-normalized vectors."""
    p = np.asarray(p, dtype=np.float64)
    if np.any(p < -tol):
        raise ValueError("posterior has negative entries")
    sums = p.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > tol):
        raise ValueError("posterior rows must sum to 1")
    return p


def check_transition_matrix(T, tol=ROW_SUM_TOL):
    """Validate a K x K row-stochastic matrix (or a batch of them)."""
    T = np.asarray(T, dtype=np.float64)
    if T.shape[-1] != T.shape[-2] or T.shape[-1] < 2:
        raise ValueError(f"transition matrix must be square with K >= 2, got {T.shape}")
    if np.any(T < -tol):
        raise ValueError("transition matrix has negative entries")
    sums = T.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > tol):
        raise ValueError("transition matrix rows must sum to 1")
    return T


def check_ratios(ratios, tol=1e-9):
    """Validate a tuple of split ratios: non-negative, summing to 1."""
    ratios = tuple(float(r) for r in ratios)
    if any(r < 0 for r in ratios):
        raise ValueError("split ratios must be non-negative")
    if abs(sum(ratios) - 1.0) > tol:
        raise ValueError(f"split ratios must sum to 1, got {sum(ratios)}")
    return ratios
