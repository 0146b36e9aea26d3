"""Synthetic class-conditional label noise.

Transition-matrix builders for the two benchmark corruptions, a seeded
injector, and the L1 discrepancy used to score matrix estimates. The
injector uses the Philox counter-based generator so runs are
bit-reproducible for a given seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .validation import check_labels, check_transition_matrix


@dataclass(frozen=True)
class NoiseSpec:
    kind: str  # "symmetric" | "pairflip"
    eta: float
    num_classes: int
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("symmetric", "pairflip"):
            raise ValueError(f"unknown noise kind '{self.kind}'")
        if not 0.0 <= self.eta < 1.0:
            raise ValueError("noise rate eta must lie in [0, 1)")
        if self.num_classes < 2:
            raise ValueError("need at least 2 classes")

    def matrix(self):
        if self.kind == "symmetric":
            return symmetric_matrix(self.num_classes, self.eta)
        return pairflip_matrix(self.num_classes, self.eta)


def symmetric_matrix(num_classes, eta):
    """Flip to any other class uniformly: diagonal 1-eta, off-diagonals eta/(K-1)."""
    if not 0.0 <= eta < 1.0:
        raise ValueError("eta must lie in [0, 1)")
    if num_classes < 2:
        raise ValueError("need at least 2 classes")
    T = np.full((num_classes, num_classes), eta / (num_classes - 1), dtype=np.float64)
    np.fill_diagonal(T, 1.0 - eta)
    return T


def pairflip_matrix(num_classes, eta):
    """Flip to the next-lower class with probability eta; class 1 wraps to class K.

    The wrap keeps the flip mass identical for every row, so the bounded-noise
    rate is uniform across classes.
    """
    if not 0.0 <= eta < 1.0:
        raise ValueError("eta must lie in [0, 1)")
    if num_classes < 2:
        raise ValueError("need at least 2 classes")
    T = np.zeros((num_classes, num_classes), dtype=np.float64)
    for row in range(num_classes):
        T[row, row] = 1.0 - eta
        T[row, (row - 1) % num_classes] += eta
    return T


def inject_noise(labels, transition, seed):
    """Resample each label from its transition row; deterministic given seed."""
    transition = check_transition_matrix(transition)
    K = transition.shape[0]
    labels = check_labels(labels, K)
    rng = np.random.Generator(np.random.Philox(seed))
    u = rng.random(labels.shape[0])
    cdf = np.cumsum(transition, axis=1)
    # index of the first cdf entry >= u, per label row
    noisy0 = (cdf[labels - 1] < u[:, None]).sum(axis=1)
    np.minimum(noisy0, K - 1, out=noisy0)
    return noisy0 + 1


def l1_matrix_error(estimates, truths):
    """Mean over instances of the entrywise L1 distance between matrix pairs."""
    estimates = np.asarray(estimates, dtype=np.float64)
    truths = np.asarray(truths, dtype=np.float64)
    if estimates.shape != truths.shape:
        raise ValueError(f"shape mismatch: {estimates.shape} vs {truths.shape}")
    if estimates.ndim == 2:
        estimates = estimates[None]
        truths = truths[None]
    if estimates.ndim != 3 or estimates.shape[1] != estimates.shape[2]:
        raise ValueError("expected per-instance K x K matrices")
    return float(np.abs(estimates - truths).sum(axis=(1, 2)).mean())


def save_matrix(path, T):
    """Write a matrix as delimited text, one row per line, 17-digit decimals."""
    T = np.asarray(T, dtype=np.float64)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in np.atleast_2d(T):
            fh.write("\t".join(format(v, ".17g") for v in row) + "\n")


def load_matrix(path):
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append([float(v) for v in line.split("\t")])
    return np.asarray(rows, dtype=np.float64)
