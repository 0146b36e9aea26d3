"""Confidence-gated label distillation and the progressive threshold schedule.

A training pair is admitted to the distilled set when its posterior clears
the confidence gate max_k eta_k > (1 + rho_t) / 2, or, once a reliability
mixture is available, when its reliability weight clears tau_t. Admission is
permanent; labels, features and weights are refreshed from the current model
at every refresh.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .validation import check_posterior


@dataclass(frozen=True)
class ThresholdSchedule:
    """Geometric decay of the confidence gate rho_t and the weight gate tau_t.

    gamma = tau_gamma = 1 gives the fixed-threshold baseline behavior.
    """

    rho0: float = 0.4
    gamma: float = 0.9
    rho_min: float = 0.0
    tau0: float = 0.5
    tau_gamma: float = 0.9

    def __post_init__(self):
        if not 0.0 <= self.rho0 < 1.0:
            raise ValueError("rho0 must lie in [0, 1)")
        if not 0.0 < self.gamma <= 1.0 or not 0.0 < self.tau_gamma <= 1.0:
            raise ValueError("decay factors must lie in (0, 1]")
        if self.rho_min < 0 or self.rho_min > self.rho0:
            raise ValueError("rho_min must lie in [0, rho0]")

    def at(self, t):
        """(rho_t, tau_t) for refresh count t >= 0."""
        if t < 0:
            raise ValueError("refresh count must be non-negative")
        rho_t = max(self.rho_min, self.rho0 * self.gamma ** t)
        tau_t = self.tau0 * self.tau_gamma ** t
        return rho_t, tau_t


def distill(posterior, rho):
    """Bayes label (1..K) if the posterior clears (1 + rho) / 2, else None.

    Argmax ties resolve to the lowest class index.
    """
    if not 0.0 <= rho < 1.0:
        raise ValueError("rho must lie in [0, 1)")
    posterior = check_posterior(posterior)
    top = int(np.argmax(posterior))
    if posterior[top] > (1.0 + rho) / 2.0:
        return top + 1
    return None


def distill_batch(posteriors, rho):
    """Vectorized gate: returns (bayes labels 0-based, fired mask)."""
    posteriors = np.asarray(posteriors, dtype=np.float64)
    bayes0 = posteriors.argmax(axis=1)
    fired = posteriors.max(axis=1) > (1.0 + rho) / 2.0
    return bayes0, fired


@dataclass(frozen=True)
class DistilledSample:
    user: int
    item: int
    feature: np.ndarray
    noisy_label: int
    bayes_label: int
    weight: float
    refresh_index: int


class DistilledSet:
    """Growing set of distilled training rows, keyed by training-row index.

    Each member row stores its frozen pair feature, current Bayes label,
    reliability weight, and the refresh index at which it was admitted.
    Members are never evicted.
    """

    def __init__(self, n_train):
        self.n_train = n_train
        self._admitted_at = {}  # train row -> refresh index
        self.bayes0 = np.full(n_train, -1, dtype=np.int64)
        self.weights = np.zeros(n_train, dtype=np.float64)
        self.features = None  # allocated lazily: (n_train, feature_dim)

    def __len__(self):
        return len(self._admitted_at)

    def __contains__(self, row):
        return row in self._admitted_at

    def rows(self):
        """Member training-row indices in dataset order."""
        return np.array(sorted(self._admitted_at), dtype=np.int64)

    def admitted_at(self, row):
        return self._admitted_at[row]

    def admit(self, rows, t):
        for row in np.asarray(rows, dtype=np.int64):
            self._admitted_at.setdefault(int(row), t)

    def store(self, rows, bayes0, features, weights=None):
        rows = np.asarray(rows, dtype=np.int64)
        if self.features is None:
            self.features = np.zeros((self.n_train, features.shape[1]), dtype=np.float64)
        self.bayes0[rows] = bayes0
        self.features[rows] = features
        if weights is not None:
            self.weights[rows] = weights

    def samples(self, train):
        """Member rows as DistilledSample objects (labels 1-based)."""
        out = []
        for row in self.rows():
            out.append(
                DistilledSample(
                    user=int(train.users[row]),
                    item=int(train.items[row]),
                    feature=self.features[row].copy(),
                    noisy_label=int(train.labels[row]),
                    bayes_label=int(self.bayes0[row]) + 1,
                    weight=float(self.weights[row]),
                    refresh_index=self._admitted_at[row],
                )
            )
        return out

    def save(self, path, train):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("user\titem\tnoisy_label\tbayes_label\tweight\trefresh_index\n")
            for row in self.rows():
                fh.write(
                    f"{int(train.users[row])}\t{int(train.items[row])}"
                    f"\t{int(train.labels[row])}\t{int(self.bayes0[row]) + 1}"
                    f"\t{format(float(self.weights[row]), '.17g')}\t{self._admitted_at[row]}\n"
                )


def refresh_distilled_set(current, noisy0, posteriors, raw_reliability, feature_fn,
                          reliability_model, schedule, t):
    """One distillation refresh; returns the set of newly admitted rows.

    Gate A admits rows whose posterior clears the confidence threshold.
    Gate B admits not-yet-admitted rows whose reliability weight under the
    previous refresh's mixture clears tau_t (skipped while no mixture
    exists). Every member row then has its Bayes label and feature refreshed
    from the current model; weights are refreshed by the caller after the
    mixture is refit on the updated set.
    """
    rho_t, tau_t = schedule.at(t)
    bayes0, fired = distill_batch(posteriors, rho_t)

    newly = set(np.nonzero(fired)[0].tolist()) - set(current._admitted_at)
    current.admit(np.nonzero(fired)[0], t)

    if reliability_model is not None:
        member_mask = np.zeros(current.n_train, dtype=bool)
        if len(current):
            member_mask[current.rows()] = True
        candidates = np.nonzero(~member_mask)[0]
        if candidates.size:
            w = reliability_model.weight(raw_reliability[candidates])
            passed = candidates[w > tau_t]
            newly |= set(passed.tolist())
            current.admit(passed, t)

    rows = current.rows()
    if rows.size:
        current.store(rows, bayes0[rows], feature_fn(rows))
    return newly


def utilization(current, n_train):
    """Fraction of training rows admitted to the distilled set."""
    if n_train == 0:
        raise ValueError("training set is empty")
    return len(current) / n_train
