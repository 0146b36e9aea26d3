"""Training losses and the main noise-corrected classifier estimator.

The estimator alternates two gradient flows per batch, mirroring the
two-network design: the transition network is trained on reliability-weighted
distilled samples, and the classifier is trained on the full noisy data
through the (frozen) per-instance transition matrices.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from types import SimpleNamespace

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .backbone import (
    LOG_CLAMP,
    ClassifierHead,
    EmbeddingTable,
    Optimizer,
    TransitionNetwork,
    softmax_backward,
)
from .distillation import DistilledSet, ThresholdSchedule, refresh_distilled_set, utilization
from .evaluation import evaluate_matrix, evaluate_ranking
from .exceptions import NumericError
from .reliability import cooccurrence_counts, fit_reliability_model
from .validation import check_labels, check_pairs

log = logging.getLogger(__name__)

VARIANTS = ("full", "no_gmm", "no_bltm", "normal")


def transition_loss(net, features, bayes0, noisy0, weights=None):
    """Negative log-likelihood of noisy labels under the estimated transition.

    Per sample: -w * log T[bayes, noisy]; mean over the batch. `weights`
    defaults to ones. Returns (loss, gradients w.r.t. the network params).
    """
    features = np.asarray(features, dtype=np.float64)
    B = features.shape[0]
    if B == 0:
        raise ValueError("batch must be non-empty")
    if weights is None:
        weights = np.ones(B)
    weights = np.asarray(weights, dtype=np.float64)
    K = net.num_classes

    T, cache = net.transition(features)
    picked = T[np.arange(B), bayes0, noisy0]
    clamped = np.maximum(picked, LOG_CLAMP)
    loss = -float((weights * np.log(clamped)).sum() / B)

    coeff = np.where(picked >= LOG_CLAMP, weights / B, 0.0)
    rows = T[np.arange(B), bayes0, :].copy()
    rows[np.arange(B), noisy0] -= 1.0
    dZ = np.zeros((B, K, K))
    dZ[np.arange(B), bayes0, :] = coeff[:, None] * rows
    grads, _ = net.backward(cache, dZ.reshape(B, K * K))
    return loss, grads


def calibrated_transition_loss(net, features, bayes0, noisy0, weights):
    """Reliability-weighted transition loss (weights required)."""
    if weights is None:
        raise ValueError("calibrated loss requires reliability weights")
    return transition_loss(net, features, bayes0, noisy0, weights=weights)


def corrected_classification_loss(embeddings, head, users, items, noisy0, transition_batch):
    """Cross-entropy of noisy labels against the transition-corrected posterior.

    The predicted noisy distribution is f(x)^T T(x) with T held constant;
    gradients flow into the embeddings and the classifier head only.
    """
    users = np.asarray(users)
    items = np.asarray(items)
    B = users.shape[0]
    if B == 0:
        raise ValueError("batch must be non-empty")
    X = embeddings.features(users, items)
    probs, cache = head.posterior(X)

    s = np.einsum("bk,bkj->bj", probs, transition_batch)
    picked = s[np.arange(B), noisy0]
    clamped = np.maximum(picked, LOG_CLAMP)
    loss = -float(np.log(clamped).mean())

    dpicked = np.where(picked >= LOG_CLAMP, -1.0 / (B * clamped), 0.0)
    dprobs = transition_batch[np.arange(B), :, noisy0] * dpicked[:, None]
    dZ = softmax_backward(probs, dprobs)
    head_grads, dX = head.backward(cache, dZ)

    d = embeddings.dim
    g_user = np.zeros_like(embeddings.user_vecs)
    g_item = np.zeros_like(embeddings.item_vecs)
    np.add.at(g_user, users, dX[:, :d])
    np.add.at(g_item, items, dX[:, d:])
    grads = {"user_vecs": g_user, "item_vecs": g_item}
    grads.update({f"head.{k}": v for k, v in head_grads.items()})
    return loss, grads


def combined_objective(class_loss, calibrated_loss, lam):
    """Monitoring scalar: class loss + lam * calibrated loss (lam > 0)."""
    if lam <= 0:
        raise ValueError("the balance weight must be positive")
    return class_loss + lam * calibrated_loss


@dataclass
class EpochRecord:
    epoch: int
    loss_class: float
    loss_calibrated: float
    utilization: float
    val_recall10: float
    val_ndcg10: float
    l1_error: float


HISTORY_HEADER = "epoch,loss_class,loss_calibrated,utilization,val_recall10,val_ndcg10,l1_error"


def save_history(path, records):
    """Append-friendly delimited history, one epoch per line."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(HISTORY_HEADER + "\n")
        for r in records:
            fh.write(
                f"{r.epoch},{repr(r.loss_class)},{repr(r.loss_calibrated)},"
                f"{repr(r.utilization)},{repr(r.val_recall10)},{repr(r.val_ndcg10)},"
                f"{repr(r.l1_error)}\n"
            )


class TransitionCorrectedClassifier(BaseEstimator):
    """K-class interaction classifier trained on noisy labels.

    X is an (N, 2) array of dense (user, item) indices and y the observed
    labels in 1..K. Variants:

    - "full": distillation, reliability mixture, weighted transition training.
    - "no_gmm": distillation and transition training with all weights 1.
    - "no_bltm": identity transition (plain cross-entropy updates) with
      distillation bookkeeping still running.
    - "normal": plain cross-entropy, no distillation at all.

    While the transition network has not yet received any update, the
    classification loss uses the identity transition; an uninformative
    transition would otherwise zero out the classifier gradient.
    """

    def __init__(self, num_classes=5, embedding_dim=32, epochs=100, batch_size=256,
                 lambda_weight=1.0, variant="full", lr_class=1e-3, lr_transition=0.5,
                 optimizer="adam", transition_optimizer="sgd", rho0=0.4, rho_decay=0.9,
                 rho_min=0.0, tau0=0.5, tau_decay=0.9, refresh_interval=5,
                 sample_by_weight=True, weight_in_loss=True,
                 include_self_cooccurrence=True, rank_score="top-class",
                 early_stop_patience=0, eval_every=1, init_scale=0.1, seed=0):
        self.num_classes = num_classes
        self.embedding_dim = embedding_dim
        self.epochs = epochs
        self.batch_size = batch_size
        self.lambda_weight = lambda_weight
        self.variant = variant
        self.lr_class = lr_class
        self.lr_transition = lr_transition
        self.optimizer = optimizer
        self.transition_optimizer = transition_optimizer
        self.rho0 = rho0
        self.rho_decay = rho_decay
        self.rho_min = rho_min
        self.tau0 = tau0
        self.tau_decay = tau_decay
        self.refresh_interval = refresh_interval
        self.sample_by_weight = sample_by_weight
        self.weight_in_loss = weight_in_loss
        self.include_self_cooccurrence = include_self_cooccurrence
        self.rank_score = rank_score
        self.early_stop_patience = early_stop_patience
        self.eval_every = eval_every
        self.init_scale = init_scale
        self.seed = seed

    # -- fitting -----------------------------------------------------------

    def fit(self, X, y, n_users=None, n_items=None, validation=None, true_transition=None):
        """Run the alternating training loop.

        `validation` is an optional (pairs, labels) tuple used for ranking
        metrics and early stopping. `true_transition` enables the per-epoch
        L1 matrix-error column of the history (synthetic runs).
        """
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant '{self.variant}'")
        if self.lambda_weight <= 0:
            raise ValueError("lambda_weight must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        X = check_pairs(X)
        y = check_labels(y, self.num_classes)
        if len(y) != len(X):
            raise ValueError("X and y length mismatch")
        if len(y) == 0:
            raise ValueError("training data is empty")

        val_pairs = val_items = None
        if validation is not None:
            val_pairs = check_pairs(validation[0])
            check_labels(validation[1], self.num_classes)

        self.n_users_ = int(n_users if n_users is not None else self._infer_count(X[:, 0], val_pairs, 0))
        self.n_items_ = int(n_items if n_items is not None else self._infer_count(X[:, 1], val_pairs, 1))
        check_pairs(X, self.n_users_, self.n_items_)

        init_rng, shuffle_rng, sample_rng = (
            np.random.default_rng(s) for s in np.random.SeedSequence(self.seed).spawn(3)
        )
        K, d = self.num_classes, self.embedding_dim
        self.embeddings_ = EmbeddingTable(self.n_users_, self.n_items_, d, init_rng, self.init_scale)
        self.head_ = ClassifierHead(2 * d, K, init_rng)
        self.transition_net_ = TransitionNetwork(2 * d, K, init_rng)

        params_w = {"user_vecs": self.embeddings_.user_vecs, "item_vecs": self.embeddings_.item_vecs}
        params_w.update({f"head.{k}": v for k, v in self.head_.params().items()})
        opt_w = Optimizer(self.lr_class, mode=self.optimizer)
        # plain SGD here: an adaptive rule lets the feature pathway memorize
        # individual distilled samples before the shared row structure forms
        opt_t = Optimizer(self.lr_transition, mode=self.transition_optimizer)
        self._opt_w, self._opt_t = opt_w, opt_t

        users, items = X[:, 0], X[:, 1]
        noisy0 = y - 1
        N = len(y)
        schedule = ThresholdSchedule(self.rho0, self.rho_decay, self.rho_min, self.tau0, self.tau_decay)

        distill_enabled = self.variant != "normal"
        transition_enabled = self.variant in ("full", "no_gmm")
        gmm_enabled = self.variant == "full"

        cooc = None
        if distill_enabled:
            view = SimpleNamespace(users=users, items=items, n_users=self.n_users_, n_items=self.n_items_)
            cooc = cooccurrence_counts(view, include_self=self.include_self_cooccurrence)
            pair_cooc = cooc[users, items]

        distilled = DistilledSet(N)
        self.reliability_ = None
        self.refresh_count_ = 0
        identity_T = np.eye(K)
        feature_fn = lambda rows: self.embeddings_.features(users[rows], items[rows])

        val_data = None
        if val_pairs is not None:
            val_train_items = {}
            for u, i in zip(users.tolist(), items.tolist()):
                val_train_items.setdefault(u, set()).add(i)
            val_test_items = {}
            for u, i in zip(val_pairs[:, 0].tolist(), val_pairs[:, 1].tolist()):
                val_test_items.setdefault(u, set()).add(i)
            val_data = (val_train_items, val_test_items)

        history = []
        best_ndcg, stall = -np.inf, 0
        theta_steps = 0
        for epoch in range(self.epochs):
            if distill_enabled and (len(distilled) == 0 or epoch % self.refresh_interval == 0):
                posteriors = self._batched_posterior(users, items)
                raw_rel = np.stack([self.embeddings_.scores(users, items), pair_cooc], axis=1)
                refresh_distilled_set(
                    distilled, noisy0, posteriors, raw_rel, feature_fn,
                    self.reliability_ if gmm_enabled else None, schedule, self.refresh_count_,
                )
                self.refresh_count_ += 1
                member_rows = distilled.rows()
                if member_rows.size:
                    if gmm_enabled and member_rows.size >= 4:
                        self.reliability_ = fit_reliability_model(raw_rel[member_rows])
                        distilled.weights[member_rows] = self.reliability_.weight(raw_rel[member_rows])
                    else:
                        distilled.weights[member_rows] = 1.0
                elif transition_enabled:
                    log.warning("distilled set empty at epoch %d; transition updates skipped", epoch)

            member_rows = distilled.rows()
            member_probs = None
            if transition_enabled and member_rows.size:
                w = distilled.weights[member_rows]
                if self.sample_by_weight and gmm_enabled and w.sum() > 0:
                    member_probs = w / w.sum()

            class_sum = 0.0
            calib_sum, calib_batches = 0.0, 0
            order = shuffle_rng.permutation(N)
            for start in range(0, N, self.batch_size):
                rows = order[start : start + self.batch_size]
                if transition_enabled and member_rows.size:
                    batch = sample_rng.choice(member_rows, size=self.batch_size, replace=True, p=member_probs)
                    weights = distilled.weights[batch] if (self.weight_in_loss and gmm_enabled) else None
                    loss_t, grads_t = transition_loss(
                        self.transition_net_, distilled.features[batch],
                        distilled.bayes0[batch], noisy0[batch], weights=weights,
                    )
                    opt_t.apply_gradients(self.transition_net_.params(), grads_t)
                    theta_steps += 1
                    calib_sum += loss_t
                    calib_batches += 1

                if transition_enabled and theta_steps > 0:
                    T_batch, _ = self.transition_net_.transition(feature_fn(rows))
                else:
                    T_batch = np.broadcast_to(identity_T, (len(rows), K, K))
                loss_c, grads_c = corrected_classification_loss(
                    self.embeddings_, self.head_, users[rows], items[rows], noisy0[rows], T_batch,
                )
                opt_w.apply_gradients(params_w, grads_c)
                class_sum += loss_c * len(rows)

            loss_class = class_sum / N
            loss_calibrated = calib_sum / calib_batches if calib_batches else 0.0
            if not (np.isfinite(loss_class) and np.isfinite(loss_calibrated)):
                raise NumericError(f"non-finite loss at epoch {epoch}")

            do_eval = (epoch % self.eval_every == 0) or (epoch == self.epochs - 1)
            val_recall = val_ndcg = l1 = float("nan")
            if do_eval and val_data is not None:
                metrics, _ = evaluate_ranking(
                    self._posterior_for_pairs, self.n_items_, val_data[0], val_data[1],
                    ks=(10,), score_mode=self.rank_score,
                )
                val_recall = metrics[("recall", 10)]
                val_ndcg = metrics[("ndcg", 10)]
            if do_eval and true_transition is not None:
                l1 = self._matrix_error(users, items, np.asarray(true_transition, dtype=np.float64),
                                        transition_enabled and theta_steps > 0)

            history.append(EpochRecord(
                epoch, loss_class, loss_calibrated,
                utilization(distilled, N) if distill_enabled else 0.0,
                val_recall, val_ndcg, l1,
            ))

            if self.early_stop_patience and val_data is not None and do_eval:
                if val_ndcg > best_ndcg + 1e-12:
                    best_ndcg, stall = val_ndcg, 0
                else:
                    stall += 1
                    if stall >= self.early_stop_patience:
                        break

        self.history_ = history
        self.distilled_ = distilled
        self.classes_ = np.arange(1, K + 1)
        self._train_users, self._train_items = users, items
        self._theta_trained = transition_enabled and theta_steps > 0
        return self

    @staticmethod
    def _infer_count(col, val_pairs, which):
        top = int(col.max()) if col.size else -1
        if val_pairs is not None and val_pairs.size:
            top = max(top, int(val_pairs[:, which].max()))
        return top + 1

    def _batched_posterior(self, users, items, chunk=8192):
        out = np.empty((len(users), self.num_classes))
        for start in range(0, len(users), chunk):
            sl = slice(start, start + chunk)
            probs, _ = self.head_.posterior(self.embeddings_.features(users[sl], items[sl]))
            out[sl] = probs
        return out

    def _posterior_for_pairs(self, pairs):
        pairs = np.asarray(pairs, dtype=np.int64)
        return self._batched_posterior(pairs[:, 0], pairs[:, 1])

    def _matrix_error(self, users, items, truth, use_network, chunk=8192):
        K = self.num_classes
        if not use_network:
            estimates = np.broadcast_to(np.eye(K), (len(users), K, K))
            return evaluate_matrix(estimates, truth)
        total = 0.0
        for start in range(0, len(users), chunk):
            sl = slice(start, start + chunk)
            T, _ = self.transition_net_.transition(self.embeddings_.features(users[sl], items[sl]))
            total += np.abs(T - truth).sum()
        return float(total / len(users))

    @classmethod
    def from_checkpoint(cls, tensors, **params):
        """Rebuild a fitted estimator from `checkpoint_tensors` output.

        Dimensions are inferred from the tensor shapes; training state
        (history, distilled set, mixture) is not restored.
        """
        n_users, d = tensors["user_vecs"].shape
        n_items = tensors["item_vecs"].shape[0]
        K = tensors["head.b2"].shape[0]
        est = cls(num_classes=K, embedding_dim=d, **params)
        rng = np.random.default_rng(0)
        est.embeddings_ = EmbeddingTable(n_users, n_items, d, rng)
        est.head_ = ClassifierHead(2 * d, K, rng)
        est.transition_net_ = TransitionNetwork(2 * d, K, rng)
        est.n_users_, est.n_items_ = n_users, n_items
        est.classes_ = np.arange(1, K + 1)
        est.history_ = []
        est.reliability_ = None
        est.refresh_count_ = 0
        est._theta_trained = est.variant in ("full", "no_gmm")
        est.load_tensors(tensors)
        return est

    # -- prediction --------------------------------------------------------

    def _check_fitted(self):
        if not hasattr(self, "embeddings_"):
            raise NotFittedError("estimator is not fitted")

    def predict_proba(self, X):
        """Clean class posterior, shape (N, K)."""
        self._check_fitted()
        X = check_pairs(X, self.n_users_, self.n_items_)
        return self._posterior_for_pairs(X)

    def predict(self, X):
        """Most likely clean class per pair, values in 1..K."""
        return self.predict_proba(X).argmax(axis=1) + 1

    def predict_transition(self, X):
        """Estimated transition matrix per pair, shape (N, K, K).

        Variants without a trained transition network report the identity.
        """
        self._check_fitted()
        X = check_pairs(X, self.n_users_, self.n_items_)
        if not self._theta_trained:
            return np.broadcast_to(np.eye(self.num_classes), (len(X), self.num_classes, self.num_classes)).copy()
        T, _ = self.transition_net_.transition(self.embeddings_.features(X[:, 0], X[:, 1]))
        return T

    def pair_scores(self, X):
        """Inner-product relevance scores per pair."""
        self._check_fitted()
        X = check_pairs(X, self.n_users_, self.n_items_)
        return self.embeddings_.scores(X[:, 0], X[:, 1])

    def score(self, X, y):
        """Accuracy of `predict` against the given labels."""
        y = check_labels(y, self.num_classes)
        return float((self.predict(X) == y).mean())

    def checkpoint_tensors(self):
        """Named parameter tensors for serialization."""
        self._check_fitted()
        out = {"user_vecs": self.embeddings_.user_vecs, "item_vecs": self.embeddings_.item_vecs}
        out.update({f"head.{k}": v for k, v in self.head_.params().items()})
        out.update({f"transition.{k}": v for k, v in self.transition_net_.params().items()})
        return out

    def load_tensors(self, tensors):
        """Restore parameters from `checkpoint_tensors` output (fitted shape)."""
        self._check_fitted()
        self.embeddings_.user_vecs[...] = tensors["user_vecs"]
        self.embeddings_.item_vecs[...] = tensors["item_vecs"]
        for k in ("W1", "b1", "W2", "b2"):
            getattr(self.head_, k)[...] = tensors[f"head.{k}"]
            getattr(self.transition_net_, k)[...] = tensors[f"transition.{k}"]
        return self
