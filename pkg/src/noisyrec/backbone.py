"""Embedding backbone, classifier head, transition network, and optimizers.

All gradients are hand-derived per layer; `finite_difference_check` is the
companion oracle that certifies them. Forward passes are pure functions of
(parameters, input) with no hidden state.
"""

from __future__ import annotations

import numpy as np

from .exceptions import NumericError

LOG_CLAMP = 1e-12


def softmax(logits, axis=-1):
    """Numerically stable softmax along `axis`."""
    z = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def softmax_backward(probs, grad_probs):
    """Gradient w.r.t. logits given probs = softmax(logits) and dL/dprobs."""
    inner = (grad_probs * probs).sum(axis=-1, keepdims=True)
    return probs * (grad_probs - inner)


class EmbeddingTable:
    """Learned user and item vectors; pair features are their concatenation."""

    def __init__(self, n_users, n_items, dim, rng, scale=0.1):
        self.user_vecs = rng.normal(0.0, scale, size=(n_users, dim))
        self.item_vecs = rng.normal(0.0, scale, size=(n_items, dim))
        self.dim = dim

    def features(self, users, items):
        return np.concatenate([self.user_vecs[users], self.item_vecs[items]], axis=1)

    def scores(self, users, items):
        """Inner-product relevance score per pair."""
        return np.einsum("nd,nd->n", self.user_vecs[users], self.item_vecs[items])

    def params(self):
        return {"user_vecs": self.user_vecs, "item_vecs": self.item_vecs}


class FeedForward:
    """Two-layer perceptron: X -> tanh(X W1 + b1) W2 + b2."""

    def __init__(self, in_dim, hidden_dim, out_dim, rng):
        self.W1 = rng.normal(0.0, 1.0 / np.sqrt(in_dim), size=(in_dim, hidden_dim))
        self.b1 = np.zeros(hidden_dim)
        self.W2 = rng.normal(0.0, 1.0 / np.sqrt(hidden_dim), size=(hidden_dim, out_dim))
        self.b2 = np.zeros(out_dim)

    def forward(self, X):
        """Returns (logits, cache) where cache feeds `backward`."""
        H = np.tanh(X @ self.W1 + self.b1)
        Z = H @ self.W2 + self.b2
        return Z, (X, H)

    def backward(self, cache, grad_logits):
        """Backprop dL/dlogits through both layers; returns (param grads, dL/dX)."""
        X, H = cache
        gW2 = H.T @ grad_logits
        gb2 = grad_logits.sum(axis=0)
        dH = grad_logits @ self.W2.T
        dA = dH * (1.0 - H * H)
        gW1 = X.T @ dA
        gb1 = dA.sum(axis=0)
        dX = dA @ self.W1.T
        return {"W1": gW1, "b1": gb1, "W2": gW2, "b2": gb2}, dX

    def params(self):
        return {"W1": self.W1, "b1": self.b1, "W2": self.W2, "b2": self.b2}


class ClassifierHead(FeedForward):
    """Maps a 2d pair feature to a K-class posterior (hidden width 2d)."""

    def __init__(self, feature_dim, num_classes, rng):
        super().__init__(feature_dim, feature_dim, num_classes, rng)
        self.num_classes = num_classes

    def posterior(self, X):
        """Returns (probs (B, K), cache)."""
        Z, cache = self.forward(X)
        return softmax(Z), cache


class TransitionNetwork(FeedForward):
    """Maps a 2d pair feature to a row-stochastic K x K transition matrix."""

    def __init__(self, feature_dim, num_classes, rng):
        super().__init__(feature_dim, feature_dim, num_classes * num_classes, rng)
        self.num_classes = num_classes

    def transition(self, X):
        """Returns (matrices (B, K, K) with softmax rows, cache)."""
        Z, cache = self.forward(X)
        K = self.num_classes
        return softmax(Z.reshape(-1, K, K), axis=2), cache


def predict_posterior(embeddings, head, users, items):
    """Clean class posterior for (user, item) index arrays."""
    probs, _ = head.posterior(embeddings.features(users, items))
    return probs


def predict_score(embeddings, users, items):
    """Inner-product score p_u . q_v per pair."""
    return embeddings.scores(users, items)


def predict_transition(net, X):
    """Row-stochastic transition matrices for a batch of pair features."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        return net.transition(X[None])[0][0]
    return net.transition(X)[0]


class Optimizer:
    """Per-parameter update rule over a dict of named arrays.

    mode "adam" keeps first/second moment accumulators with bias correction;
    mode "sgd" applies the plain step lr * grad (used by exact-arithmetic
    tests). Updates are in place, single writer.
    """

    def __init__(self, lr, mode="adam", beta1=0.9, beta2=0.999, eps=1e-8):
        if lr <= 0:
            raise ValueError("learning rate must be positive")
        if mode not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer mode '{mode}'")
        self.lr = lr
        self.mode = mode
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step = 0
        self._m = {}
        self._v = {}

    def apply_gradients(self, params, grads):
        """One optimizer step; `grads` keys must name matching-shape params."""
        for name, g in grads.items():
            if name not in params:
                raise ValueError(f"gradient for unknown parameter '{name}'")
            if np.shape(g) != np.shape(params[name]):
                raise ValueError(
                    f"shape mismatch for '{name}': {np.shape(g)} vs {np.shape(params[name])}"
                )
        self.step += 1
        for name, g in grads.items():
            p = params[name]
            if self.mode == "sgd":
                p -= self.lr * g
                continue
            if name not in self._m:
                self._m[name] = np.zeros_like(p)
                self._v[name] = np.zeros_like(p)
            m, v = self._m[name], self._v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            m_hat = m / (1.0 - self.beta1 ** self.step)
            v_hat = v / (1.0 - self.beta2 ** self.step)
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def state_tensors(self, prefix=""):
        out = {f"{prefix}step": np.array(float(self.step))}
        for name in sorted(self._m):
            out[f"{prefix}m.{name}"] = self._m[name]
            out[f"{prefix}v.{name}"] = self._v[name]
        return out


def finite_difference_check(loss_and_grad, params, epsilon=1e-5):
    """Max relative error between analytic and central-difference gradients.

    `loss_and_grad(params)` must return (scalar loss, dict of gradients with
    the same keys/shapes as `params`). Parameters are perturbed in place and
    restored; intended for small instances only.
    """
    if not 0.0 < epsilon <= 1e-2:
        raise ValueError("epsilon must lie in (0, 1e-2]")
    loss, grads = loss_and_grad(params)
    if not np.isfinite(loss):
        raise NumericError(f"non-finite loss {loss}")
    worst = 0.0
    for name, p in params.items():
        p = np.atleast_1d(p)
        g = np.atleast_1d(grads[name])
        for idx in np.ndindex(p.shape):
            orig = p[idx]
            p[idx] = orig + epsilon
            up, _ = loss_and_grad(params)
            p[idx] = orig - epsilon
            down, _ = loss_and_grad(params)
            p[idx] = orig
            if not (np.isfinite(up) and np.isfinite(down)):
                raise NumericError("non-finite loss during finite differencing")
            cd = (up - down) / (2.0 * epsilon)
            rel = abs(g[idx] - cd) / (abs(g[idx]) + abs(cd) + 1e-12)
            worst = max(worst, rel)
    return worst


def save_checkpoint(path, tensors):
    """Serialize named tensors as delimited text with shape headers.

    Values use 17 significant digits, so float64 round-trips bit-exactly.
    """
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for name in tensors:
            arr = np.asarray(tensors[name], dtype=np.float64)
            shape = " ".join(str(s) for s in arr.shape)
            fh.write(f"{name}\t{shape}\n")
            fh.write(" ".join(format(v, ".17g") for v in arr.ravel()) + "\n")


def load_checkpoint(path):
    tensors = {}
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    k = 0
    while k < len(lines):
        if not lines[k].strip():
            k += 1
            continue
        name, _, shape_txt = lines[k].partition("\t")
        shape = tuple(int(s) for s in shape_txt.split()) if shape_txt.strip() else ()
        values = np.array([float(v) for v in lines[k + 1].split()], dtype=np.float64)
        tensors[name] = values.reshape(shape)
        k += 2
    return tensors
