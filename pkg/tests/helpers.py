"""Shared synthetic data generators for the test suite."""

import numpy as np

from noisyrec.data import ColumnSchema, parse_interactions


def group_interactions(m, n, num_classes, per_user, seed, popularity_skew=0.0,
                       ambiguous_frac=0.0, ambiguous_top=0.55):
    """Group-structured interaction corpus with known clean posteriors.

    Users and items carry latent groups; the clean label of a pair depends
    only on the (user group, item group) cell. Separable cells are
    deterministic: label = (gu + gi) mod K + 1. With ``ambiguous_frac`` > 0 a
    fraction of cells instead draws labels from a blurred distribution whose
    top probability is ``ambiguous_top``. ``popularity_skew`` > 0 draws items
    with Zipf-like popularity so co-occurrence counts spread out.

    Returns (pairs, clean_labels, posteriors) where posteriors holds the true
    clean posterior row per pair.
    """
    rng = np.random.default_rng(seed)
    K = num_classes
    gu = rng.integers(0, 2, size=m)
    gi = rng.integers(0, 2, size=n)

    if popularity_skew > 0:
        weights = (1.0 / np.arange(1, n + 1) ** popularity_skew)
        weights = weights[rng.permutation(n)]
        weights /= weights.sum()
    else:
        weights = None

    cell_posterior = {}
    for cu in range(2):
        for ci in range(2):
            row = np.zeros(K)
            top = (cu + ci) % K
            if rng.random() < ambiguous_frac:
                row[:] = (1.0 - ambiguous_top) / (K - 1)
                row[top] = ambiguous_top
            else:
                row[top] = 1.0
            cell_posterior[(cu, ci)] = row

    pairs, labels, posts = [], [], []
    for u in range(m):
        k = min(per_user, n)
        if weights is None:
            items = rng.choice(n, size=k, replace=False)
        else:
            items = rng.choice(n, size=k, replace=False, p=weights)
        for i in items:
            row = cell_posterior[(gu[u], gi[i])]
            pairs.append((u, i))
            labels.append(rng.choice(K, p=row) + 1)
            posts.append(row)
    return np.array(pairs, dtype=np.int64), np.array(labels, dtype=np.int64), np.array(posts)


def dataset_from_pairs(pairs, labels, num_classes):
    """Wrap (pairs, labels) into an InteractionDataset via the parser."""
    lines = [f"u{u}\ti{i}\t{y}" for (u, i), y in zip(pairs.tolist(), labels.tolist())]
    schema = ColumnSchema(delimiter="tab", columns=("user", "item", "label"))
    return parse_interactions(lines, schema, num_classes)


def write_raw_log(path, pairs, labels, timestamps=None):
    """Write pairs/labels as a tab-separated raw interaction log."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for k, ((u, i), y) in enumerate(zip(pairs.tolist(), labels.tolist())):
            ts = k if timestamps is None else timestamps[k]
            fh.write(f"u{u}\ti{i}\t{y}\t{ts}\n")
