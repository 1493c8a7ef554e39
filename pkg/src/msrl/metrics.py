"""Clustering evaluation: accuracy under optimal matching, NMI, and ARI.

All three metrics are invariant under relabeling of either partition. They
are computed from the contingency table; ARI keeps exact integer pair
counts until the final division.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import linear_sum_assignment


def contingency_table(pred, truth):
    """Counts[i, j] = number of samples with predicted label i and true label j.

    Labels are densified first, so arbitrary integer labels are accepted.
    """
    pred = np.asarray(pred).ravel()
    truth = np.asarray(truth).ravel()
    if pred.shape != truth.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {truth.shape}")
    if pred.size == 0:
        raise ValueError("empty input")
    _, pi = np.unique(pred, return_inverse=True)
    _, ti = np.unique(truth, return_inverse=True)
    counts = np.zeros((pi.max() + 1, ti.max() + 1), dtype=np.int64)
    np.add.at(counts, (pi, ti), 1)
    return counts


def hungarian_acc(pred, truth):
    """Clustering accuracy maximized over bijective label matchings.

    Kuhn-Munkres assignment on the contingency table (cost = max - count,
    zero-padded to square so rectangular tables are matched exactly).
    """
    counts = contingency_table(pred, truth)
    k = max(counts.shape)
    padded = np.zeros((k, k), dtype=np.int64)
    padded[: counts.shape[0], : counts.shape[1]] = counts
    cost = padded.max() - padded
    rows, cols = linear_sum_assignment(cost)
    matched = padded[rows, cols].sum()
    return float(matched) / counts.sum()


def _partition_entropy(sizes, n):
    p = sizes[sizes > 0] / n
    return float(-np.sum(p * np.log(p)))


def nmi(pred, truth):
    """Normalized mutual information with geometric-mean normalization.

    I(pred; truth) / sqrt(H(pred) * H(truth)). Degenerate partitions follow
    the usual convention: two identical single-cluster partitions score 1,
    any other pairing with a zero-entropy side scores 0.
    """
    counts = contingency_table(pred, truth)
    n = counts.sum()
    a = counts.sum(axis=1)
    b = counts.sum(axis=0)
    h_pred = _partition_entropy(a, n)
    h_truth = _partition_entropy(b, n)
    if h_pred == 0.0 or h_truth == 0.0:
        same = counts.shape == (1, 1)
        return 1.0 if same else 0.0
    mi = 0.0
    nz = np.nonzero(counts)
    for i, j in zip(*nz):
        nij = counts[i, j]
        mi += (nij / n) * math.log(n * nij / (a[i] * b[j]))
    mi = max(mi, 0.0)  # guard tiny negative round-off
    return mi / math.sqrt(h_pred * h_truth)


def ari(pred, truth):
    """Adjusted Rand index from exact integer pair counts.

    (sum_ij C(n_ij,2) - E) / (max - E) with E the chance expectation; the
    single division happens last so everything before it is exact.
    """
    counts = contingency_table(pred, truth)
    n = int(counts.sum())
    if n < 2:
        raise ValueError("need at least 2 samples")

    def comb2(x):
        return x * (x - 1) // 2

    sum_ij = int(sum(comb2(int(v)) for v in counts.ravel()))
    sum_a = int(sum(comb2(int(v)) for v in counts.sum(axis=1)))
    sum_b = int(sum(comb2(int(v)) for v in counts.sum(axis=0)))
    total = comb2(n)
    # numerator/denominator scaled by 2*total so both stay integers
    numer = 2 * (sum_ij * total - sum_a * sum_b)
    denom = total * (sum_a + sum_b) - 2 * sum_a * sum_b
    if denom == 0:
        # both partitions all-singletons or both single-cluster: identical
        return 1.0
    return numer / denom


def metrics_report(pred, truth):
    """All three metrics as an ordered dict-like list of (name, value)."""
    return [
        ("ACC", hungarian_acc(pred, truth)),
        ("NMI", nmi(pred, truth)),
        ("ARI", ari(pred, truth)),
    ]
