"""Cross-view fusion: consensus distributions, pseudolabels, the three loss
terms with their exact gradients, and the incremental consensus update.

Pseudolabels are recomputed per batch from the current consensus and held
constant during differentiation; the consistency loss detaches the target
of every ordered cross-entropy term, with symmetry restored by summing
over ordered pairs. `total_loss` therefore returns the exact gradient of
the loss as implemented, which is what the finite-difference oracle checks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import DELTA


@dataclass
class ConsensusState:
    """Fused assignment distributions and their argmax pseudolabels."""

    P: np.ndarray  # (N, C) consensus rows on the simplex
    y: np.ndarray  # (N,) labels in [0, C)


@dataclass
class LossBreakdown:
    """The three loss terms and their weighted total."""

    semantic: float
    diversity: float
    consistency: float
    total: float
    alpha: float
    beta: float


def _as_views(S_views):
    views = [np.asarray(s, dtype=np.float64) for s in S_views]
    if not views:
        raise ValueError("need at least one view")
    shape = views[0].shape
    for s in views:
        if s.shape != shape:
            raise ValueError(f"view shapes disagree: {s.shape} vs {shape}")
    return views


def consensus_dist(S_views):
    """Uniform average of the views' assignment distributions."""
    views = _as_views(S_views)
    return sum(views) / len(views)


def pseudo_labels(P):
    """Row argmax of the consensus; ties go to the lowest index."""
    return np.argmax(np.asarray(P), axis=1)


def consensus_state(S_views):
    P = consensus_dist(S_views)
    return ConsensusState(P=P, y=pseudo_labels(P))


def loss_semantic(S_views, y, delta=DELTA):
    """Mean over batch and views of -log s[i, y_i].

    y is treated as a constant: no gradient flows through the argmax that
    produced it.
    """
    views = _as_views(S_views)
    n, c = views[0].shape
    y = np.asarray(y)
    if y.shape != (n,) or y.min() < 0 or y.max() >= c:
        raise ValueError("labels out of range for the given views")
    rows = np.arange(n)
    total = 0.0
    for s in views:
        picked = np.maximum(s[rows, y], delta)
        total += float(-np.log(picked).sum())
    return total / (n * len(views))


def cluster_marginal(S):
    """Per-cluster mean assignment mass over the batch."""
    return np.asarray(S, dtype=np.float64).mean(axis=0)


def loss_diversity(S_views, delta=DELTA):
    """Negative entropy of the per-view cluster marginals, summed over views.

    Minimized at uniform marginals, which is what keeps every cluster in
    use; its value lies in [-L log C, 0].
    """
    total = 0.0
    for s in _as_views(S_views):
        q = np.maximum(cluster_marginal(s), delta)
        total += float(np.sum(q * np.log(q)))
    return total


def loss_consistency(S_views, targets=None, delta=DELTA):
    """Batch-mean sum of cross-entropies over ordered view pairs.

    targets supplies the detached first argument of every pair; by default
    the views themselves are used (the values coincide at the point where
    gradients are taken).
    """
    views = _as_views(S_views)
    if targets is None:
        targets = views
    n = views[0].shape[0]
    n_views = len(views)
    if n_views < 2:
        return 0.0
    total = 0.0
    for p in range(n_views):
        for q in range(n_views):
            if p == q:
                continue
            logs = np.log(np.maximum(views[q], delta))
            total += float(-np.sum(targets[p] * logs))
    return total / n


def total_loss(S_views, alpha, beta, labels=None, consistency_targets=None, delta=DELTA):
    """Overall objective: semantic + alpha * diversity + beta * consistency.

    Returns (LossBreakdown, grads) where grads[l] is the exact dL/dS of
    view l under the detached-label / detached-target semantics described
    in the module docstring. labels and consistency_targets default to the
    values computed from S_views itself and exist so a finite-difference
    probe can hold them fixed while parameters move.
    """
    views = _as_views(S_views)
    n, c = views[0].shape
    n_views = len(views)
    if labels is None:
        labels = pseudo_labels(consensus_dist(views))
    if consistency_targets is None:
        consistency_targets = views

    l_sem = loss_semantic(views, labels, delta)
    l_div = loss_diversity(views, delta)
    l_con = loss_consistency(views, consistency_targets, delta)
    total = l_sem + alpha * l_div + beta * l_con

    rows = np.arange(n)
    grads = []
    for l, s in enumerate(views):
        g = np.zeros_like(s)

        # semantic: -log s[i, y_i] averaged over batch and views
        picked = s[rows, labels]
        live = picked > delta
        g[rows[live], labels[live]] -= 1.0 / (
            n * n_views * np.maximum(picked[live], delta)
        )

        # diversity: d/ds_ij sum_j q_j log q_j = (1 + log q_j) / B
        q = cluster_marginal(s)
        live_q = q > delta
        g[:, live_q] += alpha * (1.0 + np.log(q[live_q])) / n

        # consistency: gradient only through the log argument
        if n_views >= 2 and beta != 0.0:
            others = sum(consistency_targets[p] for p in range(n_views) if p != l)
            live_s = s > delta
            g_con = np.zeros_like(s)
            g_con[live_s] = -others[live_s] / s[live_s]
            g += beta * g_con / n

        grads.append(g)

    breakdown = LossBreakdown(
        semantic=l_sem, diversity=l_div, consistency=l_con,
        total=total, alpha=alpha, beta=beta,
    )
    return breakdown, grads


def incremental_update(P_L, S_new, n_views):
    """Fold one more view into a consensus of n_views views.

    P_{L+1} = L/(L+1) P_L + 1/(L+1) S_new; algebraically identical to
    re-averaging all L+1 views from scratch.
    """
    if n_views < 1:
        raise ValueError("consensus must already cover at least one view")
    P_L = np.asarray(P_L, dtype=np.float64)
    S_new = np.asarray(S_new, dtype=np.float64)
    if P_L.shape != S_new.shape:
        raise ValueError(f"shape mismatch: {P_L.shape} vs {S_new.shape}")
    w = float(n_views)
    return (w / (w + 1.0)) * P_L + (1.0 / (w + 1.0)) * S_new
