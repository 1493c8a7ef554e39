"""One view's trainable head: linear projection to cluster-logit space,
batch-wise attention self-representation, neighbor aggregation, and the
per-sample assignment distribution.

Forward stages are exposed individually so each can be checked against a
naive oracle; `backward` is the exact analytic gradient of the composed
pipeline and is validated against central finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import softmax


@dataclass
class ViewModel:
    """Trainable parameters of one view head.

    W projects features (m) to cluster logits (C); v scores concatenated
    logit pairs for the batch attention. When row_normalize is set, each
    column of W is projected back to unit l2 norm after every optimizer
    step, which bounds the logit-space stretch of any feature difference
    by sqrt(C).
    """

    W: np.ndarray  # (m, C)
    v: np.ndarray  # (2C,)
    dropout_rate: float = 0.0
    row_normalize: bool = False

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        self.v = np.asarray(self.v, dtype=np.float64)
        if self.W.ndim != 2:
            raise ValueError("W must be 2-d (features x clusters)")
        c = self.W.shape[1]
        if self.v.shape != (2 * c,):
            raise ValueError(f"v must have shape ({2 * c},), got {self.v.shape}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout rate must be in [0, 1)")

    @property
    def n_features(self):
        return self.W.shape[0]

    @property
    def n_clusters(self):
        return self.W.shape[1]


@dataclass
class ForwardTrace:
    """Every intermediate of one forward pass, cached for the backward."""

    inputs: np.ndarray        # (N, m) features after dropout scaling
    H: np.ndarray             # (N, C) linear logits
    E: np.ndarray             # (N, N) raw attention scores v.[h_i || h_j]
    A: np.ndarray             # (N, N) attention rows on the simplex
    Z: np.ndarray             # (N, C) aggregated logits, A H + H
    S: np.ndarray             # (N, C) assignment distributions
    dropout_mask: np.ndarray | None = None
    indices: np.ndarray | None = None


def forward_linear(model, batch_features, training=False, rng=None):
    """Linear stage H = dropout(X) W; returns (H, dropped_X, mask).

    Inverted dropout on the input features, active only in training mode,
    so evaluation needs no rescaling and the attention stage stays a
    deterministic function of H.
    """
    x = np.asarray(batch_features, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.n_features:
        raise ValueError(
            f"features have shape {x.shape}, model expects (N, {model.n_features})"
        )
    mask = None
    if training and model.dropout_rate > 0.0:
        if rng is None:
            raise ValueError("training-mode dropout needs an rng")
        keep = 1.0 - model.dropout_rate
        mask = (rng.random(x.shape) < keep) / keep
        x = x * mask
    return x @ model.W, x, mask


def attention_coeffs(model, H):
    """Attention rows a_i = softmax_j ReLU(v . [h_i || h_j]) over the batch.

    Every batch member (self included) competes in each row's softmax, so
    rows sum to 1 and a zero score vector yields uniform rows. Returns
    (A, E) with E the raw pre-ReLU scores kept for the backward.
    """
    H = np.asarray(H, dtype=np.float64)
    c = model.n_clusters
    left = H @ model.v[:c]    # contribution of h_i
    right = H @ model.v[c:]   # contribution of h_j
    E = left[:, None] + right[None, :]
    A = softmax(np.maximum(E, 0.0))
    return A, E


def aggregate(H, A):
    """Information passing: z_i = sum_j a_ij h_j + h_i."""
    H = np.asarray(H, dtype=np.float64)
    A = np.asarray(A, dtype=np.float64)
    if A.shape != (H.shape[0], H.shape[0]):
        raise ValueError(f"A has shape {A.shape}, expected ({H.shape[0]},) squared")
    return A @ H + H


def assign_dist(Z):
    """Row-wise softmax of aggregated logits onto the floored simplex."""
    return softmax(Z)


def forward(model, batch_features, training=False, rng=None, indices=None):
    """Full per-view forward pass with all intermediates cached."""
    H, dropped, mask = forward_linear(model, batch_features, training, rng)
    A, E = attention_coeffs(model, H)
    Z = aggregate(H, A)
    S = assign_dist(Z)
    return ForwardTrace(
        inputs=dropped, H=H, E=E, A=A, Z=Z, S=S, dropout_mask=mask, indices=indices
    )


def _softmax_rows_backward(S, dS):
    """Jacobian-transpose product of a row-wise softmax."""
    inner = np.sum(dS * S, axis=1, keepdims=True)
    return S * (dS - inner)


def backward(model, trace, dL_dS):
    """Exact gradients {dW, dv} of a scalar loss given dL/dS.

    Chains softmax -> aggregation -> attention (both the coefficient path
    into v and the score path back into H) -> linear -> dropout. ReLU uses
    the right derivative (1 at exactly 0) so the attention vector can leave
    a zero initialization.
    """
    dL_dS = np.asarray(dL_dS, dtype=np.float64)
    if dL_dS.shape != trace.S.shape:
        raise ValueError(
            f"dL_dS has shape {dL_dS.shape}, trace gives {trace.S.shape}"
        )
    if trace.H.shape[1] != model.n_clusters:
        raise ValueError("trace does not belong to this model")

    dZ = _softmax_rows_backward(trace.S, dL_dS)

    # z_i = sum_j a_ij h_j + h_i
    dH = trace.A.T @ dZ + dZ
    dA = dZ @ trace.H.T

    # attention rows are softmax over ReLU scores
    dR = _softmax_rows_backward(trace.A, dA)
    dE = dR * (trace.E >= 0.0)

    c = model.n_clusters
    row_sums = dE.sum(axis=1)
    col_sums = dE.sum(axis=0)
    dv = np.concatenate([trace.H.T @ row_sums, trace.H.T @ col_sums])
    dH += np.outer(row_sums, model.v[:c]) + np.outer(col_sums, model.v[c:])

    dW = trace.inputs.T @ dH
    return {"dW": dW, "dv": dv}


def project_unit_columns(W):
    """Scale each column of W to unit l2 norm (zero columns left alone)."""
    norms = np.linalg.norm(W, axis=0, keepdims=True)
    safe = np.where(norms > 0.0, norms, 1.0)
    return W / safe
