"""Dense float64 primitives shared by every other module.

Probability-simplex helpers (softmax, clamping, entropy, cross-entropy),
a from-scratch Adam optimizer, and a central finite-difference gradient
oracle used to validate the analytic backward passes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Simplex floor: every probability is clamped to >= DELTA before any log,
# so entropy stays Lipschitz and no -inf can escape.
DELTA = 1e-8

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


def softmax(logits, delta=DELTA):
    """Numerically stabilized softmax along the last axis.

    Max-subtraction keeps exp() in range; it is exact because softmax is
    invariant under adding a constant to all logits. The output is floored
    at delta (see clamp_simplex) so extreme logit gaps cannot underflow a
    probability to exact zero; interior outputs are untouched.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if logits.size == 0 or logits.shape[-1] == 0:
        raise ValueError("empty logits")
    if not np.all(np.isfinite(logits)):
        raise ValueError("non-finite logits")
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    e = np.exp(shifted)
    s = e / np.sum(e, axis=-1, keepdims=True)
    if logits.shape[-1] == 1:
        return s  # single logit: probability 1, no room for a floor
    return clamp_simplex(s, delta)


def clamp_simplex(p, delta=DELTA):
    """Project a nonnegative vector onto the floored simplex {w: w_i >= delta, sum w = 1}.

    Entries are raised to the floor and the surplus mass above the floor is
    rescaled affinely, so the map is exact: points already on the floored
    simplex pass through unchanged and the output always sums to 1 with
    min >= delta.
    """
    p = np.asarray(p, dtype=np.float64)
    c = p.shape[-1]
    if c < 1:
        raise ValueError("empty probability vector")
    if not 0.0 < delta * c < 1.0:
        raise ValueError(f"floor {delta} infeasible for {c} entries")
    raised = np.maximum(p, delta)
    total = np.sum(raised, axis=-1, keepdims=True)
    scale = (1.0 - c * delta) / (total - c * delta)
    return delta + (raised - delta) * scale


def entropy(p, delta=DELTA):
    """Shannon entropy H(p) = -sum p_j log p_j, natural log, in [0, log C].

    p is floor-clamped before the log so degenerate inputs never produce
    -inf; for a one-hot vector the result is ~0 rather than an error.
    """
    q = clamp_simplex(p, delta)
    return float(-np.sum(q * np.log(q), axis=-1))


def cross_entropy(p, q, delta=DELTA):
    """Cross-entropy H(p, q) = -sum p_j log q_j with q floor-clamped.

    By Gibbs' inequality the result is >= entropy(p), with equality iff
    p == q.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {q.shape}")
    qc = clamp_simplex(q, delta)
    return float(-np.sum(p * np.log(qc), axis=-1))


@dataclass
class AdamState:
    """Moment accumulators for one flat parameter vector.

    step counts completed updates; m and v are the first/second moment
    estimates with the same shape as the parameters.
    """

    lr: float = 1e-3
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPS
    step: int = 0
    m: np.ndarray = field(default_factory=lambda: np.zeros(0))
    v: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @classmethod
    def init(cls, n_params, lr=1e-3, beta1=ADAM_BETA1, beta2=ADAM_BETA2, eps=ADAM_EPS):
        return cls(
            lr=lr,
            beta1=beta1,
            beta2=beta2,
            eps=eps,
            step=0,
            m=np.zeros(n_params, dtype=np.float64),
            v=np.zeros(n_params, dtype=np.float64),
        )


def adam_step(state, params, grads):
    """One bias-corrected Adam update.

    Returns (new_state, new_params); inputs are not mutated, and identical
    inputs produce bit-identical outputs.
    """
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ValueError(
            f"shape mismatch: params {params.shape}, grads {grads.shape}, "
            f"moments {state.m.shape}"
        )
    if not np.all(np.isfinite(grads)):
        raise ValueError("non-finite gradient")
    t = state.step + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    v = state.beta2 * state.v + (1.0 - state.beta2) * grads * grads
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    new_params = params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    new_state = AdamState(
        lr=state.lr, beta1=state.beta1, beta2=state.beta2, eps=state.eps,
        step=t, m=m, v=v,
    )
    return new_state, new_params


def finite_diff_grad(f, x, h=1e-6):
    """Central-difference gradient of a scalar function f at x.

    (f(x + h e_i) - f(x - h e_i)) / 2h per coordinate. The caller owns f's
    domain; this is the independent oracle the analytic backward passes are
    checked against.
    """
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = grad.reshape(-1)
    xf = x.reshape(-1)
    for i in range(xf.size):
        orig = xf[i]
        xf[i] = orig + h
        f_plus = f(x)
        xf[i] = orig - h
        f_minus = f(x)
        xf[i] = orig
        flat[i] = (f_plus - f_minus) / (2.0 * h)
    return grad
