"""Tests for the per-view head: forward stages against naive oracles and
the analytic backward against central finite differences."""

import math

import numpy as np
import pytest

from msrl.fsrl import (
    ForwardTrace,
    ViewModel,
    aggregate,
    assign_dist,
    attention_coeffs,
    backward,
    forward,
    forward_linear,
    project_unit_columns,
)
from msrl.numerics import finite_diff_grad, softmax


def make_model(m, c, rng, dropout=0.0):
    return ViewModel(
        W=rng.uniform(-1.0, 1.0, size=(m, c)),
        v=rng.normal(scale=0.5, size=2 * c),
        dropout_rate=dropout,
    )


def naive_matmul(a, b):
    out = np.zeros((a.shape[0], b.shape[1]))
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            for k in range(a.shape[1]):
                out[i, j] += a[i, k] * b[k, j]
    return out


class TestForwardLinear:
    def test_zero_weights(self):
        model = ViewModel(W=np.zeros((3, 2)), v=np.zeros(4))
        h, _, _ = forward_linear(model, np.ones((4, 3)))
        np.testing.assert_array_equal(h, np.zeros((4, 2)))

    def test_identity_passthrough(self):
        model = ViewModel(W=np.eye(2), v=np.zeros(4))
        h, _, _ = forward_linear(model, np.array([[3.0, 4.0]]))
        np.testing.assert_array_equal(h[0], [3.0, 4.0])

    def test_matches_naive_matmul(self):
        rng = np.random.default_rng(101)
        model = make_model(5, 3, rng)
        x = rng.normal(size=(7, 5))
        h, _, _ = forward_linear(model, x)
        np.testing.assert_allclose(h, naive_matmul(x, model.W), atol=1e-12)

    def test_dim_mismatch(self):
        model = ViewModel(W=np.zeros((3, 2)), v=np.zeros(4))
        with pytest.raises(ValueError, match="expects"):
            forward_linear(model, np.ones((4, 5)))

    def test_dropout_only_in_training(self):
        rng = np.random.default_rng(103)
        model = make_model(6, 2, rng, dropout=0.5)
        x = rng.normal(size=(10, 6))
        h_eval, _, mask_eval = forward_linear(model, x, training=False)
        assert mask_eval is None
        np.testing.assert_allclose(h_eval, x @ model.W, atol=1e-12)
        h_tr, dropped, mask = forward_linear(
            model, x, training=True, rng=np.random.default_rng(0)
        )
        assert mask is not None and np.any(mask == 0.0)
        np.testing.assert_allclose(h_tr, dropped @ model.W, atol=1e-12)


class TestAttention:
    def test_zero_v_uniform_rows(self):
        rng = np.random.default_rng(107)
        model = ViewModel(W=np.zeros((2, 3)), v=np.zeros(6))
        a, _ = attention_coeffs(model, rng.normal(size=(5, 3)))
        np.testing.assert_allclose(a, np.full((5, 5), 0.2), atol=1e-12)

    def test_identical_features_uniform_rows(self):
        rng = np.random.default_rng(109)
        model = make_model(2, 3, rng)
        h = np.tile(rng.normal(size=3), (4, 1))
        a, _ = attention_coeffs(model, h)
        np.testing.assert_allclose(a, np.full((4, 4), 0.25), atol=1e-12)

    def test_hand_evaluated_two_sample_case(self):
        """N=2, C=1, v=[1,1], h=[1],[2]: row 0 scores are ReLU(2), ReLU(3)
        so the row is [1/(1+e), e/(1+e)]."""
        model = ViewModel(W=np.zeros((1, 1)), v=np.array([1.0, 1.0]))
        a, _ = attention_coeffs(model, np.array([[1.0], [2.0]]))
        np.testing.assert_allclose(
            a[0], [1 / (1 + math.e), math.e / (1 + math.e)], atol=1e-12
        )

    def test_rows_on_simplex_property(self):
        rng = np.random.default_rng(113)
        for _ in range(50):
            n, c = int(rng.integers(1, 9)), int(rng.integers(1, 5))
            model = make_model(3, c, rng)
            a, _ = attention_coeffs(model, rng.normal(size=(n, c)))
            np.testing.assert_allclose(a.sum(axis=1), np.ones(n), atol=1e-12)
            assert np.all(a >= 0)


class TestAggregate:
    def test_single_sample_doubles(self):
        h = np.array([[1.5, -2.0]])
        z = aggregate(h, np.array([[1.0]]))
        np.testing.assert_allclose(z, 2 * h, atol=1e-15)

    def test_uniform_attention_identical_features(self):
        h = np.tile([1.0, 2.0], (3, 1))
        z = aggregate(h, np.full((3, 3), 1 / 3))
        np.testing.assert_allclose(z, 2 * h, atol=1e-12)

    def test_matches_naive_oracle(self):
        rng = np.random.default_rng(127)
        h = rng.normal(size=(6, 4))
        a = rng.random((6, 6))
        a /= a.sum(axis=1, keepdims=True)
        np.testing.assert_allclose(
            aggregate(h, a), naive_matmul(a, h) + h, atol=1e-12
        )

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            aggregate(np.ones((3, 2)), np.ones((2, 2)))


class TestAssignDist:
    def test_zero_row_uniform(self):
        s = assign_dist(np.zeros((1, 4)))
        np.testing.assert_allclose(s[0], [0.25] * 4, atol=1e-12)

    def test_per_row_shift_invariance(self):
        rng = np.random.default_rng(131)
        z = rng.normal(size=(5, 3))
        shifts = rng.uniform(-50, 50, size=(5, 1))
        np.testing.assert_allclose(assign_dist(z + shifts), assign_dist(z), atol=1e-12)

    def test_direct_evaluation(self):
        s = assign_dist(np.array([[1.0, 2.0]]))
        np.testing.assert_allclose(
            s[0], [1 / (1 + math.e), math.e / (1 + math.e)], atol=1e-12
        )


class TestForward:
    def test_zero_weights_uniform_assignments(self):
        rng = np.random.default_rng(137)
        model = ViewModel(W=np.zeros((4, 3)), v=np.zeros(6))
        trace = forward(model, rng.normal(size=(5, 4)))
        np.testing.assert_allclose(trace.S, np.full((5, 3), 1 / 3), atol=1e-12)

    def test_single_sample_closed_form(self):
        """With one sample, aggregation doubles the logits: s = softmax(2 x W)."""
        rng = np.random.default_rng(139)
        model = make_model(4, 3, rng)
        x = rng.normal(size=(1, 4))
        trace = forward(model, x)
        np.testing.assert_allclose(trace.S, softmax(2.0 * (x @ model.W)), atol=1e-12)

    def test_composition_matches_stages(self):
        rng = np.random.default_rng(149)
        model = make_model(5, 4, rng)
        x = rng.normal(size=(6, 5))
        trace = forward(model, x)
        h, _, _ = forward_linear(model, x)
        a, _ = attention_coeffs(model, h)
        z = aggregate(h, a)
        np.testing.assert_allclose(trace.H, h, atol=1e-15)
        np.testing.assert_allclose(trace.A, a, atol=1e-15)
        np.testing.assert_allclose(trace.Z, z, atol=1e-15)
        np.testing.assert_allclose(trace.S, assign_dist(z), atol=1e-15)

    def test_trace_invariants_property(self):
        """A rows sum to 1, S rows on the simplex, Z == A H + H exactly."""
        rng = np.random.default_rng(151)
        for _ in range(30):
            n, c, m = (int(rng.integers(1, 9)), int(rng.integers(2, 5)),
                       int(rng.integers(1, 7)))
            model = make_model(m, c, rng)
            trace = forward(model, rng.normal(size=(n, m)))
            np.testing.assert_allclose(trace.A.sum(axis=1), np.ones(n), atol=1e-12)
            np.testing.assert_allclose(trace.S.sum(axis=1), np.ones(n), atol=1e-12)
            np.testing.assert_allclose(
                trace.Z, trace.A @ trace.H + trace.H, atol=1e-12
            )


def linear_probe_loss(model, x, g):
    """Scalar loss sum(G * S(x; model)) used to isolate the backward pass."""
    trace = forward(model, x)
    return float(np.sum(g * trace.S))


def grads_via_finite_diff(model, x, g, h=1e-6):
    m, c = model.W.shape

    def loss_of_w(w_flat):
        probe = ViewModel(W=w_flat.reshape(m, c), v=model.v)
        return linear_probe_loss(probe, x, g)

    def loss_of_v(v_vec):
        probe = ViewModel(W=model.W, v=v_vec)
        return linear_probe_loss(probe, x, g)

    dw = finite_diff_grad(loss_of_w, model.W.reshape(-1), h).reshape(m, c)
    dv = finite_diff_grad(loss_of_v, model.v, h)
    return dw, dv


def relative_error(a, b):
    scale = max(np.max(np.abs(b)), 1e-6)
    return np.max(np.abs(a - b)) / scale


class TestBackward:
    def test_zero_upstream_zero_grads(self):
        rng = np.random.default_rng(157)
        model = make_model(4, 3, rng)
        trace = forward(model, rng.normal(size=(5, 4)))
        grads = backward(model, trace, np.zeros_like(trace.S))
        np.testing.assert_array_equal(grads["dW"], np.zeros_like(model.W))
        np.testing.assert_array_equal(grads["dv"], np.zeros_like(model.v))

    def test_single_sample_reduces_to_doubled_softmax_linear(self):
        """For N=1 the attention is constant, so dW is exactly the softmax
        Jacobian times 2 (from z = 2h) times the input."""
        rng = np.random.default_rng(163)
        model = make_model(4, 2, rng)
        x = rng.normal(size=(1, 4))
        trace = forward(model, x)
        g = rng.normal(size=(1, 2))
        grads = backward(model, trace, g)
        s = trace.S[0]
        dz = s * (g[0] - np.dot(g[0], s))
        np.testing.assert_allclose(grads["dW"], np.outer(x[0], 2.0 * dz), atol=1e-12)
        np.testing.assert_allclose(grads["dv"], np.zeros(4), atol=1e-15)

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(167)
        model = make_model(4, 3, rng)
        x = rng.normal(size=(6, 4))
        g = rng.normal(size=(6, 3))
        trace = forward(model, x)
        grads = backward(model, trace, g)
        fd_w, fd_v = grads_via_finite_diff(model, x, g)
        assert relative_error(grads["dW"], fd_w) <= 1e-5
        assert relative_error(grads["dv"], fd_v) <= 1e-5

    def test_fifty_random_instances_property(self):
        """Analytic and finite-difference gradients agree to 1e-5 relative
        error across 50 random small instances, dW and dv both."""
        rng = np.random.default_rng(173)
        for _ in range(50):
            n, c, m = (int(rng.integers(1, 9)), int(rng.integers(2, 5)),
                       int(rng.integers(1, 7)))
            model = make_model(m, c, rng)
            x = rng.normal(size=(n, m))
            g = rng.normal(size=(n, c))
            trace = forward(model, x)
            grads = backward(model, trace, g)
            fd_w, fd_v = grads_via_finite_diff(model, x, g)
            assert relative_error(grads["dW"], fd_w) <= 1e-5
            assert relative_error(grads["dv"], fd_v) <= 1e-5

    def test_trace_model_mismatch(self):
        rng = np.random.default_rng(179)
        model = make_model(4, 3, rng)
        trace = forward(model, rng.normal(size=(5, 4)))
        other = make_model(4, 2, rng)
        with pytest.raises(ValueError):
            backward(other, trace, np.zeros_like(trace.S))


class TestRowNormalization:
    def test_unit_columns(self):
        rng = np.random.default_rng(181)
        w = project_unit_columns(rng.normal(size=(6, 4)))
        np.testing.assert_allclose(np.linalg.norm(w, axis=0), np.ones(4), atol=1e-12)

    def test_sqrt_c_stretch_bound_property(self):
        """Unit-column W stretches any feature difference by at most
        sqrt(C) in logit space."""
        rng = np.random.default_rng(191)
        for _ in range(200):
            m, c = int(rng.integers(2, 40)), int(rng.integers(1, 12))
            w = project_unit_columns(rng.normal(size=(m, c)))
            d = rng.normal(size=m)
            assert np.linalg.norm(w.T @ d) <= math.sqrt(c) * np.linalg.norm(d) + 1e-12
