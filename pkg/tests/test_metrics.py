"""Tests for clustering metrics against independent combinatorial oracles."""

import itertools
import math

import numpy as np
import pytest

from msrl.metrics import ari, contingency_table, hungarian_acc, metrics_report, nmi


def brute_force_acc(pred, truth):
    """Maximum matched fraction over every label bijection, by enumeration."""
    counts = contingency_table(pred, truth)
    k = max(counts.shape)
    padded = np.zeros((k, k), dtype=np.int64)
    padded[: counts.shape[0], : counts.shape[1]] = counts
    best = 0
    for perm in itertools.permutations(range(k)):
        best = max(best, sum(padded[i, perm[i]] for i in range(k)))
    return best / counts.sum()


def pair_count_ari(pred, truth):
    """ARI from an explicit scan over all n(n-1)/2 sample pairs."""
    n = len(pred)
    a = b = c = d = 0
    for i in range(n):
        for j in range(i + 1, n):
            same_p = pred[i] == pred[j]
            same_t = truth[i] == truth[j]
            if same_p and same_t:
                a += 1
            elif same_p:
                b += 1
            elif same_t:
                c += 1
            else:
                d += 1
    denom = (a + b) * (b + d) + (a + c) * (c + d)
    if denom == 0:
        return 1.0
    return 2.0 * (a * d - b * c) / denom


def contingency_nmi(pred, truth):
    """NMI recomputed from scratch with explicit probability sums."""
    counts = contingency_table(pred, truth).astype(float)
    n = counts.sum()
    pj = counts.sum(axis=1) / n
    pt = counts.sum(axis=0) / n
    h_p = -sum(p * math.log(p) for p in pj if p > 0)
    h_t = -sum(p * math.log(p) for p in pt if p > 0)
    if h_p == 0 or h_t == 0:
        return 1.0 if counts.shape == (1, 1) else 0.0
    mi = 0.0
    for i in range(counts.shape[0]):
        for j in range(counts.shape[1]):
            pij = counts[i, j] / n
            if pij > 0:
                mi += pij * math.log(pij / (pj[i] * pt[j]))
    return mi / math.sqrt(h_p * h_t)


def random_case(rng):
    n = int(rng.integers(2, 31))
    cp = int(rng.integers(1, 7))
    ct = int(rng.integers(1, 7))
    return rng.integers(0, cp, size=n), rng.integers(0, ct, size=n)


class TestHungarianAcc:
    def test_identical(self):
        assert hungarian_acc([0, 1, 2, 1], [0, 1, 2, 1]) == 1.0

    def test_relabeled(self):
        truth = [0, 0, 1, 1, 2]
        pred = [2, 2, 0, 0, 1]
        assert hungarian_acc(pred, truth) == 1.0

    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            hungarian_acc([], [])

    def test_matches_brute_force(self):
        rng = np.random.default_rng(59)
        for _ in range(60):
            pred, truth = random_case(rng)
            assert hungarian_acc(pred, truth) == pytest.approx(
                brute_force_acc(pred, truth), abs=1e-12
            )

    def test_at_least_plain_fraction(self):
        rng = np.random.default_rng(61)
        for _ in range(60):
            pred, truth = random_case(rng)
            plain = np.mean(np.asarray(pred) == np.asarray(truth))
            assert hungarian_acc(pred, truth) >= plain - 1e-12


class TestNmi:
    def test_identical_partitions(self):
        assert nmi([0, 1, 0, 1], [0, 1, 0, 1]) == pytest.approx(1.0, abs=1e-12)

    def test_constant_pred_zero(self):
        assert nmi([0, 0, 0, 0], [0, 0, 1, 1]) == 0.0

    def test_independent_partitions_zero(self):
        """Perfectly crossed 2x2 design carries no mutual information."""
        assert nmi([0, 0, 1, 1], [0, 1, 0, 1]) == pytest.approx(0.0, abs=1e-12)

    def test_matches_contingency_oracle(self):
        rng = np.random.default_rng(67)
        for _ in range(60):
            pred, truth = random_case(rng)
            assert nmi(pred, truth) == pytest.approx(
                contingency_nmi(pred, truth), abs=1e-10
            )

    def test_relabel_invariance(self):
        rng = np.random.default_rng(71)
        pred, truth = random_case(rng)
        shuffled = (np.asarray(pred) + 3) % 7
        assert nmi(shuffled, truth) == pytest.approx(nmi(pred, truth), abs=1e-12)


class TestAri:
    def test_identical(self):
        assert ari([0, 1, 1, 2], [0, 1, 1, 2]) == 1.0

    def test_relabeled(self):
        assert ari([1, 0, 0, 2], [0, 1, 1, 2]) == 1.0

    def test_too_small_rejected(self):
        with pytest.raises(ValueError, match="2 samples"):
            ari([0], [0])

    def test_known_split(self):
        """pred=[0,0,1,1] vs truth=[0,0,0,1]: the pair-count oracle gives
        exactly 0 (a=1, b=1, c=2, d=2)."""
        assert ari([0, 0, 1, 1], [0, 0, 0, 1]) == pytest.approx(0.0, abs=1e-12)

    def test_matches_pair_count_oracle(self):
        rng = np.random.default_rng(73)
        for _ in range(60):
            pred, truth = random_case(rng)
            assert ari(pred, truth) == pytest.approx(
                pair_count_ari(pred, truth), abs=1e-10
            )

    def test_random_partitions_concentrate_near_zero(self):
        """Mean ARI of independent random partitions stays within +-0.05."""
        rng = np.random.default_rng(79)
        vals = []
        for _ in range(1000):
            pred = rng.integers(0, 4, size=60)
            truth = rng.integers(0, 4, size=60)
            vals.append(ari(pred, truth))
        assert abs(float(np.mean(vals))) < 0.05


class TestReport:
    def test_perfect_prediction_all_ones(self):
        rep = dict(metrics_report([0, 1, 2, 0], [2, 0, 1, 2]))
        assert rep["ACC"] == 1.0
        assert rep["NMI"] == pytest.approx(1.0, abs=1e-12)
        assert rep["ARI"] == 1.0
