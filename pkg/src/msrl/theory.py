"""Executable verification of the model's theoretical guarantees.

Each check draws randomized instances with a fixed seed, measures the worst
violation of the stated bound, and reports pass/fail. The checks cover:
softmax translation invariance, the entropy Lipschitz constant on the
floored simplex, the two bounded-consistency properties of the fused
distribution, attractivity of the consensus under incremental view
updates, the per-step entropy-change bound, and the sqrt(C) stretch bound
for column-normalized weights. A Jensen concavity probe is recorded
alongside because it bears on how the fused entropy relates to the mean
entropy (the fused value sits below the mean plus the Lipschitz term, but
above the plain mean by concavity).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .consensus import incremental_update
from .numerics import DELTA, clamp_simplex, entropy, softmax


@dataclass
class CheckResult:
    name: str
    trials: int
    bound: float
    max_violation: float
    passed: bool
    detail: str = ""


@dataclass
class TheoryReport:
    entries: list = field(default_factory=list)

    @property
    def all_passed(self):
        return all(e.passed for e in self.entries)

    def rows(self):
        return [
            (e.name, e.trials, e.bound, e.max_violation, e.passed, e.detail)
            for e in self.entries
        ]


def lipschitz_constant(delta):
    """Entropy Lipschitz constant on the floored simplex: 1 + |log delta|.

    The entropy gradient component is -(1 + log w_i); its magnitude over
    w_i in [delta, 1] is at most 1 + |log delta|.
    """
    if not 0.0 < delta <= 0.5:
        raise ValueError(f"floor {delta} outside (0, 0.5]")
    return 1.0 + abs(np.log(delta))


def _random_simplex(rng, n, c, delta=DELTA):
    return clamp_simplex(rng.dirichlet(np.ones(c), size=n), delta)


def _perturbed_views(rng, p, n_views, radius, delta=DELTA):
    """Views within l1 distance `radius` of p, sampled by rescaled
    Dirichlet perturbations and re-clamped to the floored simplex."""
    n, c = p.shape
    views = []
    for _ in range(n_views):
        direction = rng.dirichlet(np.ones(c), size=n) - p
        norms = np.maximum(np.abs(direction).sum(axis=1, keepdims=True), 1e-300)
        r = rng.uniform(0.0, radius, size=(n, 1))
        views.append(clamp_simplex(p + direction * (r / norms), delta))
    return views


def check_translation_invariance(trials=10_000, c=6, seed=0):
    """softmax(z + c1) == softmax(z) elementwise within 1e-12, and equal
    shifted aggregates produce equal assignment distributions."""
    rng = np.random.default_rng([seed, 0x71])
    z = rng.normal(0.0, 5.0, size=(trials, c))
    shifts = rng.uniform(-1e3, 1e3, size=(trials, 1))
    # two aggregates differing by a constant vector must share one
    # assignment distribution; z plays f_j, z + shift plays f_i
    worst = float(np.abs(softmax(z + shifts) - softmax(z)).max())
    return CheckResult(
        name="translation_invariance", trials=trials, bound=1e-12,
        max_violation=worst, passed=worst <= 1e-12,
        detail=f"max elementwise gap {worst:.3e}",
    )


def check_entropy_lipschitz(trials=100_000, max_c=10, delta=DELTA, seed=0,
                            qdelta_scale=1.0):
    """|H(u) - H(v)| <= Q_delta * ||u - v||_1 over random floored-simplex pairs."""
    rng = np.random.default_rng([seed, 0x4C])
    q = lipschitz_constant(delta) * qdelta_scale
    worst = -np.inf
    per_c = max(1, trials // (max_c - 1))
    total = 0
    for c in range(2, max_c + 1):
        u = _random_simplex(rng, per_c, c, delta)
        v = _random_simplex(rng, per_c, c, delta)
        h_u = -np.sum(u * np.log(u), axis=1)
        h_v = -np.sum(v * np.log(v), axis=1)
        lhs = np.abs(h_u - h_v)
        rhs = q * np.abs(u - v).sum(axis=1)
        worst = max(worst, float((lhs - rhs).max()))
        total += per_c
    return CheckResult(
        name="entropy_lipschitz", trials=total, bound=0.0,
        max_violation=worst, passed=worst <= 1e-9,
        detail=f"Q_delta={q:.4f}",
    )


def check_consistency_bounds(trials=10_000, c=5, n_views=4, eps=0.1,
                             delta=DELTA, seed=0, qdelta_scale=1.0):
    """Fused-distribution properties under bounded view disagreement:
    (1) H(mean) <= mean H + Q_delta * eps, (2) ||s_l - mean||_1 <= eps,
    with eps the realized worst pairwise l1 disagreement."""
    rng = np.random.default_rng([seed, 0xB0])
    q = lipschitz_constant(delta) * qdelta_scale
    p = _random_simplex(rng, trials, c, delta)
    views = _perturbed_views(rng, p, n_views, eps / 2.0, delta)

    pairwise = np.zeros(trials)
    for a in range(n_views):
        for b in range(a + 1, n_views):
            pairwise = np.maximum(
                pairwise, np.abs(views[a] - views[b]).sum(axis=1)
            )
    mean = sum(views) / n_views
    h_mean = -np.sum(mean * np.log(mean), axis=1)
    h_each = np.stack([-np.sum(s * np.log(s), axis=1) for s in views])
    gap1 = (h_mean - h_each.mean(axis=0) - q * pairwise).max()
    gap2 = max(
        (np.abs(s - mean).sum(axis=1) - pairwise).max() for s in views
    )
    worst = float(max(gap1, gap2))
    return CheckResult(
        name="consistency_bounds", trials=trials, bound=0.0,
        max_violation=worst, passed=worst <= 1e-9,
        detail=f"eps={eps}, views={n_views}, realized eps max {pairwise.max():.4f}",
    )


def simulate_attractivity(l_max=64, eps=0.05, trials=1000, c=5,
                          delta=DELTA, seed=0):
    """Incrementally fused consensus stays within w * (1/L + eps) of the
    attractor; reports the smallest such w over all L."""
    rng = np.random.default_rng([seed, 0xA7])
    p = _random_simplex(rng, trials, c, delta)
    views = _perturbed_views(rng, p, l_max, eps, delta)
    eps_real = max(
        float(np.abs(s - p).sum(axis=1).max()) for s in views
    )
    errors = []
    fused = views[0]
    errors.append(float(np.abs(fused - p).sum(axis=1).mean()))
    for l, s in enumerate(views[1:], start=1):
        fused = incremental_update(fused, s, l)
        errors.append(float(np.abs(fused - p).sum(axis=1).mean()))
    envelopes = np.array([1.0 / l + eps_real for l in range(1, l_max + 1)])
    w = float(np.max(np.array(errors) / envelopes))
    # tail containment: by L_max the consensus must sit inside the
    # eps-neighborhood of the attractor (unit-constant envelope)
    tail_ok = errors[-1] <= eps_real + 1.0 / l_max + 1e-9
    passed = np.isfinite(w) and w <= 10.0 and tail_ok
    return CheckResult(
        name="consensus_attractivity", trials=trials, bound=10.0,
        max_violation=w, passed=bool(passed),
        detail=f"fitted w={w:.4f}, err L=1 {errors[0]:.4f} -> L={l_max} {errors[-1]:.4f}",
    )


def check_entropy_change(l_max=16, eps=0.05, trials=1000, c=5,
                         delta=DELTA, seed=0, qdelta_scale=1.0):
    """Expected entropy moves by at most 2 Q_delta eps / (L+1) per added view."""
    rng = np.random.default_rng([seed, 0xE0])
    q = lipschitz_constant(delta) * qdelta_scale
    p = _random_simplex(rng, trials, c, delta)
    views = _perturbed_views(rng, p, l_max + 1, eps, delta)
    eps_real = max(
        float(np.abs(s - p).sum(axis=1).max()) for s in views
    )
    fused = views[0]
    h_prev = float(np.mean(-np.sum(fused * np.log(fused), axis=1)))
    worst = -np.inf
    for l, s in enumerate(views[1:], start=1):
        fused = incremental_update(fused, s, l)
        h_cur = float(np.mean(-np.sum(fused * np.log(fused), axis=1)))
        bound_l = 2.0 * q * eps_real / (l + 1)
        worst = max(worst, (h_cur - h_prev) - bound_l)
        h_prev = h_cur
    return CheckResult(
        name="entropy_change", trials=trials, bound=0.0,
        max_violation=float(worst), passed=worst <= 1e-9,
        detail=f"eps={eps}, realized {eps_real:.4f}, L<= {l_max}",
    )


def check_rownorm_bound(trials=10_000, m=64, c=10, seed=0):
    """Column-normalized weights stretch feature differences by at most
    sqrt(C) in l2."""
    rng = np.random.default_rng([seed, 0x3C])
    worst = -np.inf
    batch = 500
    done = 0
    while done < trials:
        k = min(batch, trials - done)
        w = rng.standard_normal((k, m, c))
        w /= np.linalg.norm(w, axis=1, keepdims=True)
        d = rng.standard_normal((k, m))
        lhs = np.linalg.norm(np.einsum("kmc,km->kc", w, d), axis=1)
        rhs = np.sqrt(c) * np.linalg.norm(d, axis=1)
        worst = max(worst, float((lhs - rhs).max()))
        done += k
    return CheckResult(
        name="rownorm_stretch", trials=trials, bound=0.0,
        max_violation=worst, passed=worst <= 1e-9,
        detail=f"m={m}, C={c}",
    )


def check_jensen_concavity(trials=10_000, c=5, n_views=4, delta=DELTA, seed=0):
    """Probe: entropy of a mean is at least the mean entropy (concavity).

    Recorded because it pins down the direction of the fused-entropy
    relation; the consistency bound above holds through the Lipschitz term
    alone.
    """
    rng = np.random.default_rng([seed, 0x1E])
    p = _random_simplex(rng, trials, c, delta)
    views = _perturbed_views(rng, p, n_views, 0.3, delta)
    mean = sum(views) / n_views
    h_mean = -np.sum(mean * np.log(mean), axis=1)
    h_each = np.stack([-np.sum(s * np.log(s), axis=1) for s in views])
    worst = float((h_each.mean(axis=0) - h_mean).max())
    return CheckResult(
        name="jensen_concavity", trials=trials, bound=0.0,
        max_violation=worst, passed=worst <= 1e-12,
        detail="H(mean) >= mean H over random fusions",
    )


def run_all_checks(seed=0, trials=None, qdelta_scale=1.0, delta=DELTA):
    """Run every theory check with reproducible seeds.

    trials overrides the per-check default trial counts when given.
    qdelta_scale exists for fault injection in tests: scaling the
    Lipschitz constant below 1 must make the bound checks fail.
    """
    t = trials
    report = TheoryReport()
    report.entries.append(check_translation_invariance(
        trials=t or 10_000, seed=seed))
    report.entries.append(check_entropy_lipschitz(
        trials=t or 100_000, delta=delta, seed=seed, qdelta_scale=qdelta_scale))
    report.entries.append(check_consistency_bounds(
        trials=t or 10_000, delta=delta, seed=seed, qdelta_scale=qdelta_scale))
    report.entries.append(simulate_attractivity(
        trials=max(1, (t or 1000) // 10) if t else 1000, delta=delta, seed=seed))
    report.entries.append(check_entropy_change(
        trials=max(1, (t or 1000) // 10) if t else 1000, delta=delta,
        seed=seed, qdelta_scale=qdelta_scale))
    report.entries.append(check_rownorm_bound(trials=t or 10_000, seed=seed))
    report.entries.append(check_jensen_concavity(
        trials=t or 10_000, delta=delta, seed=seed))
    return report
