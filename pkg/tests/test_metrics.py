"""Exactness and metric axioms of the three distances."""

import numpy as np
import pytest

import pushforward_lab as pf
from pushforward_lab.errors import ParameterError, SpaceMismatchError
from pushforward_lab.metrics import _HatAxis

from oracles import prokhorov_oracle, wasserstein_oracle

SPACES = [pf.circle(), pf.interval(), pf.square(), pf.finite(6), pf.solid_torus()]


def _rand_measure(space, rng, max_atoms=6, denom=None):
    k = int(rng.integers(1, max_atoms + 1))
    pts = space.random_points(rng, k)
    if denom is None:
        w = rng.dirichlet(np.ones(k))
    else:
        parts = rng.multinomial(denom - k, np.ones(k) / k) + 1
        w = parts / denom
    return pf.AtomicMeasure.create(space, pts, w)


def test_wasserstein_deltas_equal_base_distance():
    rng = np.random.default_rng(41)
    for space in SPACES:
        for _ in range(50):
            x, y = space.random_points(rng, 2)
            for p in (1.0, 2.0):
                v, _ = pf.wasserstein(pf.AtomicMeasure.delta(space, x),
                                      pf.AtomicMeasure.delta(space, y), p)
                assert abs(v - float(space.distance_array(x, y))) <= 1e-9


def test_wasserstein_self_distance_zero():
    rng = np.random.default_rng(43)
    for space in SPACES:
        mu = _rand_measure(space, rng)
        assert pf.wasserstein(mu, mu, 1.0)[0] <= 1e-12


def test_wasserstein_forced_coupling():
    x = pf.interval()
    mu = pf.AtomicMeasure.create(x, [[0.0], [1.0]], [0.5, 0.5])
    nu = pf.AtomicMeasure.delta(x, [0.5])
    v, plan = pf.wasserstein(mu, nu, 1.0)
    assert v == pytest.approx(0.5, abs=1e-15)
    assert sorted(plan.pairs) == [(0, 0, 0.5), (1, 0, 0.5)]


def test_wasserstein_matches_vertex_oracle():
    rng = np.random.default_rng(47)
    for case in range(30):
        space = SPACES[case % len(SPACES)]
        mu = _rand_measure(space, rng, max_atoms=4, denom=8)
        nu = _rand_measure(space, rng, max_atoms=4, denom=8)
        v, plan = pf.wasserstein(mu, nu, 1.0)
        ref = wasserstein_oracle(space, mu, nu, 1.0)
        assert abs(v - ref) <= 1e-9
        # duality gap zero: the reported plan achieves the reported value
        cost = space.pairwise(mu.points, nu.points)
        plan_cost = sum(m * cost[i, j] for i, j, m in plan.pairs)
        assert abs(plan_cost - v) <= 1e-9


def test_wasserstein_plan_marginals():
    rng = np.random.default_rng(53)
    for space in SPACES:
        mu = _rand_measure(space, rng, max_atoms=12)
        nu = _rand_measure(space, rng, max_atoms=12)
        _, plan = pf.wasserstein(mu, nu, 1.0)
        row, col = plan.marginals(mu.atom_count, nu.atom_count)
        assert np.abs(row - mu.weights).max() <= 1e-9
        assert np.abs(col - nu.weights).max() <= 1e-9


def test_wasserstein_monotone_in_p():
    rng = np.random.default_rng(59)
    for _ in range(100):
        space = pf.circle()
        mu = _rand_measure(space, rng, max_atoms=8)
        nu = _rand_measure(space, rng, max_atoms=8)
        w1 = pf.wasserstein(mu, nu, 1.0)[0]
        w2 = pf.wasserstein(mu, nu, 2.0)[0]
        assert w1 <= w2 + 1e-9


def test_wasserstein_quantile_fast_path_agrees_with_solver():
    # the large-support 1-D route must coincide with the generic solver
    from pushforward_lab.metrics import _min_cost_transport
    rng = np.random.default_rng(61)
    for space in (pf.circle(), pf.interval()):
        for _ in range(25):
            k1, k2 = int(rng.integers(30, 50)), int(rng.integers(30, 50))
            mu = pf.AtomicMeasure.create(space, space.random_points(rng, k1),
                                         rng.dirichlet(np.ones(k1)))
            nu = pf.AtomicMeasure.create(space, space.random_points(rng, k2),
                                         rng.dirichlet(np.ones(k2)))
            v, plan = pf.wasserstein(mu, nu, 1.0)  # fast path (support > 64)
            dist = space.pairwise(mu.points, nu.points)
            flow = _min_cost_transport(mu.weights, nu.weights, dist)
            assert abs(v - float((flow * dist).sum())) <= 1e-9


def test_prokhorov_worked_values():
    c = pf.circle()
    dx = pf.AtomicMeasure.delta(c, [0.1])
    dy = pf.AtomicMeasure.delta(c, [0.35])
    assert pf.prokhorov(dx, dx) == 0.0
    assert pf.prokhorov(dx, dy) == pytest.approx(0.25, abs=1e-12)
    f6 = pf.finite(6)
    assert pf.prokhorov(pf.AtomicMeasure.delta(f6, [0.0]),
                        pf.AtomicMeasure.delta(f6, [4.0])) == pytest.approx(1.0)


def test_prokhorov_matches_subset_oracle_quarter_weights():
    rng = np.random.default_rng(67)
    for case in range(20):
        space = SPACES[case % len(SPACES)]
        mu = _rand_measure(space, rng, max_atoms=4, denom=4)
        nu = _rand_measure(space, rng, max_atoms=4, denom=4)
        assert abs(pf.prokhorov(mu, nu) - prokhorov_oracle(space, mu, nu)) <= 1e-6


def test_prokhorov_mass_gap_interacts_with_distances():
    # the optimum can sit strictly between atom distances, at a mass gap
    c = pf.interval()
    mu = pf.AtomicMeasure.create(c, [[0.0]], [1.0])
    nu = pf.AtomicMeasure.create(c, [[0.0], [0.9]], [0.75, 0.25])
    value = pf.prokhorov(mu, nu)
    assert value == pytest.approx(0.25, abs=1e-9)  # leave the far quarter unmatched
    assert abs(value - prokhorov_oracle(c, mu, nu)) <= 1e-6


def test_weak_star_basics():
    c = pf.circle()
    basis = pf.WeakStarBasis.default(c, 8)
    rng = np.random.default_rng(71)
    mu = _rand_measure(c, rng)
    value, tail = pf.weak_star(mu, mu, basis)
    assert value == 0.0 and tail == 2.0 ** -8


def test_weak_star_direct_summation_oracle():
    # recompute the 8-term truncation by hand from the documented enumeration:
    # tents at dyadic centers k/2^m of width 2^-m, level by level
    c = pf.circle()
    basis = pf.WeakStarBasis.default(c, 8)
    mu = pf.AtomicMeasure.delta(c, [0.0])
    nu = pf.AtomicMeasure.delta(c, [0.5])
    value, tail = pf.weak_star(mu, nu, basis)

    def arc(a, b):
        d = abs(a - b)
        return min(d, 1 - d)

    hats = []
    level = 0
    while len(hats) < 8:
        width = 2.0 ** -level
        for k in range(2 ** level):
            hats.append((k * width, width))
        level += 1
    expected = 0.0
    for i, (center, width) in enumerate(hats[:8], start=1):
        g_mu = max(0.0, 1.0 - arc(0.0, center) / width)
        g_nu = max(0.0, 1.0 - arc(0.5, center) / width)
        expected += 0.5 ** i * abs(g_mu - g_nu)
    assert value == pytest.approx(expected, abs=1e-15)
    assert tail == 2.0 ** -8


def test_weak_star_truncation_bound():
    rng = np.random.default_rng(73)
    c = pf.circle()
    mu, nu = _rand_measure(c, rng), _rand_measure(c, rng)
    v20, t20 = pf.weak_star(mu, nu, pf.WeakStarBasis.default(c, 20))
    v8, t8 = pf.weak_star(mu, nu, pf.WeakStarBasis.default(c, 8))
    assert abs(v20 - v8) <= t8
    assert t20 == 2.0 ** -20


@pytest.mark.parametrize("space", SPACES, ids=lambda s: s.kind)
def test_metric_axioms_all_three(space):
    rng = np.random.default_rng(79)
    basis = pf.WeakStarBasis.default(space, 12)
    for _ in range(25):
        a = _rand_measure(space, rng)
        b = _rand_measure(space, rng)
        c = _rand_measure(space, rng)
        for fn in (lambda u, v: pf.wasserstein(u, v, 1.0)[0],
                   pf.prokhorov,
                   lambda u, v: pf.weak_star(u, v, basis)[0]):
            dab, dba = fn(a, b), fn(b, a)
            assert abs(dab - dba) <= 1e-9
            assert dab >= 0
            assert dab <= fn(a, c) + fn(c, b) + 1e-9
            assert fn(a, a) <= 1e-12


def test_space_mismatch_raises():
    mu = pf.AtomicMeasure.delta(pf.circle(), [0.1])
    nu = pf.AtomicMeasure.delta(pf.interval(), [0.1])
    with pytest.raises(SpaceMismatchError):
        pf.wasserstein(mu, nu)
    with pytest.raises(ParameterError):
        pf.wasserstein(mu, mu, 0.5)


def test_joint_convergence_of_all_three_metrics():
    # quantizations of the uniform measure at nested dyadic scales draw
    # together in every metric, monotonically and below 0.1 at the last step
    c = pf.circle()
    uni = pf.UniformMeasure(c)
    levels = {k: pf.quantize(uni, pf.build_grid(c, 2.0 ** -k)) for k in range(2, 12)}
    basis = pf.WeakStarBasis.default(c, 20)
    for fn in (lambda u, v: pf.wasserstein(u, v, 1.0)[0],
               pf.prokhorov,
               lambda u, v: pf.weak_star(u, v, basis)[0]):
        values = [fn(levels[k], levels[k + 3]) for k in range(2, 9)]
        assert all(values[i + 1] <= values[i] + 1e-12 for i in range(len(values) - 1))
        assert values[-1] < 0.1


def test_transport_vertices_cover_optimum():
    verts = pf.transport_polytope_vertices([1 / 3, 2 / 3], [1 / 3, 2 / 3])
    assert len(verts) == 2
    for v in verts:
        assert np.allclose(v.sum(axis=1), [1 / 3, 2 / 3])
        assert np.allclose(v.sum(axis=0), [1 / 3, 2 / 3])
    rng = np.random.default_rng(83)
    c = pf.circle()
    w = np.ldexp(1.0, np.arange(3)) / 7.0
    verts3 = pf.transport_polytope_vertices(w, w)
    for _ in range(50):
        pts_a, pts_b = c.random_points(rng, 3), c.random_points(rng, 3)
        mu = pf.AtomicMeasure.create(c, pts_a, w)
        nu = pf.AtomicMeasure.create(c, pts_b, w)
        cost = c.pairwise(pts_a, pts_b)
        batched = min(float((v * cost).sum()) for v in verts3)
        solver = pf.wasserstein(mu, nu, 1.0)[0]
        assert abs(batched - solver) <= 1e-12


def test_hat_axis_shape():
    hat = _HatAxis(0.25, 0.25, wrap=True)
    assert hat(np.array([0.25]))[0] == 1.0
    assert hat(np.array([0.5]))[0] == 0.0
    assert hat(np.array([0.375]))[0] == pytest.approx(0.5)
