"""Bowen distances, separated counts, and the entropy estimators."""

import numpy as np
import pytest

import pushforward_lab as pf
from pushforward_lab.entropy import BowenContext, entropy_estimate
from pushforward_lab.errors import EstimateInvalidError, ParameterError

from oracles import max_separated_oracle

GOLDEN = 0.618033988749895


def test_bowen_distance_reduces_to_base_at_one():
    db = pf.circle_doubling_map(2)
    ctx = BowenContext.from_grid(db, 64)
    rng = np.random.default_rng(3)
    for _ in range(20):
        x, y = pf.circle().random_points(rng, 2)
        assert pf.bowen_distance(ctx, x, y, 1) == pytest.approx(
            float(pf.circle().distance_array(x, y)), abs=1e-15)


def test_bowen_distance_rotation_is_flat():
    rot = pf.rotation_map(GOLDEN)
    ctx = BowenContext.from_grid(rot, 64)
    rng = np.random.default_rng(5)
    for _ in range(20):
        x, y = pf.circle().random_points(rng, 2)
        d1 = pf.bowen_distance(ctx, x, y, 1)
        for n in (2, 5, 9):
            assert pf.bowen_distance(ctx, x, y, n) == pytest.approx(d1, abs=1e-12)


def test_bowen_distance_doubling_closed_form():
    db = pf.circle_doubling_map(2)
    ctx = BowenContext.from_grid(db, 64)
    for m in (3, 5, 8):
        # the gap 2^-m doubles each step and peaks at 1/2 after m - 1 steps
        val = pf.bowen_distance(ctx, [0.0], [2.0 ** -m], m)
        assert val == pytest.approx(0.5, abs=1e-15)
        shorter = pf.bowen_distance(ctx, [0.0], [2.0 ** -m], m - 1)
        assert shorter == pytest.approx(0.25, abs=1e-15)


def test_bowen_is_a_metric_on_samples():
    db = pf.circle_doubling_map(2)
    ctx = BowenContext.from_grid(db, 32)
    rng = np.random.default_rng(7)
    pts = pf.circle().random_points(rng, 12)
    for n in (1, 3, 6):
        d = np.array([[pf.bowen_distance(ctx, a, b, n) for b in pts] for a in pts])
        assert np.abs(d - d.T).max() <= 1e-12
        assert np.all(np.diag(d) == 0)
        for i in range(len(pts)):
            for j in range(len(pts)):
                assert d[i, j] <= d[i].max() + d[j].max()  # crude triangle sanity
                for k in range(len(pts)):
                    assert d[i, j] <= d[i, k] + d[k, j] + 1e-12


def test_separated_count_discrete_space():
    f6 = pf.finite(6)
    system = pf.finite_table_map(f6, [0, 2, 4, 0, 2, 4])
    ctx = BowenContext.from_points(system, np.arange(6, dtype=float)[:, None])
    for n in (1, 2, 5):
        assert pf.separated_count(ctx, n, 0.5) == 6


def test_separated_count_circle_identity_quarter():
    ident = pf.rotation_map(0.0)
    pts = (np.arange(16) / 16)[:, None]
    ctx = BowenContext.from_points(ident, pts, resolution=1 / 16)
    count = pf.separated_count(ctx, 3, 0.25)
    assert count == max_separated_oracle(pf.circle(), pts, 0.25) == 4


def test_separated_count_monotonicity():
    db = pf.circle_doubling_map(2)
    ctx = BowenContext.from_grid(db, 512)
    eps_values = [2.0 ** -5, 2.0 ** -4, 2.0 ** -3]
    for n in (1, 2, 3, 4):
        counts = [pf.separated_count(ctx, n, e) for e in eps_values]
        assert counts == sorted(counts, reverse=True)  # nonincreasing in eps
    for eps in eps_values:
        counts = [pf.separated_count(ctx, n, eps) for n in (1, 2, 3, 4)]
        assert counts == sorted(counts)  # nondecreasing in n


def test_separated_count_lower_bound_grows_with_resolution():
    db = pf.circle_doubling_map(2)
    coarse = BowenContext.from_grid(db, 128)
    fine = BowenContext.from_grid(db, 256)
    for n in (1, 2, 3):
        for eps in (2.0 ** -4, 2.0 ** -3):
            assert pf.separated_count(fine, n, eps) >= pf.separated_count(coarse, n, eps)


def test_entropy_estimate_doubling_matches_log2():
    db = pf.circle_doubling_map(2)
    ctx = BowenContext.from_grid(db, 2048)
    est = entropy_estimate(ctx, [2.0 ** -5, 2.0 ** -4], range(2, 8))
    assert est.h_estimate == pytest.approx(np.log(2), abs=0.05)


def test_entropy_estimate_rotation_is_flat():
    rot = pf.rotation_map(GOLDEN)
    ctx = BowenContext.from_grid(rot, 2048)
    est = entropy_estimate(ctx, [2.0 ** -5, 2.0 ** -4], range(2, 8))
    assert abs(est.h_estimate) <= 0.05
    # isometry: counts are exactly constant in n
    assert np.all(est.counts == est.counts[:, :1])


def test_entropy_estimate_finite_counts_constant():
    system = pf.finite_table_map(pf.finite(5), [1, 2, 3, 4, 0])
    ctx = BowenContext.from_points(system, np.arange(5, dtype=float)[:, None])
    est = entropy_estimate(ctx, [0.5], range(1, 5))
    assert np.all(est.counts == 5)
    assert est.h_estimate == pytest.approx(0.0, abs=1e-12)


def test_entropy_estimate_validation():
    db = pf.circle_doubling_map(2)
    ctx = BowenContext.from_grid(db, 256)
    with pytest.raises(ParameterError):
        entropy_estimate(ctx, [2.0 ** -4], range(2, 5))  # only 3 n values
    with pytest.raises(ParameterError):
        entropy_estimate(ctx, [], range(1, 6))
    with pytest.raises(ParameterError):
        entropy_estimate(ctx, [1 / 128], range(1, 6))  # resolution too coarse
    tiny = BowenContext.from_grid(db, 64)
    with pytest.raises(EstimateInvalidError):
        # deep Bowen metrics separate every grid pair: every cell saturates
        entropy_estimate(tiny, [2.0 ** -3], range(8, 12))


def test_embedded_context_matches_literal_push_forward():
    # the staged orbit tracks must reproduce literal push-forward orbits
    db = pf.circle_doubling_map(2)
    ctx = BowenContext.embedded(db, 2, 8, metric="wasserstein_1")
    ctx.prepare(4)
    rng = np.random.default_rng(11)
    for _ in range(20):
        i = int(rng.integers(0, ctx.sample_size))
        mu = ctx._measure_at(i, 0)
        for step in range(1, 4):
            mu = pf.push_forward(db, mu)
            assert pf.measures_close(mu, ctx._measure_at(i, step), tol=1e-12)


def test_embedded_batched_w1_agrees_with_solver():
    db = pf.circle_doubling_map(2)
    ctx = BowenContext.embedded(db, 2, 8, metric="wasserstein_1")
    ctx.prepare(3)
    rng = np.random.default_rng(13)
    for _ in range(30):
        i, j = rng.integers(0, ctx.sample_size, size=2)
        lit = pf.bowen_distance(ctx, ctx._measure_at(int(i), 0),
                                ctx._measure_at(int(j), 0), 3)
        # the scan's batched kernel, driven through a 1-kept scan
        tracks = ctx._tracks
        space = pf.circle()
        cost = space.distance_array(tracks[int(i), :3][:, :, None, :],
                                    tracks[int(j), :3][:, None, :, :])
        vals = np.einsum("nij,vij->nv", cost, ctx._verts).min(axis=1)
        assert abs(vals.max() - lit) <= 1e-12


def test_embedded_batched_prokhorov_agrees_with_solver():
    db = pf.circle_doubling_map(2)
    ctx = BowenContext.embedded(db, 3, 6, metric="prokhorov")
    ctx.prepare(3)
    rng = np.random.default_rng(17)
    table = ctx._flow_table
    space = pf.circle()
    for _ in range(30):
        i, j = rng.integers(0, ctx.sample_size, size=2)
        lit = pf.bowen_distance(ctx, ctx._measure_at(int(i), 0),
                                ctx._measure_at(int(j), 0), 3)
        dist = space.distance_array(ctx._tracks[int(i), :3][:, :, None, :],
                                    ctx._tracks[int(j), :3][:, None, :, :]).reshape(3, 9)
        order = np.argsort(dist, axis=-1, kind="stable")
        sd = np.take_along_axis(dist, order, -1)
        mask = np.zeros(3, dtype=np.int64)
        best = np.ones(3)
        for k in range(9):
            mask |= np.left_shift(1, order[:, k])
            np.minimum(best, np.maximum(sd[:, k], 1.0 - table[mask]), out=best)
        assert abs(best.max() - lit) <= 1e-9


def test_embedded_d1_is_isometric_copy():
    # Bowen distances on single-atom measures equal base Bowen distances
    db = pf.circle_doubling_map(2)
    base = BowenContext.from_grid(db, 64)
    emb = BowenContext.embedded(db, 1, 64, metric="wasserstein_1")
    rng = np.random.default_rng(19)
    for _ in range(200):
        x, y = pf.circle().random_points(rng, 2)
        for n in (1, 3, 5):
            d_base = pf.bowen_distance(base, x, y, n)
            d_emb = pf.bowen_distance(emb, pf.AtomicMeasure.delta(pf.circle(), x),
                                      pf.AtomicMeasure.delta(pf.circle(), y), n)
            assert abs(d_base - d_emb) <= 1e-9


def test_embedded_estimates_rotation_flat():
    rot = pf.rotation_map(GOLDEN)
    est = pf.entropy_embedded_Dn(rot, 2, "wasserstein_1", [2.0 ** -3, 2.0 ** -2],
                                 range(1, 5), 36)
    assert abs(est.h_estimate) <= 0.05


def test_embedded_contraction_collapses():
    con = pf.contraction_map(0.5, 0.0)
    for n_embed, m in ((1, 256), (2, 36), (3, 18)):
        est = pf.entropy_embedded_Dn(con, n_embed, "wasserstein_1",
                                     [2.0 ** -2], range(1, 5), m)
        assert est.h_estimate <= 0.05


def test_embedded_tuple_cap_enforced():
    db = pf.circle_doubling_map(2)
    with pytest.raises(ParameterError):
        BowenContext.embedded(db, 3, 64, metric="wasserstein_1")


def test_product_context_identity_flat():
    ra = pf.rotation_map(0.0)
    rb = pf.rotation_map(0.0)
    est = pf.entropy_product(ra, rb, [2.0 ** -3], range(1, 5),
                             per_axis_a=36, per_axis_b=36)
    assert est.h_estimate == pytest.approx(0.0, abs=1e-9)


def test_product_doubling_rotation_splits():
    # n stops before the doubling factor exhausts its 128-point axis
    db = pf.circle_doubling_map(2)
    rot = pf.rotation_map(GOLDEN)
    est = pf.entropy_product(db, rot, [2.0 ** -4, 2.0 ** -3], range(1, 5),
                             per_axis_a=128, per_axis_b=128)
    assert est.h_estimate == pytest.approx(np.log(2), abs=0.2 * np.log(2))


def test_entropy_rows_export_shape():
    db = pf.circle_doubling_map(2)
    ctx = BowenContext.from_grid(db, 256)
    est = entropy_estimate(ctx, [2.0 ** -4, 2.0 ** -3], range(1, 5))
    rows = list(est.rows())
    assert len(rows) == 8
    assert all(len(r) == 4 for r in rows)
    blob = est.to_json_dict()
    assert set(blob) >= {"eps_list", "n_values", "slopes", "h_estimate", "sample_size"}
