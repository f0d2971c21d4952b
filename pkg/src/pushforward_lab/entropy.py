"""Topological entropy estimation through (n, eps)-separated sets.

The Bowen metric d_n(x, y) = max_{0 <= k < n} d(T^k x, T^k y) is evaluated on
deterministic samples; a greedy lexicographic scan returns a maximal packing,
which is an explicit lower bound for the separated-set count sep(n, eps).
Least-squares slopes of log sep against n, per eps and away from saturation,
estimate the entropy; the reported value is the slope at the smallest usable
eps.

Three kinds of context are supported: point samples under the base metric,
products of two systems under the max metric (per-factor Bowen matrices make
pair distances a table lookup), and samples of dyadically weighted atomic
measures driven by the push-forward and compared in a measure metric.  For
the measure contexts at Wasserstein-1, pair distances are batched by
minimizing over the precomputed vertices of the fixed transportation
polytope, which is exact and agrees with the general solver.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (
    EstimateInvalidError,
    ParameterError,
    UnsupportedSystemError,
)
from .measures import AtomicMeasure, dyadic_embed, push_forward
from .metrics import _BipartiteFlow, prokhorov, transport_polytope_vertices, wasserstein
from .spaces import ModelSpace, SystemMap, _as_points


def _subcoupling_mass_table(weights: np.ndarray) -> np.ndarray:
    """Max subcoupling mass between two copies of ``weights`` per edge mask.

    Entry ``mask`` is the largest total mass a sub-coupling can place on the
    atom pairs (i, j) whose bit ``i * A + j`` is set.  With the mask table the
    exact coupling characterization of the Prokhorov distance reduces to table
    lookups along the sorted pair distances.
    """
    a = len(weights)
    table = np.zeros(1 << (a * a))
    for mask in range(1, 1 << (a * a)):
        engine = _BipartiteFlow(weights, weights)
        allowed = np.zeros((a, a), dtype=bool)
        for bit in range(a * a):
            if mask >> bit & 1:
                allowed[bit // a, bit % a] = True
        engine.activate(allowed)
        table[mask] = engine.maximize()
    return table

SATURATION_FRACTION = 0.9
_SAMPLE_CAP = 1 << 16
_RECENT_WINDOW = 64

EMBEDDED_METRICS = ("wasserstein_1", "prokhorov")


def sample_grid(space: ModelSpace, per_axis: int) -> np.ndarray:
    """Deterministic uniform grid on a model space, in lexicographic order."""
    if per_axis < 1:
        raise ParameterError("need at least one grid point per axis")
    kind = space.kind
    if kind == "circle":
        return (np.arange(per_axis) / per_axis)[:, None]
    if kind == "interval":
        if per_axis == 1:
            return np.array([[0.5]])
        return np.linspace(0.0, 1.0, per_axis)[:, None]
    if kind == "square":
        axis = np.linspace(0.0, 1.0, per_axis) if per_axis > 1 else np.array([0.5])
        return np.array([[x, y] for x in axis for y in axis])
    if kind == "solid_torus":
        phi = np.arange(per_axis) / per_axis
        axis = np.linspace(-1.0, 1.0, per_axis) if per_axis > 1 else np.array([0.0])
        pts = [[p, x, y] for p in phi for x in axis for y in axis if x * x + y * y <= 1.0]
        return np.array(pts)
    if kind == "finite":
        n = space.n  # type: ignore[attr-defined]
        return np.arange(n, dtype=float)[:, None]
    raise UnsupportedSystemError(f"no grid sampler for space kind {kind!r}")


def grid_resolution(space: ModelSpace, per_axis: int) -> float:
    if space.kind == "circle":
        return 1.0 / per_axis
    if space.kind == "finite":
        return 1.0
    return 1.0 / max(per_axis - 1, 1)


@dataclass
class BowenContext:
    """A sample with a dynamics and a metric, ready for separated-set counts.

    ``kind`` is ``points`` (base metric), ``product`` (max metric over two
    factor systems) or ``measures`` (push-forward dynamics under a measure
    metric).  Orbit data is grown lazily and cached.
    """

    kind: str
    system: Optional[SystemMap] = None
    sample_points: Optional[np.ndarray] = None
    resolution: Optional[float] = None
    metric: str = "base"
    # product contexts
    system_b: Optional[SystemMap] = None
    factor_points: Optional[tuple] = None
    pair_index: Optional[np.ndarray] = None
    # a sample that covers the whole space exactly (finite grids): counts are
    # exact and the saturation cut does not apply
    exhaustive: bool = False
    # measure contexts
    n_embed: int = 0
    weights: Optional[np.ndarray] = None
    _orbits: Optional[np.ndarray] = field(default=None, repr=False)
    _tracks: Optional[np.ndarray] = field(default=None, repr=False)
    _factor_bowen: dict = field(default_factory=dict, repr=False)
    _verts: Optional[np.ndarray] = field(default=None, repr=False)
    _flow_table: Optional[np.ndarray] = field(default=None, repr=False)
    _depth: int = field(default=0, repr=False)

    # -- constructors --------------------------------------------------------

    @staticmethod
    def from_points(system: SystemMap, points, resolution: Optional[float] = None) -> "BowenContext":
        pts = _as_points(points, system.space.dim)
        if len(pts) == 0:
            raise ParameterError("the sample must be nonempty")
        exhaustive = False
        if system.space.kind == "finite":
            exhaustive = len(np.unique(pts[:, 0])) == system.space.n  # type: ignore[attr-defined]
        return BowenContext("points", system=system, sample_points=pts,
                            resolution=resolution, exhaustive=exhaustive)

    @staticmethod
    def from_grid(system: SystemMap, per_axis: int) -> "BowenContext":
        pts = sample_grid(system.space, per_axis)
        return BowenContext("points", system=system, sample_points=pts,
                            resolution=grid_resolution(system.space, per_axis),
                            exhaustive=system.space.kind == "finite")

    @staticmethod
    def product(system_a: SystemMap, system_b: SystemMap,
                per_axis_a: int, per_axis_b: int) -> "BowenContext":
        if per_axis_a * per_axis_b > _SAMPLE_CAP:
            raise ParameterError(f"product sample exceeds the cap of {_SAMPLE_CAP} tuples")
        ga = sample_grid(system_a.space, per_axis_a)
        gb = sample_grid(system_b.space, per_axis_b)
        pair_index = np.array([(ia, ib) for ia in range(len(ga)) for ib in range(len(gb))])
        res = max(grid_resolution(system_a.space, per_axis_a),
                  grid_resolution(system_b.space, per_axis_b))
        return BowenContext("product", system=system_a, system_b=system_b,
                            factor_points=(ga, gb), pair_index=pair_index,
                            resolution=res, metric="max")

    @staticmethod
    def embedded(system: SystemMap, n_embed: int, per_axis: int,
                 metric: str = "wasserstein_1") -> "BowenContext":
        if n_embed < 1:
            raise ParameterError("the embedding needs at least one atom")
        if metric not in EMBEDDED_METRICS:
            raise ParameterError(f"embedded metric must be one of {EMBEDDED_METRICS}")
        if system.space.kind == "finite":
            raise UnsupportedSystemError("the embedded estimator needs a continuum space")
        if per_axis ** n_embed > _SAMPLE_CAP:
            raise ParameterError(
                f"tuple sample {per_axis}^{n_embed} exceeds the cap of {_SAMPLE_CAP}")
        axis = sample_grid(system.space, per_axis)
        combos = np.array(list(itertools.product(range(len(axis)), repeat=n_embed)))
        tracks0 = axis[combos]  # (S, n_embed, dim)
        weights = np.ldexp(1.0, np.arange(n_embed)) / (2.0 ** n_embed - 1.0)
        ctx = BowenContext("measures", system=system, metric=metric,
                           n_embed=n_embed, weights=weights,
                           resolution=grid_resolution(system.space, per_axis))
        ctx._tracks = tracks0[:, None, :, :]  # (S, 1, A, dim)
        ctx._depth = 1
        return ctx

    # -- sizes ----------------------------------------------------------------

    @property
    def sample_size(self) -> int:
        if self.kind == "points":
            return len(self.sample_points)
        if self.kind == "product":
            return len(self.pair_index)
        return self._tracks.shape[0]

    # -- orbit preparation ----------------------------------------------------

    def prepare(self, depth: int) -> None:
        """Extend cached orbits so Bowen distances up to d_depth are available."""
        if self.kind == "points":
            if self._orbits is None:
                self._orbits = self.sample_points[:, None, :]
            while self._orbits.shape[1] < depth:
                last = self._orbits[:, -1, :]
                nxt = self.system.evaluate_many(last)
                self._orbits = np.concatenate([self._orbits, nxt[:, None, :]], axis=1)
        elif self.kind == "product":
            for which, system in ((0, self.system), (1, self.system_b)):
                pts = self.factor_points[which]
                key = ("orbit", which)
                orb = self._factor_bowen.get(key)
                if orb is None:
                    orb = pts[:, None, :]
                while orb.shape[1] < depth:
                    nxt = system.evaluate_many(orb[:, -1, :])
                    orb = np.concatenate([orb, nxt[:, None, :]], axis=1)
                self._factor_bowen[key] = orb
            self._extend_factor_tables(depth)
        else:
            S, _, A, dim = self._tracks.shape
            while self._depth < depth:
                last = self._tracks[:, -1, :, :].reshape(S * A, dim)
                nxt = self.system.evaluate_many(last).reshape(S, 1, A, dim)
                self._tracks = np.concatenate([self._tracks, nxt], axis=1)
                self._depth += 1
            if self.metric == "wasserstein_1" and self._verts is None:
                self._verts = transport_polytope_vertices(self.weights, self.weights)
            if self.metric == "prokhorov" and self._flow_table is None:
                self._flow_table = _subcoupling_mass_table(self.weights)

    def _extend_factor_tables(self, depth: int) -> None:
        for which, system in ((0, self.system), (1, self.system_b)):
            orb = self._factor_bowen[("orbit", which)]
            space = system.space
            level = 1
            prev = self._factor_bowen.get(("bowen", which, 1))
            if prev is None:
                prev = space.distance_array(orb[:, None, 0, :], orb[None, :, 0, :])
                self._factor_bowen[("bowen", which, 1)] = prev
            while level < depth:
                level += 1
                cur = self._factor_bowen.get(("bowen", which, level))
                if cur is None:
                    prev = self._factor_bowen[("bowen", which, level - 1)]
                    step = space.distance_array(orb[:, None, level - 1, :],
                                                orb[None, :, level - 1, :])
                    self._factor_bowen[("bowen", which, level)] = np.maximum(prev, step)

    # -- greedy packing scans ---------------------------------------------------

    def _measure_at(self, sample_index: int, step: int) -> AtomicMeasure:
        pts = self._tracks[sample_index, step]
        return AtomicMeasure.create(self.system.space, pts, self.weights)

    def _scan(self, n: int, eps: float, cap: Optional[int] = None):
        """Greedy lexicographic (n, eps)-packing; returns (count, hit_cap).

        Kept orbit blocks are staged in a contiguous buffer; candidates are
        first checked against the most recent keeps (their likeliest near
        neighbours in scan order) before the full block.
        """
        self.prepare(n)
        size = self.sample_size
        limit = size if cap is None else min(cap, size)
        if self.kind == "points":
            orb = self._orbits[:, :n, :]
            space = self.system.space
            if orb.shape[2] == 1 and space.kind in ("circle", "interval"):
                # flat buffers and in-place arithmetic: this scan dominates the
                # runtime of fine-grid estimates
                flat = np.ascontiguousarray(orb[:, :, 0])
                wrap = space.kind == "circle"
                buf = np.empty((limit, n))
                work = np.empty((limit, n))
                work2 = np.empty((limit, n))

                def reject(c, count):
                    oc = flat[c]
                    r0 = max(0, count - _RECENT_WINDOW)
                    for lo, hi in ((r0, count), (0, r0)):
                        if hi <= lo:
                            continue
                        ww = work[lo:hi]
                        np.subtract(buf[lo:hi], oc[None, :], out=ww)
                        np.abs(ww, out=ww)
                        if wrap:
                            w2 = work2[lo:hi]
                            np.subtract(1.0, ww, out=w2)
                            np.minimum(ww, w2, out=ww)
                        if float(ww.max(axis=1).min()) < eps:
                            return True
                    return False

                def push(c, count):
                    buf[count] = flat[c]
            else:
                buf = np.empty((limit, n, orb.shape[2]))

                def reject(c, count):
                    oc = orb[c][None]
                    r0 = max(0, count - _RECENT_WINDOW)
                    d = space.distance_array(buf[r0:count], oc).max(axis=1)
                    if float(d.min()) < eps:
                        return True
                    if r0:
                        d = space.distance_array(buf[:r0], oc).max(axis=1)
                        if float(d.min()) < eps:
                            return True
                    return False

                def push(c, count):
                    buf[count] = orb[c]

        elif self.kind == "product":
            da = self._factor_bowen[("bowen", 0, n)]
            db = self._factor_bowen[("bowen", 1, n)]
            pa = self.pair_index[:, 0]
            pb = self.pair_index[:, 1]
            kept_a = np.empty(limit, dtype=np.int64)
            kept_b = np.empty(limit, dtype=np.int64)

            def reject(c, count):
                r0 = max(0, count - _RECENT_WINDOW)
                d = np.maximum(da[pa[c], kept_a[r0:count]], db[pb[c], kept_b[r0:count]])
                if float(d.min()) < eps:
                    return True
                if r0:
                    d = np.maximum(da[pa[c], kept_a[:r0]], db[pb[c], kept_b[:r0]])
                    if float(d.min()) < eps:
                        return True
                return False

            def push(c, count):
                kept_a[count] = pa[c]
                kept_b[count] = pb[c]

        elif self.metric == "wasserstein_1":
            tracks = self._tracks[:, :n]
            space = self.system.space
            verts = self._verts
            buf = np.empty((limit,) + tracks.shape[1:])

            def reject(c, count):
                tc = tracks[c]
                r0 = max(0, count - _RECENT_WINDOW)
                cost = space.distance_array(buf[r0:count, :, :, None, :],
                                            tc[None, :, None, :, :])
                d = np.einsum("snij,vij->snv", cost, verts).min(axis=2).max(axis=1)
                if float(d.min()) < eps:
                    return True
                if r0:
                    cost = space.distance_array(buf[:r0, :, :, None, :],
                                                tc[None, :, None, :, :])
                    d = np.einsum("snij,vij->snv", cost, verts).min(axis=2).max(axis=1)
                    if float(d.min()) < eps:
                        return True
                return False

            def push(c, count):
                buf[count] = tracks[c]

        else:
            tracks = self._tracks[:, :n]
            space = self.system.space
            A = self.n_embed
            table = self._flow_table
            buf = np.empty((limit,) + tracks.shape[1:])

            def block_dp(block, tc):
                # exact Prokhorov per orbit step: scan the sorted atom
                # distances, reading the max subcoupling mass off the
                # edge-mask table, then take the Bowen max
                s = block.shape[0]
                dist = space.distance_array(block[:, :, :, None, :],
                                            tc[None, :, None, :, :]).reshape(s, n, A * A)
                order = np.argsort(dist, axis=-1, kind="stable")
                sd = np.take_along_axis(dist, order, -1)
                mask = np.zeros((s, n), dtype=np.int64)
                best = np.ones((s, n))
                for k in range(A * A):
                    mask |= np.left_shift(1, order[..., k])
                    np.minimum(best, np.maximum(sd[..., k], 1.0 - table[mask]), out=best)
                return best.max(axis=1)

            def reject(c, count):
                tc = tracks[c]
                r0 = max(0, count - _RECENT_WINDOW)
                if float(block_dp(buf[r0:count], tc).min()) < eps:
                    return True
                if r0 and float(block_dp(buf[:r0], tc).min()) < eps:
                    return True
                return False

            def push(c, count):
                buf[count] = tracks[c]

        count = 0
        for c in range(size):
            if count and reject(c, count):
                continue
            if count >= limit:
                return count, True
            push(c, count)
            count += 1
        return count, count >= limit and limit < size


# ---------------------------------------------------------------------------
# Public per-pair operations
# ---------------------------------------------------------------------------


def bowen_distance(ctx: BowenContext, x, y, n: int) -> float:
    """d_n(x, y) = max over the first n iterates of the context's metric.

    For measure contexts ``x`` and ``y`` are atomic measures and the dynamics
    is the push-forward itself.
    """
    if n < 1:
        raise ParameterError("Bowen distance needs n >= 1")
    if ctx.kind == "points":
        space = ctx.system.space
        a = space.validate_point(x)
        b = space.validate_point(y)
        worst = 0.0
        for _ in range(n):
            worst = max(worst, float(space.distance_array(a, b)))
            a = ctx.system.evaluate_many(a[None, :])[0]
            b = ctx.system.evaluate_many(b[None, :])[0]
        return worst
    if ctx.kind == "product":
        (xa, xb), (ya, yb) = x, y
        sa, sb = ctx.system.space, ctx.system_b.space
        a1, b1 = sa.validate_point(xa), sa.validate_point(ya)
        a2, b2 = sb.validate_point(xb), sb.validate_point(yb)
        worst = 0.0
        for _ in range(n):
            worst = max(worst, float(sa.distance_array(a1, b1)),
                        float(sb.distance_array(a2, b2)))
            a1 = ctx.system.evaluate_many(a1[None, :])[0]
            b1 = ctx.system.evaluate_many(b1[None, :])[0]
            a2 = ctx.system_b.evaluate_many(a2[None, :])[0]
            b2 = ctx.system_b.evaluate_many(b2[None, :])[0]
        return worst
    # measures: literal push-forward orbit under the selected metric
    mu, nu = x, y
    worst = 0.0
    for _ in range(n):
        if ctx.metric == "wasserstein_1":
            worst = max(worst, wasserstein(mu, nu, 1.0)[0])
        else:
            worst = max(worst, prokhorov(mu, nu))
        mu = push_forward(ctx.system, mu)
        nu = push_forward(ctx.system, nu)
    return worst


def separated_count(ctx: BowenContext, n: int, eps: float) -> int:
    """Greedy-maximal (n, eps)-packing size of the sample: a lower bound for sep.

    The sample is scanned in its deterministic order; a point is kept iff its
    Bowen distance to every already-kept point is at least eps.
    """
    if n < 1:
        raise ParameterError("separated counts need n >= 1")
    if eps <= 0:
        raise ParameterError("eps must be positive")
    count, _ = ctx._scan(n, eps, cap=None)
    return count


# ---------------------------------------------------------------------------
# Estimates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EntropyEstimate:
    """Separated-set counts over an (n, eps) grid plus per-eps growth slopes.

    ``counts[e][i]`` is the greedy lower bound at ``(n_values[i], eps_list[e])``;
    cells at or above the saturation fraction of the sample are flagged and
    excluded from the regression windows.  ``h_estimate`` is the slope at the
    smallest eps whose window kept at least two points.
    """

    eps_list: tuple
    n_values: tuple
    counts: np.ndarray
    saturated: np.ndarray
    slopes: tuple
    windows: tuple
    h_estimate: float
    sample_size: int
    descriptor: dict

    def rows(self):
        """Flat (eps, n, count, saturated) rows for tabular output."""
        for e, eps in enumerate(self.eps_list):
            for i, n in enumerate(self.n_values):
                yield eps, n, int(self.counts[e, i]), bool(self.saturated[e, i])

    def to_json_dict(self) -> dict:
        return {
            "eps_list": list(self.eps_list),
            "n_values": list(self.n_values),
            "slopes": [None if math.isnan(s) else s for s in self.slopes],
            "windows": [list(w) for w in self.windows],
            "h_estimate": self.h_estimate,
            "sample_size": self.sample_size,
            "descriptor": self.descriptor,
        }


def entropy_estimate(ctx: BowenContext, eps_list, n_range, threads: int = 1,
                     descriptor: Optional[dict] = None) -> EntropyEstimate:
    """Count table, per-eps regression slopes, and the extrapolated entropy.

    Requires at least four n values and a sample resolution finer than a
    quarter of the smallest eps (when the resolution is known).  Saturated
    cells (count at or above 0.9 of the sample) flatten growth and are
    excluded; if every eps saturates everywhere the estimate is invalid.
    """
    eps_list = tuple(float(e) for e in eps_list)
    n_values = tuple(int(n) for n in n_range)
    if len(n_values) < 4:
        raise ParameterError("n_range needs at least 4 values")
    if sorted(n_values) != list(n_values) or len(set(n_values)) != len(n_values):
        raise ParameterError("n_range must be strictly increasing")
    if min(n_values) < 1:
        raise ParameterError("n values must be at least 1")
    if not eps_list or min(eps_list) <= 0:
        raise ParameterError("eps_list must contain positive values")
    if ctx.resolution is not None and ctx.resolution >= min(eps_list) / 4.0:
        raise ParameterError(
            f"sample resolution {ctx.resolution} is too coarse for eps {min(eps_list)}; "
            "need resolution < eps / 4")
    ctx.prepare(max(n_values))
    size = ctx.sample_size
    if ctx.exhaustive:
        sat_threshold = size + 1  # exhaustive samples give exact counts
    else:
        sat_threshold = int(math.ceil(SATURATION_FRACTION * size))

    def run_row(e):
        # scans stop at the saturation threshold; once a row saturates, later
        # n inherit the previous count (counts are nondecreasing in n)
        row_counts = np.zeros(len(n_values), dtype=np.int64)
        row_sat = np.zeros(len(n_values), dtype=bool)
        done = False
        for i, n in enumerate(n_values):
            if done:
                row_counts[i] = row_counts[i - 1]
                row_sat[i] = True
                continue
            count, hit = ctx._scan(n, eps_list[e], cap=sat_threshold)
            row_counts[i] = count
            row_sat[i] = hit or count >= sat_threshold
            done = row_sat[i]
        return e, row_counts, row_sat

    counts = np.zeros((len(eps_list), len(n_values)), dtype=np.int64)
    saturated = np.zeros((len(eps_list), len(n_values)), dtype=bool)
    rows = range(len(eps_list))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run_row, rows))
    else:
        results = [run_row(e) for e in rows]
    for e, row_counts, row_sat in results:
        counts[e] = row_counts
        saturated[e] = row_sat

    slopes = []
    windows = []
    for e in range(len(eps_list)):
        win = [i for i in range(len(n_values)) if not saturated[e, i]]
        windows.append(tuple(n_values[i] for i in win))
        if len(win) >= 2:
            xs = np.array([n_values[i] for i in win], dtype=float)
            ys = np.log(counts[e, win].astype(float))
            slopes.append(float(np.polyfit(xs, ys, 1)[0]))
        else:
            slopes.append(float("nan"))
    order = np.argsort(eps_list)
    h_estimate = None
    for e in order:
        if not math.isnan(slopes[e]):
            h_estimate = slopes[e]
            break
    if h_estimate is None:
        raise EstimateInvalidError(
            "all eps scales saturated on this sample; use a finer sample")
    desc = dict(descriptor or {})
    desc.setdefault("resolution", ctx.resolution)
    desc.setdefault("metric", ctx.metric)
    return EntropyEstimate(eps_list, n_values, counts, saturated, tuple(slopes),
                           tuple(windows), h_estimate, size, desc)


def entropy_embedded_Dn(system: SystemMap, n_embed: int, metric: str,
                        eps_list, n_range, sample_per_axis: int,
                        threads: int = 1) -> EntropyEstimate:
    """Entropy of the push-forward restricted to dyadically weighted n-tuples.

    The sample is the image of a tuple grid under the dyadic embedding; the
    dynamics is the push-forward and the base metric is a measure metric, so
    the expected slope is n_embed times the base-map entropy.
    """
    ctx = BowenContext.embedded(system, n_embed, sample_per_axis, metric)
    desc = {"system": system.name, "n_embed": n_embed,
            "sample_per_axis": sample_per_axis}
    return entropy_estimate(ctx, eps_list, n_range, threads=threads, descriptor=desc)


def entropy_product(system_a: SystemMap, system_b: SystemMap, eps_list, n_range,
                    per_axis_a: int = 128, per_axis_b: int = 128,
                    threads: int = 1) -> EntropyEstimate:
    """Entropy estimate of the product map under the max product metric."""
    for s in (system_a, system_b):
        if s.space.kind == "finite":
            raise UnsupportedSystemError("the product estimator needs continuum spaces")
    ctx = BowenContext.product(system_a, system_b, per_axis_a, per_axis_b)
    desc = {"system_a": system_a.name, "system_b": system_b.name,
            "per_axis": [per_axis_a, per_axis_b]}
    return entropy_estimate(ctx, eps_list, n_range, threads=threads, descriptor=desc)
