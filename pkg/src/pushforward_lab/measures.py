"""Atomic probability measures, push-forward, and the finite matrix calculus.

An atomic measure is a finite list of (point, weight) atoms with positive
weights.  Construction merges atoms closer than the merge tolerance and drops
zero weights, so the representation is canonical up to atom order.  On the
truncated shift, atoms pushed past the window are removed and their mass is
reported in ``escaped_mass``; weights plus escaped mass always total 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import (
    DimensionError,
    NotPeriodicError,
    ParameterError,
    SpaceMismatchError,
    UnsupportedSystemError,
)
from .spaces import FiniteSpace, GridPartition, ModelSpace, SystemMap, _as_points

MERGE_TOL = 1e-12
MASS_TOL = 1e-12


def _merge(space: ModelSpace, points: np.ndarray, weights: np.ndarray):
    """Cluster atoms within the merge tolerance; first occurrence keeps the slot.

    Weights are summed in encounter order, so pushing a simplex vector forward
    at atom level reproduces the matrix arithmetic bit for bit.
    """
    k = len(points)
    if k <= 1:
        return points, weights
    dist = space.pairwise(points, points)
    np.fill_diagonal(dist, np.inf)
    if dist.min() > MERGE_TOL:
        return points, weights
    rep_rows: list[int] = []
    members: list[list[int]] = []
    for i in range(k):
        placed = False
        for c, r in enumerate(rep_rows):
            if dist[i, r] <= MERGE_TOL:
                members[c].append(i)
                placed = True
                break
        if not placed:
            rep_rows.append(i)
            members.append([i])
    new_points = np.empty((len(rep_rows), points.shape[1]))
    new_weights = np.empty(len(rep_rows))
    for c, rows in enumerate(members):
        if len(rows) == 1:
            new_points[c] = points[rows[0]]
            new_weights[c] = weights[rows[0]]
        else:
            idx = np.array(rows)
            new_points[c] = space.merge_point(points[idx], weights[idx])
            acc = 0.0
            for r in rows:
                acc += weights[r]
            new_weights[c] = acc
    return new_points, new_weights


@dataclass(frozen=True)
class AtomicMeasure:
    """A finitely supported probability measure on a model space."""

    space: ModelSpace
    points: np.ndarray  # (k, dim)
    weights: np.ndarray  # (k,)
    escaped_mass: float = 0.0

    @staticmethod
    def create(space: ModelSpace, points, weights, escaped_mass: float = 0.0) -> "AtomicMeasure":
        pts = _as_points(points, space.dim) if np.size(points) else np.empty((0, space.dim))
        w = np.atleast_1d(np.asarray(weights, dtype=float))
        if pts.shape[0] != w.shape[0]:
            raise DimensionError(f"{pts.shape[0]} points but {w.shape[0]} weights")
        if np.any(w < 0):
            raise ParameterError("atom weights must be nonnegative")
        keep = w > 0
        pts, w = pts[keep], w[keep]
        if len(pts):
            space.check_points(pts)
            pts, w = _merge(space, pts, w)
        total = float(w.sum()) + escaped_mass
        if abs(total - 1.0) > MASS_TOL:
            raise ParameterError(f"weights plus escaped mass total {total}, expected 1")
        if len(pts) == 0 and escaped_mass < 1.0 - MASS_TOL:
            raise ParameterError("a measure with no atoms requires escaped mass 1")
        pts.setflags(write=False)
        w.setflags(write=False)
        return AtomicMeasure(space, pts, w, float(escaped_mass))

    @staticmethod
    def delta(space: ModelSpace, point) -> "AtomicMeasure":
        return AtomicMeasure.create(space, _as_points(point, space.dim), [1.0])

    @property
    def atom_count(self) -> int:
        return len(self.weights)

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    def canonical(self) -> "AtomicMeasure":
        """Atoms sorted lexicographically by coordinates (for comparisons)."""
        order = np.lexsort(self.points.T[::-1])
        return AtomicMeasure(self.space, self.points[order], self.weights[order],
                             self.escaped_mass)

    def simplex_vector(self) -> np.ndarray:
        """Dense weight vector indexed by the finite space's points."""
        if not isinstance(self.space, FiniteSpace):
            raise UnsupportedSystemError("simplex vectors exist only on finite spaces")
        v = np.zeros(self.space.n)
        idx = self.space.index_of(self.points)
        np.add.at(v, idx, self.weights)
        return v

    def to_json_dict(self) -> dict:
        out = {"atoms": [{"point": p.tolist(), "weight": float(w)}
                         for p, w in zip(self.points, self.weights)]}
        if self.escaped_mass > 0:
            out["escaped_mass"] = self.escaped_mass
        return out


@dataclass(frozen=True)
class UniformMeasure:
    """Marker for the uniform reference measure, quantized in closed form."""

    space: ModelSpace


def measures_close(mu: AtomicMeasure, nu: AtomicMeasure, tol: float = 1e-9) -> bool:
    """Equality up to atom reorder: matched atoms within tol, weights within tol."""
    if mu.atom_count != nu.atom_count:
        return False
    a, b = mu.canonical(), nu.canonical()
    if np.any(np.abs(a.weights - b.weights) > tol):
        return False
    d = mu.space.distance_array(a.points, b.points)
    return bool(np.all(d <= tol)) and abs(mu.escaped_mass - nu.escaped_mass) <= tol


def random_measure(space: ModelSpace, rng: np.random.Generator, max_atoms: int = 20) -> AtomicMeasure:
    """Random atomic measure: atom count uniform on 1..max_atoms, flat Dirichlet weights."""
    k = int(rng.integers(1, max_atoms + 1))
    points = space.random_points(rng, k)
    weights = rng.dirichlet(np.ones(k))
    return AtomicMeasure.create(space, points, weights)


# ---------------------------------------------------------------------------
# Push-forward
# ---------------------------------------------------------------------------


def push_forward(system: SystemMap, mu: AtomicMeasure) -> AtomicMeasure:
    """Image measure under the map: each atom (x, w) becomes (T(x), w).

    Coinciding images merge by weight addition.  On the truncated shift,
    atoms at the last window index are removed and their mass is added to
    ``escaped_mass`` of the result.
    """
    if mu.space != system.space:
        raise SpaceMismatchError("measure does not live on the system's space")
    if mu.atom_count == 0:
        return mu
    escaped = mu.escaped_mass
    points, weights = mu.points, mu.weights
    if system.name == "shift":
        n = system.space.n  # type: ignore[attr-defined]
        idx = np.round(points[:, 0]).astype(int)
        leaving = idx >= n - 1
        if np.any(leaving):
            escaped += float(weights[leaving].sum())
            points, weights = points[~leaving], weights[~leaving]
        if len(points) == 0:
            return AtomicMeasure(system.space, np.empty((0, 1)), np.empty(0), escaped)
    images = system.evaluate_many(points)
    return AtomicMeasure.create(system.space, images, weights, escaped_mass=escaped)


# ---------------------------------------------------------------------------
# Finite matrix calculus
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PushForwardMatrix:
    """0/1 matrix of a total finite map and its adjoint acting on the simplex.

    ``t_matrix[i, j] == 1`` iff the map sends index i to index j, so each row
    has exactly one 1; ``phi_matrix`` is the transpose and carries weight
    vectors forward.
    """

    n: int
    table: np.ndarray  # (n,) image indices
    t_matrix: np.ndarray  # (n, n) int
    phi_matrix: np.ndarray  # (n, n) int

    def to_json_dict(self) -> dict:
        return {
            "n": self.n,
            "t_matrix": self.t_matrix.tolist(),
            "phi_matrix": self.phi_matrix.tolist(),
        }


def matrix_of(system: SystemMap) -> PushForwardMatrix:
    if not isinstance(system.space, FiniteSpace):
        raise UnsupportedSystemError("matrices exist only for systems on finite spaces")
    if not system.is_total:
        raise UnsupportedSystemError("the truncated shift is not total; it has no matrix")
    n = system.space.n
    idx = np.arange(n, dtype=float)[:, None]
    table = np.round(system.evaluate_many(idx)[:, 0]).astype(int)
    t = np.zeros((n, n), dtype=int)
    t[np.arange(n), table] = 1
    table.setflags(write=False)
    t.setflags(write=False)
    phi = t.T
    return PushForwardMatrix(n, table, t, phi)


def apply_matrix(m: PushForwardMatrix, p) -> np.ndarray:
    """Push a simplex vector forward: the adjoint action q = phi_matrix @ p.

    Implemented as an index scatter-add in ascending source order so the
    result is bitwise identical to atom-level push-forward.
    """
    p = np.asarray(p, dtype=float)
    if p.shape != (m.n,):
        raise DimensionError(f"expected a vector of length {m.n}, got shape {p.shape}")
    if np.any(p < 0) or abs(float(p.sum()) - 1.0) > MASS_TOL:
        raise ParameterError("input must be a probability vector on the simplex")
    q = np.zeros(m.n)
    np.add.at(q, m.table, p)
    return q


# ---------------------------------------------------------------------------
# Test functions and integration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _BreakpointAxis:
    """Piecewise-linear profile on one coordinate, optionally periodic."""

    breakpoints: np.ndarray
    values: np.ndarray
    lo: float
    hi: float
    periodic: bool = False

    def __call__(self, t: np.ndarray) -> np.ndarray:
        if self.periodic:
            span = self.hi - self.lo
            t = (t - self.lo) % span + self.lo
            xs = np.concatenate([self.breakpoints, [self.breakpoints[0] + span]])
            ys = np.concatenate([self.values, [self.values[0]]])
            return np.interp(t, xs, ys)
        return np.interp(t, self.breakpoints, self.values)


@dataclass(frozen=True)
class _HatAxis:
    """Tent function max(0, 1 - dist(t, center)/width) on one coordinate."""

    center: float
    width: float
    wrap: bool = False

    def __call__(self, t: np.ndarray) -> np.ndarray:
        d = np.abs(t - self.center)
        if self.wrap:
            d = np.minimum(d, 1.0 - d)
        return np.maximum(0.0, 1.0 - d / self.width)


@dataclass(frozen=True)
class TestFunction:
    """A continuous function X -> [0, 1], a product of per-coordinate profiles.

    Finite spaces use a value table instead.  Piecewise-linear profiles keep
    integration against atomic measures exact.
    """

    space: ModelSpace
    axes: tuple = ()
    table: Optional[np.ndarray] = None

    def __call__(self, points) -> np.ndarray:
        p = _as_points(points, self.space.dim)
        if self.table is not None:
            idx = np.round(p[:, 0]).astype(int)
            return np.asarray(self.table, dtype=float)[idx]
        out = np.ones(len(p))
        for axis_index, profile in enumerate(self.axes):
            out *= profile(p[:, axis_index])
        return out

    @staticmethod
    def from_table(space: FiniteSpace, values) -> "TestFunction":
        vals = np.asarray(values, dtype=float)
        if vals.shape != (space.n,):
            raise DimensionError(f"need {space.n} values for the finite space")
        if np.any(vals < 0) or np.any(vals > 1):
            raise ParameterError("test function values must lie in [0, 1]")
        return TestFunction(space, (), vals)

    @staticmethod
    def constant(space: ModelSpace, value: float = 1.0) -> "TestFunction":
        if isinstance(space, FiniteSpace):
            return TestFunction.from_table(space, np.full(space.n, value))
        axes = [_BreakpointAxis(np.array([0.0, 1.0]), np.array([value, value]), 0.0, 1.0)]
        axes += [_BreakpointAxis(np.array([-1.0, 1.0]), np.array([1.0, 1.0]), -1.0, 1.0)
                 for _ in range(space.dim - 1)]
        return TestFunction(space, tuple(axes[: space.dim]))

    @staticmethod
    def coordinate(space: ModelSpace, axis: int = 0) -> "TestFunction":
        """The projection onto one coordinate, rescaled into [0, 1]."""
        axes = []
        for a in range(space.dim):
            lo, hi = (0.0, 1.0) if a == 0 or space.kind == "square" else (-1.0, 1.0)
            if a == axis:
                axes.append(_BreakpointAxis(np.array([lo, hi]), np.array([0.0, 1.0]), lo, hi))
            else:
                axes.append(_BreakpointAxis(np.array([lo, hi]), np.array([1.0, 1.0]), lo, hi))
        return TestFunction(space, tuple(axes))

    @staticmethod
    def random(space: ModelSpace, rng: np.random.Generator, max_breaks: int = 6) -> "TestFunction":
        """Random piecewise-linear function into [0, 1] (product form in 2-D/3-D)."""
        if isinstance(space, FiniteSpace):
            return TestFunction.from_table(space, rng.random(space.n))
        axes = []
        for a in range(space.dim):
            lo, hi = (0.0, 1.0) if a == 0 or space.kind in ("interval", "square") else (-1.0, 1.0)
            periodic = space.kind in ("circle", "solid_torus") and a == 0
            k = int(rng.integers(2, max_breaks + 1))
            inner = np.sort(rng.random(k)) * (hi - lo) + lo
            if periodic:
                # the wrap edge closes back onto the first breakpoint
                xs = np.unique(np.concatenate([[lo], inner[inner < hi]]))
            else:
                xs = np.unique(np.concatenate([[lo], inner, [hi]]))
            ys = rng.random(len(xs))
            axes.append(_BreakpointAxis(xs, ys, lo, hi, periodic=periodic))
        return TestFunction(space, tuple(axes))


def integrate(f: TestFunction, mu: AtomicMeasure) -> float:
    """The weighted atom sum of f over the measure."""
    if f.space != mu.space:
        raise SpaceMismatchError("function and measure live on different spaces")
    if mu.atom_count == 0:
        return 0.0
    return float(np.dot(mu.weights, f(mu.points)))


# ---------------------------------------------------------------------------
# Quantization and embeddings
# ---------------------------------------------------------------------------


def quantize(mu, grid: GridPartition) -> AtomicMeasure:
    """Collapse a measure onto the grid representatives, cell mass by cell mass.

    Accepts either an :class:`AtomicMeasure` (cell masses are atom-weight sums)
    or a :class:`UniformMeasure` (closed-form box masses).  Zero-mass cells are
    dropped.
    """
    reps = grid.representatives()
    if isinstance(mu, UniformMeasure):
        if mu.space != grid.space:
            raise SpaceMismatchError("grid does not partition the measure's space")
        masses = grid.uniform_cell_masses()
        return AtomicMeasure.create(grid.space, reps, masses)
    if mu.space != grid.space:
        raise SpaceMismatchError("grid does not partition the measure's space")
    idx = grid.assign_many(mu.points)
    masses = np.zeros(grid.cell_count)
    np.add.at(masses, idx, mu.weights)
    keep = masses > 0
    return AtomicMeasure.create(grid.space, reps[keep], masses[keep],
                                escaped_mass=mu.escaped_mass)


def dyadic_embed(space: ModelSpace, points) -> AtomicMeasure:
    """Embed an n-tuple of points as the measure with weights 2^(i-1)/(2^n - 1).

    Distinct tuples of pairwise-distinct points give distinct measures: a cell
    mass is a sum of distinct powers of two over 2^n - 1, and binary
    representations are unique.
    """
    pts = _as_points(points, space.dim)
    n = len(pts)
    if n < 1:
        raise ParameterError("dyadic embedding needs at least one point")
    weights = np.ldexp(1.0, np.arange(n)) / (2.0 ** n - 1.0)
    return AtomicMeasure.create(space, pts, weights)


def periodic_orbit_measure(system: SystemMap, x, period: int) -> AtomicMeasure:
    """Uniform measure on a verified periodic orbit; a fixed point of the push-forward."""
    if period < 1:
        raise ParameterError("period must be at least 1")
    x = system.space.validate_point(x)
    orbit = [x]
    for _ in range(period - 1):
        orbit.append(system.evaluate_many(orbit[-1][None, :])[0])
    back = system.evaluate_many(orbit[-1][None, :])[0]
    gap = float(system.space.distance_array(back, x))
    if gap > 1e-9:
        raise NotPeriodicError(f"orbit fails to close: T^{period}(x) is {gap:.3e} from x")
    pts = np.array(orbit)
    return AtomicMeasure.create(system.space, pts, np.full(period, 1.0 / period))
