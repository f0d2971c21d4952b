"""Model metric spaces, built-in maps on them, and grid partitions.

Five space models are supported:

* ``finite(n)``  -- indices ``0..n-1`` with the discrete metric (1 for
  distinct points, 0 otherwise),
* ``circle``     -- ``[0, 1)`` mod 1 with arc distance,
* ``interval``   -- ``[0, 1]`` with Euclidean distance,
* ``square``     -- ``[0, 1]^2`` with Euclidean distance,
* ``solid_torus`` -- ``S^1 x D^2`` as coordinates ``(phi, x, y)`` with the
  product metric ``max(arc(phi), euclidean(x, y))``.

Points are 1-D float arrays; finite indices are stored as integral floats.
All distance helpers broadcast over leading axes so orbit stacks can be
compared in a single vectorized call.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (
    EscapeError,
    InvalidPointError,
    ParameterError,
    UnsupportedSystemError,
)

POINT_TOL = 1e-12


def _as_points(x, dim: int) -> np.ndarray:
    """Coerce to a (k, dim) float array, accepting a single point or scalar."""
    p = np.asarray(x, dtype=float)
    if p.ndim == 0 and dim == 1:
        p = p.reshape(1, 1)
    elif p.ndim == 1 and p.shape[0] == dim:
        p = p[None, :]
    elif p.ndim == 1 and dim == 1:
        p = p[:, None]
    if p.ndim != 2 or p.shape[1] != dim:
        raise InvalidPointError(f"expected points of dimension {dim}, got shape {p.shape}")
    return p


class ModelSpace:
    """Base class; concrete spaces implement the raw distance and sampling."""

    kind: str = ""
    dim: int = 0
    diameter: float = 0.0

    # -- distances ---------------------------------------------------------

    def distance_array(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Distance between broadcastable stacks of points with shape (..., dim)."""
        raise NotImplementedError

    def distance(self, a, b) -> float:
        a = self.validate_point(a)
        b = self.validate_point(b)
        return float(self.distance_array(a, b))

    def pairwise(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Full (m, k) distance matrix between two point sets."""
        a = _as_points(a, self.dim)
        b = _as_points(b, self.dim)
        return self.distance_array(a[:, None, :], b[None, :, :])

    # -- membership --------------------------------------------------------

    def contains(self, points, tol: float = POINT_TOL) -> np.ndarray:
        """Boolean membership mask for a stack of candidate points."""
        raise NotImplementedError

    def validate_point(self, x) -> np.ndarray:
        p = _as_points(x, self.dim)
        if p.shape[0] != 1:
            raise InvalidPointError(f"expected one point of dimension {self.dim}, "
                                    f"got {p.shape[0]} coordinates")
        if not bool(self.contains(p)[0]):
            raise InvalidPointError(f"{p[0].tolist()} is not a point of the {self.kind} space")
        return p[0]

    def check_points(self, points: np.ndarray, tol: float = POINT_TOL) -> None:
        ok = self.contains(points, tol=tol)
        if not bool(np.all(ok)):
            bad = points[~ok][0]
            raise InvalidPointError(f"{bad.tolist()} left the {self.kind} space")

    # -- sampling ----------------------------------------------------------

    def random_points(self, rng: np.random.Generator, k: int) -> np.ndarray:
        raise NotImplementedError

    def random_point(self, rng: np.random.Generator) -> np.ndarray:
        return self.random_points(rng, 1)[0]

    # -- merge support (atomic-measure construction) ------------------------

    def merge_point(self, points: np.ndarray, weights: np.ndarray) -> np.ndarray:
        """Weight-averaged representative of a cluster of near-coincident points."""
        w = weights / weights.sum()
        return w @ points


def _arc(d: np.ndarray) -> np.ndarray:
    d = np.abs(d)
    return np.minimum(d, 1.0 - d)


@dataclass(frozen=True)
class FiniteSpace(ModelSpace):
    n: int
    kind: str = field(default="finite", init=False)
    dim: int = field(default=1, init=False)

    def __post_init__(self):
        if self.n < 1:
            raise ParameterError("finite space needs n >= 1")

    @property
    def diameter(self) -> float:  # type: ignore[override]
        return 1.0 if self.n > 1 else 0.0

    def distance_array(self, a, b):
        return (a[..., 0] != b[..., 0]).astype(float)

    def contains(self, points, tol: float = POINT_TOL) -> np.ndarray:
        p = points[..., 0]
        return (np.abs(p - np.round(p)) <= tol) & (p > -0.5) & (p < self.n - 0.5)

    def random_points(self, rng, k):
        return rng.integers(0, self.n, size=k).astype(float)[:, None]

    def merge_point(self, points, weights):
        # equal indices only; averaging would destroy integrality
        return points[0]

    def index_of(self, points: np.ndarray) -> np.ndarray:
        return np.round(np.asarray(points)[..., 0]).astype(int)

    def point(self, i: int) -> np.ndarray:
        return np.array([float(i)])


@dataclass(frozen=True)
class CircleSpace(ModelSpace):
    kind: str = field(default="circle", init=False)
    dim: int = field(default=1, init=False)
    diameter: float = field(default=0.5, init=False)

    def distance_array(self, a, b):
        return _arc(a[..., 0] - b[..., 0])

    def contains(self, points, tol: float = POINT_TOL) -> np.ndarray:
        p = points[..., 0]
        return (p >= -tol) & (p < 1.0 + tol)

    def random_points(self, rng, k):
        return rng.random(k)[:, None]

    def merge_point(self, points, weights):
        # wrap-aware: members are within the merge tolerance of points[0]
        base = points[0, 0]
        diffs = (points[:, 0] - base + 0.5) % 1.0 - 0.5
        w = weights / weights.sum()
        return np.array([(base + w @ diffs) % 1.0])


@dataclass(frozen=True)
class IntervalSpace(ModelSpace):
    kind: str = field(default="interval", init=False)
    dim: int = field(default=1, init=False)
    diameter: float = field(default=1.0, init=False)

    def distance_array(self, a, b):
        return np.abs(a[..., 0] - b[..., 0])

    def contains(self, points, tol: float = POINT_TOL) -> np.ndarray:
        p = points[..., 0]
        return (p >= -tol) & (p <= 1.0 + tol)

    def random_points(self, rng, k):
        return rng.random(k)[:, None]


@dataclass(frozen=True)
class SquareSpace(ModelSpace):
    kind: str = field(default="square", init=False)
    dim: int = field(default=2, init=False)
    diameter: float = field(default=math.sqrt(2.0), init=False)

    def distance_array(self, a, b):
        d = a - b
        return np.sqrt(np.sum(d * d, axis=-1))

    def contains(self, points, tol: float = POINT_TOL) -> np.ndarray:
        return np.all((points >= -tol) & (points <= 1.0 + tol), axis=-1)

    def random_points(self, rng, k):
        return rng.random((k, 2))


@dataclass(frozen=True)
class SolidTorusSpace(ModelSpace):
    kind: str = field(default="solid_torus", init=False)
    dim: int = field(default=3, init=False)
    diameter: float = field(default=2.0, init=False)

    def distance_array(self, a, b):
        arc = _arc(a[..., 0] - b[..., 0])
        d = a[..., 1:] - b[..., 1:]
        disk = np.sqrt(np.sum(d * d, axis=-1))
        return np.maximum(arc, disk)

    def contains(self, points, tol: float = POINT_TOL) -> np.ndarray:
        phi = points[..., 0]
        r2 = points[..., 1] ** 2 + points[..., 2] ** 2
        return (phi >= -tol) & (phi < 1.0 + tol) & (r2 <= 1.0 + 2 * tol)

    def random_points(self, rng, k):
        phi = rng.random(k)
        r = np.sqrt(rng.random(k))
        theta = 2 * np.pi * rng.random(k)
        return np.column_stack([phi, r * np.cos(theta), r * np.sin(theta)])

    def merge_point(self, points, weights):
        w = weights / weights.sum()
        base = points[0, 0]
        diffs = (points[:, 0] - base + 0.5) % 1.0 - 0.5
        phi = (base + w @ diffs) % 1.0
        xy = w @ points[:, 1:]
        return np.array([phi, xy[0], xy[1]])


_CIRCLE = CircleSpace()
_INTERVAL = IntervalSpace()
_SQUARE = SquareSpace()
_TORUS = SolidTorusSpace()


def finite(n: int) -> FiniteSpace:
    return FiniteSpace(n)


def circle() -> CircleSpace:
    return _CIRCLE


def interval() -> IntervalSpace:
    return _INTERVAL


def square() -> SquareSpace:
    return _SQUARE


def solid_torus() -> SolidTorusSpace:
    return _TORUS


# ---------------------------------------------------------------------------
# Built-in dynamical systems
# ---------------------------------------------------------------------------

SYSTEM_NAMES = (
    "finite_table",
    "cycle",
    "finite_doubling",
    "shift",
    "rotation",
    "circle_doubling",
    "contraction",
    "square_attractor",
    "solenoid",
)


@dataclass(frozen=True)
class SystemMap:
    """A named parametric self-map of a model space.

    ``params`` is interpreted per name: rotation ``(alpha,)``, circle_doubling
    ``(d,)``, contraction ``(c, fixed_point)``, solenoid ``(lam,)``; empty
    otherwise.  ``lipschitz`` is the declared constant when one is known.
    The truncated shift maps index ``i`` to ``i + 1`` and has no image for the
    last index; pushing past it raises :class:`EscapeError`.
    """

    space: ModelSpace
    name: str
    params: tuple = ()
    lipschitz: Optional[float] = None
    table: Optional[tuple] = None  # finite_table image indices

    def evaluate_many(self, points: np.ndarray) -> np.ndarray:
        """Vectorized image of a (k, dim) stack of points, with a range post-check."""
        p = _as_points(points, self.space.dim)
        name = self.name
        if name == "finite_table":
            idx = np.round(p[:, 0]).astype(int)
            out = np.asarray(self.table, dtype=float)[idx][:, None]
        elif name == "cycle":
            n = self.space.n  # type: ignore[attr-defined]
            out = ((np.round(p[:, 0]).astype(int) + 1) % n).astype(float)[:, None]
        elif name == "finite_doubling":
            n = self.space.n  # type: ignore[attr-defined]
            out = ((2 * np.round(p[:, 0]).astype(int)) % n).astype(float)[:, None]
        elif name == "shift":
            n = self.space.n  # type: ignore[attr-defined]
            idx = np.round(p[:, 0]).astype(int)
            if np.any(idx >= n - 1):
                raise EscapeError(f"shift image of index {n - 1} leaves the window [0, {n})")
            out = (idx + 1).astype(float)[:, None]
        elif name == "rotation":
            (alpha,) = self.params
            out = ((p[:, 0] + alpha) % 1.0)[:, None]
        elif name == "circle_doubling":
            (d,) = self.params
            out = ((d * p[:, 0]) % 1.0)[:, None]
        elif name == "contraction":
            c, p_star = self.params
            out = (p_star + c * (p[:, 0] - p_star))[:, None]
        elif name == "square_attractor":
            x, y = p[:, 0], p[:, 1]
            out = np.column_stack([x, (0.5 + 0.5 * x) * y])
        elif name == "solenoid":
            (lam,) = self.params
            phi, x, y = p[:, 0], p[:, 1], p[:, 2]
            out = np.column_stack([
                (2.0 * phi) % 1.0,
                lam * x + 0.5 * np.cos(2 * np.pi * phi),
                lam * y + 0.5 * np.sin(2 * np.pi * phi),
            ])
        else:
            raise UnsupportedSystemError(f"unknown system name {name!r}")
        self.space.check_points(out)
        return out

    def evaluate(self, x) -> np.ndarray:
        x = self.space.validate_point(x)
        return self.evaluate_many(x[None, :])[0]

    def iterate_point(self, x, n: int) -> np.ndarray:
        x = self.space.validate_point(x)
        for _ in range(n):
            x = self.evaluate_many(x[None, :])[0]
        return x

    @property
    def is_total(self) -> bool:
        return self.name != "shift"


def finite_table_map(space: FiniteSpace, table) -> SystemMap:
    tab = tuple(int(t) for t in table)
    if len(tab) != space.n or any(t < 0 or t >= space.n for t in tab):
        raise ParameterError(f"finite_table needs {space.n} image indices inside [0, {space.n})")
    return SystemMap(space, "finite_table", (), lipschitz=1.0, table=tab)


def cycle_map(space: FiniteSpace) -> SystemMap:
    return SystemMap(space, "cycle", (), lipschitz=1.0)


def finite_doubling_map(space: FiniteSpace) -> SystemMap:
    return SystemMap(space, "finite_doubling", (), lipschitz=1.0)


def shift_map(space: FiniteSpace) -> SystemMap:
    if space.n < 2:
        raise ParameterError("shift window needs n >= 2")
    return SystemMap(space, "shift", (), lipschitz=1.0)


def rotation_map(alpha: float) -> SystemMap:
    return SystemMap(circle(), "rotation", (float(alpha),), lipschitz=1.0)


def circle_doubling_map(d: int) -> SystemMap:
    if int(d) != d or d < 1:
        raise ParameterError("circle_doubling degree must be a positive integer")
    return SystemMap(circle(), "circle_doubling", (int(d),), lipschitz=float(d))


def contraction_map(c: float, fixed_point: float = 0.0) -> SystemMap:
    if not (0.0 <= c < 1.0):
        raise ParameterError("contraction factor must lie in [0, 1)")
    if not (0.0 <= fixed_point <= 1.0):
        raise ParameterError("contraction fixed point must lie in [0, 1]")
    return SystemMap(interval(), "contraction", (float(c), float(fixed_point)), lipschitz=float(c))


def square_attractor_map() -> SystemMap:
    return SystemMap(square(), "square_attractor", ())


def solenoid_map(lam: float) -> SystemMap:
    if not (0.0 < lam < 0.5):
        raise ParameterError("solenoid contraction must lie in (0, 1/2)")
    return SystemMap(solid_torus(), "solenoid", (float(lam),))


# ---------------------------------------------------------------------------
# Grid partitions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridCell:
    index: int
    representative: np.ndarray


@dataclass(frozen=True)
class GridPartition:
    """A measurable partition into half-open cells of diameter below ``delta``.

    Continuum spaces use axis-aligned half-open boxes: the circle is split
    into ``ceil(2 / delta)`` arcs (arc length at most ``delta / 2``), the
    interval and square into equal boxes of side at most ``delta / sqrt(dim)``.
    The solid torus combines circle arcs on the angle with boxes intersected
    with the disk; boxes whose disk overlap is empty are dropped.  Every cell
    representative lies inside its own cell, and cell masses of the uniform
    measure are available in closed form for the box models.
    """

    space: ModelSpace
    delta: float
    cells: tuple
    axis_counts: tuple
    _lookup: Optional[dict] = None  # solid torus: multi-index -> cell id

    @property
    def cell_count(self) -> int:
        return len(self.cells)

    @property
    def cell_inradius(self) -> Optional[float]:
        """Radius of a ball around the representative that stays in its cell.

        Exposed for completeness; no operation consumes it.  ``None`` for the
        solid torus, where boundary cells have no uniform in-radius.
        """
        kind = self.space.kind
        if kind == "finite":
            return 0.5 if self.cell_count > 1 else None
        if kind in ("circle", "interval"):
            return 0.5 / self.axis_counts[0]
        if kind == "square":
            return 0.5 / self.axis_counts[0]
        return None

    def representatives(self) -> np.ndarray:
        return np.array([c.representative for c in self.cells])

    def assign_many(self, points) -> np.ndarray:
        """Cell index for each point; every point lands in exactly one cell."""
        p = _as_points(points, self.space.dim)
        kind = self.space.kind
        if kind == "finite":
            if self.cell_count == 1:
                return np.zeros(len(p), dtype=int)
            return np.round(p[:, 0]).astype(int)
        if kind == "circle":
            m = self.axis_counts[0]
            return np.floor(p[:, 0] % 1.0 * m).astype(int) % m
        if kind == "interval":
            m = self.axis_counts[0]
            return np.minimum(np.floor(p[:, 0] * m).astype(int), m - 1)
        if kind == "square":
            m = self.axis_counts[0]
            ix = np.minimum(np.floor(p[:, 0] * m).astype(int), m - 1)
            iy = np.minimum(np.floor(p[:, 1] * m).astype(int), m - 1)
            return ix * m + iy
        # solid torus
        m_phi, m_disk = self.axis_counts
        iphi = np.floor(p[:, 0] % 1.0 * m_phi).astype(int) % m_phi
        ix = np.minimum(np.floor((p[:, 1] + 1.0) / 2.0 * m_disk).astype(int), m_disk - 1)
        iy = np.minimum(np.floor((p[:, 2] + 1.0) / 2.0 * m_disk).astype(int), m_disk - 1)
        out = np.empty(len(p), dtype=int)
        for row, key in enumerate(zip(iphi, ix, iy)):
            try:
                out[row] = self._lookup[key]  # type: ignore[index]
            except KeyError:
                raise InvalidPointError(
                    f"point {p[row].tolist()} falls in a degenerate boundary sliver of the grid"
                ) from None
        return out

    def assign(self, x) -> int:
        return int(self.assign_many(x)[0])

    def uniform_cell_masses(self) -> np.ndarray:
        """Closed-form cell masses of the uniform reference measure."""
        kind = self.space.kind
        if kind == "finite":
            n = self.space.n  # type: ignore[attr-defined]
            if self.cell_count == 1:
                return np.array([1.0])
            return np.full(n, 1.0 / n)
        if kind in ("circle", "interval"):
            m = self.axis_counts[0]
            return np.full(m, 1.0 / m)
        if kind == "square":
            m = self.axis_counts[0]
            return np.full(m * m, 1.0 / (m * m))
        raise UnsupportedSystemError("uniform measure masses are closed-form only for "
                                     "finite, circle, interval and square grids")


def _torus_cells(delta: float):
    m_phi = max(1, math.ceil(2.0 / delta))
    side_target = delta / math.sqrt(2.0)
    m_disk = max(1, math.ceil(2.0 / side_target))
    side = 2.0 / m_disk
    cells = []
    lookup = {}
    nudge = side * 1e-9
    for iphi in range(m_phi):
        phi_rep = (iphi + 0.5) / m_phi
        for ix in range(m_disk):
            lo_x = -1.0 + ix * side
            for iy in range(m_disk):
                lo_y = -1.0 + iy * side
                # nearest point of the closed box to the disk center
                rx = min(max(0.0, lo_x), lo_x + side)
                ry = min(max(0.0, lo_y), lo_y + side)
                if rx * rx + ry * ry > 1.0:
                    continue  # box does not meet the disk
                # nudge off excluded upper edges so the representative is in the cell
                if rx == lo_x + side:
                    rx -= nudge
                if ry == lo_y + side:
                    ry -= nudge
                if rx * rx + ry * ry > 1.0:
                    continue  # tangent sliver on an excluded edge
                cid = len(cells)
                cells.append(GridCell(cid, np.array([phi_rep, rx, ry])))
                lookup[(iphi, ix, iy)] = cid
    return cells, (m_phi, m_disk), lookup


def build_grid(space: ModelSpace, delta: float) -> GridPartition:
    """Deterministic grid partition with intra-cell distances below ``delta``."""
    if delta <= 0:
        raise ParameterError("grid delta must be positive")
    kind = space.kind
    if kind == "finite":
        n = space.n  # type: ignore[attr-defined]
        if delta > 1.0:
            cells = (GridCell(0, np.array([0.0])),)
            return GridPartition(space, delta, cells, (1,))
        cells = tuple(GridCell(i, np.array([float(i)])) for i in range(n))
        return GridPartition(space, delta, cells, (n,))
    if kind == "circle":
        m = max(1, math.ceil(2.0 / delta))
        cells = tuple(GridCell(i, np.array([(i + 0.5) / m])) for i in range(m))
        return GridPartition(space, delta, cells, (m,))
    if kind == "interval":
        m = max(1, math.ceil(1.0 / delta))
        cells = tuple(GridCell(i, np.array([(i + 0.5) / m])) for i in range(m))
        return GridPartition(space, delta, cells, (m,))
    if kind == "square":
        m = max(1, math.ceil(math.sqrt(2.0) / delta))
        cells = []
        for ix in range(m):
            for iy in range(m):
                rep = np.array([(ix + 0.5) / m, (iy + 0.5) / m])
                cells.append(GridCell(ix * m + iy, rep))
        return GridPartition(space, delta, tuple(cells), (m,))
    if kind == "solid_torus":
        cells, counts, lookup = _torus_cells(delta)
        return GridPartition(space, delta, tuple(cells), counts, lookup)
    raise UnsupportedSystemError(f"no grid construction for space kind {kind!r}")
