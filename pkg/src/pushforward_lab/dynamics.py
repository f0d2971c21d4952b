"""Orbits of measures, invariant vectors, attractor convergence, and probes.

The push-forward dynamics is followed by repeated atom mapping; measure
orbits can only lose atoms (merging) and, on the truncated shift, mass.
Invariant vectors of finite systems come from power iteration: once the
transient has drained onto the cycles the weight vector is exactly periodic,
and the average over one period is the Cesaro limit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import (
    ConvergenceError,
    ParameterError,
    SpaceMismatchError,
    UnsupportedSystemError,
)
from .measures import AtomicMeasure, PushForwardMatrix, apply_matrix, push_forward, random_measure
from .metrics import WeakStarBasis, prokhorov, wasserstein, weak_star
from .spaces import GridPartition, ModelSpace, SystemMap, solid_torus, square


# ---------------------------------------------------------------------------
# Orbits
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OrbitRecord:
    """Snapshots of a measure orbit: (step, measure) pairs plus escape bookkeeping."""

    initial: AtomicMeasure
    snapshots: tuple  # ((n, AtomicMeasure), ...)
    escaped_mass: float

    def measure_at(self, n: int) -> AtomicMeasure:
        for step, mu in self.snapshots:
            if step == n:
                return mu
        raise KeyError(f"no snapshot at step {n}")


def iterate(system: SystemMap, mu0: AtomicMeasure, n: int, snapshot_every: int = 1) -> OrbitRecord:
    """Repeated push-forward with periodic snapshots; atom count never grows."""
    if n < 0:
        raise ParameterError("iteration count must be nonnegative")
    if snapshot_every < 1:
        raise ParameterError("snapshot stride must be at least 1")
    snaps = [(0, mu0)]
    mu = mu0
    for k in range(1, n + 1):
        mu = push_forward(system, mu)
        if k % snapshot_every == 0 or k == n:
            snaps.append((k, mu))
    return OrbitRecord(mu0, tuple(snaps), mu.escaped_mass)


# ---------------------------------------------------------------------------
# Invariant vectors of finite systems
# ---------------------------------------------------------------------------


def invariant_measure_finite(m: PushForwardMatrix, tol: float = 1e-10,
                             max_iter: int = 100_000):
    """A fixed simplex vector of the adjoint matrix, with its L1 residual.

    Power iteration from the uniform vector: after at most n steps all mass
    sits on the cycles and the iteration is exactly periodic, so averaging one
    detected period gives the Cesaro limit in closed form.
    """
    n = m.n
    v = np.full(n, 1.0 / n)
    burn = n
    for _ in range(burn):
        v = apply_matrix(m, v)
    anchor = v.copy()
    history = [anchor]
    for _ in range(max_iter):
        v = apply_matrix(m, v)
        if float(np.abs(v - anchor).sum()) <= 1e-14:
            q = np.mean(history, axis=0)
            residual = float(np.abs(apply_matrix(m, q) - q).sum())
            if residual <= tol:
                return q, residual
            raise ConvergenceError(f"period average left residual {residual:.3e}")
        history.append(v.copy())
    raise ConvergenceError(f"no period detected within {max_iter} iterations")


# ---------------------------------------------------------------------------
# Attractors
# ---------------------------------------------------------------------------


def _solenoid_slice_centers(phi: np.ndarray, lam: float, level: int) -> np.ndarray:
    """Disk centers of the level-k image slices above each angle.

    The slice of the k-th image at angle theta is a union of 2^k disks of
    radius lam^k; their centers follow the angle preimage histories
    psi = (theta + i) / 2^k.
    """
    two_k = 2 ** level
    psi = (phi[:, None] + np.arange(two_k)[None, :]) / two_k  # (p, 2^k)
    centers = np.zeros(psi.shape + (2,))
    for j in range(1, level + 1):
        ang = 2 * np.pi * ((2 ** (j - 1)) * psi % 1.0)
        centers[..., 0] += lam ** (level - j) * 0.5 * np.cos(ang)
        centers[..., 1] += lam ** (level - j) * 0.5 * np.sin(ang)
    return centers


@dataclass(frozen=True)
class AttractorDescriptor:
    """A target invariant set with a projection onto (an approximant of) it.

    Kinds: ``point`` (a single attracting fixed point), ``square_lambda``
    (the edge set x = 1 or y = 0 of the unit square), ``solenoid_level``
    (the level-k nested solid-torus image; projections land inside it).
    """

    kind: str
    space: ModelSpace
    point: Optional[np.ndarray] = None
    lam: float = 0.0
    level: int = 0

    def project(self, points: np.ndarray) -> np.ndarray:
        if self.kind == "point":
            return np.broadcast_to(self.point, points.shape).copy()
        if self.kind == "square_lambda":
            out = points.copy()
            to_right = (1.0 - points[:, 0]) < points[:, 1]
            out[to_right, 0] = 1.0
            out[~to_right, 1] = 0.0
            return out
        if self.kind == "solenoid_level":
            centers = _solenoid_slice_centers(points[:, 0], self.lam, self.level)
            d = np.linalg.norm(points[:, None, 1:] - centers, axis=-1)
            pick = np.argmin(d, axis=1)
            c = centers[np.arange(len(points)), pick]
            offset = points[:, 1:] - c
            norm = np.linalg.norm(offset, axis=1)
            radius = self.lam ** self.level
            scale = np.where(norm > radius, radius / np.maximum(norm, 1e-300), 1.0)
            out = points.copy()
            out[:, 1:] = c + offset * scale[:, None]
            return out
        raise UnsupportedSystemError(f"unknown attractor kind {self.kind!r}")


def point_attractor(space: ModelSpace, point) -> AttractorDescriptor:
    return AttractorDescriptor("point", space, point=space.validate_point(point))


def square_edge_attractor() -> AttractorDescriptor:
    return AttractorDescriptor("square_lambda", square())


def solenoid_attractor(lam: float, level: int = 8) -> AttractorDescriptor:
    if not (0.0 < lam < 0.5):
        raise ParameterError("solenoid contraction must lie in (0, 1/2)")
    if level < 1:
        raise ParameterError("approximant level must be at least 1")
    return AttractorDescriptor("solenoid_level", solid_torus(), lam=lam, level=level)


def attractor_distance(mu: AtomicMeasure, attr: AttractorDescriptor):
    """Sup distance of the support to the attractor, plus the projection W1 cost.

    Returns ``(sup_d, w1)`` where ``sup_d = max_i d(x_i, proj(x_i))`` and
    ``w1 = sum_i w_i d(x_i, proj(x_i))``, the cost of the projection coupling
    (an upper bound for the W1 distance to measures living on the attractor).
    """
    if mu.space != attr.space:
        raise SpaceMismatchError("measure and attractor live on different spaces")
    if mu.atom_count == 0:
        raise ParameterError("the empty measure has no support distance")
    proj = attr.project(mu.points)
    d = attr.space.distance_array(mu.points, proj)
    return float(d.max()), float(np.dot(mu.weights, d))


# ---------------------------------------------------------------------------
# Lipschitz and recurrence probes
# ---------------------------------------------------------------------------

_METRIC_NAMES = ("wasserstein", "prokhorov", "weak_star")


def _metric_fn(name: str, p: float, basis: Optional[WeakStarBasis]) -> Callable:
    if name == "wasserstein":
        return lambda a, b: wasserstein(a, b, p)[0]
    if name == "prokhorov":
        return lambda a, b: prokhorov(a, b)
    if name == "weak_star":
        return lambda a, b: weak_star(a, b, basis)[0]
    raise ParameterError(f"metric must be one of {_METRIC_NAMES}")


@dataclass(frozen=True)
class ProbeReport:
    max_ratio: float
    worst_pair: Optional[tuple]
    declared_lipschitz: Optional[float]
    trials: int
    degenerate_skipped: int
    samples: tuple  # (trial, d(mu, nu), d(Phi mu, Phi nu)) triples


def lipschitz_probe(system: SystemMap, trials: int, p: float = 1.0,
                    metric: str = "wasserstein", seed: int = 0,
                    max_atoms: int = 20) -> ProbeReport:
    """Empirical expansion ratio d(Phi mu, Phi nu) / d(mu, nu) over random pairs.

    Pairs with zero initial distance are skipped and counted.  The report
    carries the declared Lipschitz constant of the base map for comparison.
    """
    if trials < 1:
        raise ParameterError("need at least one trial")
    fn = _metric_fn(metric, p, None)
    max_ratio = -np.inf
    worst = None
    skipped = 0
    samples = []
    for t in range(trials):
        rng = np.random.default_rng([seed, t])
        mu = random_measure(system.space, rng, max_atoms)
        nu = random_measure(system.space, rng, max_atoms)
        before = fn(mu, nu)
        if before <= 1e-14:
            skipped += 1
            continue
        after = fn(push_forward(system, mu), push_forward(system, nu))
        samples.append((t, before, after))
        ratio = after / before
        if ratio > max_ratio:
            max_ratio = ratio
            worst = (mu, nu)
    return ProbeReport(float(max_ratio), worst, system.lipschitz, trials, skipped,
                       tuple(samples))


def omega_limit_sample(system: SystemMap, x, burn: int, horizon: int, eps: float):
    """An eps-net of the visited tail of a point orbit.

    The delta measures of the returned points approximate accumulation points
    of the orbit of delta_x, by the embedding identity.
    """
    if not (horizon > burn >= 0):
        raise ParameterError("need horizon > burn >= 0")
    if eps <= 0:
        raise ParameterError("eps must be positive")
    space = system.space
    x = space.validate_point(x)
    kept: list[np.ndarray] = []
    cur = x
    for k in range(horizon + 1):
        if k >= burn:
            if not kept:
                kept.append(cur)
            else:
                d = space.distance_array(np.array(kept), cur[None, :])
                if float(d.min()) >= eps:
                    kept.append(cur)
        if k < horizon:
            cur = system.evaluate_many(cur[None, :])[0]
    return np.array(kept)


def mixing_witness(system: SystemMap, mu: AtomicMeasure, nu: AtomicMeasure,
                   eps: float, horizon: int,
                   basis: Optional[WeakStarBasis] = None) -> Optional[int]:
    """Search for n <= horizon with a perturbation mubar of mu (atoms moved
    within eps, same weights) whose n-th image is weak-* within eps of nu.

    Two routes are tried at each n: the unperturbed orbit itself, and, for
    expanding circle maps, exact algebraic preimages (y + m) / d^n steering
    each atom toward a greedily chosen target atom of nu.  ``None`` is a
    failed search, never a disproof of mixing.
    """
    if eps <= 0:
        raise ParameterError("eps must be positive")
    if mu.space != nu.space:
        raise SpaceMismatchError("measures live on different spaces")
    if basis is None:
        basis = WeakStarBasis.default(mu.space)
    expanding = system.name == "circle_doubling" and system.params[0] >= 2
    d_expand = system.params[0] if expanding else None

    # greedy weight assignment: heaviest atoms fill the largest target deficits
    assign = None
    if expanding:
        deficit = nu.weights.astype(float).copy()
        assign = np.zeros(mu.atom_count, dtype=int)
        for i in np.argsort(-mu.weights, kind="stable"):
            j = int(np.argmax(deficit))
            assign[i] = j
            deficit[j] -= mu.weights[i]

    orbit = mu
    for n in range(1, horizon + 1):
        orbit = push_forward(system, orbit)
        if orbit.atom_count and weak_star(orbit, nu, basis)[0] <= eps:
            return n
        if expanding and n <= 50:
            dn = float(d_expand) ** n
            if 0.5 / dn <= eps:
                targets = nu.points[assign, 0]
                branch = np.round(mu.points[:, 0] * dn - targets)
                z = ((targets + branch) / dn) % 1.0
                moved = AtomicMeasure.create(mu.space, z[:, None], mu.weights)
                image = moved
                for _ in range(n):
                    image = push_forward(system, image)
                if weak_star(image, nu, basis)[0] <= eps:
                    return n
    return None


# ---------------------------------------------------------------------------
# Dense periodic measures for the doubling map
# ---------------------------------------------------------------------------


def _de_bruijn_binary(order: int) -> list[int]:
    """Binary de Bruijn cycle of the given order (every word appears once)."""
    a = [0] * (2 * order)
    seq: list[int] = []

    def db(t: int, p: int):
        if t > order:
            if order % p == 0:
                seq.extend(a[1: p + 1])
        else:
            a[t] = a[t - p]
            db(t + 1, p)
            for j in range(a[t - p] + 1, 2):
                a[t] = j
                db(t + 1, t)

    db(1, 1)
    return seq


def periodic_density_approximation(system: SystemMap, target: AtomicMeasure,
                                   grid: GridPartition):
    """A single-orbit periodic measure matching the target's grid cell masses.

    For the doubling map, the orbit of the binary fraction with a de Bruijn
    expansion of order log2(cells) visits every dyadic grid cell exactly once.
    Relabeling one orbit point per cell and attaching the target's cell masses
    yields a measure fixed by the period-length power of the push-forward.
    Returns ``(measure, period)``.
    """
    if system.name != "circle_doubling" or system.params[0] != 2:
        raise UnsupportedSystemError("the constructive route needs the doubling map")
    if grid.space != target.space or grid.space.kind != "circle":
        raise SpaceMismatchError("target and grid must live on the circle")
    m = grid.cell_count
    order = int(round(math.log2(m)))
    if 2 ** order != m:
        raise ParameterError("the orbit construction needs a dyadic cell count")
    word = _de_bruijn_binary(order)
    denom = float(2 ** m - 1)
    # orbit points: cyclic shifts of the word, read as binary fractions
    value = 0
    for b in word:
        value = (value << 1) | b
    mask = (1 << m) - 1
    orbit_by_cell = {}
    rot = value
    for j in range(m):
        window = rot >> (m - order)
        orbit_by_cell[int(window)] = rot / denom
        rot = ((rot << 1) | (rot >> (m - 1))) & mask
    cells = grid.assign_many(target.points)
    points = np.array([[orbit_by_cell[int(c)]] for c in cells])
    measure = AtomicMeasure.create(target.space, points, target.weights)
    return measure, m
