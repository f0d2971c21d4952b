"""Push-forward dynamics on spaces of atomic probability measures.

A map T on a compact model space induces the transformation
``mu -> mu o T^{-1}`` on probability measures.  This package realizes that
transformation on finitely supported measures, computes exact distances
between them (Wasserstein, Levy-Prokhorov, truncated weak-*), follows orbits
toward attractors, and estimates topological entropy of both the base map and
the induced measure dynamics through separated-set counts.
"""

from .errors import (
    ConvergenceError,
    DimensionError,
    EscapeError,
    EstimateInvalidError,
    InvalidPointError,
    NotPeriodicError,
    ParameterError,
    PushforwardError,
    SpaceMismatchError,
    UnsupportedSystemError,
)
from .spaces import (
    GridPartition,
    ModelSpace,
    SystemMap,
    build_grid,
    circle,
    circle_doubling_map,
    contraction_map,
    cycle_map,
    finite,
    finite_doubling_map,
    finite_table_map,
    interval,
    rotation_map,
    shift_map,
    solenoid_map,
    solid_torus,
    square,
    square_attractor_map,
)
from .measures import (
    AtomicMeasure,
    PushForwardMatrix,
    TestFunction,
    UniformMeasure,
    apply_matrix,
    dyadic_embed,
    integrate,
    matrix_of,
    measures_close,
    periodic_orbit_measure,
    push_forward,
    quantize,
    random_measure,
)
from .metrics import (
    TransportPlan,
    WeakStarBasis,
    prokhorov,
    transport_polytope_vertices,
    wasserstein,
    weak_star,
)
from .dynamics import (
    AttractorDescriptor,
    OrbitRecord,
    ProbeReport,
    attractor_distance,
    invariant_measure_finite,
    iterate,
    lipschitz_probe,
    mixing_witness,
    omega_limit_sample,
    periodic_density_approximation,
    point_attractor,
    solenoid_attractor,
    square_edge_attractor,
)
from .entropy import (
    BowenContext,
    EntropyEstimate,
    bowen_distance,
    entropy_embedded_Dn,
    entropy_estimate,
    entropy_product,
    sample_grid,
    separated_count,
)

__version__ = "0.1.0"
