"""Config-driven experiment runner with reproducible seeds and CSV/JSON output.

One TOML config describes one experiment.  Outputs are ``<name>.csv`` with a
header row, '.' decimals and LF line endings, plus ``<name>.summary.json``
echoing the config, headline numbers, warnings and wall-clock time.  Exit
codes: 0 success, 2 validation or parameter error, 3 invalid estimate,
1 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - python < 3.11
    import tomli as tomllib

from . import dynamics, entropy, measures, metrics, spaces
from .errors import EstimateInvalidError, PushforwardError

logger = logging.getLogger("pushforward_lab")

EXPERIMENTS = (
    "matrix",
    "orbit",
    "metrics",
    "invariant",
    "attractor",
    "probe",
    "omega",
    "witness",
    "entropy",
    "entropy_embedded",
    "entropy_product",
    "quantize",
)

_FINITE_SYSTEMS = ("finite_table", "cycle", "finite_doubling", "shift")
_MEASURE_KINDS = ("random", "delta", "atoms", "uniform")


def _configure_logging():
    level = os.environ.get("PUSHFORWARD_LAB_LOG", "warn").lower()
    table = {"error": logging.ERROR, "warn": logging.WARNING,
             "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(level=table.get(level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


# ---------------------------------------------------------------------------
# Config validation and object building
# ---------------------------------------------------------------------------


def _validate_system(spec, errors, key="system"):
    if not isinstance(spec, dict):
        errors.append(f"{key}: expected a table")
        return
    name = spec.get("name")
    if name not in spaces.SYSTEM_NAMES:
        errors.append(f"{key}.name: must be one of {spaces.SYSTEM_NAMES}")
        return
    if name in _FINITE_SYSTEMS:
        n = spec.get("n")
        if not isinstance(n, int) or n < 1:
            errors.append(f"{key}.n: finite systems need a positive integer size")
        if name == "finite_table":
            table = spec.get("table")
            if (not isinstance(table, list) or not isinstance(n, int)
                    or len(table) != n
                    or any(not isinstance(t, int) or t < 0 or t >= n for t in table)):
                errors.append(f"{key}.table: need {n} integer image indices in [0, n)")
        if name == "shift" and isinstance(n, int) and n < 2:
            errors.append(f"{key}.n: the shift window needs n >= 2")
    elif name == "rotation":
        if not isinstance(spec.get("alpha"), (int, float)):
            errors.append(f"{key}.alpha: rotation needs a real angle")
    elif name == "circle_doubling":
        d = spec.get("d")
        if not isinstance(d, int) or d < 1:
            errors.append(f"{key}.d: the degree must be a positive integer")
    elif name == "contraction":
        c = spec.get("c")
        if not isinstance(c, (int, float)) or not (0 <= c < 1):
            errors.append(f"{key}.c: the factor must lie in [0, 1)")
        fp = spec.get("fixed_point", 0.0)
        if not isinstance(fp, (int, float)) or not (0 <= fp <= 1):
            errors.append(f"{key}.fixed_point: must lie in [0, 1]")
    elif name == "solenoid":
        lam = spec.get("lam")
        if not isinstance(lam, (int, float)) or not (0 < lam < 0.5):
            errors.append(f"{key}.lam: the contraction must lie in (0, 1/2)")


def _build_system(spec) -> spaces.SystemMap:
    name = spec["name"]
    if name == "finite_table":
        return spaces.finite_table_map(spaces.finite(spec["n"]), spec["table"])
    if name == "cycle":
        return spaces.cycle_map(spaces.finite(spec["n"]))
    if name == "finite_doubling":
        return spaces.finite_doubling_map(spaces.finite(spec["n"]))
    if name == "shift":
        return spaces.shift_map(spaces.finite(spec["n"]))
    if name == "rotation":
        return spaces.rotation_map(spec["alpha"])
    if name == "circle_doubling":
        return spaces.circle_doubling_map(spec["d"])
    if name == "contraction":
        return spaces.contraction_map(spec["c"], spec.get("fixed_point", 0.0))
    if name == "square_attractor":
        return spaces.square_attractor_map()
    return spaces.solenoid_map(spec["lam"])


def _validate_measure(spec, errors, key):
    if not isinstance(spec, dict):
        errors.append(f"{key}: expected a table")
        return
    kind = spec.get("kind")
    if kind not in _MEASURE_KINDS:
        errors.append(f"{key}.kind: must be one of {_MEASURE_KINDS}")
        return
    if kind == "delta" and not isinstance(spec.get("point"), list):
        errors.append(f"{key}.point: delta needs a coordinate list")
    if kind == "atoms":
        if not isinstance(spec.get("points"), list) or not isinstance(spec.get("weights"), list):
            errors.append(f"{key}.points/.weights: explicit atoms need both lists")
    if kind == "random":
        atoms = spec.get("atoms", 20)
        if not isinstance(atoms, int) or atoms < 1:
            errors.append(f"{key}.atoms: must be a positive integer")


def _build_measure(spec, space, rng):
    kind = spec["kind"]
    if kind == "random":
        k = spec.get("atoms", 20)
        points = space.random_points(rng, k)
        weights = rng.dirichlet(np.ones(k))
        return measures.AtomicMeasure.create(space, points, weights)
    if kind == "delta":
        return measures.AtomicMeasure.delta(space, spec["point"])
    if kind == "atoms":
        return measures.AtomicMeasure.create(space, spec["points"], spec["weights"])
    return measures.UniformMeasure(space)


def _validate_attractor(spec, errors, key="attractor"):
    if not isinstance(spec, dict):
        errors.append(f"{key}: expected a table")
        return
    kind = spec.get("kind")
    if kind not in ("point", "square_lambda", "solenoid_level"):
        errors.append(f"{key}.kind: must be point, square_lambda or solenoid_level")
        return
    if kind == "point" and not isinstance(spec.get("point"), list):
        errors.append(f"{key}.point: point attractors need a coordinate list")
    if kind == "solenoid_level":
        lam = spec.get("lam")
        if not isinstance(lam, (int, float)) or not (0 < lam < 0.5):
            errors.append(f"{key}.lam: must lie in (0, 1/2)")
        level = spec.get("level", 8)
        if not isinstance(level, int) or level < 1:
            errors.append(f"{key}.level: must be a positive integer")


def _build_attractor(spec, space):
    kind = spec["kind"]
    if kind == "point":
        return dynamics.point_attractor(space, spec["point"])
    if kind == "square_lambda":
        return dynamics.square_edge_attractor()
    return dynamics.solenoid_attractor(spec["lam"], spec.get("level", 8))


def _positive_int(params, key, errors, prefix, minimum=1, default=None):
    value = params.get(key, default)
    if not isinstance(value, int) or value < minimum:
        errors.append(f"{prefix}.{key}: need an integer >= {minimum}")
        return None
    return value


def _eps_list(params, errors, prefix):
    eps = params.get("eps_list")
    if (not isinstance(eps, list) or not eps
            or any(not isinstance(e, (int, float)) or e <= 0 for e in eps)):
        errors.append(f"{prefix}.eps_list: need a list of positive reals")
        return None
    return [float(e) for e in eps]


def _n_values(params, errors, prefix):
    if "n_values" in params:
        ns = params["n_values"]
        if (not isinstance(ns, list) or len(ns) < 4
                or any(not isinstance(n, int) or n < 1 for n in ns)):
            errors.append(f"{prefix}.n_values: need >= 4 integer values >= 1")
            return None
        return ns
    n_min = params.get("n_min")
    n_max = params.get("n_max")
    if not isinstance(n_min, int) or not isinstance(n_max, int) or n_min < 1:
        errors.append(f"{prefix}.n_min/.n_max: need integers with 1 <= n_min <= n_max")
        return None
    ns = list(range(n_min, n_max + 1))
    if len(ns) < 4:
        errors.append(f"{prefix}.n_min/.n_max: need >= 4 points")
        return None
    return ns


def validate(config: dict) -> list:
    """Exhaustive field checks before any computation; returns error strings."""
    errors: list[str] = []
    experiment = config.get("experiment")
    if experiment not in EXPERIMENTS:
        errors.append(f"experiment: must be one of {EXPERIMENTS}")
        return errors
    seed = config.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        errors.append("seed: must be a nonnegative integer")
    threads = config.get("threads", 1)
    if not isinstance(threads, int) or threads < 1:
        errors.append("threads: must be a positive integer")
    params = config.get("params", {})
    if not isinstance(params, dict):
        errors.append("params: expected a table")
        params = {}

    if experiment in ("quantize", "metrics"):
        # these can run on a bare space named in params instead of a system
        if "system" in config:
            _validate_system(config["system"], errors)
        elif params.get("space", "circle") not in ("circle", "interval", "square",
                                                   "solid_torus"):
            errors.append("params.space: must name a continuum model space")
    else:
        _validate_system(config.get("system"), errors)
    system_name = (config.get("system") or {}).get("name")

    if experiment in ("matrix", "invariant"):
        if system_name is not None and system_name not in _FINITE_SYSTEMS:
            errors.append("system.name: this experiment needs a finite system")
        if system_name == "shift" and experiment == "matrix":
            errors.append("system.name: the shift is not total and has no matrix")
    if experiment in ("orbit", "attractor"):
        _positive_int(params, "steps", errors, "params", minimum=0, default=None)
        se = params.get("snapshot_every", 1)
        if not isinstance(se, int) or se < 1:
            errors.append("params.snapshot_every: must be a positive integer")
        _validate_measure(config.get("mu"), errors, "mu")
        if experiment == "attractor" or "attractor" in config:
            _validate_attractor(config.get("attractor"), errors)
    if experiment == "metrics" or experiment == "witness":
        _validate_measure(config.get("mu"), errors, "mu")
        _validate_measure(config.get("nu"), errors, "nu")
    if experiment == "metrics":
        p = params.get("wasserstein_p", 1.0)
        if not isinstance(p, (int, float)) or p < 1:
            errors.append("params.wasserstein_p: must be a real >= 1")
        _positive_int(params, "weak_star_n", errors, "params", default=20)
    if experiment == "probe":
        _positive_int(params, "trials", errors, "params")
        metric = params.get("metric", "wasserstein")
        if metric not in dynamics._METRIC_NAMES:
            errors.append(f"params.metric: must be one of {dynamics._METRIC_NAMES}")
    if experiment == "omega":
        if not isinstance(params.get("point"), list):
            errors.append("params.point: need a coordinate list")
        burn = params.get("burn", 0)
        horizon = params.get("horizon")
        if not isinstance(burn, int) or burn < 0:
            errors.append("params.burn: must be a nonnegative integer")
        if not isinstance(horizon, int) or not isinstance(burn, int) or horizon <= burn:
            errors.append("params.horizon: need an integer > burn")
        eps = params.get("eps")
        if not isinstance(eps, (int, float)) or eps <= 0:
            errors.append("params.eps: must be positive")
    if experiment == "witness":
        eps = params.get("eps")
        if not isinstance(eps, (int, float)) or eps <= 0:
            errors.append("params.eps: must be positive")
        _positive_int(params, "horizon", errors, "params")
    if experiment in ("entropy", "entropy_embedded", "entropy_product"):
        _eps_list(params, errors, "params")
        _n_values(params, errors, "params")
    if experiment == "entropy":
        _positive_int(params, "sample", errors, "params")
    if experiment == "entropy_embedded":
        _positive_int(params, "sample_per_axis", errors, "params")
        n_embed = _positive_int(params, "n_embed", errors, "params")
        metric = params.get("metric", "wasserstein_1")
        if metric not in entropy.EMBEDDED_METRICS:
            errors.append(f"params.metric: must be one of {entropy.EMBEDDED_METRICS}")
        spa = params.get("sample_per_axis")
        if isinstance(spa, int) and isinstance(n_embed, int) and spa ** n_embed > 1 << 16:
            errors.append("params.sample_per_axis: tuple sample exceeds the 2^16 cap")
    if experiment == "entropy_product":
        _validate_system(config.get("system_b"), errors, "system_b")
        _positive_int(params, "per_axis_a", errors, "params", default=128)
        _positive_int(params, "per_axis_b", errors, "params", default=128)
    if experiment == "quantize":
        _validate_measure(config.get("mu"), errors, "mu")
        delta = params.get("delta")
        if not isinstance(delta, (int, float)) or delta <= 0:
            errors.append("params.delta: must be positive")
    return errors


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _space_for_quantize(config):
    if "system" in config:
        return _build_system(config["system"]).space
    kind = config.get("params", {}).get("space", "circle")
    return {"circle": spaces.circle(), "interval": spaces.interval(),
            "square": spaces.square(), "solid_torus": spaces.solid_torus()}[kind]


# ---------------------------------------------------------------------------
# Experiment implementations: each returns (header, rows, headline, warnings)
# ---------------------------------------------------------------------------


def _run_matrix(config, rng, threads):
    system = _build_system(config["system"])
    m = measures.matrix_of(system)
    rows = []
    for label, mat in (("t", m.t_matrix), ("phi", m.phi_matrix)):
        for i in range(m.n):
            for j in range(m.n):
                rows.append((label, i, j, int(mat[i, j])))
    headline = m.to_json_dict()
    return ("matrix", "row", "col", "value"), rows, headline, []


def _orbit_rows(system, mu0, steps, every, attractor):
    record = dynamics.iterate(system, mu0, steps, every)
    header = ["n", "atom_count", "escaped_mass"]
    if attractor is not None:
        header += ["dist_to_target", "w1_to_target"]
    rows = []
    final_sup = None
    for n, snap in record.snapshots:
        row = [n, snap.atom_count, snap.escaped_mass]
        if attractor is not None:
            if snap.atom_count:
                sup_d, w1 = dynamics.attractor_distance(snap, attractor)
            else:
                sup_d, w1 = 0.0, 0.0
            row += [sup_d, w1]
            final_sup = sup_d
        rows.append(tuple(row))
    return record, tuple(header), rows, final_sup


def _run_orbit(config, rng, threads):
    system = _build_system(config["system"])
    params = config.get("params", {})
    mu0 = _build_measure(config["mu"], system.space, rng)
    attractor = _build_attractor(config["attractor"], system.space) \
        if "attractor" in config else None
    record, header, rows, final_sup = _orbit_rows(
        system, mu0, params["steps"], params.get("snapshot_every", 1), attractor)
    headline = {"steps": params["steps"], "final_atom_count": rows[-1][1],
                "escaped_mass": record.escaped_mass}
    if final_sup is not None:
        headline["final_sup_distance"] = final_sup
    warnings = []
    if record.escaped_mass > 0:
        warnings.append(f"escaped mass {record.escaped_mass} left the shift window")
    return header, rows, headline, warnings


def _run_attractor(config, rng, threads):
    return _run_orbit(config, rng, threads)


def _run_metrics(config, rng, threads):
    params = config.get("params", {})
    space = _build_system(config["system"]).space if "system" in config else None
    if space is None:
        space = _space_for_quantize(config)
    mu = _build_measure(config["mu"], space, rng)
    nu = _build_measure(config["nu"], space, rng)
    p = float(params.get("wasserstein_p", 1.0))
    basis = metrics.WeakStarBasis.default(space, params.get("weak_star_n", 20))
    w_value, plan = metrics.wasserstein(mu, nu, p)
    d_p = metrics.prokhorov(mu, nu)
    ws_value, tail = metrics.weak_star(mu, nu, basis)
    rows = [("wasserstein", w_value, p),
            ("prokhorov", d_p, ""),
            ("weak_star", ws_value, tail)]
    headline = {"wasserstein": w_value, "prokhorov": d_p,
                "weak_star": ws_value, "weak_star_tail": tail,
                "transport_plan": plan.to_json_dict()}
    return ("metric", "value", "detail"), rows, headline, []


def _run_invariant(config, rng, threads):
    system = _build_system(config["system"])
    m = measures.matrix_of(system)
    q, residual = dynamics.invariant_measure_finite(m)
    rows = [(i, q[i]) for i in range(m.n)]
    headline = {"residual": residual, "support": [int(i) for i in np.nonzero(q > 1e-12)[0]]}
    return ("index", "weight"), rows, headline, []


def _run_probe(config, rng, threads):
    system = _build_system(config["system"])
    params = config.get("params", {})
    report = dynamics.lipschitz_probe(
        system, params["trials"], p=float(params.get("p", 1.0)),
        metric=params.get("metric", "wasserstein"), seed=config.get("seed", 0))
    rows = [(t, before, after, after / before) for t, before, after in report.samples]
    headline = {"max_ratio": report.max_ratio,
                "declared_lipschitz": report.declared_lipschitz,
                "degenerate_skipped": report.degenerate_skipped}
    warnings = []
    if report.degenerate_skipped:
        warnings.append(f"skipped {report.degenerate_skipped} degenerate pairs")
    return ("trial", "d_before", "d_after", "ratio"), rows, headline, warnings


def _run_omega(config, rng, threads):
    system = _build_system(config["system"])
    params = config["params"]
    pts = dynamics.omega_limit_sample(system, params["point"], params.get("burn", 0),
                                      params["horizon"], params["eps"])
    dim = system.space.dim
    header = ["index"] + [f"x{i}" for i in range(dim)]
    rows = [tuple([i] + list(p)) for i, p in enumerate(pts)]
    return tuple(header), rows, {"cluster_count": len(pts)}, []


def _run_witness(config, rng, threads):
    system = _build_system(config["system"])
    params = config["params"]
    mu = _build_measure(config["mu"], system.space, rng)
    nu = _build_measure(config["nu"], system.space, rng)
    found = dynamics.mixing_witness(system, mu, nu, params["eps"], params["horizon"])
    rows = [(0 if found is None else 1, "" if found is None else found)]
    warnings = []
    if system.name != "circle_doubling":
        warnings.append("constructive preimage search is only run for expanding circle maps")
    headline = {"found": found is not None, "n": found}
    return ("found", "n"), rows, headline, warnings


def _entropy_output(estimate):
    rows = list(estimate.rows())
    headline = estimate.to_json_dict()
    warnings = []
    sat = int(estimate.saturated.sum())
    if sat:
        warnings.append(f"{sat} cells saturated at {entropy.SATURATION_FRACTION} of the sample")
    return ("eps", "n", "count", "saturated"), rows, headline, warnings


def _run_entropy(config, rng, threads):
    system = _build_system(config["system"])
    params = config["params"]
    ctx = entropy.BowenContext.from_grid(system, params["sample"])
    estimate = entropy.entropy_estimate(
        ctx, params["eps_list"], _n_values(params, [], "params"), threads=threads,
        descriptor={"system": system.name, "sample_per_axis": params["sample"],
                    "seed": config.get("seed", 0)})
    return _entropy_output(estimate)


def _run_entropy_embedded(config, rng, threads):
    system = _build_system(config["system"])
    params = config["params"]
    estimate = entropy.entropy_embedded_Dn(
        system, params["n_embed"], params.get("metric", "wasserstein_1"),
        params["eps_list"], _n_values(params, [], "params"),
        params["sample_per_axis"], threads=threads)
    return _entropy_output(estimate)


def _run_entropy_product(config, rng, threads):
    system_a = _build_system(config["system"])
    system_b = _build_system(config["system_b"])
    params = config["params"]
    estimate = entropy.entropy_product(
        system_a, system_b, params["eps_list"], _n_values(params, [], "params"),
        per_axis_a=params.get("per_axis_a", 128),
        per_axis_b=params.get("per_axis_b", 128), threads=threads)
    return _entropy_output(estimate)


def _run_quantize(config, rng, threads):
    space = _space_for_quantize(config)
    grid = spaces.build_grid(space, config["params"]["delta"])
    mu = _build_measure(config["mu"], space, rng)
    result = measures.quantize(mu, grid)
    dim = space.dim
    header = ["cell"] + [f"x{i}" for i in range(dim)] + ["weight"]
    idx = grid.assign_many(result.points)
    rows = [tuple([int(c)] + list(p) + [w])
            for c, p, w in zip(idx, result.points, result.weights)]
    headline = {"cells": grid.cell_count, "atoms": result.atom_count}
    return tuple(header), rows, headline, []


_RUNNERS = {
    "matrix": _run_matrix,
    "orbit": _run_orbit,
    "metrics": _run_metrics,
    "invariant": _run_invariant,
    "attractor": _run_attractor,
    "probe": _run_probe,
    "omega": _run_omega,
    "witness": _run_witness,
    "entropy": _run_entropy,
    "entropy_embedded": _run_entropy_embedded,
    "entropy_product": _run_entropy_product,
    "quantize": _run_quantize,
}


def run(config: dict, out_dir: Path) -> dict:
    """Dispatch one validated experiment and write its CSV and JSON summary."""
    start = time.perf_counter()
    name = config.get("name", config["experiment"])
    threads = config.get("threads", 1)
    rng = np.random.default_rng(config.get("seed", 0))
    header, rows, headline, warnings = _RUNNERS[config["experiment"]](config, rng, threads)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_csv(out_dir / f"{name}.csv", header, rows)
    summary = {
        "config": config,
        "headline": headline,
        "warnings": sorted(set(warnings)),
        "wall_clock_s": time.perf_counter() - start,
    }
    with open(out_dir / f"{name}.summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    logger.info("experiment %s finished in %.3fs", name, summary["wall_clock_s"])
    return summary


def main(argv=None) -> int:
    _configure_logging()
    parser = argparse.ArgumentParser(
        prog="pushforward-lab",
        description="Run one measure-dynamics experiment described by a TOML config.")
    parser.add_argument("config", help="path to the experiment config (TOML)")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--out-dir", default=None, help="output directory (default: cwd)")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker bound inside modules; results do not depend on it")
    parser.add_argument("--validate-only", action="store_true",
                        help="check the config and exit")
    args = parser.parse_args(argv)

    try:
        with open(args.config, "rb") as fh:
            config = tomllib.load(fh)
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return 2
    except tomllib.TOMLDecodeError as exc:
        print(f"config parse error: {exc}", file=sys.stderr)
        return 2

    if args.seed is not None:
        config["seed"] = args.seed
    if args.threads is not None:
        config["threads"] = args.threads

    errors = validate(config)
    if errors:
        for err in errors:
            print(f"config error: {err}", file=sys.stderr)
        return 2
    if args.validate_only:
        print("config ok")
        return 0

    out_dir = Path(args.out_dir) if args.out_dir else Path.cwd()
    try:
        summary = run(config, out_dir)
    except EstimateInvalidError as exc:
        print(f"estimate invalid: {exc}", file=sys.stderr)
        return 3
    except PushforwardError as exc:
        print(f"parameter error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - internal faults
        logger.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return 1
    headline_keys = ", ".join(sorted(summary["headline"])) or "none"
    print(f"ok: wrote {config.get('name', config['experiment'])}.csv "
          f"and summary (headline: {headline_keys})")
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
