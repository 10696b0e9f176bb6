"""Configuration-driven experiment runner.

One entry point: ``nlgeo run <config.json>`` executes a single experiment and
writes CSV/JSON artifacts whose names derive from a hash of the config, plus
a manifest; ``nlgeo list`` prints the experiment registry.  All numerical
knobs live in the config, none on flags.  Exit codes: 0 success, 2 config
error, 3 numerical-guard violation, 4 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
import time
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .errors import NumericalGuardError

OUTPUT_ROOT_ENV = "NLGEO_OUTPUT_ROOT"

_SHAPE_SCHEMAS = [
    {
        "type": "object",
        "properties": {
            "kind": {"const": "ball"},
            "center": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 3},
            "radius": {"type": "number", "exclusiveMinimum": 0},
        },
        "required": ["kind", "center", "radius"],
        "additionalProperties": False,
    },
    {
        "type": "object",
        "properties": {
            "kind": {"const": "rectangle"},
            "lo": {"type": "array", "items": {"type": "number"}},
            "hi": {"type": "array", "items": {"type": "number"}},
        },
        "required": ["kind", "lo", "hi"],
        "additionalProperties": False,
    },
    {
        "type": "object",
        "properties": {
            "kind": {"const": "ellipse"},
            "center": {"type": "array", "items": {"type": "number"}},
            "semi_axes": {"type": "array", "items": {"type": "number"}},
        },
        "required": ["kind", "center", "semi_axes"],
        "additionalProperties": False,
    },
    {
        "type": "object",
        "properties": {
            "kind": {"const": "annulus"},
            "center": {"type": "array", "items": {"type": "number"}},
            "r_in": {"type": "number", "exclusiveMinimum": 0},
            "r_out": {"type": "number", "exclusiveMinimum": 0},
        },
        "required": ["kind", "center", "r_in", "r_out"],
        "additionalProperties": False,
    },
]

_ANISO_SCHEMA = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["isotropic", "dislocation", "tabulated"]},
        "mu": {"type": "number"},
        "poisson": {"type": "number"},
        "values": {"type": "array", "items": {"type": "number"}},
    },
    "required": ["kind"],
    "additionalProperties": False,
}

_R_LIST = {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1}

_PARAM_SCHEMAS = {
    "perimeter-sweep": {
        "type": "object",
        "properties": {
            "shape": {"oneOf": _SHAPE_SCHEMAS},
            "s": {"type": "number", "minimum": 1},
            "r_list": _R_LIST,
            "h_over_r": {"type": "number", "minimum": 4},
            "anisotropy": _ANISO_SCHEMA,
        },
        "required": ["shape", "s", "r_list"],
        "additionalProperties": False,
    },
    "joint-sweep": {
        "type": "object",
        "properties": {
            "shape": {"oneOf": _SHAPE_SCHEMAS},
            "r_list": _R_LIST,
            "h_over_r": {"type": "number", "minimum": 4},
            "anisotropy": _ANISO_SCHEMA,
        },
        "required": ["shape", "r_list"],
        "additionalProperties": False,
    },
    "curvature-sweep": {
        "type": "object",
        "properties": {
            "shape": {"oneOf": _SHAPE_SCHEMAS},
            "s": {"type": "number", "minimum": 1},
            "r_list": _R_LIST,
            "n_points": {"type": "integer", "minimum": 1},
            "anisotropy": _ANISO_SCHEMA,
        },
        "required": ["shape", "s", "r_list"],
        "additionalProperties": False,
    },
    "axiom-suite": {
        "type": "object",
        "properties": {
            "s": {"type": "number", "minimum": 1},
            "r": {"type": "number", "exclusiveMinimum": 0},
            "seed": {"type": "integer"},
            "instances": {"type": "integer", "minimum": 4},
        },
        "required": ["s", "r"],
        "additionalProperties": False,
    },
    "flow": {
        "type": "object",
        "properties": {
            "shape": {"oneOf": _SHAPE_SCHEMAS},
            "s": {"type": "number", "minimum": 1},
            "r": {"type": "number", "exclusiveMinimum": 0},
            "h": {"type": "number", "exclusiveMinimum": 0},
            "scaling": {"enum": ["none", "sigma", "beta"]},
            "cfl": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
            "levels": {"type": "integer", "minimum": 1},
            "t_end": {"type": "number", "exclusiveMinimum": 0},
            "snapshot_dt": {"type": "number", "exclusiveMinimum": 0},
            "pad": {"type": "number", "minimum": 0},
            "anisotropy": _ANISO_SCHEMA,
        },
        "required": ["shape", "s", "r", "h", "t_end"],
        "additionalProperties": False,
    },
    "dislocation-preset": {
        "type": "object",
        "properties": {
            "mu": {"type": "number", "exclusiveMinimum": 0},
            "poisson": {"type": "number", "exclusiveMinimum": -1, "exclusiveMaximum": 0.5},
            "shape": {"oneOf": _SHAPE_SCHEMAS},
            "r_list": _R_LIST,
            "t_compare": {"type": "number", "exclusiveMinimum": 0},
        },
        "required": ["mu", "poisson", "shape", "r_list"],
        "additionalProperties": False,
    },
    "kernel-selftest": {
        "type": "object",
        "properties": {"seed": {"type": "integer"}},
        "additionalProperties": False,
    },
}

_DESCRIPTIONS = {
    "perimeter-sweep": "scaled interaction energy of a shape over a core-radius sweep, with affine fit",
    "joint-sweep": "energy sweep with the exponent tied to the core radius, joint-limit scaling",
    "curvature-sweep": "scaled nonlocal curvature at boundary points over a core-radius sweep",
    "axiom-suite": "randomized monotonicity/translation/symmetry/ball-sign curvature checks",
    "flow": "level-set kernel-curvature flow with snapshots and radius statistics",
    "dislocation-preset": "slip-region flow versus the Lagrangian front-tracking reference",
    "kernel-selftest": "closed-form and identity checks for kernels and scaling constants",
}

CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "version": {"const": "1"},
        "kind": {"enum": sorted(_PARAM_SCHEMAS)},
        "params": {"type": "object"},
        "output_dir": {"type": "string"},
        "threads": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer"},
    },
    "required": ["version", "kind", "params", "output_dir"],
    "additionalProperties": False,
}


class ConfigError(ValueError):
    pass


def _validate(config: dict) -> None:
    import jsonschema

    def check(instance, schema, prefix=""):
        validator = jsonschema.Draft202012Validator(schema)
        errors = sorted(validator.iter_errors(instance), key=lambda e: list(e.absolute_path))
        if errors:
            e = errors[0]
            pointer = prefix + "/" + "/".join(str(p) for p in e.absolute_path)
            raise ConfigError(f"config error at {pointer or '/'}: {e.message}")

    check(config, CONFIG_SCHEMA)
    check(config["params"], _PARAM_SCHEMAS[config["kind"]], prefix="/params")
    # numeric sanity beyond the schema
    params = config["params"]
    for key in ("r", "radius"):
        if key in params and params[key] <= 0:
            raise ConfigError(f"config error at /params/{key}: {key} must be > 0")
    if "r_list" in params and any(r <= 0 for r in params["r_list"]):
        bad = next(i for i, r in enumerate(params["r_list"]) if r <= 0)
        raise ConfigError(f"config error at /params/r_list/{bad}: r must be > 0")


def _build_shape(spec: dict):
    from .shapes import Annulus, Ball, Ellipse, Rectangle

    kind = spec["kind"]
    if kind == "ball":
        return Ball(spec["center"], spec["radius"])
    if kind == "rectangle":
        return Rectangle(spec["lo"], spec["hi"])
    if kind == "ellipse":
        return Ellipse(spec["center"], spec["semi_axes"])
    return Annulus(spec["center"], spec["r_in"], spec["r_out"])


def _build_anisotropy(spec: dict | None):
    from .kernels import Dislocation, Isotropic, Tabulated

    if spec is None or spec["kind"] == "isotropic":
        return Isotropic()
    if spec["kind"] == "dislocation":
        return Dislocation(spec["mu"], spec["poisson"])
    return Tabulated(spec["values"])


def _config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def _atomic_write(path: str, write_fn) -> None:
    tmp = f"{path}.tmp-{os.getpid()}"
    write_fn(tmp)
    os.replace(tmp, path)


def _write_csv(path: str, header, rows) -> None:
    def write(tmp):
        with open(tmp, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(header)
            for row in rows:
                wr.writerow(row)

    _atomic_write(path, write)


def _write_json(path: str, payload) -> None:
    _atomic_write(
        path, lambda tmp: open(tmp, "w").write(json.dumps(payload, indent=1, sort_keys=True))
    )


def _fmt(x) -> str:
    return "%.17g" % x


# ---------------------------------------------------------------------------
# experiment implementations


def _run_perimeter_sweep(params, outdir, tag, joint=False):
    from .kernels import beta_scale
    from .perimeter import joint_sweep, perimeter_sweep

    shape = _build_shape(params["shape"])
    g = _build_anisotropy(params.get("anisotropy"))
    hr = params.get("h_over_r", 8.0)
    rule = lambda r: r / hr
    if joint:
        path = [(r, 1.0 + 1.0 / abs(math.log(r))) for r in sorted(params["r_list"], reverse=True)]
        sweep = joint_sweep(shape, path, h_rule=rule, g=g)
    else:
        sweep = perimeter_sweep(shape, params["s"], params["r_list"], h_rule=rule, g=g)
    rows_path = os.path.join(outdir, f"{tag}-rows.csv")
    _write_csv(
        rows_path,
        ["r", "s", "h", "value", "scaled_value", "tail_bound"],
        [[_fmt(row[c]) for c in ("r", "s", "h", "value", "scaled_value", "tail_bound")] for row in sweep.rows],
    )
    fit_path = os.path.join(outdir, f"{tag}-fit.json")
    _write_json(
        fit_path,
        {
            "shape": repr(shape),
            "fit_slope": sweep.fit[0],
            "fit_intercept": sweep.fit[1],
            "fit_residual": sweep.fit[2],
        },
    )
    return [rows_path, fit_path]


def _run_curvature_sweep(params, outdir, tag):
    from .curvature import CurvatureQuad, CurvatureQuery, nonlocal_curvature
    from .kernels import Isotropic, KernelParams, sigma_scale
    from .reference import ball_curvature_quadrature
    from .shapes import Ball, boundary_samples

    shape = _build_shape(params["shape"])
    g = _build_anisotropy(params.get("anisotropy"))
    n_points = params.get("n_points", 4)
    samples = boundary_samples(shape, n_points)
    rows = []
    for r in sorted(params["r_list"], reverse=True):
        p = KernelParams(shape.d, params["s"], r)
        sig = sigma_scale(p)
        for smp in samples:
            K = nonlocal_curvature(CurvatureQuery(smp.point, shape, p, g))
            oracle = math.nan
            if isinstance(shape, Ball) and (shape.d == 2 or g.is_isotropic):
                ang = math.atan2(*(smp.point - shape.center)[::-1]) if shape.d == 2 else 0.0
                oracle = ball_curvature_quadrature(p, shape.radius, g, angle=ang)
            rows.append(
                [
                    _fmt(smp.point[0]),
                    _fmt(smp.point[1]),
                    _fmt(r),
                    _fmt(params["s"]),
                    _fmt(K),
                    _fmt(K / sig),
                    _fmt(oracle),
                    _fmt(abs(K - oracle) if not math.isnan(oracle) else math.nan),
                ]
            )
    path = os.path.join(outdir, f"{tag}-curvature.csv")
    _write_csv(
        path,
        ["x1", "x2", "r", "s", "value", "scaled_value", "oracle_value", "error_estimate"],
        rows,
    )
    return [path]


def _run_axiom_suite(params, outdir, tag):
    from .curvature import axiom_suite
    from .kernels import KernelParams

    p = KernelParams(2, params["s"], params["r"])
    report = axiom_suite(p, seed=params.get("seed", 0), n=params.get("instances", 200))
    path = os.path.join(outdir, f"{tag}-axioms.json")
    _write_json(
        path,
        {
            "instances": len(report.instances),
            "violations": [f"{i.kind}: {i.detail}" for i in report.failures],
            "all_passed": report.all_passed,
        },
    )
    if not report.all_passed:
        raise RuntimeError("axiom suite reported violations")
    return [path]


def _run_flow(params, outdir, tag):
    from .flow import FlowConfig, run_flow
    from .kernels import KernelParams
    from .shapes import GridSpec

    shape = _build_shape(params["shape"])
    g = _build_anisotropy(params.get("anisotropy"))
    p = KernelParams(2, params["s"], params["r"])
    h = params["h"]
    pad = params.get("pad", 8.0 * max(p.r, 4 * h) + 8 * h)
    lo, hi = shape.bounding_box()
    grid = GridSpec(
        tuple(np.asarray(lo) - pad),
        h,
        tuple(int(math.ceil((hi[k] - lo[k] + 2 * pad) / h)) for k in range(2)),
    )
    cfg = FlowConfig(
        p=p,
        g=g,
        scaling=params.get("scaling", "sigma"),
        cfl=params.get("cfl", 0.5),
        levels=params.get("levels", 1),
        t_end=params["t_end"],
        snapshot_dt=params.get("snapshot_dt", params["t_end"] / 5),
    )
    traj = run_flow(shape, grid, cfg)
    radius_path = os.path.join(outdir, f"{tag}-radius.csv")
    _write_csv(
        radius_path,
        ["t", "mean_radius", "min_radius", "max_radius"],
        [
            [_fmt(t), _fmt(st[0]), _fmt(st[1]), _fmt(st[2])]
            for t, st in zip(traj.times, traj.radius_stats)
        ],
    )
    paths = [radius_path]
    for i, (t, lines) in enumerate(zip(traj.times, traj.contours)):
        cpath = os.path.join(outdir, f"{tag}-contour-{i:03d}.csv")
        rows = []
        for li, ln in enumerate(lines):
            for pt in ln:
                rows.append([li, _fmt(pt[0]), _fmt(pt[1])])
        _write_csv(cpath, ["line", "x1", "x2"], rows)
        paths.append(cpath)
    _write_json(
        os.path.join(outdir, f"{tag}-trajectory.json"),
        {
            "times": traj.times,
            "extinct": traj.extinct,
            "extinction_time": traj.extinction_time,
            "snapshots": len(traj.times),
        },
    )
    paths.append(os.path.join(outdir, f"{tag}-trajectory.json"))
    return paths


def _run_dislocation(params, outdir, tag):
    from .dislocation import DislocationParams, dislocation_flow_preset

    dp = DislocationParams(params["mu"], params["poisson"])
    shape = _build_shape(params["shape"])
    out = dislocation_flow_preset(
        dp, shape, params["r_list"], t_compare=params.get("t_compare", 0.05)
    )
    path = os.path.join(outdir, f"{tag}-compare.csv")
    _write_csv(
        path,
        ["t", "hausdorff_to_oracle", "r"],
        [[_fmt(run["t"]), _fmt(run["hausdorff"]), _fmt(run["r"])] for run in out["runs"]],
    )
    return [path]


def _run_kernel_selftest(params, outdir, tag):
    from .kernels import (
        Dislocation,
        Isotropic,
        KernelParams,
        alpha_const,
        beta_scale,
        eval_kernel,
        field_T,
        lambda_total,
        sigma_scale,
        sphere_area,
    )

    rng = np.random.default_rng(params.get("seed", 0))
    checks = {}
    # scaling identity
    ok = True
    for _ in range(200):
        d = int(rng.integers(2, 4))
        s = float(rng.uniform(1.0, 3.0))
        r, l, t = rng.uniform(0.1, 2.0, size=3)
        lhs = eval_kernel(KernelParams(d, s, r), l * t)
        rhs = l ** (-d - s) * eval_kernel(KernelParams(d, s, r / l), t)
        ok &= abs(lhs - rhs) <= 1e-12 * max(abs(lhs), abs(rhs))
    checks["scaling_identity"] = bool(ok)
    # continuity at the core radius
    p = KernelParams(2, 2.0, 0.5)
    checks["core_continuity"] = bool(
        abs(eval_kernel(p, 0.5 - 1e-14) - eval_kernel(p, 0.5 + 1e-14)) < 1e-9
    )
    # closed forms
    checks["lambda_triple_pi"] = bool(
        abs(lambda_total(KernelParams(2, 1.0, 1.0)) - 3 * math.pi) < 1e-12
    )
    checks["sigma_log"] = bool(
        abs(sigma_scale(KernelParams(2, 1.0, math.exp(-2.0))) - 2.0) < 1e-12
    )
    checks["alpha_values"] = bool(
        abs(alpha_const(2, 1.0) - 4.0 / 3.0) < 1e-15 and alpha_const(2, 2.0) == -1.0
    )
    ok = True
    for _ in range(100):
        d = int(rng.integers(2, 4))
        s = float(rng.uniform(1.001, 3.0))
        r = float(rng.uniform(0.01, 0.99))
        p2 = KernelParams(d, s, r)
        ok &= abs(beta_scale(d, s, r) - (sigma_scale(p2) + alpha_const(d, s))) <= 1e-12 * beta_scale(d, s, r)
    checks["beta_identity"] = bool(ok)
    # divergence of the auxiliary field reproduces the kernel
    p3 = KernelParams(2, 1.0, 0.5)
    step = 1e-5
    ok = True
    for x in ([0.9, 0.4], [0.2, 0.1], [1.5, -0.3]):
        x = np.array(x)
        div = 0.0
        for ax in range(2):
            e = np.zeros(2)
            e[ax] = step
            div += (field_T(p3, x + e)[ax] - field_T(p3, x - e)[ax]) / (2 * step)
        ok &= abs(div - eval_kernel(p3, np.linalg.norm(x))) <= 1e-6 * eval_kernel(
            p3, np.linalg.norm(x)
        )
    checks["divergence_identity"] = bool(ok)
    # evenness of anisotropies
    gdis = Dislocation(8 * math.pi, 0.25)
    xs = rng.normal(size=(1000, 2))
    xs /= np.linalg.norm(xs, axis=1, keepdims=True)
    checks["evenness"] = bool(np.max(np.abs(gdis(xs) - gdis(-xs))) == 0.0)
    path = os.path.join(outdir, f"{tag}-selftest.json")
    _write_json(path, checks)
    if not all(checks.values()):
        raise RuntimeError(f"kernel selftest failed: {checks}")
    return [path]


_RUNNERS = {
    "perimeter-sweep": lambda prm, outdir, tag: _run_perimeter_sweep(prm, outdir, tag),
    "joint-sweep": lambda prm, outdir, tag: _run_perimeter_sweep(prm, outdir, tag, joint=True),
    "curvature-sweep": _run_curvature_sweep,
    "axiom-suite": _run_axiom_suite,
    "flow": _run_flow,
    "dislocation-preset": _run_dislocation,
    "kernel-selftest": _run_kernel_selftest,
}


def list_experiments():
    """Registry of experiment kinds with one-line descriptions, stable order."""
    return [(kind, _DESCRIPTIONS[kind]) for kind in sorted(_RUNNERS)]


def run(config_path: str) -> int:
    started = time.time()
    try:
        with open(config_path) as fh:
            config = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        _validate(config)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    root = os.environ.get(OUTPUT_ROOT_ENV)
    outdir = (
        os.path.join(root, config["output_dir"]) if root else config["output_dir"]
    )
    os.makedirs(outdir, exist_ok=True)
    tag = f"{config['kind']}-{_config_hash(config)[:12]}"
    try:
        artifacts = _RUNNERS[config["kind"]](config["params"], outdir, tag)
    except NumericalGuardError as exc:
        print(f"numerical guard: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 4
    manifest = {
        "config_hash": _config_hash(config),
        "tool_version": __version__,
        "started_at": datetime.fromtimestamp(started, tz=timezone.utc).isoformat(),
        "wall_seconds": time.time() - started,
        "config": config,
        "artifacts": [os.path.basename(a) for a in artifacts],
    }
    _write_json(os.path.join(outdir, f"{tag}-manifest.json"), manifest)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="nlgeo", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    runp = sub.add_parser("run", help="execute one experiment from a JSON config")
    runp.add_argument("config", help="path to the JSON config")
    sub.add_parser("list", help="list available experiment kinds")
    args = parser.parse_args(argv)
    if args.command == "list":
        for kind, desc in list_experiments():
            print(f"{kind:20s} {desc}")
        return 0
    return run(args.config)


if __name__ == "__main__":
    sys.exit(main())
