"""Command line: ``pasting <command> [--config FILE] [--out DIR] [--quiet]``.

Every command writes ``report.json`` to the output directory.  The report
separates ``hard_certificates`` (exact or structural checks) from
``estimates`` (measured constants and slopes); the exit code is 0 exactly
when every hard certificate holds, 1 when one fails and 2 on an error, in
which case the report carries ``{"error": {"code", "message"}}``.
"""
from __future__ import annotations

import argparse
import copy
import json
import logging
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .dynamics import (
    DiagnosticsError,
    cat_suspension,
    classify_singularity,
    domination_estimate,
    floquet_multipliers,
    harmonic_oscillator,
    linear_poincare_cocycle,
    rotation_cocycle,
)
from .grid import GridSpec, ScalarGrid, SpecMismatchError, VectorGrid, c1_norm, divergence, holder_norm
from .io import FieldFormatError, read_field, write_csv, write_field
from .maps import (
    DensityField,
    MapError,
    cat_map,
    conservative_paste_map,
    disk_rotation,
    moser_correct,
    periodic_identity_surgery,
    standard_generating_function,
    standard_map,
    symplectic_blend_2d,
)
from .regions import Ball, RegionError, build_region_nest
from .scenarios import PASTE_RADII, constant_pair, rotation_orbit, sine_density, stream_field
from .solver import SolverError
from .vector_paste import (
    PastingError,
    PastingRequest,
    mollify_divfree,
    mollify_scalar,
    paste_c1,
    paste_support_controlled,
    smooth_field,
)

log = logging.getLogger("pasting")

# Defaults double as the built-in scenarios; ``null`` inputs select generated fields.
DEFAULTS = {
    "paste": {
        "n": 128, "delta": 1e-2, "X": None, "Y": None, "center": [np.pi, np.pi],
        "core_radius": 0.5, "radii": list(PASTE_RADII), "profile": "quintic",
        "tol": 1e-10, "epsilon": None, "trace": "full", "csv": False,
    },
    "paste-support": {
        "n": 128, "delta": 1e-2, "X": None, "Y": None, "center": [np.pi, np.pi],
        "core_radius": 0.5, "delta_support": 1.2, "tol": 1e-10, "epsilon": None, "csv": False,
    },
    "smooth": {"n": 256, "X": None, "eps": [0.2, 0.1, 0.05], "policy": "bands", "tol": 1e-10},
    "mollify": {"n": 128, "X": None, "eps": 0.1, "tol": 1e-10, "csv": False},
    "map-paste": {
        "scenario": "standard", "n": 256, "k": 0.3, "x": [0.3, 0.4], "r": 0.1, "alpha": 0.5,
        "steps": 40, "det_tol": 1e-3, "identity_tol": 1e-9, "profile": "exp-flat", "seed": 0,
    },
    "moser": {"n": 128, "amplitude": 0.2, "theta": None, "steps": 50, "tol": 1e-3},
    "symplectic-blend": {
        "n": 128, "k_outer": 0.1, "k_inner": 0.3, "x": [0.0, 0.25], "r": 0.3,
        "zone_tol": 1e-8, "det_tol": 1e-8,
    },
    "classify": {"matrix": None, "random": 1000, "seed": 0},
    "floquet": {"scenario": "harmonic", "steps": 1000, "liouville_tol": 1e-6},
    "dominate": {"scenario": "cat-suspension", "n_max": 20, "length": 40, "angle": float(np.sqrt(2.0))},
    "norms": {"X": None, "n": 128, "alpha": 0.5},
}

CHOICES = {
    ("map-paste", "scenario"): ["standard", "rotation-period5", "cat-fixed-point"],
    ("floquet", "scenario"): ["harmonic", "cat-suspension"],
    ("dominate", "scenario"): ["cat-suspension", "rotation"],
    ("smooth", "policy"): ["bands", "global"],
    ("paste", "trace"): ["full", "normal"],
    ("paste", "profile"): ["quintic", "exp-flat"],
    ("map-paste", "profile"): ["quintic", "exp-flat"],
}

POSITIVE = {"tol", "det_tol", "zone_tol", "identity_tol", "liouville_tol", "delta", "delta_support",
            "core_radius", "r", "amplitude"}


class CliError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


def _schema_for(command: str) -> dict:
    props = {}
    for key, default in DEFAULTS[command].items():
        if (command, key) in CHOICES:
            props[key] = {"enum": CHOICES[(command, key)]}
        elif key in ("X", "Y", "theta"):
            props[key] = {"type": ["string", "null"]}
        elif key == "matrix":
            props[key] = {"type": ["array", "null"], "items": {"type": "array", "items": {"type": "number"}}}
        elif key == "eps" and command == "smooth":
            props[key] = {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 2}
        elif isinstance(default, bool):
            props[key] = {"type": "boolean"}
        elif isinstance(default, int):
            props[key] = {"type": "integer", "minimum": 0 if key in ("random", "seed") else 1}
        elif isinstance(default, float):
            props[key] = {"type": "number"}
            if key in POSITIVE or key.endswith("tol"):
                props[key]["exclusiveMinimum"] = 0
        elif isinstance(default, list):
            props[key] = {"type": "array", "items": {"type": "number"}, "minItems": len(default), "maxItems": len(default)}
        elif default is None:
            props[key] = {"type": ["number", "null"]}
            if key == "epsilon":
                props[key]["exclusiveMinimum"] = 0
    return {"type": "object", "properties": props, "additionalProperties": False}


def load_config(command: str, path: str | None) -> dict:
    cfg = copy.deepcopy(DEFAULTS[command])
    if path is None:
        return cfg
    try:
        user = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError("config_invalid", f"cannot read config {path}: {exc}") from None
    try:
        jsonschema.validate(user, _schema_for(command))
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise CliError("config_invalid", f"{where}: {exc.message}") from None
    paths = [user[k] for k in ("X", "Y", "theta") if user.get(k)]
    if len(set(paths)) != len(paths):
        raise CliError("config_invalid", "input paths must be distinct")
    cfg.update(user)
    return cfg


def _vector_input(cfg: dict, key: str):
    path = cfg.get(key)
    if path is None:
        return None
    field = read_field(path)
    if not isinstance(field, VectorGrid):
        raise CliError("config_invalid", f"{key} must be a vector field file")
    return field


def _pair(cfg: dict):
    X, Y = _vector_input(cfg, "X"), _vector_input(cfg, "Y")
    if X is None and Y is None:
        return constant_pair(cfg["n"], cfg["delta"])
    if X is None or Y is None:
        raise CliError("config_invalid", "give both X and Y, or neither")
    if X.spec != Y.spec:
        raise SpecMismatchError(f"X on {X.spec}, Y on {Y.spec}")
    return X, Y


def _epsilon(cfg):
    return np.inf if cfg["epsilon"] is None else cfg["epsilon"]


# --------------------------------------------------------------------------
# commands: each returns (hard_certificates, estimates, fields to dump)


def cmd_paste(cfg):
    X, Y = _pair(cfg)
    nest = build_region_nest(X.spec, Ball(tuple(cfg["center"]), cfg["core_radius"]), radii=tuple(cfg["radii"]))
    Z, rep = paste_c1(PastingRequest(X, Y, nest, profile=cfg["profile"], epsilon=_epsilon(cfg),
                                     tol=cfg["tol"], trace=cfg["trace"], with_holder=False))
    d = rep.as_dict()
    est = {k: d[k] for k in ("delta_measured", "c_obs", "distance", "div_residual", "compat_defect",
                             "support_radius", "epsilon_missed", "blend_defect")}
    est["solver"] = rep.solve
    return rep.certificates, est, {"Z": Z}


def cmd_paste_support(cfg):
    X, Y = _pair(cfg)
    K = Ball(tuple(cfg["center"]), cfg["core_radius"])
    Z, rep = paste_support_controlled(X, Y, K, cfg["delta_support"], epsilon=_epsilon(cfg),
                                      tol=cfg["tol"], with_holder=False)
    certs = dict(rep.certificates, support_ok=rep.extra["support_ok"])
    est = {"support_radius": rep.support_radius, "delta_support": cfg["delta_support"],
           "distance": rep.distance, "c_obs": rep.c_obs, "required_delta": rep.extra["required_delta"]}
    return certs, est, {"Z": Z}


def cmd_smooth(cfg):
    X = _vector_input(cfg, "X") or stream_field(cfg["n"])
    eps = [float(e) for e in cfg["eps"]]
    policy = None if cfg["policy"] == "global" else "bands"
    dist, div, comp, oks = [], [], [], []
    for e in eps:
        _, rep = smooth_field(X, e, policy, tol=cfg["tol"])
        dist.append(rep.distance["c1"])
        div.append(rep.div_residual)
        comp.append(rep.compat_ok)
        oks.append(rep.div_residual_ok)
    order = float(np.polyfit(np.log(eps), np.log(dist), 1)[0])
    certs = {"div_preserved": all(oks), "compat_ok": all(comp)}
    est = {"eps": eps, "c1_distance": dist, "div_residual": div, "fitted_order": order,
           "monotone": bool(np.all(np.diff(dist) < 0) if eps[0] > eps[-1] else np.all(np.diff(dist) > 0))}
    return certs, est, {}


def cmd_mollify(cfg):
    X = _vector_input(cfg, "X") or stream_field(cfg["n"])
    M = mollify_divfree(X, cfg["eps"])
    comm = float(np.max(np.abs(divergence(M).values - mollify_scalar(divergence(X), cfg["eps"]).values)))
    scale = max(sum(c1_norm(X)), 1.0)
    certs = {"commutes_with_divergence": comm <= cfg["tol"] * scale}
    est = {"commutation_defect": comm, "div_in": divergence(X).sup(), "div_out": divergence(M).sup(),
           "c1_norm_out": sum(c1_norm(M))}
    return certs, est, {"mollified": M}


def cmd_map_paste(cfg):
    spec = GridSpec(2, cfg["n"], 1.0)
    if cfg["scenario"] == "standard":
        f = standard_map(spec, cfg["k"])
        _, rep = conservative_paste_map(f, cfg["x"], cfg["r"], cfg["alpha"], steps=cfg["steps"], profile=cfg["profile"])
        certs = {
            "equals_f_outside_r": rep["equals_f_outside_r"],
            "affine_inside_half_r": rep["affine_inside_half_r"],
            "det_residual_ok": rep["det_residual"] <= cfg["det_tol"],
        }
        return certs, rep, {}
    if cfg["scenario"] == "rotation-period5":
        c, angle, r_rigid, r_outer, x, r = rotation_orbit()
        f = disk_rotation(spec, c, angle, r_rigid, r_outer)
        _, rep = periodic_identity_surgery(f, x, 5, r, steps=cfg["steps"], seed=cfg["seed"])
        certs = {
            "identity_ok": rep["identity_error"] <= cfg["identity_tol"],
            "equals_f_outside_r": rep["equals_f_outside_r"],
            "det_residual_ok": rep["det_residual"] <= cfg["det_tol"],
        }
        return certs, rep, {}
    # the cat map's fixed point has a hyperbolic derivative: the surgery must refuse it
    try:
        periodic_identity_surgery(cat_map(spec), [0.0, 0.0], 1, cfg["r"])
    except MapError as exc:
        if exc.code != "derivative_not_identity":
            raise
        ev = sorted(np.abs(exc.eigenvalues), reverse=True)
        return {"rejected": True}, {"eigenvalues": [float(e) for e in ev], "code": exc.code}, {}
    return {"rejected": False}, {}, {}


def cmd_moser(cfg):
    if cfg["theta"] is not None:
        theta = read_field(cfg["theta"])
        if not isinstance(theta, ScalarGrid):
            raise CliError("config_invalid", "theta must be a scalar field file")
    else:
        theta = sine_density(cfg["n"], cfg["amplitude"])
    d = DensityField(theta, float(np.mean(theta.values)))
    chi, res = moser_correct(d, cfg["steps"])
    disp = chi.spec.periodic_delta(chi.images - chi.centers())
    return {"residual_ok": res <= cfg["tol"]}, {"residual": res, "lambda": d.lam,
                                                 "max_displacement": float(np.max(np.abs(disp)))}, {}


def cmd_symplectic(cfg):
    L = 1.0
    spec = GridSpec(2, cfg["n"], L)
    Sf = standard_generating_function(cfg["k_outer"], L)
    Sg = standard_generating_function(cfg["k_inner"], L)
    _, rep = symplectic_blend_2d(Sf, Sg, cfg["x"], cfg["r"], spec)
    certs = {
        "inner_zone_ok": rep["inner_error"] <= cfg["zone_tol"],
        "outer_zone_ok": rep["outer_error"] <= cfg["zone_tol"],
        "det_ok": rep["det_residual"] <= cfg["det_tol"],
        "twist_ok": rep["twist_lower_bound"] > 0,
    }
    return certs, rep, {}


def cmd_classify(cfg):
    if cfg["matrix"] is not None:
        cls = classify_singularity(np.asarray(cfg["matrix"], dtype=float))
        return {"trace_free": True}, cls.as_dict(), {}
    rng = np.random.default_rng(cfg["seed"])
    counts, exceptions, done = {}, 0, 0
    while done < cfg["random"]:
        A = rng.normal(size=(3, 3))
        A -= np.trace(A) / 3 * np.eye(3)
        ev = np.linalg.eigvals(A)
        if np.any(np.abs(ev.imag) > 1e-12) or np.min(np.abs(ev.real)) < 1e-6:
            continue
        tag = classify_singularity(A).tag
        counts[tag] = counts.get(tag, 0) + 1
        exceptions += not tag.startswith("lorenz_like")
        done += 1
    return {"all_lorenz_like": exceptions == 0}, {"counts": counts, "exceptions": exceptions}, {}


def cmd_floquet(cfg):
    if cfg["scenario"] == "harmonic":
        X, J = harmonic_oscillator()
        res = floquet_multipliers(X, [1.0, 0.0], 2 * np.pi, jac=J, steps=cfg["steps"])
    else:
        X, J = cat_suspension()
        res = floquet_multipliers(X, [0.0, 0.0, 0.0], 1.0, jac=J, steps=cfg["steps"],
                                  periods=[np.inf, np.inf, 1.0])
    liou = abs(res.liouville_product - 1.0)
    return {"orbit_closed": True, "liouville_ok": liou <= cfg["liouville_tol"]}, res.as_dict(), {}


def cmd_dominate(cfg):
    if cfg["scenario"] == "cat-suspension":
        X, J = cat_suspension()
        coc = linear_poincare_cocycle(X, [0.0, 0.0, 0.0], 1.0, cfg["length"], jac=J)
        certs = {"step_det_ok": bool(np.all(np.abs(coc.dets - 1.0) <= 1e-6))}
    else:
        coc = rotation_cocycle(cfg["angle"], cfg["length"])
        certs = {}
    est = domination_estimate(coc, cfg["n_max"]).as_dict()
    return certs, est, {}


def cmd_norms(cfg):
    X = _vector_input(cfg, "X") or stream_field(cfg["n"])
    c0, jac = c1_norm(X)
    holder = [holder_norm(ScalarGrid(X.spec, X.components[a]), cfg["alpha"]) for a in range(X.spec.dim)]
    est = {"c0": c0, "jacobian_sup": jac, "c1": c0 + jac, "holder_per_component": holder,
           "div_sup": divergence(X).sup(), "alpha": cfg["alpha"]}
    return {}, est, {}


COMMANDS = {
    "paste": (cmd_paste, "paste Y into X near a ball, divergence-free"),
    "paste-support": (cmd_paste_support, "pasting with the support inside a delta-neighbourhood"),
    "smooth": (cmd_smooth, "divergence-free smoothing sweep over eps"),
    "mollify": (cmd_mollify, "mollify a field and check divergence commutation"),
    "map-paste": (cmd_map_paste, "conservative surgery of torus maps"),
    "moser": (cmd_moser, "Moser correction of a density"),
    "symplectic-blend": (cmd_symplectic, "generating-function blend of two standard maps"),
    "classify": (cmd_classify, "spectral classification of singularities"),
    "floquet": (cmd_floquet, "Floquet multipliers of a periodic orbit"),
    "dominate": (cmd_dominate, "finite-time domination estimate of a cocycle"),
    "norms": (cmd_norms, "C0 / C1 / Holder norms of a field"),
}

ERRORS = (CliError, SpecMismatchError, FieldFormatError, RegionError, PastingError, SolverError,
          MapError, DiagnosticsError)


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if np.isfinite(x) else str(x)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def run(command: str, config_path: str | None, out: Path) -> tuple[int, dict]:
    """Execute one command; write ``report.json`` (and CSV dumps) under ``out``."""
    out.mkdir(parents=True, exist_ok=True)
    report = {"command": command, "version": __version__}
    try:
        cfg = load_config(command, config_path)
        report["config"] = cfg
        certs, est, fields = COMMANDS[command][0](cfg)
    except ERRORS as exc:
        code = getattr(exc, "code", "error")
        report["error"] = {"code": code, "message": str(exc)}
        status = 2
    else:
        certs = {k: bool(v) for k, v in certs.items()}
        report.update(hard_certificates=certs, estimates=est, ok=all(certs.values()))
        status = 0 if report["ok"] else 1
        if cfg.get("csv"):
            for name, field in fields.items():
                write_csv(field, out / f"{name}.csv")
                write_field(field, out / f"{name}.vf")
    (out / "report.json").write_text(json.dumps(_clean(report), sort_keys=True, indent=2) + "\n")
    return status, report


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pasting", description="Conservative pasting pipelines with certified reports.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", help="JSON file overriding the built-in scenario")
        p.add_argument("--out", default="out", help="output directory (default: ./out)")
        p.add_argument("--quiet", action="store_true", help="print nothing on success")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    status, report = run(args.command, args.config, Path(args.out))
    if "error" in report:
        print(f"error [{report['error']['code']}]: {report['error']['message']}", file=sys.stderr)
    elif not args.quiet or status:
        for name, ok in report["hard_certificates"].items():
            print(f"{'PASS' if ok else 'FAIL'}  {name}")
        print(f"report: {Path(args.out) / 'report.json'}")
    return status


if __name__ == "__main__":
    sys.exit(main())
