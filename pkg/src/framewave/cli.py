"""Experiment runner: config parsing, mode dispatch, report emission.

Subcommands: certify | conserve | evolve | estimate | commutator.
Flags: --config PATH, --out DIR, --seed U64, --refine K.
Exit codes: 0 success, 2 config error, 3 certification failure,
4 runtime failure.

Configs are JSON against the published schema (written alongside every
run's outputs); numeric constraints are enforced at parse time.  Identical
config and seed give bit-identical CSV/JSON outputs on one platform: all
randomness flows through one recorded 64-bit seed and no wall-clock data
enters any artifact.

Multi-index grammar (the "multi_indices" entries): a comma-separated list
of generator tokens applied left-to-right as written, leftmost outermost.
Tokens:  S  |  Zab with 0 <= a < b <= 3 (e.g. Z01, Z12)  |  P <axis> with
axis in {t, x1, x2, x3} or {0..3} (e.g. "P t", "Px2").  The empty string
is the empty multi-index.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import certify as certify_mod
from . import energy, estimates, evolve
from .evolve import run_experiment
from .errors import ConstraintError, FramewaveError, SchemaError
from .poly import measure_order
from .vecfields import parse_multi_index

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["mode"],
    "additionalProperties": False,
    "properties": {
        "mode": {"enum": ["certify", "conserve", "evolve", "estimate", "commutator"]},
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"N": {"type": "integer"}, "X": {"type": "number"}},
        },
        "times": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "t1": {"type": "number"},
                "t2": {"type": "number"},
                "dt": {"type": ["number", "null"]},
                "cfl": {"type": "number"},
            },
        },
        "weights": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"gamma": {"type": "number"}, "mu": {"type": "number"}},
        },
        "region": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "q0": {"type": ["number", "string"]},
                "origin_ball_radius": {"type": ["number", "null"]},
            },
        },
        "background": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "family": {"enum": ["zero", "static-bump", "traveling-bump"]},
                "epsilon": {"type": "number"},
                "center": {"type": "array", "items": {"type": "number"}},
                "radius": {"type": "number"},
                "velocity": {"type": "array", "items": {"type": "number"}},
            },
        },
        "source": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "terms": {"type": "array", "items": {"type": "string"}},
                "bigO_degree": {"type": "integer"},
                "slots": {"type": "array", "items": {"type": "integer"}},
            },
        },
        "data": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "family": {"enum": ["zero", "gaussian", "plane_wave", "outgoing_pulse"]},
                "rank": {"type": "integer"},
                "channels": {"type": "integer"},
                "amplitude": {"type": "number"},
                "center": {"type": "array", "items": {"type": "number"}},
                "sigma": {"type": "number"},
                "kvec": {"type": "array", "items": {"type": "number"}},
                "q_center": {"type": "number"},
            },
        },
        "multi_indices": {"type": "array", "items": {"type": "string"}},
        "components": {"type": "array", "items": {"type": "string"}},
        "boundary": {"enum": ["sommerfeld", "periodic"]},
        "monitors": {"type": "integer"},
        "snapshots": {"type": "boolean"},
        "certify": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "pairs": {"type": "integer"},
                "fast": {"type": "boolean"},
            },
        },
        "out_dir": {"type": "string"},
        "seed": {"type": "integer"},
    },
}

DEFAULTS = {
    "grid": {"N": 32, "X": 8.0},
    "times": {"t1": 0.0, "t2": 1.0, "dt": None, "cfl": 0.45},
    "weights": {"gamma": 0.5, "mu": -0.25},
    "region": {"q0": -2.0, "origin_ball_radius": None},
    "background": {"family": "zero", "epsilon": 0.0, "center": [0.0, 0.0, 0.0],
                   "radius": 4.0, "velocity": [0.3, 0.0, 0.0]},
    "source": {"terms": [], "bigO_degree": 2, "slots": [0, 1, 2, 3]},
    "data": {"family": "gaussian", "rank": 0, "channels": 1, "amplitude": 1.0,
             "center": [0.0, 0.0, 3.5], "sigma": 1.0, "kvec": [1.0, 0.0, 0.0],
             "q_center": -2.0},
    "multi_indices": [""],
    "components": ["scalar"],
    "boundary": "sommerfeld",
    "monitors": 9,
    "snapshots": False,
    "certify": {"pairs": 50, "fast": False},
    "out_dir": "out",
    "seed": 12345,
}


def _merge_defaults(cfg):
    out = {}
    for key, dval in DEFAULTS.items():
        if isinstance(dval, dict):
            merged = dict(dval)
            merged.update(cfg.get(key, {}))
            out[key] = merged
        else:
            out[key] = cfg.get(key, dval)
    out["mode"] = cfg["mode"]
    return out


def parse_config(path):
    """Load, schema-validate, constraint-check, and default-fill a config."""
    import jsonschema

    try:
        with open(path) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaError(f"cannot read config: {exc}") from exc
    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        path_str = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise SchemaError(f"config field {path_str}: {exc.message}") from exc
    cfg = _merge_defaults(raw)
    if isinstance(cfg["region"]["q0"], str):
        if cfg["region"]["q0"] not in ("-inf", "-infinity"):
            raise SchemaError("region.q0 must be a number or \"-inf\"")
        cfg["region"]["q0"] = float("-inf")
    if not cfg["weights"]["gamma"] > 0:
        raise ConstraintError("gamma must be > 0")
    if not cfg["weights"]["mu"] < 0:
        raise ConstraintError("mu must be < 0")
    if cfg["background"]["epsilon"] > 0.3:
        raise ConstraintError("epsilon must be <= 0.3 (|H| < 1/3 hypothesis)")
    if cfg["times"]["cfl"] > 0.5:
        raise ConstraintError("cfl must be <= 0.5")
    if cfg["grid"]["N"] % 2 or cfg["grid"]["N"] < 8:
        raise ConstraintError("grid.N must be even and >= 8")
    if cfg["times"]["t2"] <= cfg["times"]["t1"]:
        raise ConstraintError("times.t2 must exceed times.t1")
    for text in cfg["multi_indices"]:
        parse_multi_index(text)
    return cfg


def _refine_list(N, k):
    out = []
    for j in range(k):
        n = int(round(N * (2 + j) / 2))
        out.append(n + (n % 2))
    return out


def mode_certify(cfg, out_dir):
    results = certify_mod.run_suite(seed=cfg["seed"], fast=cfg["certify"]["fast"])
    payload = {"checks": [r.to_json() for r in results],
               "all_passed": all(r.passed for r in results), "seed": cfg["seed"]}
    energy.write_json(os.path.join(out_dir, "certify.json"), payload)
    for r in results:
        print(f"[{'PASS' if r.passed else 'FAIL'}] {r.name}: "
              f"value={r.value:.3e} tol={r.tolerance:.3e} {r.detail}")
    return 0 if payload["all_passed"] else 3


def mode_conserve(cfg, out_dir, refine=3):
    Ns = _refine_list(cfg["grid"]["N"], refine)
    _, bg0, params, region = evolve.setup_experiment(cfg)
    residuals, rows = [], []
    for N in Ns:
        sub = json.loads(json.dumps(cfg))
        sub["grid"]["N"] = N
        hist, _ = run_experiment(sub, out_dir)
        series = hist.component_series(cfg["components"][0])
        rep = energy.conservation_budget(series, region, cfg["times"]["t1"],
                                         cfg["times"]["t2"], params)
        residuals.append(rep.residual)
        for term, val in rep.terms().items():
            rows.append((N, term, val))
    hs = [2.0 * cfg["grid"]["X"] / N for N in Ns]
    order = measure_order(hs, residuals)
    payload = {"N": Ns, "residuals": residuals, "measured_order": order,
               "seed": cfg["seed"]}
    energy.write_json(os.path.join(out_dir, "conserve.json"), payload)
    energy.write_series_csv(os.path.join(out_dir, "budget_terms.csv"),
                            [(float(n), term, val) for n, term, val in rows])
    print(f"budget residual order: {order:.3f} over N = {Ns}")
    return 0


def mode_evolve(cfg, out_dir):
    _, summary = run_experiment(cfg, out_dir)
    energy.write_json(os.path.join(out_dir, "evolve_summary.json"), summary)
    return 0


def mode_estimate(cfg, out_dir):
    _, bg, params, region = evolve.setup_experiment(cfg)
    hist, _ = run_experiment(cfg, out_dir)
    reports = []
    for text in cfg["multi_indices"]:
        I = parse_multi_index(text)
        for comp in cfg["components"]:
            rep = estimates.energy_estimate_report(
                hist, I, comp, cfg["times"]["t1"], cfg["times"]["t2"],
                region, params)
            reports.append(rep.to_json())
    energy.write_json(os.path.join(out_dir, "estimate.json"),
                      {"reports": reports, "seed": cfg["seed"]})
    return 0


def mode_commutator(cfg, out_dir):
    from .fields import PolyField

    rng = np.random.default_rng(cfg["seed"])
    reports = []
    for text in cfg["multi_indices"]:
        I = parse_multi_index(text)
        H = PolyField.random(rng, rank=2, channels=1, degree=2, nterms=3,
                             variance=("u", "u"), symmetric=True).scale(0.05)
        phi = PolyField.random(rng, rank=1, channels=1, degree=2, nterms=3)
        pts = certify_mod._sample_points(rng, 200, tmin=1.0, tmax=3.0, rmin=0.5)
        pts = pts[np.abs(pts[:, 3]) <= 0.85 * np.linalg.norm(pts[:, 1:], axis=1)]
        for comp in cfg["components"]:
            V = comp if comp in ("L", "e1", "e2", "Lbar") else "L"
            frame_set = "U" if V == "Lbar" else "T"
            rep = estimates.commutator_report(H, phi, I, V, pts, frame_set=frame_set)
            reports.append(rep.to_json())
    energy.write_json(os.path.join(out_dir, "commutator.json"),
                      {"reports": reports, "seed": cfg["seed"]})
    return 0


def main(argv=None):
    ap = argparse.ArgumentParser(prog="framewave",
                                 description="null-frame energy verification lab")
    ap.add_argument("command", choices=["certify", "conserve", "evolve",
                                        "estimate", "commutator"])
    ap.add_argument("--config", required=True, help="JSON config path")
    ap.add_argument("--out", default=None, help="output directory")
    ap.add_argument("--seed", type=int, default=None, help="64-bit seed override")
    ap.add_argument("--refine", type=int, default=3,
                    help="number of grid resolutions for conserve")
    args = ap.parse_args(argv)

    try:
        cfg = parse_config(args.config)
    except (SchemaError, ConstraintError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if cfg["mode"] != args.command:
        cfg["mode"] = args.command
    if args.seed is not None:
        cfg["seed"] = args.seed
    out_dir = args.out or cfg["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    energy.write_json(os.path.join(out_dir, "config_resolved.json"), cfg)
    energy.write_json(os.path.join(out_dir, "config_schema.json"), CONFIG_SCHEMA)

    try:
        if args.command == "certify":
            return mode_certify(cfg, out_dir)
        if args.command == "conserve":
            return mode_conserve(cfg, out_dir, refine=args.refine)
        if args.command == "evolve":
            return mode_evolve(cfg, out_dir)
        if args.command == "estimate":
            return mode_estimate(cfg, out_dir)
        if args.command == "commutator":
            return mode_commutator(cfg, out_dir)
    except (SchemaError, ConstraintError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FramewaveError as exc:
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
