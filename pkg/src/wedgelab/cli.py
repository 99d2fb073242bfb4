"""Command line front end: ``wedgelab <command> --config <file>``.

Each command reads a strict JSON config, runs one experiment and writes
machine-readable reports (CSV/JSON with 17 significant digits, plus
whitespace-separated ``.dat`` files for gnuplot) into the output directory,
together with ``resolved_config.json``.  Exit status is 0 on success, 2 on a
violated precondition and 3 on a missed numerical tolerance.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import annulus, deform, grassmann, mesh
from .errors import NumericalToleranceError, PreconditionError
from .exterior import Multivector

logger = logging.getLogger("wedgelab")

COMMANDS = ("angles", "extremal", "classify", "annulus", "radial", "project",
            "pinch-scan", "stoptime")

FAMILY_KEYS = {"family": "orthogonal", "m": 2, "d": 2, "theta": None, "angles": None,
               "planes": None}

# defaults per command; a key absent here is rejected
PARAMS = {
    "angles": dict(FAMILY_KEYS),
    "extremal": {**FAMILY_KEYS, "budget": 200, "restarts": 64},
    "classify": {**FAMILY_KEYS, "xi": None, "tol": 1e-6, "angle_tol": 1e-2},
    "annulus": {"d": 2, "r0": 0.3, "trace": "Y1", "max_degree": None},
    "radial": {"d": 3, "r0": [0.5], "delta": 1.0},
    "project": {**FAMILY_KEYS, "mesh": "two-discs", "lam": 1.0, "cell": None,
                "amplitude": 0.2, "rtol": 0.03},
    "pinch-scan": {"d": 2, "m": 2, "angles": [math.pi / 2], "profiles": None,
                   "resolution": 16, "radius": 0.5},
    "stoptime": {**FAMILY_KEYS, "eps": 0.008, "max_steps": 8, "set": "cone", "height": 0.004,
                 "width": 0.01, "offset": None},
}

TOP_KEYS = {"command", "params", "seed", "output"}


def _is_sampling(command, params) -> bool:
    return command == "extremal" or (command == "project" and params.get("mesh") == "graph")


# ---------------------------------------------------------------- config

def resolve_config(raw: dict, command: str | None = None, seed=None, output=None) -> dict:
    """Validate a raw config and fill defaults; the result re-resolves to itself."""
    if not isinstance(raw, dict):
        raise PreconditionError("config must be a JSON object")
    raw = dict(raw)
    if "params" not in raw:
        # flat form: every key besides the top-level ones is a parameter
        raw = {**{k: raw.pop(k) for k in list(raw) if k in TOP_KEYS},
               "params": {k: v for k, v in raw.items() if k not in TOP_KEYS}}
    unknown = set(raw) - TOP_KEYS
    if unknown:
        raise PreconditionError(f"unknown config keys: {sorted(unknown)}")
    cmd = raw.get("command", command)
    if command is not None and cmd != command:
        raise PreconditionError(f"config is for command {cmd!r}, not {command!r}")
    if cmd not in COMMANDS:
        raise PreconditionError(f"unknown command {cmd!r}")
    params = raw.get("params") or {}
    if not isinstance(params, dict):
        raise PreconditionError("params must be an object")
    bad = set(params) - set(PARAMS[cmd])
    if bad:
        raise PreconditionError(f"unknown parameters for {cmd}: {sorted(bad)}")
    params = {**PARAMS[cmd], **params}
    seed = raw.get("seed") if seed is None else seed
    if seed is not None and (isinstance(seed, bool) or not isinstance(seed, int) or seed < 0):
        raise PreconditionError("seed must be a nonnegative integer")
    if seed is None and _is_sampling(cmd, params):
        raise PreconditionError(f"command {cmd} samples randomness and needs a seed")
    out = output if output is not None else raw.get("output", "wedgelab-out")
    return {"command": cmd, "params": params, "seed": seed, "output": str(out)}


def load_config(path, **overrides) -> dict:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise PreconditionError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise PreconditionError(f"config {path} is not valid JSON: {exc}") from exc
    return resolve_config(raw, **overrides)


# ---------------------------------------------------------------- output

def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if not math.isfinite(x):
        return "null"
    return format(x, ".17g")


def dumps(obj, indent=0) -> str:
    """Deterministic JSON with 17-significant-digit floats."""
    pad, inner = "  " * indent, "  " * (indent + 1)
    if obj is None:
        return "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        body = ",\n".join(f"{inner}{json.dumps(str(k))}: {dumps(v, indent + 1)}"
                          for k, v in obj.items())
        return "{\n" + body + "\n" + pad + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        items = [dumps(v, indent + 1) for v in obj]
        if not items:
            return "[]"
        return "[\n" + ",\n".join(inner + s for s in items) + "\n" + pad + "]"
    return fmt(obj)


class Writer:
    def __init__(self, directory):
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.files = []

    def json(self, name, obj):
        self._write(name, dumps(obj) + "\n")

    def csv(self, name, header, rows):
        lines = [",".join(header)] + [",".join(fmt(v) for v in r) for r in rows]
        self._write(name, "\n".join(lines) + "\n")

    def dat(self, name, header, rows):
        lines = ["# " + " ".join(header)] + [" ".join(fmt(v) for v in r) for r in rows]
        self._write(name, "\n".join(lines) + "\n")

    def _write(self, name, text):
        path = self.dir / name
        with open(path, "w", newline="\n") as fh:
            fh.write(text)
        self.files.append(str(path))


# -------------------------------------------------------------- commands

def build_family(p) -> grassmann.PlaneFamily:
    if p.get("planes"):
        return grassmann.PlaneFamily.load(p["planes"])
    kind = p["family"]
    if kind == "orthogonal":
        return grassmann.orthogonal_family(int(p["m"]), int(p["d"]))
    if kind == "rotated":
        if p.get("theta") is None:
            raise PreconditionError("family 'rotated' needs theta")
        return grassmann.rotated_family(int(p["m"]), int(p["d"]), float(p["theta"]))
    if kind == "pair":
        if p.get("angles") is None:
            raise PreconditionError("family 'pair' needs angles")
        return grassmann.pair_family([float(a) for a in p["angles"]])
    raise PreconditionError(f"unknown family {kind!r}")


def cmd_angles(cfg, out, threads):
    fam = build_family(cfg["params"])
    rows = fam.angle_rows()
    out.csv("angles.csv", ["i", "j"] + [f"alpha{k + 1}" for k in range(fam.d)], rows)
    return {"min_angle": fam.min_angle(), "orthogonal": fam.is_orthogonal()}


def cmd_extremal(cfg, out, threads):
    p = cfg["params"]
    fam = build_family(p)
    blade, value, values = grassmann.maximize_projection_sum(
        fam, budget=int(p["budget"]), seed=cfg["seed"], restarts=int(p["restarts"]),
        n_jobs=threads)
    out.csv("extremal.csv", ["restart", "value"], [(k, v) for k, v in enumerate(values)])
    out.json("blade.json", blade.to_json())
    summary = {"max": value, "m": fam.m, "d": fam.d}
    if fam.m == 2:
        alpha = fam.pairwise_angles[(0, 1)]
        summary["two_plane_bound"] = grassmann.two_plane_excess_bound(alpha, fam.d)
    return summary


def _load_xi(spec):
    if isinstance(spec, str):
        try:
            with open(spec) as fh:
                spec = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise PreconditionError(f"cannot read d-vector {spec}: {exc}") from exc
    if spec is None:
        raise PreconditionError("classify needs xi")
    return Multivector.from_json(spec)


def cmd_classify(cfg, out, threads):
    p = cfg["params"]
    fam = build_family(p)
    res = grassmann.xi_classify(fam, _load_xi(p["xi"]), float(p["tol"]), float(p["angle_tol"]))
    out.json("classify.json", res.to_json())
    return {"verdict": res.verdict, "sum": res.sum}


def _trace(d, spec, N):
    if isinstance(spec, str):
        if spec == "constant":
            return annulus.BoundaryTrace(d, N or 1, 1.0)
        if spec.startswith("Y"):
            n, _, i = spec[1:].partition("_")
            try:
                n, i = int(n), int(i or 1)
            except ValueError as exc:
                raise PreconditionError(f"cannot parse trace {spec!r}") from exc
            return annulus.BoundaryTrace.single_mode(d, n, i, max_degree=N)
        raise PreconditionError(f"unknown trace {spec!r}")
    if isinstance(spec, dict):
        unknown = set(spec) - {"mean", "coeffs"}
        if unknown:
            raise PreconditionError(f"unknown trace keys {sorted(unknown)}")
        coeffs = {int(n): c for n, c in spec.get("coeffs", {}).items()}
        top = max([*coeffs, N or 1])
        return annulus.BoundaryTrace(d, top, float(spec.get("mean", 0.0)), coeffs)
    raise PreconditionError("trace must be a name like 'Y1' or an object")


def cmd_annulus(cfg, out, threads):
    p = cfg["params"]
    trace = _trace(int(p["d"]), p["trace"], p["max_degree"])
    sol = annulus.solve_annulus(trace, float(p["r0"]))
    rep = annulus.total_energy(sol)
    rows = rep.rows(sol)
    out.csv("modes.csv", ["n", "A", "B", "mode_energy", "coeff_mass"], rows)
    summary = {"total": rep.total, "bound": rep.lower_bound_wirtinger, "slack": rep.slack,
               "within_hypothesis": rep.within_hypothesis}
    out.json("annulus.json", summary)
    return summary


def cmd_radial(cfg, out, threads):
    p = cfg["params"]
    d, delta = int(p["d"]), float(p["delta"])
    radii = p["r0"] if isinstance(p["r0"], list) else [p["r0"]]
    c = annulus.radial_constant(d)
    rows = []
    for r0 in radii:
        A, energy = annulus.radial_solution(d, float(r0), delta)
        rows.append((float(r0), A, energy, c * delta ** 2 * float(r0) ** d))
    header = ["r0", "A", "energy", "lower_bound"]
    out.csv("radial.csv", header, rows)
    out.dat("radial.dat", header, rows)
    return {"d": d, "c": c}


def cmd_project(cfg, out, threads):
    p = cfg["params"]
    fam = build_family(p)
    kind = p["mesh"]
    if kind == "two-discs":
        S = mesh.union(*[mesh.disc_mesh(pl, 1.0) for pl in fam.planes])
    elif kind == "graph":
        if fam.d != 2 or fam.m < 2:
            raise PreconditionError("graph meshes need a family of 2-planes")
        rng = np.random.default_rng(cfg["seed"])
        S = mesh.random_graph_mesh(rng, fam.planes[0], fam.planes[1].basis,
                                   amplitude=float(p["amplitude"]))
    else:
        S = mesh.SimplicialSet.load(kind)
    rep = mesh.projection_inequality_report(S, fam, float(p["lam"]), p["cell"],
                                            rtol=float(p["rtol"]))
    out.json("project.json", rep.to_json())
    return {"image_sum": rep.image_sum, "lambda_bound": rep.lambda_bound}


def _profiles(spec):
    if spec is None:
        return deform.DEFAULT_PROFILES
    try:
        return [deform.PinchProfile(**s) for s in spec]
    except TypeError as exc:
        raise PreconditionError(f"bad profile entry: {exc}") from exc


def cmd_pinch_scan(cfg, out, threads):
    p = cfg["params"]
    d = int(p["d"])
    res = deform.angle_threshold_scan(d, int(p["m"]), p["angles"], _profiles(p["profiles"]),
                                      int(p["resolution"]), float(p["radius"]), n_jobs=threads)
    header = [f"alpha{k + 1}" for k in range(d)] + ["rho", "t", "delta", "error_bar"]
    rows = [(*r.angles, r.neck_radius, r.pull, r.delta, r.error_bar) for r in res.rows]
    out.csv("scan.csv", header, rows)
    out.dat("scan.dat", header, rows)
    best = res.minimum_by_angle()
    return {"crossover": res.crossover,
            "min_delta": [{"angle": a, "delta": r.delta, "error_bar": r.error_bar}
                          for a, r in sorted(best.items())]}


def cmd_stoptime(cfg, out, threads):
    p = cfg["params"]
    fam = build_family(p)
    kind = p["set"]
    if kind == "cone":
        E = deform.cone_mesh(fam)
    elif kind == "bump":
        E = deform.bump_set(fam, float(p["height"]), float(p["width"]))
    else:
        E = mesh.SimplicialSet.load(kind)
    if p["offset"] is not None:
        E = E.translated(p["offset"])
    trace = deform.epsilon_process(E, fam, float(p["eps"]), int(p["max_steps"]))
    out.json("trace.json", trace.to_json())
    seen = deform.bump_height(E, fam)
    return {"stopped_at": trace.stopped_at, "r_k": trace.r_k, "height_seen": seen,
            "expected_scale": seen / (2 * float(p["eps"]))}


HANDLERS = {"angles": cmd_angles, "extremal": cmd_extremal, "classify": cmd_classify,
            "annulus": cmd_annulus, "radial": cmd_radial, "project": cmd_project,
            "pinch-scan": cmd_pinch_scan, "stoptime": cmd_stoptime}


def run(cfg: dict, threads: int = 1) -> dict:
    """Execute a resolved config; returns the summary that is also written to disk."""
    out = Writer(cfg["output"])
    out.json("resolved_config.json", cfg)
    summary = HANDLERS[cfg["command"]](cfg, out, threads)
    out.json("summary.json", summary)
    return summary


def _human(summary):
    def show(v):
        return format(v, ".6g") if isinstance(v, float) else str(v)
    return "  ".join(f"{k}={show(v)}" for k, v in summary.items() if not isinstance(v, list))


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="wedgelab", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True)
    parser.add_argument("--output")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--threads", type=int, default=1)
    args = parser.parse_args(argv)

    level = os.environ.get("WEDGELAB_LOG", "error").upper()
    logging.basicConfig(level=getattr(logging, level, logging.ERROR),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.threads < 1:
            raise PreconditionError("--threads must be at least 1")
        cfg = load_config(args.config, command=args.command, seed=args.seed,
                          output=args.output)
        summary = run(cfg, args.threads)
    except PreconditionError as exc:
        print(f"wedgelab: precondition violated: {exc}", file=sys.stderr)
        return 2
    except NumericalToleranceError as exc:
        print(f"wedgelab: numerical tolerance failure: {exc}", file=sys.stderr)
        return 3
    print(_human(summary))
    return 0


if __name__ == "__main__":
    sys.exit(main())
