"""Command-line batch runner.

    cmvkit <task> --config run.json [--out DIR] [--seed S] [--threads K]

The config is JSON with the fields ``family``, ``plan``, ``params`` and
optionally ``task``, ``output``.  Complex numbers are ``[re, im]`` pairs and
angles are radians.  A manifest written by a previous run is accepted as a
config, which reproduces that run.

Every run writes ``manifest.json`` (resolved config plus code version) and
task-specific CSV files; check tasks also write one ``<check>.json`` report
and its per-point ``<check>.csv``.  Artifacts are written only after all
computation succeeded, each through a temporary file and an atomic rename.

CSV layouts (floats with 17 significant digits):

========== ==========================================================
dos        theta, weight
lyapunov   z_re, z_im, gamma, stderr
schur      z_re, z_im, then re/im of f_plus, f_minus, F, G
zeroset    theta, gamma, stderr, in_raw, in_shrunk (plus arcs.csv: lo, hi)
checks     x_re, x_im, lhs_re, lhs_im, rhs_re, rhs_im, converged, inner
========== ==========================================================

Exit status: 0 on success (vacuous success included), 1 for an invalid
config, 2 for a numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile

import numpy as np

from . import __version__
from .boundary import RadialLadder
from .cmv import EigenSolverError
from .cocycle import CocycleOverflowError, lyapunov_grid, zero_set
from .dos import density_of_states
from .ergodic import FamilyError, family_from_dict, plan_from_dict
from .kotani import (CheckParams, CorollaryTolerances, bigcalc_check, corollary_check,
                     default_disk_grid, gamma_schur_check, theorem1_check, thouless_check)
from .schur import SchurError, SchurEvaluator, caratheodory_F, green_from_schur, schur_eval

TASKS = ("dos", "lyapunov", "schur", "zeroset", "theorem1", "identities", "corollary")
OUT_ENV = "CMVKIT_OUT"

BASE_PARAMS = {
    "n": 200,
    "length": 10_000,
    "grid": 512,
    "eps": 5e-3,
    "margin": 2,
    "ladder": {"m_lo": 4, "m_hi": 14, "tol": 1e-3},
    "boundary": [[-1.0, 0.0], [-1.0, 0.0]],
    "diagnostic": True,
    "z": None,
    "theta": None,
}

TASK_PARAMS = {
    "theorem1": {"n": 400, "tolerance": 5e-2},
    "identities": {"n": 400, "thouless_n": 200, "gamma_tolerance": 1e-2,
                   "thouless_tolerance": 5e-2, "bigcalc_tolerance": 1e-1, "bigcalc_points": 8},
    "corollary": {"n": 400, "grid": 4096, "atom_tolerance": 1e-2, "z_mass_min": 0.98,
                  "chain_min": 0.95, "guard_factor": 2.0, "nodes": 256},
}


class ConfigError(ValueError):
    pass


NUMERICAL_ERRORS = (EigenSolverError, CocycleOverflowError, SchurError, FloatingPointError,
                    np.linalg.LinAlgError)


# ---------------------------------------------------------------------------
# config


def load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    if "config" in cfg and "version" in cfg:  # a manifest
        cfg = cfg["config"]
    return cfg


def _complex_list(values, name):
    out = []
    for v in values:
        if isinstance(v, (int, float)):
            out.append(complex(v))
        elif isinstance(v, (list, tuple)) and len(v) == 2:
            out.append(complex(float(v[0]), float(v[1])))
        else:
            raise ConfigError(f"{name}: complex values are numbers or [re, im] pairs")
    return out


def resolve(cfg: dict, task: str, seed: int | None = None, out: str | None = None) -> dict:
    """Validate a raw config and fill in defaults; raises ConfigError."""
    if task not in TASKS:
        raise ConfigError(f"unknown task {task!r}")
    if cfg.get("task", task) != task:
        raise ConfigError(f"config is for task {cfg['task']!r}, not {task!r}")
    unknown = set(cfg) - {"task", "family", "plan", "params", "output"}
    if unknown:
        raise ConfigError(f"unknown config fields: {sorted(unknown)}")
    if "family" not in cfg:
        raise ConfigError("config needs a family")
    fam_spec = dict(cfg["family"])
    plan_spec = dict(cfg.get("plan", {"mode": "exact"}))
    overrides = {}
    if seed is not None:
        if not 0 <= seed < 1 << 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        overrides["seed"] = seed
        plan_spec["seed"] = seed
        if fam_spec.get("kind") == "random_iid":
            fam_spec["seed"] = seed
    cap = fam_spec.pop("cap", None)
    try:
        family = family_from_dict(fam_spec)
        plan = plan_from_dict(plan_spec)
        plan.states(family)
    except (FamilyError, TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    fam_out = family.to_dict()
    if cap is not None:
        if not 0 <= float(cap) < 1 or family.cap > float(cap):
            raise ConfigError(f"family coefficients exceed the cap {cap}")
        fam_out["cap"] = float(cap)

    params = {**BASE_PARAMS, **TASK_PARAMS.get(task, {})}
    user = cfg.get("params", {})
    if not isinstance(user, dict):
        raise ConfigError("params must be an object")
    bad = set(user) - set(params)
    if bad:
        raise ConfigError(f"unknown params for task {task}: {sorted(bad)}")
    params.update(user)
    params["ladder"] = {**BASE_PARAMS["ladder"], **params["ladder"]}
    _validate_params(params)
    if params["z"] is not None:
        limit = {"schur": 1.0, "identities": 0.95}.get(task)
        z = np.abs(_complex_list(params["z"], "z"))
        if limit == 1.0 and np.any(z >= 1):
            raise ConfigError("schur task needs |z| < 1")
        if limit == 0.95 and np.any(z > 0.95):
            raise ConfigError("identities task needs |z| <= 0.95")

    if out is not None:
        overrides["output"] = out
    output = out or os.environ.get(OUT_ENV) or cfg.get("output") or "cmvkit-out"
    if out is None and os.environ.get(OUT_ENV):
        overrides["output"] = os.environ[OUT_ENV]
    resolved = {"task": task, "family": fam_out, "plan": plan.to_dict(), "params": params,
                "output": output}
    return {"config": resolved, "overrides": overrides}


def _validate_params(p: dict) -> None:
    def positive_int(name, minimum=1):
        if not isinstance(p[name], int) or isinstance(p[name], bool) or p[name] < minimum:
            raise ConfigError(f"{name} must be an integer >= {minimum}")

    for name in ("n", "length"):
        positive_int(name)
    positive_int("grid", 16)
    positive_int("margin", 0)
    for name in ("thouless_n", "bigcalc_points", "nodes"):
        if name in p:
            positive_int(name)
    if not isinstance(p["eps"], (int, float)) or p["eps"] <= 0:
        raise ConfigError("eps must be positive")
    lad = p["ladder"]
    try:
        RadialLadder(int(lad["m_lo"]), int(lad["m_hi"]), float(lad["tol"]))
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"ladder: {exc}") from None
    b = _complex_list(p["boundary"], "boundary")
    if len(b) != 2 or any(abs(abs(x) - 1) > 1e-12 for x in b):
        raise ConfigError("boundary must be two unimodular numbers")
    if p["z"] is not None:
        z = _complex_list(p["z"], "z")
        if not z:
            raise ConfigError("z grid is empty")
    if p["theta"] is not None:
        if not all(isinstance(t, (int, float)) for t in p["theta"]) or not p["theta"]:
            raise ConfigError("theta must be a non-empty list of angles")
    for name, value in p.items():
        if name.endswith(("tolerance", "_min")) or name == "guard_factor":
            if not isinstance(value, (int, float)) or value < 0:
                raise ConfigError(f"{name} must be a non-negative number")


# ---------------------------------------------------------------------------
# tasks


def _f(x: float) -> str:
    return f"{float(x):.17g}"


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _check_params(p: dict, threads: int, **kw) -> CheckParams:
    lad = p["ladder"]
    base = dict(n=p["n"], length=p["length"], grid=p["grid"], eps=float(p["eps"]),
                margin=p["margin"], ladder=RadialLadder(lad["m_lo"], lad["m_hi"], lad["tol"]),
                boundary=tuple(_complex_list(p["boundary"], "boundary")), threads=threads)
    base.update(kw)
    return CheckParams(**base)


def _z_grid(p):
    return np.array(_complex_list(p["z"], "z")) if p["z"] is not None else None


def _report_files(rep) -> dict:
    return {f"{rep.name}.json": rep.to_json() + "\n", f"{rep.name}.csv": rep.to_csv()}


def run_task(cfg: dict, threads: int = 1) -> dict:
    """Compute all artifacts of a resolved config; returns {filename: text}."""
    task, p = cfg["task"], cfg["params"]
    family = family_from_dict({k: v for k, v in cfg["family"].items() if k != "cap"})
    plan = plan_from_dict(cfg["plan"])
    cp = _check_params(p, threads)
    files = {}
    if task == "dos":
        dos = density_of_states(family, plan, p["n"], cp.boundary, p["diagnostic"], threads)
        m = dos.measure
        files["dos.csv"] = _csv(["theta", "weight"],
                                [[_f(t), _f(w)] for t, w in zip(m.angles, m.weights)])
        files["dos.json"] = _json({"atoms": len(m), "samples": dos.samples, "n": dos.n,
                                   "self_distance": dos.self_distance})
    elif task == "lyapunov":
        z = _z_grid(p)
        z = default_disk_grid() if z is None else z
        g, e = lyapunov_grid(family, plan, z, p["length"])
        files["lyapunov.csv"] = _csv(["z_re", "z_im", "gamma", "stderr"],
                                     [[_f(a.real), _f(a.imag), _f(b), _f(c)]
                                      for a, b, c in zip(z, g, e)])
    elif task == "schur":
        z = _z_grid(p)
        z = default_disk_grid() if z is None else z
        state = family.initial_state()
        cols = [schur_eval(SchurEvaluator(family, state, "+"), z),
                schur_eval(SchurEvaluator(family, state, "-"), z),
                caratheodory_F(family, state, z), green_from_schur(family, state, z)]
        header = ["z_re", "z_im"] + [f"{n}_{part}" for n in ("f_plus", "f_minus", "F", "G")
                                     for part in ("re", "im")]
        rows = []
        for i, zi in enumerate(z):
            row = [_f(zi.real), _f(zi.imag)]
            for c in cols:
                row += [_f(c[i].real), _f(c[i].imag)]
            rows.append(row)
        files["schur.csv"] = _csv(header, rows)
    elif task == "zeroset":
        zs = zero_set(family, plan, p["grid"], p["length"], p["eps"], p["margin"])
        raw = set(zs.grid_indices(raw=True).tolist())
        inner = set(zs.grid_indices().tolist())
        files["zeroset.csv"] = _csv(
            ["theta", "gamma", "stderr", "in_raw", "in_shrunk"],
            [[_f(t), _f(g), _f(e), int(i in raw), int(i in inner)]
             for i, (t, g, e) in enumerate(zip(zs.thetas, zs.gammas, zs.stderrs))])
        files["arcs.csv"] = _csv(["lo", "hi"], [[_f(a), _f(b)] for a, b in zs.raw_arcs])
        files["zeroset.json"] = _json({"empty": zs.empty, "raw_arcs": zs.raw_arcs,
                                       "shrunk_arcs": zs.arcs,
                                       "lebesgue_fraction": zs.lebesgue_fraction()})
    elif task == "theorem1":
        files.update(_report_files(theorem1_check(family, plan, cp, p["tolerance"])))
    elif task == "identities":
        z = _z_grid(p)
        files.update(_report_files(gamma_schur_check(family, plan, z, cp, p["gamma_tolerance"])))
        tp = _check_params(p, threads, n=p["thouless_n"])
        files.update(_report_files(thouless_check(family, plan, z, tp, p["thouless_tolerance"])))
        files.update(_report_files(bigcalc_check(family, plan, cp, theta=p["theta"],
                                                 points=p["bigcalc_points"],
                                                 tolerance=p["bigcalc_tolerance"])))
    elif task == "corollary":
        tol = CorollaryTolerances(p["atom_tolerance"], p["z_mass_min"], p["chain_min"])
        rep = corollary_check(family, plan, cp, tol, p["nodes"], p["guard_factor"])
        files.update(_report_files(rep))
    return files


# ---------------------------------------------------------------------------
# output


def write_atomic(directory: str, files: dict) -> None:
    os.makedirs(directory, exist_ok=True)
    for name in sorted(files):
        fd, tmp = tempfile.mkstemp(prefix=f".{name}.", dir=directory)
        try:
            with os.fdopen(fd, "w", newline="") as fh:
                fh.write(files[name])
            os.replace(tmp, os.path.join(directory, name))
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise


def manifest(resolved: dict, files: dict) -> str:
    return _json({"version": __version__, "config": resolved["config"],
                  "overrides": resolved["overrides"], "artifacts": sorted(files)})


def _fail(kind: str, message: str, code: int) -> int:
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)
    return code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cmvkit", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="task", required=True)
    for task in TASKS:
        sp = sub.add_parser(task)
        sp.add_argument("--config", required=True, help="JSON run configuration")
        sp.add_argument("--out", help=f"output directory (else ${OUT_ENV}, else the config)")
        sp.add_argument("--seed", type=int, help="override plan and random-family seeds")
        sp.add_argument("--threads", type=int, default=1, help="worker threads (no effect on results)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.threads < 1:
            raise ConfigError("threads must be at least 1")
        resolved = resolve(load_config(args.config), args.task, args.seed, args.out)
    except ConfigError as exc:
        return _fail("config", str(exc), 1)
    cfg = resolved["config"]
    try:
        files = run_task(cfg, args.threads)
    except NUMERICAL_ERRORS as exc:
        return _fail("numerical", f"{type(exc).__name__}: {exc}", 2)
    files["manifest.json"] = manifest(resolved, files)
    write_atomic(cfg["output"], files)
    print(os.path.join(cfg["output"], "manifest.json"))
    return 0


if __name__ == "__main__":
    sys.exit(main())
