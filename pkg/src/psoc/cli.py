"""
Command-line front end: `psoc nodes|solve|study|costate`.

Exit codes: 0 success, 2 usage, 3 solver or residual failure, 4 divergence.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import io
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .covector import attach_duals, dual_residuals
from .errors import IncompatiblePairing, MissingDuals, NegativeWeights, PsocError
from .interp import NATURAL_W, diff_matrix, weight_fn
from .legendre import Family, WeightKind, make_grid
from .nlp import solve
from .problems import ProblemSpec, resolve
from .spectral import Verdict, solve_adaptive, solve_fixed
from .transcribe import consistency_tolerance, transcribe, trajectory_from_vector

log = logging.getLogger("psoc")

EXIT_OK, EXIT_USAGE, EXIT_SOLVER, EXIT_DIVERGENCE = 0, 2, 3, 4
GRIDS = [f.value for f in Family if f is not Family.CUSTOM]
WEIGHTS = [w.value for w in WeightKind]
FLOAT = ".17g"

# --set keys and the option they feed
_NUMERIC = {
    "deltaX": ("delta_x", float), "tol": ("tol", float), "feasTol": ("feas_tol", float),
    "maxIter": ("max_iter", int), "dualTol": ("dual_tol", float), "nMax": ("n_max", int),
    "n0": ("n0", int), "step": ("step", int),
}
_BOXES = {"xLo": ("x_box", 0), "xHi": ("x_box", 1), "uLo": ("u_box", 0), "uHi": ("u_box", 1)}


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    problem: str
    grid: str = None
    N: object = None
    W: str = None
    outputs: str = None
    format: str = "csv"
    force: bool = False
    overrides: dict = field(default_factory=dict)

    def option(self, name, default):
        return self.overrides.get(name, default)


def _fmt(v):
    v = float(v)
    return "nan" if math.isnan(v) else format(v, FLOAT)


def parse_overrides(items):
    """Turn ['deltaX=1e-8', 'uHi.1=2'] into an option map.

    Box keys take an optional 1-based component suffix; without one the
    value applies to every component.
    """
    out = {}
    for item in items or []:
        key, sep, val = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        base, _, comp = key.partition(".")
        try:
            if base in _NUMERIC:
                name, typ = _NUMERIC[base]
                if comp:
                    raise UsageError(f"{base} takes no component suffix")
                out[name] = typ(float(val)) if typ is int else typ(val)
            elif base in _BOXES:
                idx = int(comp) - 1 if comp else None
                if idx is not None and idx < 0:
                    raise UsageError(f"component index in {key!r} must be >= 1")
                out.setdefault("boxes", []).append((*_BOXES[base], idx, float(val)))
            else:
                raise UsageError(f"unknown --set key {base!r}; known: "
                                 f"{', '.join(sorted([*_NUMERIC, *_BOXES]))}")
        except ValueError:
            raise UsageError(f"bad value in --set {item!r}") from None
    return out


def load_problem(cfg: RunConfig):
    try:
        spec = resolve(cfg.problem)
    except KeyError as exc:
        raise UsageError(str(exc.args[0])) from None
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot load problem {cfg.problem!r}: {exc}") from None
    for which, side, idx, val in cfg.overrides.get("boxes", []):
        box = [list(r) for r in getattr(spec, which)]
        n = len(box[side])
        if idx is not None and idx >= n:
            raise UsageError(f"{which} has {n} components")
        for k in range(n) if idx is None else [idx]:
            box[side][k] = val
        spec = replace(spec, **{which: box})
    return spec, spec.build()


def _grid_and_w(cfg: RunConfig, p):
    """Default W is one, except 1-t for LGR on an infinite horizon.

    Families that pair with another W therefore need --force or --w.
    """
    family = Family(cfg.grid) if cfg.grid else (Family.LGR if p.horizon.infinite else Family.LGL)
    if cfg.W:
        return family, weight_fn(cfg.W)
    infinite_lgr = p.horizon.infinite and family is Family.LGR
    return family, weight_fn(WeightKind.ONE_MINUS_T if infinite_lgr else WeightKind.ONE)


# ---------------------------------------------------------------------------
# output

def trajectory_rows(traj, nx, nu):
    header = ["t"] + [f"x{i + 1}" for i in range(nx)] + [f"u{i + 1}" for i in range(nu)] \
        + [f"lam{i + 1}" for i in range(nx)]
    lam = traj.costates if traj.costates is not None else np.full((traj.N + 1, nx), np.nan)
    rows = []
    for j, t in enumerate(traj.times):
        rows.append([t, *traj.states[j], *traj.controls[j], *lam[j]])
    return header, rows


def write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in r])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


def write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def _force_hint(exc):
    return str(exc).replace("pass force=True", "use --force") if isinstance(exc, IncompatiblePairing) \
        else f"{exc} (use --force to accept)"


def _outdir(cfg):
    d = cfg.outputs or "."
    os.makedirs(d, exist_ok=True)
    return d


# ---------------------------------------------------------------------------
# commands

def cmd_nodes(args):
    family = Family(args.grid)
    try:
        grid = make_grid(family, args.n)
    except (ValueError, PsocError) as exc:
        raise UsageError(str(exc)) from None
    W = weight_fn(args.w or NATURAL_W[family])
    if np.any(grid.weights < 0.0):
        print(f"warning: negative weight detected (min w = {_fmt(grid.weights.min())})", file=sys.stderr)
    rows = [[j, t, w] for j, (t, w) in enumerate(zip(grid.nodes, grid.weights))]
    try:
        D = diff_matrix(grid, W).entries
    except PsocError as exc:
        raise UsageError(str(exc)) from None
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        write_csv(os.path.join(args.out, "nodes.csv"), ["j", "t", "w"], rows)
        write_csv(os.path.join(args.out, "D.csv"), [f"c{k}" for k in range(grid.N + 1)], D.tolist())
    else:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["j", "t", "w"])
        for j, t, wt in rows:
            w.writerow([j, _fmt(t), _fmt(wt)])
        sys.stdout.write(out.getvalue())
    return EXIT_OK


def _solver_opts(cfg):
    return dict(tol=cfg.option("tol", 1e-10), feas_tol=cfg.option("feas_tol", 1e-10),
                max_iter=cfg.option("max_iter", 500))


def cmd_solve(cfg: RunConfig):
    spec, p = load_problem(cfg)
    family, W = _grid_and_w(cfg, p)
    common = dict(family=family, W=W, force=cfg.force, allow_negative_weights=cfg.force,
                  dual_tol=cfg.option("dual_tol", 1e-3), **_solver_opts(cfg))
    try:
        if cfg.N == "adaptive":
            traj, report = solve_adaptive(
                p, N0=cfg.option("n0", 8), Nmax=cfg.option("n_max", 64), step=cfg.option("step", 4),
                delta_x=cfg.option("delta_x", 1e-6), **common)
        else:
            traj, report = solve_fixed(p, int(cfg.N), step=cfg.option("step", 4), **common)
    except (IncompatiblePairing, NegativeWeights) as exc:
        raise UsageError(_force_hint(exc)) from None

    last = report.history[-1]
    rec = next((r for r in report.history if traj is not None and r.N == traj.N), last)
    summary = {
        "problem": spec.id, "grid": family.value, "W": W.kind.value,
        "N": None if traj is None else traj.N,
        "cost": None if traj is None else _jsonable(float(traj.cost)),
        "status": rec.status,
        "verdict": None if report.verdict is None else report.verdict.value,
        "maxDefect": _jsonable(rec.max_defect), "jacksonCoeff": _jsonable(rec.jackson_coeff),
        "residuals": None, "iterations": None if traj is None else traj.meta.get("iterations"),
        "history": [{"N": r.N, "cost": _jsonable(r.cost), "maxDefect": _jsonable(r.max_defect),
                     "jacksonCoeff": _jsonable(r.jackson_coeff),
                     "dualResidual": _jsonable(r.dual_residual), "status": r.status}
                    for r in report.history],
        "generatedAt": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    if traj is not None and traj.meta.get("dual_residuals") is not None:
        summary["residuals"] = traj.meta["dual_residuals"].as_dict()
    d = _outdir(cfg)
    if traj is not None:
        header, rows = trajectory_rows(traj, p.nx, p.nu)
        if cfg.format == "json":
            write_json(os.path.join(d, "trajectory.json"),
                       {"columns": header, "rows": [[_jsonable(float(v)) for v in r] for r in rows]})
        else:
            write_csv(os.path.join(d, "trajectory.csv"), header, rows)
    write_json(os.path.join(d, "summary.json"), summary)
    print(f"{spec.id}: status={rec.status} verdict={summary['verdict']} N={summary['N']} "
          f"cost={summary['cost']}")
    if report.verdict is Verdict.CONVERGED:
        return EXIT_OK
    if report.verdict is Verdict.DIVERGENCE_SUSPECTED:
        return EXIT_DIVERGENCE
    return EXIT_SOLVER


def _study_row(task):
    """One (grid, N) solve of a study; module level so it can run in a worker."""
    from .validation import analytic_solution, error_norms

    ref, boxes, family, N, w, opts = task
    cfg = RunConfig(problem=ref, overrides={"boxes": boxes} if boxes else {})
    _, p = load_problem(cfg)
    grid = make_grid(family, N)
    row = {"N": N, "grid": family, "maxControlErr": math.nan, "maxStateErr": math.nan,
           "costErr": math.nan, "minWeight": float(grid.weights.min())}
    nlp = transcribe(p, grid, weight_fn(w), force=True, allow_negative_weights=True)
    sol = solve(nlp, **opts)
    if sol.converged:
        e = error_norms(trajectory_from_vector(nlp, sol.x, cost=sol.objective),
                        analytic_solution(p.name))
        row.update(maxControlErr=e.control_linf, maxStateErr=e.state_linf, costErr=e.cost_err)
    return row


def study_tasks(cfg: RunConfig, spec: ProblemSpec):
    grids = [cfg.grid] if cfg.grid else ["lgl", "lgr", "lg", "uniform"]
    if cfg.N is None:
        Ns = [8, 9, 10, 11, 12, 16]
    else:
        try:
            Ns = [int(v) for v in str(cfg.N).split(",")]
        except ValueError:
            raise UsageError("study takes --n as an integer or a comma-separated list") from None
    w = cfg.W or "one"
    opts = _solver_opts(cfg)
    return [(cfg.problem, cfg.overrides.get("boxes"), g, N, w, opts) for g in grids for N in Ns]


def cmd_study(cfg: RunConfig, jobs=1):
    from .validation import has_analytic

    spec, p = load_problem(cfg)
    if not has_analytic(spec.id):
        raise UsageError(f"no analytic solution registered for {spec.id!r}")
    tasks = study_tasks(cfg, spec)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            rows = list(ex.map(_study_row, tasks))
    else:
        rows = [_study_row(t) for t in tasks]
    cols = ["N", "grid", "maxControlErr", "maxStateErr", "costErr", "minWeight"]
    d = _outdir(cfg)
    if cfg.format == "json":
        write_json(os.path.join(d, "study.json"),
                   [{k: _jsonable(r[k]) for k in cols} for r in rows])
    else:
        write_csv(os.path.join(d, "study.csv"), cols, [[r[k] for k in cols] for r in rows])
    for r in rows:
        print(f"{r['grid']:>8} N={r['N']:<3d} maxControlErr={_fmt(r['maxControlErr'])}")
    return EXIT_OK


def cmd_costate(cfg: RunConfig, zero_multipliers=False):
    spec, p = load_problem(cfg)
    family, W = _grid_and_w(cfg, p)
    N = 16 if cfg.N is None else int(cfg.N)
    try:
        nlp = transcribe(p, make_grid(family, N), W, force=cfg.force, allow_negative_weights=cfg.force)
    except (IncompatiblePairing, NegativeWeights) as exc:
        raise UsageError(_force_hint(exc)) from None
    sol = solve(nlp, **_solver_opts(cfg))
    if not sol.converged:
        print(f"{spec.id}: NLP status {sol.status.value}", file=sys.stderr)
        return EXIT_SOLVER
    if zero_multipliers:
        sol = replace(sol, mults=np.zeros_like(sol.mults), bound_mults=np.zeros_like(sol.bound_mults))
    try:
        traj = attach_duals(nlp, sol)
        res = dual_residuals(p, traj)
    except (MissingDuals, NegativeWeights) as exc:
        print(f"{spec.id}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    delta = consistency_tolerance(max(N, 2), p.mx)
    ok = res.max() <= delta
    d = _outdir(cfg)
    header, rows = trajectory_rows(traj, p.nx, p.nu)
    keep = [0] + list(range(1 + p.nx + p.nu, len(header)))
    write_csv(os.path.join(d, "costate.csv"), [header[k] for k in keep],
              [[r[k] for k in keep] for r in rows])
    write_json(os.path.join(d, "dual_residuals.json"),
               {"problem": spec.id, "grid": family.value, "N": N, "deltaN": delta,
                "residuals": res.as_dict(), "pass": bool(ok),
                "endpointMultipliers": [float(v) for v in traj.endpoint_mults]})
    for k, v in res.as_dict().items():
        print(f"{k:>16} {_fmt(v)}")
    print(f"{'deltaN':>16} {_fmt(delta)} -> {'pass' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_SOLVER


# ---------------------------------------------------------------------------
# argument parsing

def _n_value(text):
    if text == "adaptive":
        return text
    try:
        if "," in text:
            [int(v) for v in text.split(",")]
            return text
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer or 'adaptive', got {text!r}") from None


def build_parser():
    ap = argparse.ArgumentParser(prog="psoc", description="Pseudospectral optimal control toolkit.")
    ap.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = ap.add_subparsers(dest="command", required=True)

    def grid_opts(sp, default=None):
        sp.add_argument("--grid", "--family", dest="grid", choices=GRIDS, default=default,
                        help="node family")
        sp.add_argument("--w", choices=WEIGHTS, help="interpolation weight function")

    sp = sub.add_parser("nodes", help="print nodes and weights of a grid")
    grid_opts(sp, default="lgl")
    sp.add_argument("--n", type=int, required=True, help="order N (N+1 nodes)")
    sp.add_argument("--out", help="directory for nodes.csv and D.csv; stdout if omitted")

    for name, hlp in [("solve", "solve a problem"),
                      ("study", "error table against a closed-form solution"),
                      ("costate", "costate estimates and dual residuals")]:
        sp = sub.add_parser(name, help=hlp)
        sp.add_argument("--problem", required=True, help="registry id or path to a JSON problem spec")
        grid_opts(sp)
        sp.add_argument("--n", type=_n_value,
                        help="order N, 'adaptive' (solve), or a comma list (study)")
        sp.add_argument("--force", action="store_true",
                        help="accept off-table grid/W pairings and non-positive weights")
        sp.add_argument("--out", default=".", help="output directory")
        sp.add_argument("--format", choices=["csv", "json"], default="csv")
        sp.add_argument("--set", dest="overrides", action="append", metavar="KEY=VALUE",
                        help="numeric override: deltaX, tol, feasTol, maxIter, dualTol, nMax, n0, "
                             "step, xLo, xHi, uLo, uHi (box keys accept .i for component i)")
        if name == "study":
            sp.add_argument("--jobs", type=int, default=1, help="parallel solves")
        if name == "costate":
            sp.add_argument("--zero-multipliers", action="store_true", help=argparse.SUPPRESS)
    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=[logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)],
                        format="%(levelname)s %(name)s: %(message)s")
    # PSOC_SEED needs no handling: every algorithm here is deterministic
    try:
        if args.command == "nodes":
            return cmd_nodes(args)
        cfg = RunConfig(problem=args.problem, grid=args.grid, N=args.n, W=args.w,
                        outputs=args.out, format=args.format, force=args.force,
                        overrides=parse_overrides(args.overrides))
        if args.command == "solve":
            if cfg.N is None:
                cfg.N = "adaptive"
            elif isinstance(cfg.N, str) and cfg.N != "adaptive":
                raise UsageError("solve takes a single --n")
            return cmd_solve(cfg)
        if args.command == "study":
            if args.jobs < 1:
                raise UsageError("--jobs must be >= 1")
            return cmd_study(cfg, jobs=args.jobs)
        if cfg.N == "adaptive" or isinstance(cfg.N, str):
            raise UsageError("costate takes a single integer --n")
        return cmd_costate(cfg, zero_multipliers=args.zero_multipliers)
    except UsageError as exc:
        print(f"psoc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
