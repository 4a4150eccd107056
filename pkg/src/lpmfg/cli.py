"""Command-line entry point: ``python -m lpmfg <command> [options]``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from typing import List, Optional, Tuple

import numpy as np

from . import kernels
from . import lp as lpmod
from . import mfg, sim, verify
from .chain import transitions_from_coefficients
from .config import FORMATS, RunConfig, load_config
from .domain import ConfigError, ExitMeasure, Grid, MomentVector, OccupationFlow, ProblemSpec, \
    moment_of, sample_coefficients
from .oracle import dp_from_coefficients, dp_value_at_zero, feedback_policy
from .registry import REGISTRY, get_problem
from .tables import read_table

COMMANDS = ("solve-single", "solve-mfg", "dp", "verify", "simulate", "export-lp")


class CommandError(RuntimeError):
    """A command ran but its result is a failure."""


# ---------------------------------------------------------------- argument handling


def _grid_arg(text: str) -> Tuple[int, int, int]:
    try:
        t, x, a = (int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("expected t_count,x_count,a_count") from None
    return t, x, a


def _int_list(text: str) -> List[int]:
    try:
        return [int(v) for v in text.split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError("expected comma-separated integers") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="INI run configuration")
    common.add_argument("--problem", metavar="NAME", help="registry name or table file")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--grid", type=_grid_arg, metavar="t,x,a", help="grid sizes")
    common.add_argument("--seed", type=int, metavar="N")
    common.add_argument("--damping", type=float, metavar="F")
    common.add_argument("--tol", type=float, metavar="F")
    common.add_argument("--max-iter", type=int, metavar="N")
    common.add_argument("--n-starts", type=int, metavar="N")
    common.add_argument("--format", choices=FORMATS)
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="lpmfg", description="LP solver for mean-field stopping games")
    sub = p.add_subparsers(dest="command", metavar="command")
    sub.required = True
    sub.add_parser("solve-single", parents=[common], help="optimal stopping/control LP at zero moments")
    sub.add_parser("solve-mfg", parents=[common], help="damped fixed point with multi-start selection")
    sub.add_parser("dp", parents=[common], help="backward induction at zero moments")
    for name, text in (("verify", "certify saved measures"), ("simulate", "N-player Monte Carlo"),
                       ("export-lp", "write the LP as MPS")):
        sp = sub.add_parser(name, parents=[common], help=text)
        sp.add_argument("--from", dest="source", metavar="DIR",
                        help="directory holding saved measures (default: --out)")
    sim_p = sub.choices["simulate"]
    sim_p.add_argument("--agents", type=_int_list, default=[100, 1000, 10000], metavar="N,N,...")
    sim_p.add_argument("--seeds", type=int, default=20, metavar="N", help="seeds per population size")
    return p


def resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    t, x, a = args.grid if args.grid else (None, None, None)
    return cfg.updated(problem=args.problem, out=args.out, t_count=t, x_count=x, a_count=a,
                       seed=args.seed, damping=args.damping, tol=args.tol, max_iter=args.max_iter,
                       n_starts=args.n_starts, format=args.format)


def load_problem(name: str) -> ProblemSpec:
    if name in REGISTRY:
        return get_problem(name)
    if os.path.isfile(name):
        return read_table(name)
    return get_problem(name)  # raises with the list of known names


# ---------------------------------------------------------------- file output


def _rows_2d(a: np.ndarray):
    for k, i in np.ndindex(*a.shape):
        yield [k, i, repr(float(a[k, i]))]


def _rows_3d(a: np.ndarray):
    for k, i, j in np.ndindex(*a.shape):
        yield [k, i, j, repr(float(a[k, i, j]))]


def write_tensor(path: str, a: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if a.ndim == 3:
            w.writerow(["k", "i", "j", "value"])
            w.writerows(_rows_3d(a))
        else:
            w.writerow(["k", "i", "value"])
            w.writerows(_rows_2d(a))


def read_tensor(path: str, shape: Tuple[int, ...]) -> np.ndarray:
    out = np.zeros(shape)
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        next(r)
        for row in r:
            idx = tuple(int(v) for v in row[:-1])
            out[idx] = float(row[-1])
    return out


def write_json(path: str, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def save_measures(cfg: RunConfig, mu: ExitMeasure, m: OccupationFlow) -> None:
    if cfg.format == "csv":
        write_tensor(os.path.join(cfg.out, "m.csv"), m.values)
        write_tensor(os.path.join(cfg.out, "mu.csv"), mu.values)
    else:
        write_json(os.path.join(cfg.out, "measures.json"),
                   {"m": m.values.tolist(), "mu": mu.values.tolist()})


def load_measures(src: str, grid: Grid) -> Optional[Tuple[ExitMeasure, OccupationFlow]]:
    K, n, na = grid.K, grid.x_count, grid.a_count
    js = os.path.join(src, "measures.json")
    if os.path.isfile(os.path.join(src, "m.csv")):
        m = read_tensor(os.path.join(src, "m.csv"), (K, n, na))
        mu = read_tensor(os.path.join(src, "mu.csv"), (K + 1, n))
    elif os.path.isfile(js):
        with open(js) as fh:
            d = json.load(fh)
        m, mu = np.asarray(d["m"], dtype=float), np.asarray(d["mu"], dtype=float)
        if m.shape != (K, n, na) or mu.shape != (K + 1, n):
            raise ConfigError(f"saved measures in {src} do not match the grid {grid.t_count},{n},{na}")
    else:
        return None
    return ExitMeasure(mu), OccupationFlow(m)


def _meta(cfg: RunConfig, command: str) -> dict:
    return {"command": command, "problem": cfg.problem, "grid": list(cfg.grid)}


# ---------------------------------------------------------------- commands


def _frozen_setup(spec: ProblemSpec, grid: Grid, moments: Optional[MomentVector] = None):
    moments = moments if moments is not None else MomentVector.zeros(grid, spec.d)
    coeffs = sample_coefficients(spec, grid, moments)
    trans = transitions_from_coefficients(coeffs, grid, spec.boundary_mode)
    return coeffs, trans


def cmd_solve_single(cfg, spec, grid, args) -> dict:
    coeffs, trans = _frozen_setup(spec, grid)
    prog = lpmod.build_from_coefficients(coeffs, grid, trans, spec.initial_weights(grid))
    sol = lpmod.solve_lp(prog)
    if sol.status != "optimal":
        raise CommandError(f"LP ended with status {sol.status}")
    mu, m = lpmod.extract_measures(prog, sol, grid)
    save_measures(cfg, mu, m)
    out = {**_meta(cfg, "solve-single"), "kind": "single", "status": sol.status, "value": sol.value,
           "iterations": sol.iterations, "n_vars": prog.n_vars, "n_rows": prog.n_rows}
    write_json(os.path.join(cfg.out, "solution.json"), out)
    return out


def cmd_solve_mfg(cfg, spec, grid, args) -> dict:
    res = mfg.multi_start_select(spec, grid, n_starts=cfg.n_starts, seed=cfg.seed,
                                 damping=cfg.damping, tol=cfg.tol, max_iter=cfg.max_iter)
    save_measures(cfg, res.mu_star, res.m_star)
    trace = [{"iter": r.iter, "exploitability": r.exploitability, "br_value": r.br_value,
              "nash_value": r.nash_value,
              "distance": None if np.isnan(r.distance) else r.distance, "lambda": r.damping}
             for r in res.trace]
    if cfg.format == "csv":
        res.write_trace(os.path.join(cfg.out, "trace.csv"))
    out = {**_meta(cfg, "solve-mfg"), "kind": "mfg", "nash_value": res.nash_value,
           "exploitability": res.exploitability, "converged": res.converged,
           "iterations": res.iterations, "nash_spread": res.nash_spread, "starts": res.starts,
           "tol": cfg.tol, "damping": cfg.damping}
    extra = {"trace": trace} if cfg.format == "json" else {}
    write_json(os.path.join(cfg.out, "solution.json"), {**out, **extra})
    if not res.converged:
        raise CommandError(f"fixed point did not reach exploitability {cfg.tol:g} "
                           f"(best {res.exploitability:.3e}); results written")
    return out


def cmd_dp(cfg, spec, grid, args) -> dict:
    coeffs, trans = _frozen_setup(spec, grid)
    vf = dp_from_coefficients(coeffs, grid, trans)
    pol = feedback_policy(vf)
    if cfg.format == "csv":
        write_tensor(os.path.join(cfg.out, "value.csv"), vf.v)
        write_tensor(os.path.join(cfg.out, "contact.csv"), vf.contact.astype(float))
        write_tensor(os.path.join(cfg.out, "action.csv"), vf.argmax_action.astype(float))
    out = {**_meta(cfg, "dp"), "value": dp_value_at_zero(vf, spec, grid),
           "contact_nodes": int(vf.contact[:grid.K, grid.interior].sum()),
           "stop_fraction_k0": float(pol.stop[0][grid.interior].mean()) if grid.K else 1.0}
    extra = {}
    if cfg.format == "json":
        extra = {"v": vf.v.tolist(), "contact": vf.contact.tolist(),
                 "action": vf.argmax_action.tolist()}
    write_json(os.path.join(cfg.out, "dp.json"), {**out, **extra})
    return out


def _source(cfg, args) -> str:
    return args.source or cfg.out


def _saved_kind(src: str) -> Optional[dict]:
    path = os.path.join(src, "solution.json")
    if not os.path.isfile(path):
        return None
    with open(path) as fh:
        return json.load(fh)


def cmd_verify(cfg, spec, grid, args) -> dict:
    src = _source(cfg, args)
    saved = load_measures(src, grid)
    if saved is None:
        raise ConfigError(f"no saved measures in {src}; run solve-single or solve-mfg first")
    mu, m = saved
    info = _saved_kind(src) or {}
    eq_tol = info.get("tol", cfg.tol) if info.get("kind") == "mfg" else None
    report = verify.certify(spec, grid, mu, m, equilibrium_tol=eq_tol)
    out = {**_meta(cfg, "verify"), "source": src, **report.to_dict()}
    write_json(os.path.join(cfg.out, "report.json"), out)
    return out


def cmd_simulate(cfg, spec, grid, args) -> dict:
    saved = load_measures(_source(cfg, args), grid)
    if saved is not None:
        mu_star, m_star = saved
        field_ = mfg.freeze(spec, grid, mu_star, m_star)
        coeffs, trans = field_.coeffs, field_.trans
        policy = mfg.policy_from_measures(mu_star, m_star)
        origin = "saved measures"
    else:
        coeffs, trans = _frozen_setup(spec, grid)
        policy = feedback_policy(dp_from_coefficients(coeffs, grid, trans))
        m, mu = kernels.push_forward(spec.initial_weights(grid), policy.stop, policy.ctrl,
                                     trans.p_stay, trans.p_up, trans.p_down)
        m_star, mu_star = OccupationFlow(m), ExitMeasure(mu)
        origin = "dp policy at zero moments"
    seeds = [cfg.seed + s for s in range(args.seeds)]
    rows = sim.chaos_sweep(spec, grid, trans, policy, coeffs, m_star, mu_star, args.agents, seeds)
    if cfg.format == "csv":
        sim.write_sweep_csv(rows, os.path.join(cfg.out, "simulate.csv"))
    out = {**_meta(cfg, "simulate"), "policy": origin, "seeds": seeds,
           "rows": [r.__dict__ for r in rows]}
    write_json(os.path.join(cfg.out, "simulate.json"), out)
    return out


def cmd_export_lp(cfg, spec, grid, args) -> dict:
    saved = load_measures(args.source, grid) if args.source else None
    moments = moment_of(saved[1], saved[0], spec, grid) if saved else None
    coeffs, trans = _frozen_setup(spec, grid, moments)
    prog = lpmod.build_from_coefficients(coeffs, grid, trans, spec.initial_weights(grid))
    path = os.path.join(cfg.out, "problem.mps")
    lpmod.write_mps(prog, path, name=spec.name.upper().replace("-", "_")[:16] or "OCCLP")
    out = {**_meta(cfg, "export-lp"), "path": path, "n_vars": prog.n_vars, "n_rows": prog.n_rows,
           "frozen_at": "saved measures" if saved else "zero moments"}
    write_json(os.path.join(cfg.out, "export.json"), out)
    return out


HANDLERS = {
    "solve-single": cmd_solve_single,
    "solve-mfg": cmd_solve_mfg,
    "dp": cmd_dp,
    "verify": cmd_verify,
    "simulate": cmd_simulate,
    "export-lp": cmd_export_lp,
}


def _fail(kind: str, message: str, code: int = 1) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")
    return code


def run_command(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        spec = load_problem(cfg.problem)
        grid = spec.make_grid(*cfg.grid)
        os.makedirs(cfg.out, exist_ok=True)
        out = HANDLERS[args.command](cfg, spec, grid, args)
    except CommandError as exc:
        return _fail("CommandError", str(exc))
    except (ConfigError, lpmod.SolverStateError, mfg.InfeasibleCandidateError, ValueError,
            OSError) as exc:
        return _fail(type(exc).__name__, str(exc))
    json.dump(out, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
    if args.command == "verify" and not out["overall"]:
        return 1
    return 0


def main() -> None:
    sys.exit(run_command())
