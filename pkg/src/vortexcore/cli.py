"""Command-line front end.

Subcommands ``profile``, ``critical-points``, ``ansatz``, ``solve``,
``verify`` and ``pipeline`` read the INI run configuration (see
:mod:`vortexcore.config`) and write JSON reports and grid/table CSVs into the
output directory. Exit status: 0 when every check passes, 1 when a check
fails, 2 when a stage raises (the run log records the stage and error code).
"""

from __future__ import annotations

import argparse
import glob
import hashlib
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .config import describe_schema, load_config
from .errors import ConfigError, VortexCoreError

SCHEMA_VERSION = "1.0"
EXIT_OK, EXIT_FAIL, EXIT_ERROR = 0, 1, 2


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------

def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_json(path, payload, kind):
    body = {"schema_version": SCHEMA_VERSION, "kind": kind, "version": __version__, **payload}
    with open(path, "w") as fh:
        json.dump(_jsonable(body), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _tag(eps):
    return f"{eps:g}"


class Context:
    """Domain, evaluator, background flow and vortex configuration of a run."""

    def __init__(self, rc):
        from .domain import make_domain
        from .potential import PotentialEvaluator, solve_background, vn_preset
        from .routh import DiskMask, VortexConfig

        self.rc = rc
        d = rc.domain
        self.domain = make_domain(d.kind, d.shape, d.grid)
        self.ev = PotentialEvaluator(self.domain, d.backend)
        if rc.flow.file:
            arr = np.loadtxt(rc.flow.file, delimiter=",", ndmin=2)
            vn = [arr[:, k] for k in range(arr.shape[1])]
            vn = vn[0] if len(vn) == 1 else vn
        else:
            vn = vn_preset(self.domain, rc.flow.preset, rc.flow.amplitude)
        self.flow = solve_background(self.domain, vn, self.ev)
        v = rc.vortex
        masks = None if v.masks is None else tuple(DiskMask((m[0], m[1]), m[2]) for m in v.masks)
        self.cfg = VortexConfig(v.kappa, v.z, masks=masks, rho=v.rho, Lbar=v.lbar, use_masks=v.use_masks)
        self._profile = None

    @property
    def profile(self):
        if self._profile is None:
            from .profile import solve_profile
            self._profile = solve_profile(self.rc.solver.p, self.rc.solver.profile_tol)
        return self._profile


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------

def stage_profile(p, tol, out):
    from .profile import solve_profile
    sol = solve_profile(p, tol)
    csv_path = os.path.join(out, "profile.csv")
    np.savetxt(csv_path, np.column_stack([sol.r, sol.phi, sol.dphi]), delimiter=",",
               header="r,phi,dphi", comments="", fmt="%.17g")
    write_json(os.path.join(out, "profile.json"), sol.to_dict(), "profile")
    return sol


def stage_critical(ctx, out, jobs=1):
    from .routh import multistart
    v = ctx.rc.vortex
    if not v.critical:
        payload = {"searched": False, "Z_star": ctx.cfg.Z.tolist(), "results": []}
        write_json(os.path.join(out, "critical.json"), payload, "critical-points")
        return ctx.cfg.Z.copy()
    seeds = [ctx.cfg.Z] + [np.asarray(s, dtype=float) for s in v.seeds]
    results = multistart(ctx.ev, ctx.flow, ctx.cfg, seeds, jobs=jobs)
    chosen = next((k for k, r in enumerate(results) if not isinstance(r, VortexCoreError)), None)
    rows = []
    for k, r in enumerate(results):
        if isinstance(r, VortexCoreError):
            continue
        for it, z, gn, val in r.trajectory:
            rows.append([k, it, *z, gn, val])
    m = ctx.cfg.m
    header = ",".join(["seed", "iteration"] + [f"{c}{j}" for j in range(m) for c in ("x", "y")]
                      + ["grad_norm", "value"])
    np.savetxt(os.path.join(out, "critical_trajectory.csv"), np.array(rows).reshape(-1, 4 + 2 * m),
               delimiter=",", header=header, comments="", fmt="%.17g")
    payload = {"searched": True, "chosen": chosen,
               "results": [r.to_dict() if not isinstance(r, VortexCoreError) else {"error": r.to_dict()}
                           for r in results]}
    if chosen is None:
        write_json(os.path.join(out, "critical.json"), payload, "critical-points")
        raise results[0]
    best = results[chosen]
    payload.update(best.to_dict())
    write_json(os.path.join(out, "critical.json"), payload, "critical-points")
    return best.Z.copy()


def stage_ansatz(ctx, Z, eps_list, out):
    from .ansatz import ScaleParams, assemble_ansatz, solve_params
    cfg = ctx.cfg.with_positions(Z)
    fields = {}
    for eps in eps_list:
        scale = ScaleParams(eps, ctx.rc.solver.p)
        params = solve_params(ctx.ev, ctx.flow, cfg, scale, ctx.profile)
        P = assemble_ansatz(ctx.ev, ctx.flow, cfg, params, scale, ctx.profile)
        P.to_csv(os.path.join(out, f"ansatz_{_tag(eps)}.csv"))
        write_json(os.path.join(out, f"ansatz_{_tag(eps)}.json"), params.to_dict(), "ansatz")
        fields[eps] = (P, params)
    return fields


def _solver_options(rc):
    from .solver import SolverOptions
    s = rc.solver
    return SolverOptions(tol=s.tol, max_iter=s.max_iter, on_contact=s.on_contact)


def stage_solve(ctx, Z, eps_list, out, timing):
    """Newton solves along eps; writes w/u grids and one report per eps."""
    from .ansatz import ScaleParams, balance_path
    from .grid import GridField
    from .solver import ansatz_seed, continue_in_eps, newton_solve, to_u

    rc = ctx.rc
    cfg = ctx.cfg.with_positions(Z)
    opts = _solver_options(rc)
    runs = []
    if rc.solver.seed == "balanced":
        for eps in eps_list:
            scale = ScaleParams(eps, rc.solver.p)
            Zb = balance_path(ctx.ev, ctx.flow, cfg, scale, ctx.profile)
            cb = cfg.with_positions(Zb)
            P, _ = ansatz_seed(ctx.ev, ctx.flow, cb, scale, ctx.profile)
            w, rep = newton_solve(P, ctx.ev, ctx.flow, cb, scale, opts)
            runs.append((w, rep, Zb))
    elif rc.solver.seed in ("zero", "file"):
        for eps in eps_list:
            scale = ScaleParams(eps, rc.solver.p)
            if rc.solver.seed == "zero":
                seed = GridField(ctx.domain.grid, np.zeros(ctx.domain.grid.shape), "w")
            else:
                seed = GridField.read_csv(rc.solver.seed_file, "w")
            w, rep = newton_solve(seed, ctx.ev, ctx.flow, cfg, scale, opts)
            runs.append((w, rep, cfg.Z))
    else:
        for w, rep in continue_in_eps(ctx.ev, ctx.flow, cfg, ctx.profile, eps_list, opts):
            runs.append((w, rep, cfg.Z))
    for w, rep, Zr in runs:
        tag = _tag(rep.eps)
        scale = ScaleParams(rep.eps, rc.solver.p)
        w.to_csv(os.path.join(out, f"w_{tag}.csv"))
        to_u(w, scale).to_csv(os.path.join(out, f"u_{tag}.csv"))
        write_json(os.path.join(out, f"solve_{tag}.json"),
                   {"report": rep.to_dict(), "Z": np.asarray(Zr).tolist()}, "solve")
        timing[f"solve_{tag}"] = rep.wall_clock
    return runs


def stage_verify(ctx, Z_star, out, run_dir=None):
    """Solution checks over the solves found in ``run_dir``."""
    from .ansatz import ScaleParams
    from .diagnostics import (Criterion, ansatz_energy, circulation, convergence_study, energy,
                              reconstruct_flow, stationarity_residual, table_csv)
    from .grid import GridField
    from .solver import DiscreteProblem, detect_cores, to_w

    rc = ctx.rc
    run_dir = run_dir or out
    files = sorted(glob.glob(os.path.join(run_dir, "solve_*.json")))
    if not files:
        raise VortexCoreError(f"no solve reports in {run_dir}", code="NO_INPUT")
    entries = []
    for f in files:
        with open(f) as fh:
            rep = json.load(fh)
        if rep.get("schema_version") != SCHEMA_VERSION:
            raise VortexCoreError(f"{f}: unsupported schema version", code="SCHEMA_INVALID")
        entries.append(rep)
    entries.sort(key=lambda r: -r["report"]["eps"])
    Zs = np.asarray(Z_star, dtype=float).reshape(-1, 2)
    h = ctx.domain.grid.h
    per_eps = []
    circ_totals = []
    crit = []
    kappa = ctx.cfg.kappa
    for rep in entries:
        r = rep["report"]
        eps = r["eps"]
        scale = ScaleParams(eps, r["p"])
        cfg = ctx.cfg.with_positions(rep["Z"])
        u = GridField.read_csv(os.path.join(run_dir, f"u_{_tag(eps)}.csv"), "u")
        prob = DiscreteProblem(ctx.ev, ctx.flow, cfg, scale)
        total, per = circulation(u, ctx.ev, ctx.flow, cfg, scale, problem=prob)
        cores = detect_cores(to_w(u, scale), cfg, scale, ctx.flow, problem=prob) if total > 0 else []
        fields = reconstruct_flow(u, ctx.flow, scale, cfg, problem=prob)
        om = np.nan_to_num(fields.vorticity.values)
        core_cells = np.zeros(om.shape, dtype=bool)
        for c in cores:
            core_cells[c.cells[:, 0], c.cells[:, 1]] = True
        outside = float(np.abs(om[~core_cells]).max(initial=0.0) / max(np.abs(om).max(), 1e-300))
        dist = [float(np.linalg.norm(c.centroid - Zs[c.vortex])) for c in cores]
        K_grid = energy(to_w(u, scale), ctx.ev, ctx.flow, cfg, scale, problem=prob)
        K_ans = ansatz_energy(ctx.ev, ctx.flow, cfg, scale, ctx.profile)
        circ_totals.append(total)
        per_eps.append({"eps": eps, "total_circulation": total, "per_core_circulation": per,
                        "centroids": [c.centroid for c in cores], "radii": [c.radius for c in cores],
                        "dist_to_Zstar": dist, "stationarity_residual": stationarity_residual(fields),
                        "vorticity_outside_cores": outside, "iterations": r["iterations"],
                        "energy": K_grid, "ansatz_energy": K_ans,
                        "energy_residual": abs(K_grid - K_ans) / abs(K_ans)})
        t = _tag(eps)
        crit.append(Criterion(f"converged[{t}]", float(r["converged"]), 1, "true"))
        crit.append(Criterion(f"iterations[{t}]", r["iterations"], rc.verify.max_iterations, "<="))
        crit.append(Criterion(f"one_core_per_vortex[{t}]",
                              float(len(cores) == cfg.m and {c.vortex for c in cores} == set(range(cfg.m))),
                              1, "true"))
        crit.append(Criterion(f"centroid_cells[{t}]", max(dist, default=np.inf) / h,
                              rc.verify.centroid_cells, "<="))
        crit.append(Criterion(f"vorticity_outside_cores[{t}]", outside, 1e-6, "<"))
    errs = [abs(c - kappa.sum()) / kappa.sum() for c in circ_totals]
    crit.append(Criterion(f"circulation_rel_err[{_tag(entries[-1]['report']['eps'])}]", errs[-1],
                          rc.verify.circulation_rel, "<"))
    if len(errs) >= 2:
        crit.append(Criterion("circulation_err_decreasing", float(np.all(np.diff(errs) < 0)), 1, "true"))
    table = None
    if len(entries) >= 3:
        study = convergence_study([e["report"] for e in entries], Zs, kappa, circ_totals)
        table = study["rows"]
        for row, e in zip(table, per_eps):
            row["energy_residual"] = e["energy_residual"]
        ratios = np.array([row["core_radius_over_eps"] for row in table])
        crit.append(Criterion("core_radius_over_eps_spread",
                              float(np.abs(ratios / ratios.mean() - 1).max()), rc.verify.radius_ratio, "<="))
        table_csv(table, os.path.join(out, "convergence.csv"))
    payload = {"Z_star": Zs.tolist(), "per_eps": per_eps, "table": table,
               "criteria": [c.to_dict() for c in crit], "passed": all(c.passed for c in crit)}
    write_json(os.path.join(out, "verification.json"), payload, "verification")
    return payload


# ---------------------------------------------------------------------------
# pipeline with a run log
# ---------------------------------------------------------------------------

class RunLog:
    def __init__(self, out, config_paths):
        self.out = out
        self.entries = []
        self.timing = {}
        self.config_paths = [str(p) for p in config_paths]

    def run(self, stage, fn, *a, **kw):
        t0 = time.perf_counter()
        try:
            res = fn(*a, **kw)
        except VortexCoreError as exc:
            self.entries.append({"stage": stage, "status": "error", "error": exc.to_dict()})
            self.timing[stage] = time.perf_counter() - t0
            raise
        self.entries.append({"stage": stage, "status": "ok"})
        self.timing[stage] = time.perf_counter() - t0
        return res

    def write(self, exit_code, extra=None):
        content = {"config": self.config_paths, "stages": self.entries, "exit_code": exit_code,
                   **(extra or {})}
        digest = hashlib.sha256(json.dumps(_jsonable(content), sort_keys=True).encode()).hexdigest()
        # wall-clock lives in "timing", which the hash does not cover
        write_json(os.path.join(self.out, "run_log.json"),
                   {**content, "content_sha256": digest, "timing": self.timing}, "run-log")


def _prepare_out(path):
    os.makedirs(path, exist_ok=True)
    return path


def run_pipeline(config_paths, out=None, jobs=1, overrides=None):
    """Full chain profile -> critical points -> ansatz -> solve -> verify."""
    if isinstance(config_paths, (str, os.PathLike)):
        config_paths = [config_paths]
    try:
        rc = load_config(config_paths, overrides)
    except ConfigError as exc:
        out = _prepare_out(out or os.environ.get("VORTEXCORE_OUT") or "vortexcore_out")
        log = RunLog(out, config_paths)
        log.entries.append({"stage": "config", "status": "error", "error": exc.to_dict()})
        log.write(EXIT_ERROR)
        _report_error("config", exc)
        return EXIT_ERROR
    out = _prepare_out(out or rc.output)
    log = RunLog(out, config_paths)
    write_json(os.path.join(out, "config.json"), rc.to_dict(), "config")
    try:
        log.run("profile", stage_profile, rc.solver.p, rc.solver.profile_tol, out)
        ctx = log.run("background", Context, rc)
        Z = log.run("critical-points", stage_critical, ctx, out, jobs)
        log.run("ansatz", stage_ansatz, ctx, Z, rc.solver.eps, out)
        log.run("solve", stage_solve, ctx, Z, rc.solver.eps, out, log.timing)
        ver = log.run("verify", stage_verify, ctx, Z, out)
    except VortexCoreError as exc:
        log.write(EXIT_ERROR)
        _report_error(log.entries[-1]["stage"], exc)
        return EXIT_ERROR
    code = EXIT_OK if ver["passed"] else EXIT_FAIL
    failed = [c["name"] for c in ver["criteria"] if not c["passed"]]
    log.write(code, {"failed_criteria": failed})
    for c in ver["criteria"]:
        print(f"{'PASS' if c['passed'] else 'FAIL'}  {c['name']}: {c['value']:.6g} "
              f"({c['comparison']} {c['tolerance']:g})")
    return code


def _report_error(stage, exc):
    print(f"error in stage {stage}: [{exc.code}] {exc}", file=sys.stderr)


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _config_args(p):
    p.add_argument("--config", action="append", default=[], help="run configuration (repeatable)")
    p.add_argument("--domain-config", action="append", default=[], help="extra config file (domain)")
    p.add_argument("--vortex-config", action="append", default=[], help="extra config file (vortex)")
    p.add_argument("--out", help="output directory (overrides [output] dir)")


def _config_paths(args):
    paths = list(args.config) + list(args.domain_config) + list(args.vortex_config)
    if not paths:
        raise ConfigError("no configuration given (use --config)")
    return paths


def build_parser():
    parser = argparse.ArgumentParser(
        prog="vortexcore", description="Desingularised point vortices: critical points, "
        "approximate solutions, free-boundary solves and checks.",
        epilog="Configuration keys and defaults:\n" + describe_schema(),
        formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--jobs", type=int, default=1, help="worker cap for parallel stages")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("profile", help="radial profile and its integrals")
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--out", help="output directory")

    p = sub.add_parser("critical-points", help="critical points of W")
    _config_args(p)

    p = sub.add_parser("ansatz", help="plateau levels, core radii and the approximate solution")
    _config_args(p)
    p.add_argument("--eps", type=float, nargs="+")

    p = sub.add_parser("solve", help="Newton solve of the free-boundary problem")
    _config_args(p)
    p.add_argument("--eps", type=float, nargs="+")
    p.add_argument("--p", type=float)
    p.add_argument("--grid", type=int)
    p.add_argument("--seed", choices=("ansatz", "balanced", "zero", "file"))
    p.add_argument("--seed-file")
    p.add_argument("--no-masks", action="store_true")
    p.add_argument("--z-star", help="use these positions instead of a critical-point search, 'x, y; ...'")

    p = sub.add_parser("verify", help="checks on the solves of a run directory")
    _config_args(p)
    p.add_argument("--run-dir", help="directory holding solve_*.json and u_*.csv (default: --out)")

    p = sub.add_parser("pipeline", help="run every stage")
    _config_args(p)
    return parser


def _overrides(args):
    ov = {}
    if getattr(args, "eps", None):
        ov.setdefault("solver", {})["eps"] = ", ".join(repr(e) for e in args.eps)
    if getattr(args, "p", None) is not None and args.command != "profile":
        ov.setdefault("solver", {})["p"] = repr(args.p)
    if getattr(args, "grid", None):
        ov.setdefault("domain", {})["grid"] = str(args.grid)
    if getattr(args, "seed", None):
        ov.setdefault("solver", {})["seed"] = args.seed
    if getattr(args, "seed_file", None):
        ov.setdefault("solver", {})["seed_file"] = args.seed_file
    if getattr(args, "no_masks", False):
        ov.setdefault("vortex", {})["use_masks"] = "false"
    if getattr(args, "z_star", None):
        ov.setdefault("vortex", {}).update({"z": args.z_star, "critical": "false"})
    return ov


def _zstar_from(out):
    path = os.path.join(out, "critical.json")
    if os.path.exists(path):
        with open(path) as fh:
            return np.asarray(json.load(fh)["Z_star"], dtype=float)
    return None


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "profile":
            out = _prepare_out(args.out or os.environ.get("VORTEXCORE_OUT") or "vortexcore_out")
            sol = stage_profile(args.p, args.tol, out)
            print(json.dumps(_jsonable(sol.to_dict()), indent=2, sort_keys=True))
            return EXIT_OK
        paths = _config_paths(args)
        if args.command == "pipeline":
            return run_pipeline(paths, args.out, args.jobs)
        rc = load_config(paths, _overrides(args))
        out = _prepare_out(args.out or rc.output)
        ctx = Context(rc)
        if args.command == "critical-points":
            Z = stage_critical(ctx, out, args.jobs)
            print(json.dumps({"Z_star": Z.tolist()}))
            return EXIT_OK
        Z = _zstar_from(out)
        if Z is None or not rc.vortex.critical:
            Z = stage_critical(ctx, out, args.jobs)
        if args.command == "ansatz":
            stage_ansatz(ctx, Z, rc.solver.eps, out)
            return EXIT_OK
        if args.command == "solve":
            timing = {}
            runs = stage_solve(ctx, Z, rc.solver.eps, out, timing)
            for _, rep, _ in runs:
                print(f"eps={rep.eps:g} iterations={rep.iterations} residual={rep.residual_norm:.3e} "
                      f"cores={len(rep.cores)}")
            return EXIT_OK
        if args.command == "verify":
            ver = stage_verify(ctx, Z, out, args.run_dir)
            return EXIT_OK if ver["passed"] else EXIT_FAIL
    except VortexCoreError as exc:
        _report_error(args.command, exc)
        return EXIT_ERROR
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
