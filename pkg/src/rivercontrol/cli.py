"""Command-line entry point: ``rivercontrol {run,sweep,verify,grid-dump}``.

Exit codes: 0 success, 2 solver stopped before converging (outputs are
written and flagged), 1 invalid configuration, runtime error or failed
verification.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import algae, coupled, fishery, reservoir, sediment
from . import sparse_grid as sg
from .config import RunConfig, build_params, load_config, parse_value
from .errors import ConfigurationError, ConvergenceError, DomainError, IntegrationError, ValidationError
from .numerics import UniformGrid1D

log = logging.getLogger("rivercontrol")

OK, ERROR, NOT_CONVERGED = 0, 1, 2
USER_ERRORS = (ConfigurationError, ValidationError, DomainError, ConvergenceError, IntegrationError, OSError, KeyError)


def _worst(codes) -> int:
    codes = set(codes)
    if ERROR in codes:
        return ERROR
    return NOT_CONVERGED if NOT_CONVERGED in codes else OK


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _write_json(data: dict, path: Path) -> None:
    path.write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n", encoding="utf-8")


# ---------------------------------------------------------------- run


def _run_fishery(cfg, params, out):
    sol = fishery.solve_psi(params)
    path = out / "fishery.csv"
    fishery.write_csv(sol, params, path)
    summary = {
        "psi0": sol.value_at_start,
        "switches": sol.switches,
        "harvest_threshold": fishery.detect_harvest_threshold(sol),
        "u_active": fishery.active_intervals(sol.times, sol.u_star),
        "converged": True,
    }
    return OK, summary, sol.psi, path


def _run_reservoir(cfg, params, out):
    res = reservoir.solve_stationary(
        params,
        n_nodes=cfg.value("numerics", "n_nodes"),
        tolerance=cfg.value("numerics", "tolerance"),
        max_sweeps=cfg.value("numerics", "max_iterations"),
        order=cfg.value("numerics", "order"),
    )
    path = out / "reservoir.csv"
    reservoir.write_csv(res, path, out / "reservoir_history.csv")
    summary = {"sweeps": res.iterations, "converged": res.converged, "final_change": float(res.residual_history[-1])}
    return (OK if res.converged else NOT_CONVERGED), summary, res.values.ravel(), path


def _run_algae(cfg, params, out):
    sol = algae.solve_policy_iteration(
        params,
        n_nodes=cfg.value("numerics", "n_nodes"),
        tolerance=cfg.value("numerics", "tolerance"),
        max_iterations=cfg.value("numerics", "max_iterations"),
        scheme=cfg.value("numerics", "scheme"),
    )
    path = out / "algae.csv"
    algae.write_csv([sol], path)
    summary = {
        "iterations": sol.iterations,
        "converged": sol.converged,
        "max_jump": algae.policy_transition_metric([sol])[params.weight],
    }
    return (OK if sol.converged else NOT_CONVERGED), summary, sol.policy, path


def _run_sediment(cfg, params, out):
    dt = cfg.block("numerics").get("dt")
    sol = sediment.solve_value_iteration(
        params,
        dx=cfg.value("numerics", "dx"),
        dt=dt or None,
        tolerance=cfg.value("numerics", "tolerance"),
        max_iterations=cfg.value("numerics", "max_iterations"),
    )
    path = out / "sediment.csv"
    sediment.write_csv([sol], path)
    summary = {
        "iterations": sol.iterations,
        "converged": sol.converged,
        "partial": not sol.converged,
        "threshold": sol.threshold,
        "threshold_type": sol.is_threshold_type,
        "dt": sol.dt,
    }
    return (OK if sol.converged else NOT_CONVERGED), summary, sol.value, path


def _run_coupled(cfg, params, out):
    sol = coupled.solve(params)
    path = out / "coupled_policy.csv"
    coupled.write_policy_csv(sol, path)
    t0 = float(sol.times[0])
    summary = {
        "n_points": sol.grid.n_points,
        "times": sol.times,
        "value_range_t0": [float(sol.value_at(t0).min()), float(sol.value_at(t0).max())],
        "replenish_fraction_t0": [coupled.replenish_fraction(sol, t0, i) for i in range(params.chain.n_regimes)],
        "converged": True,
    }
    return OK, summary, sol.value_at(t0).ravel(), path


RUNNERS = {
    "fishery": _run_fishery,
    "reservoir": _run_reservoir,
    "algae": _run_algae,
    "sediment": _run_sediment,
    "coupled": _run_coupled,
}


def execute(cfg: RunConfig, out: Path):
    """Solve one configuration; returns ``(exit code, summary, primary array, csv path)``."""
    params = build_params(cfg)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        code, summary, arr, path = RUNNERS[cfg.problem](cfg, params, out)
    log.info("%s solved in %.2f s", cfg.problem, time.perf_counter() - start)
    summary = {"problem": cfg.problem, "seed": cfg.seed, **summary}
    _write_json(summary, out / "summary.json")
    return code, summary, arr, path


def cmd_run(cfg: RunConfig) -> int:
    code, summary, _, path = execute(cfg, cfg.out_dir)
    if code == NOT_CONVERGED:
        print(f"warning: {cfg.problem} solver did not converge; partial output in {path}", file=sys.stderr)
    print(json.dumps(_jsonable(summary), sort_keys=True))
    return code


# ---------------------------------------------------------------- sweep


def _slug(key: str, value) -> str:
    return f"{key}={value}".replace("/", "_")


def _sweep_instance(args):
    cfg, key, value = args
    out = cfg.out_dir / "sweep" / _slug(key, value)
    try:
        inst = cfg.with_override(key, value)
        code, summary, arr, path = execute(inst, out)
        return value, code, summary, np.asarray(arr, dtype=float), str(path), None
    except USER_ERRORS as exc:
        return value, ERROR, {}, None, None, str(exc)


def cmd_sweep(cfg: RunConfig, key: str, values: list, workers: int) -> int:
    if not values:
        raise ValidationError("sweep needs at least one value")
    if "." not in key:
        raise ValidationError(f"sweep key must address a parameter (section.name), got {key!r}")
    cfg.with_override(key, values[0])
    jobs = [(cfg, key, v) for v in values]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_instance, jobs))
    else:
        results = [_sweep_instance(j) for j in jobs]

    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    name = key.replace(".", "_")
    with open(out / f"sweep_{name}.csv", "w", newline="\n", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        header_done = False
        for value, code, _, _, path, _ in results:
            if path is None:
                continue
            with open(path, newline="", encoding="utf-8") as src:
                rows = list(csv.reader(src))
            if not header_done:
                w.writerow([key, *rows[0]])
                header_done = True
            for row in rows[1:]:
                w.writerow([repr(value), *row])

    summary = {
        "key": key,
        "values": values,
        "instances": [
            {"value": v, "exit_code": c, "error": err, **s} for v, c, s, _, _, err in results
        ],
    }
    if cfg.problem == "algae":
        summary["transition_metric"] = [[v, s.get("max_jump")] for v, _, s, _, _, _ in results]
    arrays = [a for _, _, _, a, _, _ in results]
    if all(a is not None for a in arrays) and len({a.shape for a in arrays}) == 1 and len(arrays) > 1:
        summary["consecutive_sup_distance"] = [float(np.max(np.abs(b - a))) for a, b in zip(arrays[:-1], arrays[1:])]
    code = _worst(c for _, c, _, _, _, _ in results)
    summary["exit_code"] = code
    _write_json(summary, out / f"sweep_{name}_summary.json")
    for v, c, _, _, _, err in results:
        if err:
            print(f"error: {key}={v}: {err}", file=sys.stderr)
    print(json.dumps(_jsonable({k: summary[k] for k in summary if k != "instances"}), sort_keys=True))
    return code


# ---------------------------------------------------------------- verify


def _read_rows(path: str) -> list[dict]:
    p = Path(path)
    if not p.is_file():
        raise ConfigurationError(f"solution file {path} not found")
    with open(p, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _load_sediment(params, path):
    rows = [r for r in _read_rows(path) if float(r["epsilon"]) == params.epsilon]
    if len(rows) < 2:
        raise ConfigurationError(f"{path}: no rows for epsilon = {params.epsilon}")
    grid = UniformGrid1D(0.0, 1.0, len(rows))
    value = np.array([float(r["value"]) for r in rows])
    omega = np.array([int(r["omega"]) for r in rows], dtype=np.int8)
    sol = sediment.SedimentSolution(grid, value, omega, None, 0, True, params, sediment.default_dt(grid.spacing))
    sol.threshold = sediment.extract_threshold(sol)
    return sol


def _load_reservoir(params, path):
    rows = _read_rows(path)
    I = params.chain.n_regimes
    if len(rows) % I:
        raise ConfigurationError(f"{path}: row count is not a multiple of {I} regimes")
    n = len(rows) // I
    values = np.array([float(r["value"]) for r in rows]).reshape(I, n)
    q = np.array([float(r["q_star_m3s"]) for r in rows]).reshape(I, n)
    grid = UniformGrid1D(0.0, 1.0, n)
    return reservoir.StationaryValue(grid, values, q, 0, np.zeros(1), True, params.chain.discharge.copy())


def cmd_verify(cfg: RunConfig) -> int:
    params = build_params(cfg)
    n_paths = cfg.value("verify", "n_paths")
    allowance = cfg.value("verify", "allowance")
    solution_file = cfg.value("verify", "solution")
    horizon = cfg.value("verify", "horizon") or None
    two_sided = True
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        if cfg.problem == "sediment":
            if solution_file:
                sol = _load_sediment(params, solution_file)
            else:
                sol = sediment.solve_value_iteration(
                    params, dx=cfg.value("numerics", "dx"), tolerance=cfg.value("numerics", "tolerance"),
                    max_iterations=cfg.value("numerics", "max_iterations"),
                )
            w0 = cfg.value("verify", "w0")
            report = sediment.mc_verify_sediment(params, sol, w0, horizon=horizon, n_paths=n_paths, rng_seed=cfg.seed)
            predicted = float(np.interp(w0, sol.grid.nodes, sol.value))
            where = {"w0": w0}
        elif cfg.problem == "reservoir":
            if solution_file:
                res = _load_reservoir(params, solution_file)
            else:
                res = reservoir.solve_stationary(
                    params, n_nodes=cfg.value("numerics", "n_nodes"), tolerance=cfg.value("numerics", "tolerance"),
                    max_sweeps=cfg.value("numerics", "max_iterations"), order=cfg.value("numerics", "order"),
                )
            y0, i0 = cfg.value("verify", "y0"), cfg.value("verify", "i0")
            report = reservoir.mc_verify_reservoir(params, res, y0, i0, horizon=horizon, n_paths=n_paths, rng_seed=cfg.seed)
            predicted = reservoir.interpolate_value(res, i0, y0)
            where = {"y0": y0, "i0": i0}
        elif cfg.problem == "coupled":
            if solution_file:
                raise ConfigurationError("coupled verification solves in-line; verify.solution is not supported")
            sol = coupled.solve(params, keep_all=True)
            x0, i0 = list(cfg.value("verify", "x0")), cfg.value("verify", "i0")
            report = coupled.mc_verify_coupled(params, sol, x0, i0, n_paths=n_paths, rng_seed=cfg.seed)
            predicted = float(sg.evaluate(sol.grid, sol.surpluses_at(0.0)[:, i0], x0))
            where = {"x0": x0, "i0": i0}
            two_sided = False
        else:
            raise ConfigurationError(f"no Monte Carlo verification for problem {cfg.problem!r}")

    gap = report.mean - predicted
    limit = 3 * report.std_error + allowance
    if two_sided:
        passed = abs(gap) <= limit
    else:
        # the value is an infimum: the policy's cost may only exceed it
        passed = gap >= -limit and gap <= cfg.value("verify", "band")
    result = {
        "problem": cfg.problem,
        **where,
        **report.as_dict(),
        "predicted": predicted,
        "gap": gap,
        "limit": limit,
        "rule": "two-sided" if two_sided else "one-sided",
        "pass": passed,
    }
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    _write_json(result, out / "verify.json")
    print(json.dumps(_jsonable(result), sort_keys=True))
    return OK if passed else ERROR


# ---------------------------------------------------------------- grid-dump


def cmd_grid_dump(cfg: RunConfig | None, dim: int, level: int | None, out: Path) -> int:
    if level is None:
        level = cfg.value("numerics", "level") if cfg is not None and cfg.problem == "coupled" else 11
    grid = sg.build(dim, level)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "grid.csv"
    sg.write_csv(grid, path)
    print(json.dumps({"dim": dim, "level": level, "n_points": grid.n_points, "path": str(path)}))
    return OK


# ---------------------------------------------------------------- entry


def _values(tokens) -> list:
    out = []
    for tok in tokens:
        parsed = parse_value(tok)
        if isinstance(parsed, list):
            out.extend(parsed)
        elif isinstance(parsed, str) and "," in parsed:
            out.extend(parse_value(t.strip()) for t in parsed.split(",") if t.strip())
        else:
            out.append(parsed)
    return out


def make_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML run configuration")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override one configuration entry (repeatable)")
    common.add_argument("--out-dir", help="output directory (overrides output.directory)")
    common.add_argument("--seed", type=int, help="random seed (overrides seed)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="rivercontrol", description="River-management stochastic control solvers")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="solve one configuration")
    sw = sub.add_parser("sweep", parents=[common], help="solve one configuration per parameter value")
    sw.add_argument("--key", required=True, help="parameter to vary, e.g. algae.weight")
    sw.add_argument("--values", nargs="*", default=[], help="values (space or comma separated)")
    sw.add_argument("--workers", type=int, default=1)
    sub.add_parser("verify", parents=[common], help="Monte Carlo check of a computed value")
    gd = sub.add_parser("grid-dump", parents=[common], help="write sparse-grid points to CSV")
    gd.add_argument("--dim", type=int, default=3)
    gd.add_argument("--level", type=int)
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        cfg = None
        if args.config:
            cfg = load_config(args.config, args.overrides)
        elif args.command != "grid-dump":
            raise ConfigurationError("--config is required")
        if cfg is not None:
            if args.out_dir:
                cfg.blocks.setdefault("output", {})["directory"] = args.out_dir
            if args.seed is not None:
                cfg = cfg.with_override("seed", args.seed)
        if args.command == "run":
            return cmd_run(cfg)
        if args.command == "sweep":
            return cmd_sweep(cfg, args.key, _values(args.values), args.workers)
        if args.command == "verify":
            return cmd_verify(cfg)
        out = Path(args.out_dir) if args.out_dir else (cfg.out_dir if cfg else Path("out"))
        return cmd_grid_dump(cfg, args.dim, args.level, out)
    except USER_ERRORS as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return ERROR


if __name__ == "__main__":
    sys.exit(main())
