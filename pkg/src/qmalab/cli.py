"""Command line front end: ``qma verify``, ``qma solve`` and ``qma path``.

Exit codes: 0 success, 1 configuration error, 2 residual failure,
3 solver stage failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import fields, monitor, solver, suites
from .config import THRESHOLDS, THRESHOLDS_VERSION, ConfigError, load_config, passes
from .errors import QMAError, StageFailure

log = logging.getLogger("qmalab")

EXIT_OK, EXIT_CONFIG, EXIT_RESIDUAL, EXIT_STAGE = 0, 1, 2, 3


def _threads() -> int:
    raw = os.environ.get("QMA_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError as exc:
        raise ConfigError(f"QMA_THREADS must be an integer, got {raw!r}") from exc


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def _envelope(cfg, suite: str, extra: dict) -> dict:
    used = {k: list(v) for k, v in THRESHOLDS.items()}
    return {
        "suite": suite,
        "seed": cfg.seed,
        "config": cfg.identity(),
        "config_hash": cfg.config_hash(),
        "thresholds_version": THRESHOLDS_VERSION,
        "thresholds": used,
        **extra,
    }


def _emit(cfg, name: str, report: dict, started: float) -> Path:
    out = Path(cfg.out)
    path = out / f"{name}.json"
    _write_json(path, report)
    _write_json(out / f"{name}.meta.json",
                {"timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"), "elapsed_s": time.perf_counter() - started})
    return path


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------


def cmd_verify(cfg) -> int:
    started = time.perf_counter()
    if cfg.suite not in suites.SUITES:
        raise ConfigError(f"unknown suite {cfg.suite!r}")
    mutate = cfg.mutate or None
    if mutate not in monitor.MUTATIONS:
        raise ConfigError(f"unknown mutation {cfg.mutate!r}")
    if mutate is not None and cfg.suite not in ("delta", "eqns"):
        raise ConfigError("mutations apply to the delta and eqns suites only")
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.points + 1)
    if cfg.suite in suites.GRID_SUITES:
        grid = fields.TorusGrid(cfg.n, cfg.N)
        results = [suites.run_grid(cfg.suite, grid, seeds[0], max(1, cfg.samples // 4))]
        chart_name = "flat-torus"
    else:
        chart = suites.make_chart(cfg.chart, cfg.a, cfg.n)
        pts = monitor.sample_points(chart, cfg.points, np.random.default_rng(seeds[-1]))
        with ThreadPoolExecutor(max_workers=_threads()) as pool:
            futs = [pool.submit(suites.run_point, cfg.suite, chart, x0, seeds[k], cfg.samples, mutate)
                    for k, x0 in enumerate(pts)]
            results = [f.result() for f in futs]
        chart_name = chart.name
    summary = suites.summarize(results)
    if mutate is not None:
        # a negative control is detected when the mutated suite fails by a clear margin
        key, name = ("delta_mutation", "delta") if cfg.suite == "delta" else ("eqns_mutation", "curvature")
        strength = summary["worst"][name]
        summary["mutation"] = {"name": mutate, "max_residual": strength,
                               "threshold": list(THRESHOLDS[key]), "detected": passes(key, strength)}
    report = _envelope(cfg, cfg.suite, {
        "chart": chart_name,
        "mutate": mutate,
        "points": [{"location": r.location, "residuals": {k: v for k, (v, _) in r.residuals.items()}}
                   for r in results],
        "summary": summary,
    })
    path = _emit(cfg, f"verify-{cfg.suite}", report, started)
    verdict = "pass" if summary["pass"] else "FAIL"
    print(f"{cfg.suite} on {chart_name}: {verdict} (max rel residual {summary['max_rel_residual']:.3e}) -> {path}")
    return EXIT_OK if summary["pass"] else EXIT_RESIDUAL


# ---------------------------------------------------------------------------
# solve / path
# ---------------------------------------------------------------------------


def _solver_config(cfg) -> solver.SolverConfig:
    return solver.SolverConfig(n=cfg.n, N=cfg.N, steps=cfg.steps, tol=cfg.tol,
                               max_iter=cfg.max_iter, eps_pos=cfg.eps_pos, seed=cfg.seed)


def build_F(spec: str, grid: fields.TorusGrid, seed: int):
    """Right-hand side from ``zero``, ``manufactured``, ``const:c``, ``random:amp`` or a snapshot path."""
    if spec == "zero":
        return fields.ScalarField(grid, np.zeros(grid.shape)), None
    if spec == "manufactured":
        star = solver.manufactured_phi(grid)
        return solver.manufactured_F(star), star
    if spec.startswith("const:"):
        return fields.ScalarField(grid, np.full(grid.shape, float(spec[6:]))), None
    if spec.startswith("random:"):
        return solver.random_F(grid, float(spec[7:]), seed), None
    path = Path(spec)
    if path.suffix == ".snap" or path.is_file():
        if not path.is_file():
            raise ConfigError(f"snapshot {spec} not found")
        sgrid, data = fields.load_snapshot(path)
        if sgrid != grid:
            raise ConfigError(f"snapshot grid {sgrid} does not match the configured grid {grid}")
        return fields.ScalarField(grid, data[..., 0]), None
    raise ConfigError(f"cannot interpret F specification {spec!r}")


def _run_solver(cfg, scfg, F, callback=None):
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        return solver.solve_qma(F, scfg, callback=callback)
    except StageFailure as exc:
        if exc.state is not None:
            fields.save_snapshot(out / "phi_last_good.snap", exc.state.grid, exc.state.phi.values)
        rep = exc.diagnostics.get("report")
        _write_json(out / "solve.json", _envelope(cfg, "solve", {
            "converged": False, "failure": str(exc),
            "report": rep.to_dict() if rep is not None else None}))
        print(f"stage failure: {exc}", file=sys.stderr)
        raise


def cmd_solve(cfg) -> int:
    started = time.perf_counter()
    scfg = _solver_config(cfg)
    grid = scfg.grid
    F, star = build_F(cfg.f, grid, cfg.seed)
    try:
        phi, b, rep, _ = _run_solver(cfg, scfg, F)
    except StageFailure:
        return EXIT_STAGE
    out = Path(cfg.out)
    fields.save_snapshot(out / "phi.snap", grid, phi.values)
    fields.save_snapshot(out / "F.snap", grid, F.values)
    d = json.loads(rep.to_json())
    extra = {"report": d, "b": b, "converged": rep.converged}
    if star is not None:
        extra["recovery_error"] = float(np.abs(phi.values - (star.values - star.values.max())).max())
    _emit(cfg, "solve", _envelope(cfg, "solve", extra), started)
    msg = f"solved: b = {b:.12g}, stages = {len(rep.stages)}"
    if star is not None:
        msg += f", recovery error = {extra['recovery_error']:.3e}"
    print(msg)
    return EXIT_OK


def _path_report(cfg, N: int):
    c = load_config(None, {**cfg.to_dict(), "N": N})
    scfg = _solver_config(c)
    F, _ = build_F(cfg.f, scfg.grid, cfg.seed)
    phi, b, rep, states = _run_solver(cfg, scfg, F)
    return monitor.estimate_trace(states, A=cfg.A, F=F), rep


def cmd_path(cfg, monitor_on: bool = True, compare: int | None = None) -> int:
    started = time.perf_counter()
    try:
        est, rep = _path_report(cfg, cfg.N)
        other = _path_report(cfg, compare)[0] if compare else None
    except StageFailure:
        return EXIT_STAGE
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "trace.csv").write_text(est.to_csv())
    extra = {"stages": json.loads(rep.to_json())["stages"]}
    if monitor_on:
        extra["estimate"] = est.to_dict()
    if other is not None:
        extra["comparison"] = {"N": [cfg.N, compare], **monitor.compare_reports(other, est)}
    ok = passes("trace_ineq", est.min_trace_ineq) and passes("max_principle", est.max_laplacian_Q)
    if other is not None:
        ok = ok and passes("C_emp_variation", extra["comparison"]["C_emp_variation"])
    extra["pass"] = ok
    _emit(cfg, "path", _envelope(cfg, "path", extra), started)
    print(f"path: {len(est.rows)} states, C_emp = {est.C_emp:.6g}, sup Q = {est.sup_Q:.6g}"
          + (f", C_emp variation = {extra['comparison']['C_emp_variation']:.3e}" if other else ""))
    return EXIT_OK if ok else EXIT_RESIDUAL


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="qma", description="Quaternionic Monge-Ampere numerical lab")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify", parents=[common], help="run an identity suite")
    v.add_argument("--suite", choices=suites.SUITES)
    v.add_argument("--chart", choices=["flat", "eh", "eguchi-hanson"])
    v.add_argument("--a", type=float, help="Eguchi-Hanson parameter")
    v.add_argument("--n", type=int)
    v.add_argument("--points", type=int)
    v.add_argument("--samples", type=int)
    v.add_argument("--mutate", choices=["sign-flip", "dehyper"])

    for name, helptext in (("solve", "solve on the flat torus"), ("path", "monitor a continuity path")):
        s = sub.add_parser(name, parents=[common], help=helptext)
        s.add_argument("--grid", type=int, dest="N")
        s.add_argument("--n", type=int)
        s.add_argument("--f", help="zero | manufactured | const:c | random:amp | file.snap")
        s.add_argument("--steps", type=int)
        s.add_argument("--tol", type=float)
        if name == "path":
            s.add_argument("--A", type=float)
            s.add_argument("--monitor", action="store_true")
            s.add_argument("--compare-grid", type=int, dest="compare")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    opts = {k: v for k, v in vars(args).items()
            if k not in ("command", "config", "verbose", "monitor", "compare") and v is not None}
    try:
        cfg = load_config(args.config, opts)
        if args.command == "verify":
            return cmd_verify(cfg)
        if args.command == "solve":
            return cmd_solve(cfg)
        return cmd_path(cfg, monitor_on=args.monitor, compare=args.compare)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except QMAError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
