"""Command-line entry point.

Subcommands: ``models``, ``run CONFIG``, ``verify CONFIG``, ``converge CONFIG``
and ``entropy RUNDIR``. Exit status is 0 on success, 1 when a verification
check fails and 2 for configuration or input errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__, csvio, entropy, plotting
from .config import ConfigError, RunConfig, load_config, parse_config
from .fixtures import dirichlet_heat_fixture
from .grid import build_grid
from .model import (BUILTIN_DOCS, BUILTIN_PARAMS, COMMON_PARAMS, InitialData, InvalidModelError,
                    make_builtin)
from .solver import SolverError, Trajectory, run
from .verify import (Scenario, SuiteConfig, SuiteConfigError, SuiteReport, convergence_study,
                     run_all)

log = logging.getLogger("zeroflux")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2
DEFAULT_LEVELS = {"heat": (50, 100, 200)}
DEFAULT_DEGENERATE_LEVELS = (100, 200, 400)


# --- run directories --------------------------------------------------------

def write_run(traj: Trajectory, cfg: RunConfig, out: Path, figures: bool = True) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    for old in csvio.list_snapshots(out):
        old[2].unlink()
    for i, (t, fld) in enumerate(traj.snapshots):
        csvio.write_snapshot(out / csvio.snapshot_name(i, t), fld)
    csvio.write_step_log(out / "steps.csv", traj.step_log)
    grid = traj.grid
    meta = {"version": __version__,
            "grid.shape": list(grid.n),
            "grid.h": list(grid.h),
            "domain.lo": list(grid.domain.lo),
            "domain.hi": list(grid.domain.hi),
            "model.name": traj.problem.name,
            **{f"model.{k}": v for k, v in traj.problem.params.items()},
            "steps": int(len(traj.step_log)),
            "snapshots": len(traj.times),
            # file names round times to 6 decimals; keep the exact values here
            "snapshot.times": list(traj.times)}
    text = csvio.format_kv(meta) + "# config\n" + csvio.format_kv(cfg.echo())
    csvio.atomic_write(out / "run.meta", text)
    if figures:
        plotting.plot_snapshots(traj, out / "solution.png")
        if len(traj.step_log):
            plotting.plot_step_log(traj.step_log, out / "steps.png")
    return out


def read_run(directory) -> tuple[Trajectory, RunConfig]:
    """Rebuild the trajectory of a run directory from its files alone."""
    directory = Path(directory)
    meta_path = directory / "run.meta"
    if not meta_path.is_file():
        raise ConfigError([f"{directory}: no run.meta (not a run directory)"])
    text = meta_path.read_text(encoding="utf-8")
    if "# config\n" not in text:
        raise ConfigError([f"{meta_path}: config echo missing"])
    cfg = parse_config(text.split("# config\n", 1)[1], source=meta_path)
    snaps = csvio.list_snapshots(directory)
    if not snaps:
        raise ConfigError([f"{directory}: no snapshot files"])
    # snapshot 0 stands in for the initial data so the directory is self-contained
    u0 = csvio.read_snapshot_values(snaps[0][2])
    cfg.values.update({"initial.kind": None, "initial.file": None})
    params = {**cfg.model_params(), "initial": InitialData("file", {"values": u0})}
    try:
        problem = make_builtin(cfg["model.name"], params)
    except InvalidModelError as exc:
        raise ConfigError([str(exc)]) from exc
    grid = build_grid(problem.domain, cfg.grid_n)
    times = [t for _, t, _ in snaps]
    exact = _meta_times(text.split("# config\n", 1)[0])
    if exact is not None and len(exact) == len(times) and \
            all(abs(a - b) <= 5e-7 for a, b in zip(exact, times)):
        times = exact
    fields = [csvio.read_snapshot(p, grid) for _, _, p in snaps]
    solver_cfg = cfg.solver_config().replace(snapshot_times=tuple(times), t_end=times[-1])
    return Trajectory(problem, solver_cfg, grid, times, fields), cfg


def _meta_times(header: str):
    for line in header.splitlines():
        key, _, value = line.partition("=")
        if key.strip() == "snapshot.times":
            return [float(v) for v in value.split(",")]
    return None


# --- subcommands ------------------------------------------------------------

def cmd_models(args) -> int:
    for name, params in BUILTIN_PARAMS.items():
        print(f"{name}: {BUILTIN_DOCS[name]}")
        for k, v in params.items():
            print(f"    model.{k} = {v}")
    print("common keys: " + ", ".join(f"model.{k}" if k in ("dim", "T") else
                                      f"domain.{k}" if k in ("lo", "hi") else k
                                      for k in COMMON_PARAMS))
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    problem = cfg.problem()
    out = Path(args.out) if args.out else cfg.out_dir
    traj = run(problem, cfg.solver_config(), cfg.grid_n)
    write_run(traj, cfg, out, cfg["output.figures"])
    print(f"wrote {len(traj.times)} snapshots and {len(traj.step_log)} steps to {out}")
    return EXIT_OK


def _levels(cfg: RunConfig, name: str):
    if cfg["converge.levels"]:
        return tuple(cfg["converge.levels"])
    return DEFAULT_LEVELS.get(name, DEFAULT_DEGENERATE_LEVELS)


def _write_report(report: SuiteReport, out: Path, stem: str, figures: bool):
    csvio.atomic_write(out / f"{stem}.txt", report.to_text() + "\n")
    csvio.write_csv(out / f"{stem}.csv", ["check", "value", "bound", "verdict", "detail"],
                    report.check_rows())
    if report.tables:
        csvio.write_csv(out / f"{stem}_convergence.csv", ["table", "n", "h", "error", "order"],
                        report.table_rows())
        if figures:
            plotting.plot_convergence(report.tables, out / f"{stem}_convergence.png")


def cmd_verify(args) -> int:
    cfg = load_config(args.config)
    scenarios = []
    for name in cfg["verify.scenarios"]:
        problem = cfg.problem(name)
        eps = tuple(cfg["verify.eps_schedule"]) if name == "batch_sedimentation" else ()
        scenarios.append(Scenario(problem, cfg.solver_config(), cfg.grid_n,
                                  _levels(cfg, name), eps))
    fixture = args.fixture or cfg["verify.fixture"]
    suite = SuiteConfig(scenarios, seed=cfg["verify.seed"], pairs=cfg["verify.pairs"],
                        random_fields=cfg["verify.random_fields"],
                        steady_steps=cfg["verify.steady_steps"],
                        contraction_t_end=cfg["verify.contraction_t_end"],
                        tolerances=cfg.tolerances(),
                        fixtures=[dirichlet_heat_fixture()] if fixture == "dirichlet" else [])
    report, status = run_all(suite)
    out = Path(args.out) if args.out else cfg.out_dir
    _write_report(report, out, "verify", cfg["output.figures"])
    print(report.to_text())
    return status


def cmd_converge(args) -> int:
    cfg = load_config(args.config)
    problem = cfg.problem()
    tol = cfg.tolerances()
    oracle = cfg["converge.oracle"]
    key = "order_parabolic" if oracle == "heat" else "order_degenerate"
    report = convergence_study(problem, cfg.solver_config(), _levels(cfg, problem.name),
                               oracle, tol.get(key))
    out = Path(args.out) if args.out else cfg.out_dir
    _write_report(report, out, "converge", cfg["output.figures"])
    print(report.to_text())
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_entropy(args) -> int:
    traj, cfg = read_run(args.rundir)
    ks = entropy.default_k_values(traj.problem.M, cfg["entropy.k_count"])
    h = max(traj.grid.h)
    deltas = tuple(f * h for f in sorted(cfg["entropy.delta_factors"], reverse=True))
    reports = entropy.entropy_reports(traj, ks, deltas)
    out = Path(args.out) if args.out else Path(args.rundir)
    csvio.write_residuals(out / "residuals.csv", reports)
    if cfg["output.figures"]:
        plotting.plot_residuals(reports, out / "residuals.png")
    failed = [r for r in reports if not r.passed]
    print(f"{len(reports)} functionals evaluated, {len(failed)} failed; "
          f"wrote {out / 'residuals.csv'}")
    for r in failed:
        print(f"  FAIL {r.functional}[{r.test_function}] k={r.k}: limit={r.limit:.3e} "
              f"tol={r.tol:.3e}")
    return EXIT_FAIL if failed else EXIT_OK


# --- entry point ------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="zeroflux", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("models", help="list built-in models and their parameters")
    for name, help_ in (("run", "run the solver and write a run directory"),
                        ("verify", "run the property suites"),
                        ("converge", "grid convergence study")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("config")
        p.add_argument("--out", help="output directory (overrides output.dir)")
        if name == "verify":
            p.add_argument("--fixture", choices=("none", "dirichlet"),
                           help="inject a reference trajectory (overrides verify.fixture)")
    p = sub.add_parser("entropy", help="entropy functionals on an existing run directory")
    p.add_argument("rundir")
    p.add_argument("--out", help="where to write residuals (default: the run directory)")
    return parser


COMMANDS = {"models": cmd_models, "run": cmd_run, "verify": cmd_verify,
            "converge": cmd_converge, "entropy": cmd_entropy}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        for err in exc.errors:
            print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (InvalidModelError, SuiteConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
