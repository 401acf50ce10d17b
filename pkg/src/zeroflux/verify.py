"""Property suites and oracles: maximum principle, conservation, L1 contraction,
entropy functionals, vanishing viscosity and grid convergence.

Rate thresholds (0.9 for parabolic problems, 0.5 for degenerate ones) are
engineering assertions about first-order monotone schemes.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import entropy
from .grid import Field, RectDomain, UniformGrid, build_grid, integrate, l1_distance, restrict
from .model import Problem, _per_axis_coeffs, make_builtin
from .solver import Scheme, SolverConfig, Trajectory, run, vanishing_viscosity_study

log = logging.getLogger(__name__)

THREADS_ENV = "ZEROFLUX_THREADS"

DEFAULT_TOLERANCES = {
    "steady": 1e-12,
    "range": 1e-12,
    "mass": 1e-10,
    "contraction": 1e-12,
    "order_parabolic": 0.9,
    "order_degenerate": 0.5,
}


class SuiteConfigError(ValueError):
    """The suite cannot run as configured (exit status 2)."""


@dataclass
class Check:
    name: str
    value: float
    bound: float
    passed: bool
    detail: str = ""

    @property
    def verdict(self) -> str:
        return "pass" if self.passed else "fail"


@dataclass
class ConvergenceRow:
    n: int
    h: float
    error: float
    order: float | None


@dataclass
class SuiteReport:
    checks: list[Check] = field(default_factory=list)
    tables: dict[str, list[ConvergenceRow]] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, name, value, bound, passed, detail=""):
        self.checks.append(Check(name, float(value), float(bound), bool(passed), detail))

    def extend(self, other: "SuiteReport"):
        self.checks.extend(other.checks)
        self.tables.update(other.tables)
        return self

    def to_text(self) -> str:
        lines = []
        for c in self.checks:
            lines.append(f"[{c.verdict.upper()}] {c.name}: value={c.value:.6g} bound={c.bound:.6g}"
                         + (f"  ({c.detail})" if c.detail else ""))
        for name, rows in self.tables.items():
            lines.append(f"convergence table {name}:")
            lines.append(f"  {'n':>6} {'h':>12} {'L1 error':>14} {'order':>8}")
            for r in rows:
                order = "" if r.order is None else f"{r.order:8.3f}"
                lines.append(f"  {r.n:>6} {r.h:>12.6g} {r.error:>14.6e} {order:>8}")
        lines.append(f"overall: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines)

    def check_rows(self):
        return [(c.name, c.value, c.bound, c.verdict, c.detail) for c in self.checks]

    def table_rows(self):
        return [(name, r.n, r.h, r.error, "" if r.order is None else r.order)
                for name, rows in self.tables.items() for r in rows]


def observed_orders(errors) -> list[float | None]:
    """log2(e_h / e_{h/2}) between consecutive levels; None for the first level."""
    out: list[float | None] = [None]
    for a, b in zip(errors, errors[1:]):
        out.append(math.log2(a / b) if a > 0 and b > 0 else (math.inf if b == 0 else None))
    return out


# --- random data ------------------------------------------------------------

def random_blocks(grid: UniformGrid, M: float, rng: np.random.Generator,
                  blocks: int = 8) -> np.ndarray:
    """Piecewise-constant field with ``blocks`` random blocks per axis, values in [0, M]."""
    labels = []
    for n in grid.n:
        k = min(blocks, n)
        cuts = np.sort(rng.choice(np.arange(1, n), size=k - 1, replace=False))
        labels.append(np.searchsorted(cuts, np.arange(n), side="right"))
    values = rng.uniform(0.0, M, size=tuple(min(blocks, n) for n in grid.n))
    return values[np.ix_(*labels)]


# --- oracles ----------------------------------------------------------------

def heat_oracle(d: float, coeffs, t: float, x, domain: RectDomain | None = None):
    """Exact zero-flux heat solution for cosine-series initial data.

    ``coeffs`` are the a_m of sum_m a_m cos(m pi (x - lo)/L) on axis 0, or one
    such sequence per axis (tensor product). ``x`` is a coordinate array, or
    a list of per-axis coordinate arrays in 2-D.
    """
    coords = [np.asarray(c, dtype=float) for c in x] if isinstance(x, (list, tuple)) \
        else [np.asarray(x, dtype=float)]
    if domain is None:
        domain = RectDomain((0.0,) * len(coords), (1.0,) * len(coords))
    out = np.ones(np.broadcast(*coords).shape)
    for axis, a in enumerate(_per_axis_coeffs(coeffs, domain.ndim)):
        if a is None:
            continue
        L = domain.hi[axis] - domain.lo[axis]
        s = (coords[axis] - domain.lo[axis]) / L
        out = out * sum(am * math.exp(-d * (m * math.pi / L) ** 2 * t) * np.cos(m * math.pi * s)
                        for m, am in enumerate(a))
    return out


# --- property checks --------------------------------------------------------

def check_steady_states(problem: Problem, n: int = 100, steps: int = 1000,
                        config: SolverConfig | None = None, tol: float = 1e-12) -> SuiteReport:
    config = config or SolverConfig()
    grid = build_grid(problem.domain, n)
    scheme = Scheme(problem, grid, config.eps, config.flux_scheme)
    dt = scheme.stable_dt(config.cfl_safety)
    report = SuiteReport()
    for level in (0.0, problem.M):
        u0 = np.full(grid.shape, level)
        u = u0
        for _ in range(steps):
            u = scheme.advance(u, dt)
        dev = float(np.max(np.abs(u - u0)))
        report.add(f"{problem.name}: steady u={level:g} over {steps} steps", dev, tol, dev <= tol)
    return report


def check_max_principle(problem: Problem, n: int = 100, fields: int = 200, seed: int = 0,
                        config: SolverConfig | None = None, tol: float = 1e-12) -> SuiteReport:
    config = config or SolverConfig()
    grid = build_grid(problem.domain, n)
    scheme = Scheme(problem, grid, config.eps, config.flux_scheme)
    dt = scheme.stable_dt(config.cfl_safety)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(fields):
        u = scheme.advance(random_blocks(grid, problem.M, rng), dt)
        worst = max(worst, -float(u.min()), float(u.max()) - problem.M)
    report = SuiteReport()
    report.add(f"{problem.name}: one-step range excursion over {fields} random fields",
               max(worst, 0.0), tol, worst <= tol)
    return report


def check_run_invariants(traj: Trajectory, mass_tol: float = 1e-10,
                         range_tol: float = 1e-12) -> SuiteReport:
    """Range and relative mass drift along a full run."""
    M = traj.problem.M
    name = traj.problem.name
    report = SuiteReport()
    lo = min(float(traj.step_log[:, 3].min()) if len(traj.step_log) else 0.0,
             min(float(f.values.min()) for f in traj.fields))
    hi = max(float(traj.step_log[:, 4].max()) if len(traj.step_log) else 0.0,
             max(float(f.values.max()) for f in traj.fields))
    excursion = max(-lo, hi - M, 0.0)
    report.add(f"{name}: run stays in [0, M]", excursion, range_tol, excursion <= range_tol)
    m0 = integrate(traj.fields[0])
    drift = max(abs(integrate(f) - m0) for f in traj.fields)
    if len(traj.step_log):
        drift = max(drift, float(np.max(np.abs(traj.step_log[:, 5] - m0))))
    rel = drift / abs(m0) if m0 else drift
    report.add(f"{name}: relative mass drift", rel, mass_tol, rel <= mass_tol)
    return report


def check_l1_contraction(problem: Problem, config: SolverConfig, pairs: int = 20, seed: int = 0,
                         n: int = 100, slack: float = 1e-12,
                         initial_pairs=None) -> SuiteReport:
    """Step random initial pairs in lockstep and count per-step L1 increases.

    Both runs share the state-independent stable time step, so distances are
    compared at identical times. ``initial_pairs`` replaces the random pairs.
    """
    if pairs < 1 and initial_pairs is None:
        raise ValueError("pairs must be >= 1")
    grid = build_grid(problem.domain, n)
    scheme = Scheme(problem, grid, config.eps, config.flux_scheme)
    dt_stable = scheme.stable_dt(config.cfl_safety)
    rng = np.random.default_rng(seed)
    vol = grid.cell_volume
    if initial_pairs is None:
        initial_pairs = [(random_blocks(grid, problem.M, rng), random_blocks(grid, problem.M, rng))
                         for _ in range(pairs)]
    violations, worst, final_ratio = 0, 0.0, 0.0
    for u, v in initial_pairs:
        u, v = np.asarray(u, float), np.asarray(v, float)
        d0 = dist = math.fsum(np.abs(u - v).ravel()) * vol
        t = 0.0
        while t < config.t_end:
            dt = min(dt_stable, config.t_end - t)
            u, v = scheme.advance(u, dt), scheme.advance(v, dt)
            new = math.fsum(np.abs(u - v).ravel()) * vol
            if new > dist + slack:
                violations += 1
                worst = max(worst, new - dist)
            dist, t = new, t + dt
        if d0 > 0:
            final_ratio = max(final_ratio, dist / d0)
    report = SuiteReport()
    report.add(f"{problem.name}: per-step L1 contraction violations ({len(initial_pairs)} pairs)",
               violations, 0, violations == 0, f"max increase {worst:.3e}")
    report.add(f"{problem.name}: L1 distance ratio at t_end", final_ratio, 1.0 + slack,
               final_ratio <= 1.0 + slack)
    return report


def convergence_study(problem: Problem, config: SolverConfig, levels, oracle: str = "heat",
                      min_order: float | None = None) -> SuiteReport:
    """L1 errors at t_end over doubling grids.

    oracle: ``heat`` (cosine-series exact solution; f must vanish and the
    initial data be a cosine series), ``fine_grid`` (8x refined run averaged
    onto each level) or ``self`` (distance between consecutive levels).
    """
    levels = [int(n) for n in levels]
    if len(levels) < 2 or any(b != 2 * a for a, b in zip(levels, levels[1:])):
        raise ValueError("levels must be a doubling sequence with at least two entries")
    cfg = config.replace(snapshot_times=())
    if oracle == "heat":
        u = np.linspace(0, problem.M, 64)
        if any(np.any(problem.flux(u, a) != 0) for a in range(problem.flux.ndim)) \
                or problem.initial.kind != "cosine":
            raise ValueError("heat oracle needs f = 0 and cosine initial data")
        d = float(problem.diffusion.derivative(0.5 * problem.M))
    runs = {}

    def final(n):
        if n not in runs:
            runs[n] = run(problem, cfg, n).final
        return runs[n]

    errors, hs = [], []
    targets = levels if oracle != "self" else levels[:-1]
    for j, n in enumerate(targets):
        fld = final(n)
        grid = fld.grid
        if oracle == "heat":
            exact = heat_oracle(d, problem.initial.params["coeffs"], cfg.t_end, grid.mesh(),
                                grid.domain)
            err = l1_distance(fld, Field(grid, exact))
        elif oracle == "fine_grid":
            ref = run(problem, cfg, tuple(8 * k for k in grid.n)).final
            err = l1_distance(fld, Field(grid, restrict(ref.values, 8)))
        elif oracle == "self":
            finer = final(levels[j + 1])
            err = l1_distance(fld, Field(grid, restrict(finer.values, 2)))
        else:
            raise ValueError(f"unknown oracle {oracle!r}")
        errors.append(err)
        hs.append(max(grid.h))
    orders = observed_orders(errors)
    table = [ConvergenceRow(n, h, e, o) for n, h, e, o in zip(targets, hs, errors, orders)]
    report = SuiteReport(tables={f"{problem.name}/{oracle}": table})
    if min_order is None:
        min_order = DEFAULT_TOLERANCES["order_parabolic" if oracle == "heat" else "order_degenerate"]
    if all(e == 0 for e in errors):
        report.add(f"{problem.name}: {oracle} convergence (exact at all levels)", 0.0, 0.0, True)
        return report
    decreasing = all(b < a for a, b in zip(errors, errors[1:]))
    worst = min(o for o in orders[1:] if o is not None) if len(orders) > 1 else math.inf
    report.add(f"{problem.name}: {oracle} convergence observed order", worst, min_order,
               decreasing and worst >= min_order,
               "errors " + ", ".join(f"{e:.3e}" for e in errors))
    return report


def check_vanishing_viscosity(problem: Problem, config: SolverConfig, eps_schedule,
                              n: int) -> SuiteReport:
    rows = vanishing_viscosity_study(problem, config, eps_schedule, n)
    dists = [r.distance for r in rows]
    ok = all(b < a for a, b in zip(dists, dists[1:]))
    report = SuiteReport()
    report.add(f"{problem.name}: vanishing-viscosity distances strictly decreasing",
               dists[-1], dists[0], ok,
               ", ".join(f"eps={r.eps:g}->{r.next_eps:g}: {r.distance:.3e}" for r in rows))
    return report


def check_entropy(traj: Trajectory, k_values=None, deltas=None) -> SuiteReport:
    reports = entropy.entropy_reports(traj, k_values, deltas)
    out = SuiteReport()
    name = traj.problem.name
    groups: dict[str, list] = {}
    for r in reports:
        groups.setdefault(r.functional, []).append(r)
    for functional, reps in groups.items():
        failed = [r for r in reps if not r.passed]
        # margin: how far the worst report sits from its bound (positive = inside)
        if functional == "zero_total_flux":
            margin = min(r.tol - abs(r.limit) for r in reps)
        else:
            margin = min(r.limit + r.tol for r in reps)
        out.add(f"{name}: {functional} ({len(reps)} evaluations)", margin, 0.0, not failed,
                f"{len(failed)} failed")
    return out


# --- orchestration ----------------------------------------------------------

@dataclass
class Scenario:
    problem: Problem
    config: SolverConfig
    n: int = 200
    convergence_levels: tuple[int, ...] = ()
    eps_schedule: tuple[float, ...] = ()


@dataclass
class SuiteConfig:
    scenarios: list[Scenario]
    seed: int = 0
    pairs: int = 20
    random_fields: int = 200
    steady_steps: int = 1000
    contraction_t_end: float = 0.1
    tolerances: dict = field(default_factory=dict)
    fixtures: list[Trajectory] = field(default_factory=list)

    def tol(self, key: str) -> float:
        return float(self.tolerances.get(key, DEFAULT_TOLERANCES[key]))


def default_suite(n: int = 200, t_end: float = 0.5, seed: int = 0) -> SuiteConfig:
    """The built-in desk-scale suite over all three catalog models."""
    scenarios = []
    for name in ("heat", "batch_sedimentation", "zero_flux_conservation"):
        problem = make_builtin(name, {"T": t_end})
        cfg = SolverConfig.uniform(t_end, 51)
        levels = (50, 100, 200) if name == "heat" else (100, 200, 400)
        eps = (0.1, 0.05, 0.025) if name == "batch_sedimentation" else ()
        scenarios.append(Scenario(problem, cfg, n, levels, eps))
    return SuiteConfig(scenarios, seed=seed)


def _scenario_report(sc: Scenario, suite: SuiteConfig) -> SuiteReport:
    problem, cfg = sc.problem, sc.config
    report = SuiteReport()
    log.info("scenario %s: steady states, max principle", problem.name)
    report.extend(check_steady_states(problem, min(sc.n, 100), suite.steady_steps, cfg,
                                      suite.tol("steady")))
    report.extend(check_max_principle(problem, min(sc.n, 100), suite.random_fields, suite.seed,
                                      cfg, suite.tol("range")))
    log.info("scenario %s: full run n=%d", problem.name, sc.n)
    traj = run(problem, cfg, sc.n)
    report.extend(check_run_invariants(traj, suite.tol("mass"), suite.tol("range")))
    log.info("scenario %s: L1 contraction", problem.name)
    report.extend(check_l1_contraction(
        problem, cfg.replace(t_end=min(suite.contraction_t_end, cfg.t_end)), suite.pairs,
        suite.seed, min(sc.n, 100), suite.tol("contraction")))
    log.info("scenario %s: entropy functionals", problem.name)
    report.extend(check_entropy(traj))
    if sc.eps_schedule:
        log.info("scenario %s: vanishing viscosity", problem.name)
        report.extend(check_vanishing_viscosity(problem, cfg, sc.eps_schedule, sc.n))
    if sc.convergence_levels:
        log.info("scenario %s: convergence", problem.name)
        u = np.linspace(0, problem.M, 64)
        heat_ok = problem.initial.kind == "cosine" and all(
            not np.any(problem.flux(u, a)) for a in range(problem.flux.ndim))
        degenerate = np.any(problem.diffusion.derivative(u) * np.ones_like(u) == 0)
        oracle = "heat" if heat_ok else "self"
        key = "order_degenerate" if degenerate or oracle == "self" else "order_parabolic"
        report.extend(convergence_study(problem, cfg, sc.convergence_levels, oracle,
                                        suite.tol(key)))
    return report


def fixture_report(traj: Trajectory) -> SuiteReport:
    """Zero-total-flux functional on an externally produced trajectory."""
    grid = traj.grid
    L = min(grid.domain.lengths)
    deltas = (0.2 * L, 0.1 * L, 0.05 * L)
    if min(deltas) < 2 * max(grid.h):
        deltas = entropy.default_deltas(grid)
    report = SuiteReport()
    for phi in entropy.closure_test_functions(grid.domain, traj.times[-1]):
        r = entropy.zero_total_flux_functional(traj, phi, deltas)
        report.add(f"fixture {traj.problem.name}: zero_total_flux[{phi.name}]",
                   r.limit, r.tol, r.passed)
    return report


def run_all(suite: SuiteConfig) -> tuple[SuiteReport, int]:
    """Run every suite; exit status 0 if all checks pass, 1 otherwise."""
    if not suite.scenarios:
        raise SuiteConfigError("scenario list is empty")
    threads = int(os.environ.get(THREADS_ENV, "1") or 1)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda sc: _scenario_report(sc, suite), suite.scenarios))
    else:
        parts = [_scenario_report(sc, suite) for sc in suite.scenarios]
    report = SuiteReport()
    for part in parts:
        report.extend(part)
    for traj in suite.fixtures:
        report.extend(fixture_report(traj))
    return report, 0 if report.passed else 1
