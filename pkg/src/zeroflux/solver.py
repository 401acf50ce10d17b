"""Explicit conservative finite-volume solver for the viscous regularization.

Interior face flux along axis i between states uL | uR:

    F(uL, uR) - (B(uR) - B(uL)) / h_i - eps (uR - uL) / h_i

where F is a monotone two-point flux (Engquist-Osher by default). Faces on
the rectangle boundary carry exactly zero total flux, so mass is conserved up
to rounding and the constants 0 and M are fixed points whenever f vanishes
there.
"""

from __future__ import annotations

import math
import weakref
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.optimize import brentq

from .grid import Field, UniformGrid, build_grid, l1_distance
from .model import FluxModel, Problem, check_problem

TABLE_SIZE = 1024
FLUX_SCHEMES = ("engquist_osher", "lax_friedrichs")


class SolverError(RuntimeError):
    """Raised for unstable, non-finite or over-budget runs."""


@dataclass(frozen=True)
class SolverConfig:
    eps: float = 0.0
    cfl_safety: float = 0.5
    flux_scheme: str = "engquist_osher"
    t_end: float = 1.0
    snapshot_times: tuple[float, ...] = ()
    max_steps: int = 10_000_000

    def __post_init__(self):
        object.__setattr__(self, "snapshot_times",
                           tuple(float(t) for t in self.snapshot_times))
        if not self.eps >= 0:
            raise ValueError(f"eps must be ≥ 0, got {self.eps}")
        if not 0 < self.cfl_safety <= 1:
            raise ValueError(f"cfl_safety must lie in (0, 1], got {self.cfl_safety}")
        if self.flux_scheme not in FLUX_SCHEMES:
            raise ValueError(f"flux_scheme must be one of {FLUX_SCHEMES}")
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        ts = self.snapshot_times
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("snapshot_times must be strictly increasing")
        if ts and (ts[0] < 0 or ts[-1] > self.t_end):
            raise ValueError("snapshot_times must lie in [0, t_end]")

    @classmethod
    def uniform(cls, t_end: float, snapshots: int = 2, **kw) -> "SolverConfig":
        """Config with ``snapshots`` equispaced output times including 0 and t_end."""
        times = tuple(np.linspace(0.0, t_end, max(snapshots, 2)))
        return cls(t_end=t_end, snapshot_times=times, **kw)

    def replace(self, **kw) -> "SolverConfig":
        """Copy with changes; a shorter t_end drops snapshot times beyond it."""
        if "t_end" in kw and "snapshot_times" not in kw:
            kw["snapshot_times"] = tuple(t for t in self.snapshot_times if t <= kw["t_end"])
        return replace(self, **kw)


# --- flux splitting ---------------------------------------------------------

class SplitFlux:
    """Engquist-Osher splitting f = f_plus + f_minus of one flux component.

    f_plus(u) = f(0) + int_0^u max(f', 0). The sign pattern of f' is read off
    a ``TABLE_SIZE``-point table, sign changes are refined with Brent's
    method, and on each monotone piece the integral is a difference of f, so
    f_plus is exact up to rounding and f_minus = f - f_plus is consistent
    to machine precision.
    """

    def __init__(self, f, df, M: float, table_size: int = TABLE_SIZE):
        self.f, self.df, self.M = f, df, float(M)
        u = np.linspace(0.0, self.M, table_size)
        d = np.asarray(df(u), dtype=float) * np.ones_like(u)
        if not np.all(np.isfinite(d)):
            raise SolverError("flux derivative is not finite on [0, M]")
        self.lipschitz = float(np.max(np.abs(d)))
        pos = d > 0
        breaks = [0.0]
        for j in np.flatnonzero(pos[:-1] != pos[1:]):
            a, b = u[j], u[j + 1]
            if d[j] * d[j + 1] < 0:
                r = brentq(lambda s: float(df(s)), a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps)
            elif d[j + 1] == 0:
                r = b
            else:
                r = a
            if r > breaks[-1]:
                breaks.append(float(r))
        if breaks[-1] < self.M:
            breaks.append(self.M)
        self.breaks = np.array(breaks)
        mids = 0.5 * (self.breaks[:-1] + self.breaks[1:])
        self.increasing = np.asarray(df(mids), dtype=float) * np.ones_like(mids) > 0
        f_at = np.asarray(f(self.breaks), dtype=float) * np.ones_like(self.breaks)
        self.f_left = f_at[:-1]
        rise = np.where(self.increasing, np.diff(f_at), 0.0)
        self.base = f_at[0] + np.concatenate([[0.0], np.cumsum(rise)[:-1]])

    def plus(self, u, fu=None):
        u = np.asarray(u, dtype=float)
        if fu is None:
            fu = np.asarray(self.f(u), dtype=float)
        k = np.clip(np.searchsorted(self.breaks, u, side="right") - 1, 0, len(self.base) - 1)
        return self.base[k] + np.where(self.increasing[k], fu - self.f_left[k], 0.0)

    def minus(self, u, fu=None):
        u = np.asarray(u, dtype=float)
        if fu is None:
            fu = np.asarray(self.f(u), dtype=float)
        return fu - self.plus(u, fu)


_split_cache: "weakref.WeakKeyDictionary[FluxModel, dict]" = weakref.WeakKeyDictionary()


def split_flux(flux: FluxModel, axis: int = 0) -> SplitFlux:
    per_flux = _split_cache.setdefault(flux, {})
    if axis not in per_flux:
        per_flux[axis] = SplitFlux(flux.f[axis], flux.df[axis], flux.M)
    return per_flux[axis]


def simpson_split_table(f, df, M: float, table_size: int = TABLE_SIZE):
    """Tabulated split by cumulative Simpson quadrature of max(f', 0), min(f', 0).

    Independent of :class:`SplitFlux`; kept as a cross-check. Returns
    (nodes, f_plus, f_minus) for linear interpolation.
    """
    u = np.linspace(0.0, M, table_size)
    d = np.asarray(df(u), dtype=float) * np.ones_like(u)
    if not np.all(np.isfinite(d)):
        raise SolverError("flux derivative is not finite on [0, M]")
    f0 = float(f(0.0))
    plus = f0 + cumulative_simpson(np.maximum(d, 0.0), x=u, initial=0.0)
    minus = cumulative_simpson(np.minimum(d, 0.0), x=u, initial=0.0)
    return u, plus, minus


def diffusion_lipschitz(problem: Problem) -> float:
    u = np.linspace(0.0, problem.M, TABLE_SIZE)
    return float(np.max(problem.diffusion.derivative(u) * np.ones_like(u)))


# --- face fluxes and time step ----------------------------------------------

def convective_flux(uL, uR, axis: int, problem: Problem, flux_scheme: str = "engquist_osher",
                    fL=None, fR=None):
    """Monotone two-point approximation of f_axis at a face."""
    flux = problem.flux
    if fL is None:
        fL = flux(uL, axis)
    if fR is None:
        fR = flux(uR, axis)
    sf = split_flux(flux, axis)
    if flux_scheme == "engquist_osher":
        return sf.plus(uL, fL) + sf.minus(uR, fR)
    if flux_scheme == "lax_friedrichs":
        return 0.5 * (fL + fR) - 0.5 * sf.lipschitz * (np.asarray(uR) - np.asarray(uL))
    raise ValueError(f"unknown flux scheme {flux_scheme!r}")


def face_total_flux(uL, uR, axis: int, h: float, problem: Problem, eps: float = 0.0,
                    flux_scheme: str = "engquist_osher", boundary: bool = False):
    """Total numerical flux through one face; boundary faces carry none."""
    if boundary:
        return 0.0 * np.asarray(uL, dtype=float)
    uL = np.asarray(uL, dtype=float)
    uR = np.asarray(uR, dtype=float)
    B = problem.diffusion
    return (convective_flux(uL, uR, axis, problem, flux_scheme)
            - (B(uR) - B(uL)) / h - eps * (uR - uL) / h)


def stable_dt(grid: UniformGrid, problem: Problem, eps: float = 0.0,
              cfl_safety: float = 0.5) -> float:
    """Largest explicit step keeping the update monotone, times the safety factor."""
    LB = diffusion_lipschitz(problem)
    rate = 0.0
    for axis, h in enumerate(grid.h):
        rate += split_flux(problem.flux, axis).lipschitz / h + 2.0 * (LB + eps) / h ** 2
    if rate == 0.0:
        return math.inf
    dt = cfl_safety / rate
    if not dt > 1e-300 or not math.isfinite(dt):
        raise SolverError(f"time step underflow (dt={dt}) for h={grid.h}")
    return dt


class Scheme:
    """Precomputed update operator for one (problem, grid, eps, flux scheme)."""

    def __init__(self, problem: Problem, grid: UniformGrid, eps: float = 0.0,
                 flux_scheme: str = "engquist_osher"):
        if grid.ndim != problem.flux.ndim:
            raise ValueError("grid and flux dimensions differ")
        self.problem, self.grid, self.eps, self.flux_scheme = problem, grid, float(eps), flux_scheme
        self.splits = [split_flux(problem.flux, a) for a in range(grid.ndim)]

    def stable_dt(self, cfl_safety: float) -> float:
        return stable_dt(self.grid, self.problem, self.eps, cfl_safety)

    def face_fluxes(self, u: np.ndarray) -> list[np.ndarray]:
        """Total flux on interior faces, one array per axis (length n_axis - 1 along it)."""
        flux = self.problem.flux
        Bu = self.problem.diffusion(u)
        out = []
        for axis, h in enumerate(self.grid.h):
            fu = flux(u, axis)
            lo = [slice(None)] * u.ndim
            hi = [slice(None)] * u.ndim
            lo[axis] = slice(None, -1)
            hi[axis] = slice(1, None)
            lo, hi = tuple(lo), tuple(hi)
            if self.flux_scheme == "engquist_osher":
                fp = self.splits[axis].plus(u, fu)
                F = fp[lo] + (fu - fp)[hi]
            else:
                F = 0.5 * (fu[lo] + fu[hi]) - 0.5 * self.splits[axis].lipschitz * (u[hi] - u[lo])
            F = F - (Bu[hi] - Bu[lo]) / h
            if self.eps:
                F = F - self.eps * (u[hi] - u[lo]) / h
            out.append(F)
        return out

    def advance(self, u: np.ndarray, dt: float) -> np.ndarray:
        new = u.copy()
        for axis, (F, h) in enumerate(zip(self.face_fluxes(u), self.grid.h)):
            new -= (dt / h) * np.diff(F, axis=axis, prepend=0.0, append=0.0)
        return new


def step(state: Field, dt: float, problem: Problem, config: SolverConfig) -> Field:
    """One explicit Euler step of the conservative update."""
    scheme = Scheme(problem, state.grid, config.eps, config.flux_scheme)
    limit = scheme.stable_dt(1.0)
    if dt > limit * (1 + 1e-12):
        raise SolverError(f"dt={dt} exceeds the stability limit {limit}")
    new = scheme.advance(state.values, dt)
    if not np.all(np.isfinite(new)):
        raise SolverError("non-finite value produced in step 1")
    return Field(state.grid, new)


# --- time marching ----------------------------------------------------------

LOG_COLUMNS = ("step", "t", "dt", "min", "max", "mass")


@dataclass(eq=False)
class Trajectory:
    problem: Problem
    config: SolverConfig
    grid: UniformGrid
    times: list[float] = field(default_factory=list)
    fields: list[Field] = field(default_factory=list)
    step_log: np.ndarray = field(default_factory=lambda: np.zeros((0, len(LOG_COLUMNS))))

    @property
    def snapshots(self) -> list[tuple[float, Field]]:
        return list(zip(self.times, self.fields))

    @property
    def values(self) -> np.ndarray:
        """Snapshot values stacked along a leading time axis."""
        return np.stack([f.values for f in self.fields])

    @property
    def final(self) -> Field:
        return self.fields[-1]


class _Log:
    def __init__(self, capacity: int = 4096):
        self.data = np.empty((capacity, len(LOG_COLUMNS)))
        self.n = 0

    def append(self, row):
        if self.n == len(self.data):
            self.data = np.concatenate([self.data, np.empty_like(self.data)])
        self.data[self.n] = row
        self.n += 1

    def array(self) -> np.ndarray:
        return self.data[: self.n].copy()


def initial_state(problem: Problem, grid: UniformGrid, eps: float = 0.0) -> np.ndarray:
    u0 = problem.initial_values(grid)
    if eps > 0:
        if 2 * eps >= problem.M:
            raise ValueError(f"eps={eps} too large to clip initial data into [eps, M-eps]")
        u0 = np.clip(u0, eps, problem.M - eps)
    return u0


def run(problem: Problem, config: SolverConfig, grid) -> Trajectory:
    """March from t=0 to config.t_end, storing snapshots and a per-step log.

    ``grid`` is a UniformGrid or per-axis cell counts.
    """
    if not isinstance(grid, UniformGrid):
        grid = build_grid(problem.domain, grid)
    check_problem(problem)
    if config.t_end > problem.T * (1 + 1e-12):
        raise ValueError(f"t_end={config.t_end} exceeds the problem horizon T={problem.T}")
    scheme = Scheme(problem, grid, config.eps, config.flux_scheme)
    dt_stable = scheme.stable_dt(config.cfl_safety)
    M, vol = problem.M, grid.cell_volume
    u = initial_state(problem, grid, config.eps)
    times = sorted(set(config.snapshot_times) | {0.0, float(config.t_end)})

    traj = Trajectory(problem, config, grid, [0.0], [Field(grid, u)])
    log = _Log()
    t, nstep = 0.0, 0
    for target in times[1:]:
        while t < target:
            if t + dt_stable >= target - 1e-12 * config.t_end:
                dt, t_next = target - t, target
            else:
                dt, t_next = dt_stable, t + dt_stable
            nstep += 1
            if nstep > config.max_steps:
                raise SolverError(f"max_steps={config.max_steps} exceeded at t={t}")
            u = scheme.advance(u, dt)
            umin, umax = float(u.min()), float(u.max())
            if not (math.isfinite(umin) and math.isfinite(umax)):
                raise SolverError(f"non-finite value produced in step {nstep}")
            if umax > M + 0.1 or umin < -0.1:
                raise SolverError(
                    f"instability at step {nstep}: range [{umin}, {umax}] with M={M}")
            t = t_next
            log.append((nstep, t, dt, umin, umax, float(u.sum()) * vol))
        traj.times.append(t)
        traj.fields.append(Field(grid, u))
    traj.step_log = log.array()
    return traj


@dataclass
class ViscosityRow:
    eps: float
    next_eps: float
    distance: float


def vanishing_viscosity_study(problem: Problem, config: SolverConfig, eps_schedule,
                              grid) -> list[ViscosityRow]:
    """L1 distance at t_end between runs for consecutive viscosities on one grid."""
    eps_schedule = [float(e) for e in eps_schedule]
    if len(eps_schedule) < 3:
        raise ValueError("eps_schedule needs at least 3 entries")
    if any(b >= a for a, b in zip(eps_schedule, eps_schedule[1:])):
        raise ValueError("eps_schedule must be strictly decreasing")
    if not isinstance(grid, UniformGrid):
        grid = build_grid(problem.domain, grid)
    finals = [run(problem, config.replace(eps=e, snapshot_times=()), grid).final
              for e in eps_schedule]
    return [ViscosityRow(a, b, l1_distance(fa, fb))
            for a, b, fa, fb in zip(eps_schedule, eps_schedule[1:], finals, finals[1:])]
