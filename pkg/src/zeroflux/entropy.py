"""Kruzhkov entropy residuals, boundary-layer functionals and strong-trace estimates.

Every functional is a space-time quadrature over the snapshots of a
:class:`~zeroflux.solver.Trajectory`: midpoint rule in space, trapezoid rule
over the snapshot times. Derivatives of test functions come from their
closed forms; derivatives of the solution from finite differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grid import GridError, UniformGrid, boundary_layer
from .solver import Trajectory, diffusion_lipschitz, split_flux


def sgn(x):
    return np.sign(x)


@dataclass(frozen=True, eq=False)
class EntropyTriple:
    """(|u-k|, sgn(u-k)(f(u)-f(k)), |B(u)-B(k)|) for one level k."""

    k: float
    flux: object
    diffusion: object

    def eta(self, u):
        return np.abs(np.asarray(u, dtype=float) - self.k)

    def q(self, u, axis: int = 0):
        u = np.asarray(u, dtype=float)
        return sgn(u - self.k) * (self.flux(u, axis) - self.flux(self.k, axis))

    def p(self, u):
        u = np.asarray(u, dtype=float)
        return np.abs(self.diffusion(u) - self.diffusion(self.k))


def kruzhkov_triple(k: float, problem) -> EntropyTriple:
    k = float(k)
    if not math.isfinite(k):
        raise ValueError("entropy level k must be finite")
    return EntropyTriple(k, problem.flux, problem.diffusion)


# --- test functions ---------------------------------------------------------

def _bump(s):
    s = np.asarray(s, dtype=float)
    inside = np.abs(s) < 1
    w = np.where(inside, 1.0 - s * s, 0.0)
    return w ** 3


def _dbump(s):
    s = np.asarray(s, dtype=float)
    w = np.where(np.abs(s) < 1, 1.0 - s * s, 0.0)
    return -6.0 * s * w * w


def _d2bump(s):
    s = np.asarray(s, dtype=float)
    w = np.where(np.abs(s) < 1, 1.0 - s * s, 0.0)
    return w * (30.0 * s * s - 6.0)


# sup norms of the C^2 bump (1-s^2)^3 and its first two derivatives
_BUMP_SUPS = (1.0, 6.0 / 5 ** 0.5 * 0.64, 6.0)


@dataclass(frozen=True)
class Factor:
    """One-variable factor b((z - center)/radius); radius None means the constant 1."""

    center: float = 0.0
    radius: float | None = None

    def __call__(self, z, order: int = 0):
        z = np.asarray(z, dtype=float)
        if self.radius is None:
            return np.ones_like(z) if order == 0 else np.zeros_like(z)
        s = (z - self.center) / self.radius
        return (_bump, _dbump, _d2bump)[order](s) / self.radius ** order

    def sups(self):
        if self.radius is None:
            return (1.0, 0.0, 0.0)
        return tuple(S / self.radius ** o for o, S in enumerate(_BUMP_SUPS))

    def support(self):
        if self.radius is None:
            return (-math.inf, math.inf)
        return (self.center - self.radius, self.center + self.radius)


@dataclass(frozen=True)
class TestFunction:
    """Tensor product phi(x, t) = prod_i space[i](x_i) * time(t) of C^2 bumps."""

    space: tuple[Factor, ...]
    time: Factor
    name: str = "phi"

    def value(self, coords, t):
        return self._product(coords, t, {})

    def dt(self, coords, t):
        return self._product(coords, t, {"t": 1})

    def grad(self, coords, t):
        return [self._product(coords, t, {i: 1}) for i in range(len(self.space))]

    def laplacian(self, coords, t):
        return sum(self._product(coords, t, {i: 2}) for i in range(len(self.space)))

    def _product(self, coords, t, orders):
        out = self.time(t, orders.get("t", 0))
        for i, fac in enumerate(self.space):
            out = out * fac(coords[i], orders.get(i, 0))
        return out

    def sup(self) -> float:
        return 1.0

    def c2_norm(self) -> float:
        """Sum over all multi-indices |alpha| <= 2 of sup |d^alpha phi|."""
        sups = [f.sups() for f in self.space] + [self.time.sups()]
        first = [s[1] for s in sups]
        total = 1.0 + sum(first) + sum(s[2] for s in sups)
        total += sum(first[i] * first[j] for i in range(len(first)) for j in range(i + 1, len(first)))
        return total

    def is_interior_compact(self, grid: UniformGrid, T: float) -> bool:
        dom = grid.domain
        for axis, fac in enumerate(self.space):
            a, b = fac.support()
            margin = 2 * grid.h[axis]
            if a < dom.lo[axis] + margin or b > dom.hi[axis] - margin:
                return False
        a, b = self.time.support()
        return a >= 0.0 and b <= T


def interior_test_functions(domain, T: float) -> list[TestFunction]:
    """Center, near-left-boundary and late-time placements, compactly supported inside."""
    mid = [0.5 * (a + b) for a, b in zip(domain.lo, domain.hi)]
    L = domain.lengths
    center = TestFunction(tuple(Factor(m, 0.25 * l) for m, l in zip(mid, L)),
                          Factor(0.5 * T, 0.4 * T), "center")
    near_left = TestFunction(
        (Factor(domain.lo[0] + 0.2 * L[0], 0.15 * L[0]),)
        + tuple(Factor(m, 0.25 * l) for m, l in zip(mid[1:], L[1:])),
        Factor(0.5 * T, 0.4 * T), "near_left")
    late = TestFunction(tuple(Factor(m, 0.3 * l) for m, l in zip(mid, L)),
                        Factor(0.75 * T, 0.2 * T), "late_time")
    return [center, near_left, late]


def closure_test_functions(domain, T: float) -> list[TestFunction]:
    """Test functions touching the boundary; all vanish for t >= 0.9 T but not at t = 0."""
    time = Factor(0.0, 0.9 * T)
    L = domain.lengths
    rest = tuple(Factor() for _ in L[1:])
    return [
        TestFunction(tuple(Factor() for _ in L), time, "whole"),
        TestFunction((Factor(domain.lo[0], 0.5 * L[0]),) + rest, time, "left_wall"),
        TestFunction((Factor(domain.hi[0], 0.5 * L[0]),) + rest, time, "right_wall"),
    ]


# --- reports ----------------------------------------------------------------

@dataclass
class ResidualReport:
    functional: str
    k: float | None
    value: float
    tol: float
    kind: str = "inequality"  # or "equality"
    limit: float | None = None
    deltas: tuple[float, ...] = ()
    values: tuple[float, ...] = ()
    test_function: str = ""
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.limit is None:
            self.limit = self.value

    @property
    def passed(self) -> bool:
        if self.kind == "equality":
            return abs(self.limit) <= self.tol
        return self.limit >= -self.tol

    @property
    def verdict(self) -> str:
        return "pass" if self.passed else "fail"

    def rows(self):
        """Rows for the verification CSV: functional,k,delta,value,limit,tol,verdict."""
        name = f"{self.functional}[{self.test_function}]" if self.test_function else self.functional
        k = "" if self.k is None else self.k
        if not self.deltas:
            return [(name, k, "", self.value, self.limit, self.tol, self.verdict)]
        return [(name, k, d, v, self.limit, self.tol, self.verdict)
                for d, v in zip(self.deltas, self.values)]


# --- helpers ----------------------------------------------------------------

def time_weights(times) -> np.ndarray:
    """Trapezoid weights for the snapshot times."""
    t = np.asarray(times, dtype=float)
    w = np.zeros_like(t)
    if len(t) < 2:
        return w
    dt = np.diff(t)
    w[:-1] += 0.5 * dt
    w[1:] += 0.5 * dt
    return w


def sup_flux_derivative(problem) -> float:
    return max(split_flux(problem.flux, a).lipschitz for a in range(problem.flux.ndim))


def sup_flux(problem) -> float:
    u = np.linspace(0.0, problem.M, 1024)
    return max(float(np.max(np.abs(problem.flux(u, a)))) for a in range(problem.flux.ndim))


def residual_constant(problem, phi: TestFunction) -> float:
    """Default C_res = 10 (1 + sup|f'|) ||phi||_{C^2}."""
    return 10.0 * (1.0 + sup_flux_derivative(problem)) * phi.c2_norm()


def boundary_constant(problem, phi: TestFunction) -> float:
    """Default C_bnd = 5 ||phi||_inf (1 + sup|f| + sup B')."""
    return 5.0 * phi.sup() * (1.0 + sup_flux(problem) + diffusion_lipschitz(problem))


def default_k_values(M: float, count: int = 21) -> np.ndarray:
    return np.linspace(0.0, M, count)


def default_deltas(grid: UniformGrid) -> tuple[float, ...]:
    h = max(grid.h)
    return (8 * h, 4 * h, 2 * h)


def richardson_limit(deltas, values) -> float:
    """Extrapolate value(delta) to delta = 0 from the three smallest deltas.

    Fits L + a delta + b delta^2 through the points; for ratio-2 schedules
    this is repeated Richardson extrapolation with a first-order leading term.
    """
    order = np.argsort(deltas)[:3]
    d = np.asarray(deltas, dtype=float)[order]
    v = np.asarray(values, dtype=float)[order]
    if len(d) < 3:
        raise ValueError("need at least three deltas")
    V = np.vander(d, 3, increasing=True)
    return float(np.linalg.solve(V, v)[0])


def _check_deltas(grid: UniformGrid, deltas):
    deltas = tuple(float(d) for d in deltas)
    if len(deltas) < 3:
        raise ValueError("need at least three deltas")
    h = max(grid.h)
    if min(deltas) < 2 * h * (1 - 1e-12):
        raise GridError(f"delta {min(deltas)} below 2h = {2 * h}")
    if max(deltas) > 0.5 * min(grid.domain.lengths):
        raise GridError(f"delta {max(deltas)} too coarse for the domain")
    return deltas


def _bgrad(Bu: np.ndarray, grid: UniformGrid) -> list[np.ndarray]:
    g = np.gradient(Bu, *grid.h, edge_order=1)
    return [g] if grid.ndim == 1 else list(g)


# --- functionals ------------------------------------------------------------

def interior_entropy_residual(traj: Trajectory, k: float, phi: TestFunction,
                              C_res: float | None = None) -> ResidualReport:
    """Discrete |u-k| phi_t + q(u).grad phi + |B(u)-B(k)| lap phi over the trajectory."""
    problem, grid = traj.problem, traj.grid
    T = traj.times[-1]
    if not phi.is_interior_compact(grid, T):
        raise ValueError(f"test function {phi.name!r} is not compactly supported inside")
    tri = kruzhkov_triple(k, problem)
    X = grid.mesh()
    w = time_weights(traj.times)
    total = []
    for t, wt, fld in zip(traj.times, w, traj.fields):
        if wt == 0.0:
            continue
        u = fld.values
        integrand = tri.eta(u) * phi.dt(X, t) + tri.p(u) * phi.laplacian(X, t)
        for axis, g in enumerate(phi.grad(X, t)):
            integrand = integrand + tri.q(u, axis) * g
        total.append(wt * math.fsum(integrand.ravel()))
    value = math.fsum(total) * grid.cell_volume
    if C_res is None:
        C_res = residual_constant(problem, phi)
    return ResidualReport("interior_entropy", float(k), value, C_res * max(grid.h),
                          test_function=phi.name)


def _layer_sums(traj: Trajectory, phi: TestFunction, deltas, weight_fn) -> list[float]:
    grid = traj.grid
    X = grid.mesh()
    w = time_weights(traj.times)
    layers = [boundary_layer(grid, d) for d in deltas]
    sums = [[] for _ in deltas]
    for t, wt, fld in zip(traj.times, w, traj.fields):
        if wt == 0.0:
            continue
        u = fld.values
        vec = weight_fn(u)  # per-axis vector field, already multiplied by any sgn factor
        ph = phi.value(X, t)
        for j, layer in enumerate(layers):
            dot = sum(vec[a] * layer.gradient[a] for a in range(grid.ndim))
            sums[j].append(wt * math.fsum((dot * ph).ravel()))
    return [math.fsum(s) * grid.cell_volume for s in sums]


def boundary_entropy_functional(traj: Trajectory, k: float, phi: TestFunction, deltas=None,
                                C_bnd: float | None = None) -> ResidualReport:
    """sgn(u-k)(grad B(u) - f(u)) . grad zeta_delta phi, extrapolated to delta = 0."""
    problem, grid = traj.problem, traj.grid
    deltas = _check_deltas(grid, deltas if deltas is not None else default_deltas(grid))

    def field_fn(u):
        s = sgn(u - k)
        gB = _bgrad(problem.diffusion(u), grid)
        return [s * (gB[a] - problem.flux(u, a)) for a in range(grid.ndim)]

    values = _layer_sums(traj, phi, deltas, field_fn)
    if C_bnd is None:
        C_bnd = boundary_constant(problem, phi)
    tol = C_bnd * max(grid.h) / min(deltas)
    limit = richardson_limit(deltas, values)
    return ResidualReport("boundary_entropy", float(k), values[-1], tol, limit=limit,
                          deltas=deltas, values=tuple(values), test_function=phi.name)


def zero_total_flux_functional(traj: Trajectory, phi: TestFunction, deltas=None,
                               C_bnd: float | None = None) -> ResidualReport:
    """(f(u) - grad B(u)) . grad zeta_delta phi; its delta -> 0 limit should vanish."""
    problem, grid = traj.problem, traj.grid
    deltas = _check_deltas(grid, deltas if deltas is not None else default_deltas(grid))

    def field_fn(u):
        gB = _bgrad(problem.diffusion(u), grid)
        return [problem.flux(u, a) - gB[a] for a in range(grid.ndim)]

    values = _layer_sums(traj, phi, deltas, field_fn)
    if C_bnd is None:
        C_bnd = boundary_constant(problem, phi)
    tol = C_bnd * max(grid.h) / min(deltas)
    limit = richardson_limit(deltas, values)
    return ResidualReport("zero_total_flux", None, values[-1], tol, kind="equality",
                          limit=limit, deltas=deltas, values=tuple(values),
                          test_function=phi.name)


# --- strong traces ----------------------------------------------------------

@dataclass
class BoundaryTrace:
    """Trace values per boundary side.

    ``values[(axis, side)]`` has shape (n_times, n_faces) with side 0 the
    lower and 1 the upper face of the axis; faces are ordered along the
    remaining axis.
    """

    times: np.ndarray
    values: dict
    oscillation: float


def _side_layers(U: np.ndarray, axis: int, side: int, layer_count: int) -> np.ndarray:
    """Stack of inward layers: shape (layer_count, n_times, n_faces)."""
    n = U.shape[axis + 1]
    idx = range(layer_count) if side == 0 else range(n - 1, n - 1 - layer_count, -1)
    layers = [np.take(U, j, axis=axis + 1).reshape(U.shape[0], -1) for j in idx]
    return np.stack(layers)


def estimate_strong_trace(traj: Trajectory, layer_count: int = 3) -> BoundaryTrace:
    """Boundary values by linear extrapolation of the two innermost cell layers.

    The oscillation is the largest spread of u across the first
    ``layer_count`` inward layers, over all boundary faces and snapshots.
    """
    grid = traj.grid
    if layer_count < 2:
        raise ValueError("layer_count must be at least 2")
    if any(n < 2 * layer_count for n in grid.n):
        raise ValueError(f"grid {grid.n} has fewer than 2*{layer_count} cells along an axis")
    U = traj.values
    M = traj.problem.M
    values, osc = {}, 0.0
    for axis in range(grid.ndim):
        for side in (0, 1):
            layers = _side_layers(U, axis, side, layer_count)
            trace = 1.5 * layers[0] - 0.5 * layers[1]
            values[(axis, side)] = np.clip(trace, 0.0, M)
            osc = max(osc, float(np.max(layers.max(axis=0) - layers.min(axis=0))))
    return BoundaryTrace(np.asarray(traj.times), values, osc)


def _face_coords(grid: UniformGrid, axis: int, side: int) -> list[np.ndarray]:
    """Coordinates of the boundary-face centers of one side, flattened in face order."""
    wall = grid.domain.hi[axis] if side else grid.domain.lo[axis]
    others = [grid.centers(a) for a in range(grid.ndim) if a != axis]
    if not others:
        return [np.array([wall])]
    (c,) = others
    coords = [None, None]
    coords[axis] = np.full_like(c, wall)
    coords[1 - axis] = c
    return coords


def full_inequality_residual(traj: Trajectory, k: float, phi: TestFunction,
                             trace: BoundaryTrace, C_res: float | None = None,
                             C_bnd: float | None = None,
                             delta_min: float | None = None) -> ResidualReport:
    """Interior terms + initial term + sgn(trace - k) f(k).n phi on the boundary."""
    problem, grid = traj.problem, traj.grid
    tri = kruzhkov_triple(k, problem)
    X = grid.mesh()
    w = time_weights(traj.times)
    vol = grid.cell_volume
    interior, boundary = [], []
    for n_t, (t, wt, fld) in enumerate(zip(traj.times, w, traj.fields)):
        if wt == 0.0:
            continue
        u = fld.values
        integrand = tri.eta(u) * phi.dt(X, t)
        for axis, g in enumerate(phi.grad(X, t)):
            integrand = integrand + tri.q(u, axis) * g
        acc = math.fsum(integrand.ravel()) * vol
        P = tri.p(u)
        for axis, h in enumerate(grid.h):
            lo = [slice(None)] * grid.ndim
            hi = [slice(None)] * grid.ndim
            lo[axis], hi[axis] = slice(None, -1), slice(1, None)
            gradP = (P[tuple(hi)] - P[tuple(lo)]) / h
            face_X = [x[tuple(lo)] for x in X]
            face_X[axis] = face_X[axis] + 0.5 * h
            dphi = phi.grad(face_X, t)[axis]
            acc -= math.fsum((gradP * dphi).ravel()) * vol
        interior.append(wt * acc)
        for axis in range(grid.ndim):
            area = vol / grid.h[axis]
            fk = float(problem.flux(k, axis))
            for side in (0, 1):
                normal = 1.0 if side else -1.0
                tr = trace.values[(axis, side)][n_t]
                ph = phi.value(_face_coords(grid, axis, side), t)
                boundary.append(wt * area * math.fsum((sgn(tr - k) * fk * normal * ph).ravel()))
    u0 = traj.fields[0].values
    initial = math.fsum((tri.eta(u0) * phi.value(X, traj.times[0])).ravel()) * vol
    value = math.fsum(interior) + initial + math.fsum(boundary)
    if C_res is None:
        C_res = residual_constant(problem, phi)
    if C_bnd is None:
        C_bnd = boundary_constant(problem, phi)
    h = max(grid.h)
    delta_min = 2 * h if delta_min is None else delta_min
    tol = C_res * h + C_bnd * h / delta_min
    return ResidualReport("full_inequality", float(k), value, tol, test_function=phi.name,
                          extra={"interior": math.fsum(interior), "initial": initial,
                                 "boundary": math.fsum(boundary)})


def weak_divergence_pairing(traj: Trajectory, k: float, phi: TestFunction) -> float:
    """int |u-k| phi_t + (q(u) - grad|B(u)-B(k)|) . grad phi for interior phi."""
    grid = traj.grid
    tri = kruzhkov_triple(k, traj.problem)
    X = grid.mesh()
    w = time_weights(traj.times)
    total = []
    for t, wt, fld in zip(traj.times, w, traj.fields):
        if wt == 0.0:
            continue
        u = fld.values
        integrand = tri.eta(u) * phi.dt(X, t)
        gP = _bgrad(tri.p(u), grid)
        for axis, g in enumerate(phi.grad(X, t)):
            integrand = integrand + (tri.q(u, axis) - gP[axis]) * g
        total.append(wt * math.fsum(integrand.ravel()))
    return math.fsum(total) * grid.cell_volume


def dm2_proxy(traj: Trajectory, k_values, test_functions) -> float:
    """sup over (k, phi) of |weak divergence pairing| / ||phi||_inf."""
    return max(abs(weak_divergence_pairing(traj, k, phi)) / phi.sup()
               for k in k_values for phi in test_functions)


def envelope_bounded(values, slack: float = 0.1) -> bool:
    """True if no refinement level exceeds the running maximum by more than ``slack``."""
    running = values[0]
    for v in values[1:]:
        if v > (1 + slack) * running:
            return False
        running = max(running, v)
    return True


def entropy_reports(traj: Trajectory, k_values=None, deltas=None) -> list[ResidualReport]:
    """Interior residuals, boundary functionals and the zero-total-flux functional."""
    problem, grid = traj.problem, traj.grid
    T = traj.times[-1]
    ks = default_k_values(problem.M) if k_values is None else k_values
    deltas = default_deltas(grid) if deltas is None else deltas
    interior = interior_test_functions(grid.domain, T)
    closure = closure_test_functions(grid.domain, T)
    reports = [interior_entropy_residual(traj, k, phi) for phi in interior for k in ks]
    reports += [boundary_entropy_functional(traj, k, phi, deltas) for phi in closure for k in ks]
    reports += [zero_total_flux_functional(traj, phi, deltas) for phi in closure]
    return reports
