"""Flux and diffusion families, structural checks and the built-in problem catalog.

All model functions are vectorized: they accept floats or numpy arrays and
return the same shape.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .grid import RectDomain

ScalarMap = Callable[[np.ndarray], np.ndarray]


class InvalidModelError(ValueError):
    """A model or problem instance violates a structural requirement."""


@dataclass(frozen=True, eq=False)
class FluxModel:
    """Per-axis convective flux f_i on [0, M] with closed-form derivatives."""

    M: float
    f: tuple[ScalarMap, ...]
    df: tuple[ScalarMap, ...]

    def __post_init__(self):
        if len(self.f) != len(self.df) or not self.f:
            raise InvalidModelError("flux needs one (f, f') pair per axis")
        if not self.M > 0:
            raise InvalidModelError(f"M must be positive, got {self.M}")

    @property
    def ndim(self) -> int:
        return len(self.f)

    def __call__(self, u, axis: int = 0):
        return self.f[axis](np.asarray(u, dtype=float))

    def derivative(self, u, axis: int = 0):
        return self.df[axis](np.asarray(u, dtype=float))


@dataclass(frozen=True, eq=False)
class DiffusionModel:
    """Diffusion primitive B (nondecreasing) with B' >= 0 and optional critical value."""

    B: ScalarMap
    dB: ScalarMap
    u_c: float | None = None

    def __call__(self, u):
        return self.B(np.asarray(u, dtype=float))

    def derivative(self, u):
        return self.dB(np.asarray(u, dtype=float))


@dataclass(frozen=True)
class InitialData:
    """Initial profile description.

    kind is one of ``constant`` (value), ``step`` (left, right, position,
    axis), ``cosine`` (coeffs per axis, see :func:`cosine_profile`),
    ``profile`` (func: callable of the cell-center coordinates) or ``file``
    (values: array already read from a snapshot CSV).
    """

    kind: str
    params: dict = field(default_factory=dict)

    def sample(self, grid) -> np.ndarray:
        centers = grid.mesh()
        shape = grid.shape
        p = self.params
        if self.kind == "constant":
            return np.full(shape, float(p.get("value", 0.0)))
        if self.kind == "step":
            axis = int(p.get("axis", 0))
            x = centers[axis]
            return np.where(x < float(p["position"]), float(p["left"]), float(p["right"]))
        if self.kind == "cosine":
            return cosine_profile(grid.domain, p["coeffs"], centers)
        if self.kind == "profile":
            return np.asarray(p["func"](*centers), dtype=float) * np.ones(shape)
        if self.kind == "file":
            values = np.asarray(p["values"], dtype=float)
            if values.shape != shape:
                raise InvalidModelError(
                    f"initial file has shape {values.shape}, grid expects {shape}")
            return values.copy()
        raise InvalidModelError(f"unknown initial-data kind {self.kind!r}")


def cosine_profile(domain: RectDomain, coeffs, centers) -> np.ndarray:
    """Evaluate sum_m a_m cos(m pi (x - lo)/L), tensorized over axes.

    ``coeffs`` is either one sequence (used on axis 0, constant along the
    others) or a sequence of per-axis sequences whose product is taken.
    """
    per_axis = _per_axis_coeffs(coeffs, domain.ndim)
    out = np.ones_like(centers[0], dtype=float)
    for axis, a in enumerate(per_axis):
        if a is None:
            continue
        L = domain.hi[axis] - domain.lo[axis]
        s = (centers[axis] - domain.lo[axis]) / L
        out = out * sum(am * np.cos(m * np.pi * s) for m, am in enumerate(a))
    return out


def _per_axis_coeffs(coeffs, ndim):
    coeffs = list(coeffs)
    if coeffs and np.ndim(coeffs[0]) == 0:
        return [list(map(float, coeffs))] + [None] * (ndim - 1)
    if len(coeffs) != ndim:
        raise InvalidModelError("cosine coefficients must be given for every axis")
    return [list(map(float, a)) for a in coeffs]


@dataclass(frozen=True, eq=False)
class Problem:
    """Full instance: domain, horizon, flux, diffusion and initial data."""

    domain: RectDomain
    T: float
    flux: FluxModel
    diffusion: DiffusionModel
    initial: InitialData
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.T > 0:
            raise InvalidModelError(f"horizon T must be positive, got {self.T}")
        if self.flux.ndim != self.domain.ndim:
            raise InvalidModelError(
                f"flux has {self.flux.ndim} components but domain is {self.domain.ndim}-D")

    @property
    def M(self) -> float:
        return self.flux.M

    def initial_values(self, grid) -> np.ndarray:
        u0 = self.initial.sample(grid)
        tol = 1e-12 * max(1.0, self.M)
        if not np.all(np.isfinite(u0)):
            raise InvalidModelError("initial data contains non-finite values")
        if u0.min() < -tol or u0.max() > self.M + tol:
            raise InvalidModelError(
                f"initial data leaves [0, M]: range [{u0.min()}, {u0.max()}], M={self.M}")
        return u0


@dataclass
class ValidationReport:
    name: str
    status: str  # "pass" | "fail" | "not-applicable"
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    def __bool__(self):
        return self.passed


def validate_zero_endpoints(flux: FluxModel) -> ValidationReport:
    """Check f_i(0) = f_i(M) = 0 relative to the size of the flux."""
    try:
        grid_u = np.linspace(0.0, flux.M, 1024)
        ends = []
        sup = 0.0
        for axis in range(flux.ndim):
            lo = float(flux(0.0, axis))
            hi = float(flux(flux.M, axis))
            ends.append((lo, hi))
            sup = max(sup, float(np.max(np.abs(flux(grid_u, axis)))))
    except Exception as exc:  # evaluation failures of user-supplied closures
        raise InvalidModelError(f"flux evaluation failed at the endpoints: {exc}") from exc
    if not all(math.isfinite(v) for pair in ends for v in pair) or not math.isfinite(sup):
        raise InvalidModelError("flux is not finite at the endpoints")
    worst = max(max(abs(a), abs(b)) for a, b in ends)
    bound = 1e-12 * (1.0 + sup)
    return ValidationReport(
        "zero_endpoints",
        "pass" if worst <= bound else "fail",
        {"f0": [a for a, _ in ends], "fM": [b for _, b in ends],
         "max_abs": worst, "bound": bound},
    )


def validate_degeneracy_structure(flux: FluxModel, diffusion: DiffusionModel,
                                  samples: int = 64) -> ValidationReport:
    """B' vanishes on [0, u_c], is positive above, and f vanishes on [u_c, M]."""
    if diffusion.u_c is None:
        return ValidationReport("degeneracy_structure", "not-applicable",
                                {"reason": "no critical value u_c"})
    if samples < 2:
        raise ValueError("samples must be >= 2")
    uc, M = float(diffusion.u_c), flux.M
    below = np.linspace(0.0, uc, samples)
    above = np.linspace(uc, M, samples + 1)[1:]
    flat = np.linspace(uc, M, samples)
    dB_below = float(np.max(np.abs(diffusion.derivative(below))))
    dB_above_min = float(np.min(diffusion.derivative(above)))
    f_flat = max(float(np.max(np.abs(flux(flat, axis)))) for axis in range(flux.ndim))
    ok = dB_below <= 1e-12 and dB_above_min > 0.0 and f_flat <= 1e-12
    return ValidationReport(
        "degeneracy_structure", "pass" if ok else "fail",
        {"max_dB_below_uc": dB_below, "min_dB_above_uc": dB_above_min,
         "max_f_above_uc": f_flat},
    )


def probe_directions(ndim: int, count: int) -> np.ndarray:
    """Deterministic unit vectors (tau, xi) on the upper half of S^ndim.

    Opposite directions give the same degenerate set, so a half-sphere
    suffices. 1-D: equispaced angles; 2-D: a Fibonacci lattice.
    """
    if ndim == 1:
        theta = np.pi * (np.arange(count) + 0.5) / count
        return np.column_stack([np.cos(theta), np.sin(theta)])
    i = np.arange(count) + 0.5
    z = i / count  # upper hemisphere in the tau component
    phi = np.pi * (1 + 5 ** 0.5) * i
    r = np.sqrt(1 - z * z)
    return np.column_stack([z, r * np.cos(phi), r * np.sin(phi)])


def nd_condition_probe(flux: FluxModel, diffusion: DiffusionModel, directions: int = 181,
                       u_samples: int = 4096, tol: float = 1e-3) -> np.ndarray:
    """Heuristic witness for the nonlinearity-diffusivity condition.

    For each sampled direction (tau, xi) the fraction of u-samples where both
    ``|tau + xi . f'(u)| < tol`` and ``B'(u) |xi|^2 < tol`` hold, scaled by M,
    estimates the Lebesgue measure of the degenerate set. This is evidence at
    resolution ``tol``, never a proof that the set has measure zero.
    Returns the estimates, one per direction.
    """
    if directions < 1 or u_samples < 16 or not tol > 0:
        raise ValueError("need directions >= 1, u_samples >= 16 and tol > 0")
    u = (np.arange(u_samples) + 0.5) * flux.M / u_samples
    dfs = np.stack([flux.derivative(u, axis) * np.ones_like(u) for axis in range(flux.ndim)])
    dB = diffusion.derivative(u) * np.ones_like(u)
    dirs = probe_directions(flux.ndim, directions)
    tau, xi = dirs[:, 0], dirs[:, 1:]
    linear = np.abs(tau[:, None] + xi @ dfs)
    diffusive = dB[None, :] * np.sum(xi * xi, axis=1)[:, None]
    degenerate = (linear < tol) & (diffusive < tol)
    return degenerate.mean(axis=1) * flux.M


# --- built-in catalog -------------------------------------------------------

BUILTIN_PARAMS = {
    "heat": {"d": 0.1, "M": 1.0},
    "batch_sedimentation": {"v0": 1.0, "u_c": 0.5, "kappa": 0.25, "M": 1.0},
    "zero_flux_conservation": {"M": 1.0},
}

COMMON_PARAMS = {"dim": 1, "lo": None, "hi": None, "T": 1.0, "initial": None}

BUILTIN_DOCS = {
    "heat": "f = 0, B(u) = d u (uniformly parabolic)",
    "batch_sedimentation": (
        "f = v0 u (1 - u/u_c)^2 below u_c, 0 above; "
        "B = 0 below u_c, kappa (u - u_c)^2 above"),
    "zero_flux_conservation": "f = u (M - u), B = 0 (pure conservation law)",
}


def _zero(u):
    return np.zeros_like(np.asarray(u, dtype=float))


def _sed_flux(v0, uc):
    def f(u):
        u = np.asarray(u, dtype=float)
        return np.where(u < uc, v0 * u * (1.0 - u / uc) ** 2, 0.0)

    def df(u):
        u = np.asarray(u, dtype=float)
        return np.where(u < uc, v0 * (1.0 - u / uc) * (1.0 - 3.0 * u / uc), 0.0)

    return f, df


def _sed_lateral(v0, uc):
    # second-axis flux for 2-D runs: same support, shape independent of the first
    def f(u):
        u = np.asarray(u, dtype=float)
        return np.where(u < uc, v0 * u * u * (1.0 - u / uc) ** 2 / uc, 0.0)

    def df(u):
        u = np.asarray(u, dtype=float)
        s = u / uc
        return np.where(u < uc, v0 * (2.0 * s * (1.0 - s) ** 2 - 2.0 * s * s * (1.0 - s)), 0.0)

    return f, df


def make_builtin(name: str, params: dict | None = None) -> Problem:
    """Build one of the shipped problems.

    Model parameters are listed in ``BUILTIN_PARAMS``; every family also takes
    ``dim`` (1 or 2), ``lo``/``hi`` (domain corners, default unit box), ``T``
    and ``initial`` (an :class:`InitialData`).
    """
    if name not in BUILTIN_PARAMS:
        raise InvalidModelError(
            f"unknown model {name!r}; choose from {sorted(BUILTIN_PARAMS)}")
    params = dict(params or {})
    unknown = set(params) - set(BUILTIN_PARAMS[name]) - set(COMMON_PARAMS)
    if unknown:
        raise InvalidModelError(f"unknown parameters for {name}: {sorted(unknown)}")
    p = {**BUILTIN_PARAMS[name], **COMMON_PARAMS, **params}
    M = float(p["M"])
    dim = int(p["dim"])
    if dim not in (1, 2):
        raise InvalidModelError(f"dim must be 1 or 2, got {dim}")
    if not M > 0:
        raise InvalidModelError(f"M must be positive, got {M}")
    lo = tuple(p["lo"]) if p["lo"] is not None else (0.0,) * dim
    hi = tuple(p["hi"]) if p["hi"] is not None else (1.0,) * dim
    domain = RectDomain(lo, hi)
    if domain.ndim != dim:
        raise InvalidModelError("domain corners do not match dim")

    if name == "heat":
        d = float(p["d"])
        if not d > 0:
            raise InvalidModelError(f"d must be positive, got {d}")
        flux = FluxModel(M, (_zero,) * dim, (_zero,) * dim)
        diffusion = DiffusionModel(lambda u: d * np.asarray(u, dtype=float),
                                   lambda u: d * np.ones_like(np.asarray(u, dtype=float)))
        initial = InitialData("cosine", {"coeffs": [0.5 * M, 0.4 * M]})
    elif name == "batch_sedimentation":
        v0, uc, kappa = float(p["v0"]), float(p["u_c"]), float(p["kappa"])
        if not 0.0 < uc < M:
            raise InvalidModelError(f"u_c must lie in (0, M), got {uc}")
        if not v0 > 0 or not kappa > 0:
            raise InvalidModelError("v0 and kappa must be positive")
        fs = [_sed_flux(v0, uc)]
        if dim == 2:
            # gravity acts along the last axis
            fs = [_sed_lateral(v0, uc), _sed_flux(v0, uc)]
        flux = FluxModel(M, tuple(f for f, _ in fs), tuple(df for _, df in fs))

        def B(u):
            u = np.asarray(u, dtype=float)
            return np.where(u > uc, kappa * (u - uc) ** 2, 0.0)

        def dB(u):
            u = np.asarray(u, dtype=float)
            return np.where(u > uc, 2.0 * kappa * (u - uc), 0.0)

        diffusion = DiffusionModel(B, dB, u_c=uc)
        # suspension over a consolidating bed, so both regimes are active
        initial = InitialData("step", {"left": 0.5 * uc, "right": 0.5 * (uc + M),
                                       "position": lo[-1] + 0.75 * (hi[-1] - lo[-1]),
                                       "axis": dim - 1})
    else:
        def f(u):
            u = np.asarray(u, dtype=float)
            return u * (M - u)

        def df(u):
            return M - 2.0 * np.asarray(u, dtype=float)

        fs = [(f, df)]
        if dim == 2:
            fs.append((lambda u: np.asarray(u, dtype=float) ** 2 * (M - np.asarray(u, dtype=float)) / M,
                       lambda u: (2.0 * M * np.asarray(u, dtype=float)
                                  - 3.0 * np.asarray(u, dtype=float) ** 2) / M))
        flux = FluxModel(M, tuple(a for a, _ in fs), tuple(b for _, b in fs))
        diffusion = DiffusionModel(_zero, _zero)
        initial = InitialData("step", {"left": 0.1 * M, "right": 0.6 * M, "position":
                                       0.5 * (lo[0] + hi[0])})

    if p["initial"] is not None:
        initial = p["initial"]
    model_params = {k: p[k] for k in BUILTIN_PARAMS[name]}
    return Problem(domain, float(p["T"]), flux, diffusion, initial, name=name,
                   params={**model_params, "dim": dim})


def validate_problem(problem: Problem) -> list[ValidationReport]:
    """Run the structural validators appropriate to the problem's models."""
    reports = [validate_zero_endpoints(problem.flux)]
    reports.append(validate_degeneracy_structure(problem.flux, problem.diffusion))
    u = np.linspace(0.0, problem.M, 257)
    dB = problem.diffusion.derivative(u) * np.ones_like(u)
    Bv = problem.diffusion(u) * np.ones_like(u)
    ok = bool(np.all(dB >= 0.0) and np.all(np.diff(Bv) >= 0.0))
    reports.append(ValidationReport("diffusion_monotone", "pass" if ok else "fail",
                                    {"min_dB": float(dB.min())}))
    return reports


def check_problem(problem: Problem) -> None:
    """Raise InvalidModelError if a required structural check fails."""
    for report in validate_problem(problem):
        if report.status == "fail":
            raise InvalidModelError(f"{report.name} failed: {report.details}")


def derivative_mismatch(func: ScalarMap, dfunc: ScalarMap, points: Sequence[float],
                        step: float = 1e-6) -> float:
    """Largest relative gap between dfunc and a centered difference of func."""
    pts = np.asarray(points, dtype=float)
    fd = (func(pts + step) - func(pts - step)) / (2 * step)
    exact = dfunc(pts)
    scale = np.maximum(np.abs(exact), 1.0)
    return float(np.max(np.abs(fd - exact) / scale))
