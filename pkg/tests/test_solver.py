import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zeroflux.grid import Field, RectDomain, build_grid, integrate, l1_distance
from zeroflux.model import (BUILTIN_PARAMS, DiffusionModel, FluxModel, InitialData, Problem,
                            make_builtin)
from zeroflux.solver import (FLUX_SCHEMES, Scheme, SolverConfig, SolverError, convective_flux,
                             face_total_flux, initial_state, run, simpson_split_table,
                             split_flux, stable_dt, step, vanishing_viscosity_study)
from zeroflux.verify import random_blocks

BUILTINS = sorted(BUILTIN_PARAMS)


def _zero(u):
    return np.zeros_like(np.asarray(u, float))


def transport_problem():
    # linear transport violates f(M) = 0; fine for the formula checks that need it
    flux = FluxModel(1.0, (lambda u: np.asarray(u, float),),
                     (lambda u: np.ones_like(np.asarray(u, float)),))
    return Problem(RectDomain((0.0,), (1.0,)), 1.0, flux, DiffusionModel(_zero, _zero),
                   InitialData("constant", {"value": 0.5}))


def logistic_flux():
    return FluxModel(1.0, (lambda u: u * (1 - u),), (lambda u: 1 - 2 * u,))


# --- flux splitting ---------------------------------------------------------

def test_split_monotone_flux():
    sf = split_flux(transport_problem().flux)
    u = np.linspace(0, 1, 11)
    np.testing.assert_allclose(sf.plus(u), u, atol=1e-15)
    np.testing.assert_allclose(sf.minus(u), 0.0, atol=1e-15)


def test_split_logistic_closed_form():
    sf = split_flux(logistic_flux())
    assert float(sf.plus(1.0)) == pytest.approx(0.25, abs=1e-15)
    assert float(sf.minus(1.0)) == pytest.approx(-0.25, abs=1e-15)
    u = np.linspace(0, 1, 101)
    # f+ = f on [0, 1/2], 1/4 above; f- = 0 below, f - 1/4 above
    np.testing.assert_allclose(sf.plus(u), np.where(u <= 0.5, u * (1 - u), 0.25), atol=1e-15)


@pytest.mark.parametrize("name", BUILTINS)
@pytest.mark.parametrize("dim", [1, 2])
def test_split_consistency_and_signs(name, dim):
    p = make_builtin(name, {"dim": dim})
    u = np.random.default_rng(1).uniform(0, p.M, 100)
    for axis in range(dim):
        sf = split_flux(p.flux, axis)
        assert np.max(np.abs(sf.plus(u) + sf.minus(u) - p.flux(u, axis))) <= 1e-8
        grid = np.linspace(0, p.M, 2001)
        assert np.all(np.diff(sf.plus(grid)) >= -1e-15)
        assert np.all(np.diff(sf.minus(grid)) <= 1e-15)


@pytest.mark.parametrize("name", BUILTINS)
def test_split_agrees_with_simpson_table(name):
    p = make_builtin(name)
    nodes, plus, minus = simpson_split_table(p.flux.f[0], p.flux.df[0], p.M)
    sf = split_flux(p.flux)
    # Simpson on a kinked integrand is accurate to O(h^2) near the kink
    assert np.max(np.abs(sf.plus(nodes) - plus)) < 1e-5
    assert np.max(np.abs(sf.minus(nodes) - minus)) < 1e-5


def test_split_rejects_nonfinite_derivative():
    bad = FluxModel(1.0, (lambda u: u * (1 - u),),
                    (lambda u: np.where(np.asarray(u) > 0.5, np.nan, 1.0),))
    with pytest.raises(SolverError):
        split_flux(bad)


# --- face fluxes ------------------------------------------------------------

@pytest.mark.parametrize("name", BUILTINS)
@pytest.mark.parametrize("scheme", FLUX_SCHEMES)
def test_numerical_flux_consistency(name, scheme):
    p = make_builtin(name)
    u = np.linspace(0, p.M, 100)
    F = convective_flux(u, u, 0, p, scheme)
    assert np.max(np.abs(F - p.flux(u))) <= 1e-8
    tot = face_total_flux(u, u, 0, 0.1, p, eps=0.3, flux_scheme=scheme)
    np.testing.assert_allclose(tot, F, atol=1e-15)


@pytest.mark.parametrize("name", BUILTINS)
@pytest.mark.parametrize("scheme", FLUX_SCHEMES)
def test_numerical_flux_monotone(name, scheme):
    p = make_builtin(name)
    u = np.linspace(0, p.M, 50)
    UL, UR = np.meshgrid(u, u, indexing="ij")
    for F in (convective_flux(UL, UR, 0, p, scheme),
              face_total_flux(UL, UR, 0, 0.05, p, eps=0.01, flux_scheme=scheme)):
        assert np.sum(np.diff(F, axis=0) < -1e-14) == 0  # nondecreasing in uL
        assert np.sum(np.diff(F, axis=1) > 1e-14) == 0  # nonincreasing in uR


def test_boundary_face_is_zero():
    p = make_builtin("batch_sedimentation")
    assert face_total_flux(0.3, 0.9, 0, 0.01, p, eps=0.1, boundary=True) == 0.0


def test_heat_face_flux_example():
    p = make_builtin("heat", {"d": 0.1})
    assert face_total_flux(0.0, 1.0, 0, 0.1, p) == pytest.approx(-1.0)


# --- time step --------------------------------------------------------------

def test_stable_dt_heat_example():
    p = make_builtin("heat", {"d": 0.1})
    g = build_grid(p.domain, 10)
    assert stable_dt(g, p, 0.0, 0.5) == pytest.approx(0.025)


def test_stable_dt_transport_example():
    p = transport_problem()
    assert stable_dt(build_grid(p.domain, 10), p, 0.0, 1.0) == pytest.approx(0.1)


@pytest.mark.parametrize("name", BUILTINS)
def test_viscosity_shrinks_dt(name):
    p = make_builtin(name)
    g = build_grid(p.domain, 50)
    assert stable_dt(g, p, 0.01) < stable_dt(g, p, 0.0)


def test_step_rejects_oversized_dt():
    p = make_builtin("heat")
    g = build_grid(p.domain, 10)
    dt = stable_dt(g, p, 0.0, 1.0)
    with pytest.raises(SolverError):
        step(Field(g, np.full(10, 0.5)), 2 * dt, p, SolverConfig())


# --- single steps -----------------------------------------------------------

@pytest.mark.parametrize("name", BUILTINS)
@pytest.mark.parametrize("dim", [1, 2])
def test_constant_states_are_fixed_points(name, dim):
    p = make_builtin(name, {"dim": dim})
    g = build_grid(p.domain, 20)
    cfg = SolverConfig()
    dt = stable_dt(g, p, 0.0, cfg.cfl_safety)
    for c in (0.0, p.M):
        out = step(Field(g, np.full(g.shape, c)), dt, p, cfg)
        assert np.max(np.abs(out.values - c)) == 0.0


@given(seed=st.integers(0, 2 ** 32 - 1), name=st.sampled_from(BUILTINS),
       dim=st.sampled_from([1, 2]), eps=st.sampled_from([0.0, 0.01]),
       scheme=st.sampled_from(FLUX_SCHEMES))
@settings(max_examples=60, deadline=None)
def test_step_conserves_mass_and_range(seed, name, dim, eps, scheme):
    p = make_builtin(name, {"dim": dim})
    g = build_grid(p.domain, 40 if dim == 1 else 16)
    u = random_blocks(g, p.M, np.random.default_rng(seed))
    cfg = SolverConfig(eps=eps, flux_scheme=scheme)
    out = step(Field(g, u), stable_dt(g, p, eps, cfg.cfl_safety), p, cfg)
    m0, m1 = integrate(Field(g, u)), integrate(out)
    assert abs(m1 - m0) <= 1e-13 * max(1.0, abs(m0))
    assert out.values.min() >= -1e-12 and out.values.max() <= p.M + 1e-12


@given(seed=st.integers(0, 2 ** 32 - 1), name=st.sampled_from(BUILTINS),
       scheme=st.sampled_from(FLUX_SCHEMES))
@settings(max_examples=50, deadline=None)
def test_step_is_l1_contractive(seed, name, scheme):
    p = make_builtin(name)
    g = build_grid(p.domain, 60)
    rng = np.random.default_rng(seed)
    u, v = Field(g, random_blocks(g, p.M, rng)), Field(g, random_blocks(g, p.M, rng))
    cfg = SolverConfig(flux_scheme=scheme)
    dt = stable_dt(g, p, 0.0, cfg.cfl_safety)
    assert l1_distance(step(u, dt, p, cfg), step(v, dt, p, cfg)) <= l1_distance(u, v) + 1e-12


# --- runs -------------------------------------------------------------------

def test_run_records_trajectory_invariants():
    p = make_builtin("batch_sedimentation")
    cfg = SolverConfig.uniform(0.2, 5)
    traj = run(p, cfg, 50)
    assert traj.times[0] == 0.0 and traj.times[-1] == pytest.approx(0.2)
    assert all(b > a for a, b in zip(traj.times, traj.times[1:]))
    np.testing.assert_array_equal(traj.fields[0].values, p.initial_values(traj.grid))
    log = traj.step_log
    assert log.shape[1] == 6 and len(log) > 0
    assert np.all(np.diff(log[:, 0]) == 1)
    assert log[-1, 1] == pytest.approx(0.2)
    assert log[:, 3].min() >= -1e-12 and log[:, 4].max() <= p.M + 1e-12


def test_run_hits_snapshot_times_exactly():
    p = make_builtin("heat")
    times = (0.0, 0.013, 0.1, 0.25)
    traj = run(p, SolverConfig(t_end=0.25, snapshot_times=times), 30)
    assert traj.times == pytest.approx(list(times), abs=1e-15)


def test_run_clips_initial_data_only_with_viscosity():
    p = make_builtin("zero_flux_conservation", {"initial": InitialData("step", {
        "left": 0.0, "right": 1.0, "position": 0.5})})
    g = build_grid(p.domain, 10)
    assert initial_state(p, g, 0.0).min() == 0.0
    clipped = initial_state(p, g, 0.05)
    assert clipped.min() == 0.05 and clipped.max() == 0.95


def test_run_rejects_horizon_overrun():
    p = make_builtin("heat", {"T": 0.5})
    with pytest.raises(ValueError):
        run(p, SolverConfig(t_end=1.0), 10)


def test_run_max_steps():
    p = make_builtin("heat")
    with pytest.raises(SolverError, match="max_steps"):
        run(p, SolverConfig(t_end=1.0, max_steps=10), 50)


def test_run_detects_instability():
    # derivative under-reports the Lipschitz constant, so the step is far too large
    flux = FluxModel(1.0, (lambda u: 40 * u * (1 - u),), (lambda u: 0.01 * (1 - 2 * u),))
    p = Problem(RectDomain((0.0,), (1.0,)), 1.0, flux, DiffusionModel(_zero, _zero),
                InitialData("step", {"left": 0.1, "right": 0.9, "position": 0.5}))
    with pytest.raises(SolverError):
        run(p, SolverConfig(t_end=1.0), 100)


@pytest.mark.parametrize("kw,msg", [({"eps": -1.0}, "eps must be ≥ 0"),
                                    ({"cfl_safety": 0.0}, "cfl_safety"),
                                    ({"cfl_safety": 1.5}, "cfl_safety"),
                                    ({"flux_scheme": "godunov"}, "flux_scheme"),
                                    ({"t_end": 1.0, "snapshot_times": (0.5, 0.2)}, "increasing"),
                                    ({"t_end": 1.0, "snapshot_times": (0.5, 2.0)}, "t_end")])
def test_solver_config_validation(kw, msg):
    with pytest.raises(ValueError, match=msg):
        SolverConfig(**kw)


def test_rankine_hugoniot_shock_speed():
    """Logistic flux, step 0.1 | 0.6 at x = 0.5: shock speed (f(0.6) - f(0.1)) / 0.5 = 0.3.

    Wall-generated waves stay outside [0.3, 0.8] until t = 0.2, so there the
    exact solution is the translated step.
    """
    p = make_builtin("zero_flux_conservation")
    t = 0.2
    xs_exact = 0.5 + 0.3 * t
    errs = []
    for n in (200, 400, 800):
        traj = run(p, SolverConfig(t_end=t), n)
        x = traj.grid.centers(0)
        win = (x > 0.3) & (x < 0.8)
        u = traj.final.values[win]
        h = traj.grid.h[0]
        # shock position from the window mass: 0.1 (xs - 0.3) + 0.6 (0.8 - xs)
        xs = (0.6 * 0.8 - 0.1 * 0.3 - math.fsum(u) * h) / 0.5
        assert abs(xs - xs_exact) < 2 * h
        exact = np.where(x[win] < xs_exact, 0.1, 0.6)
        errs.append(math.fsum(np.abs(u - exact)) * h)
    assert errs[0] > errs[1] > errs[2]


def test_lax_friedrichs_and_engquist_osher_converge_together():
    p = make_builtin("batch_sedimentation")
    dists = []
    for n in (50, 100, 200):
        a = run(p, SolverConfig(t_end=0.3), n).final
        b = run(p, SolverConfig(t_end=0.3, flux_scheme="lax_friedrichs"), n).final
        dists.append(l1_distance(a, b))
    assert dists[0] > dists[1] > dists[2]


def test_two_dimensional_run_conserves_mass():
    p = make_builtin("batch_sedimentation", {"dim": 2})
    traj = run(p, SolverConfig(t_end=0.1), 24)
    mass = traj.step_log[:, 5]
    assert np.max(np.abs(mass - integrate(traj.fields[0]))) <= 1e-12


# --- vanishing viscosity ----------------------------------------------------

def test_vanishing_viscosity_heat_is_near_linear():
    p = make_builtin("heat")
    rows = vanishing_viscosity_study(p, SolverConfig(t_end=0.5), [0.04, 0.02, 0.01], 50)
    ratio = rows[0].distance / rows[1].distance
    # distances scale with |eps_j - eps_{j+1}|, which halves each time
    assert ratio == pytest.approx(2.0, rel=0.15)


def test_vanishing_viscosity_schedule_checks():
    p = make_builtin("heat")
    with pytest.raises(ValueError):
        vanishing_viscosity_study(p, SolverConfig(t_end=0.1), [0.1, 0.05], 20)
    with pytest.raises(ValueError):
        vanishing_viscosity_study(p, SolverConfig(t_end=0.1), [0.1, 0.2, 0.05], 20)


def test_scheme_face_fluxes_match_pointwise_formula():
    p = make_builtin("batch_sedimentation")
    g = build_grid(p.domain, 30)
    u = random_blocks(g, p.M, np.random.default_rng(7))
    (F,) = Scheme(p, g, 0.02).face_fluxes(u)
    ref = face_total_flux(u[:-1], u[1:], 0, g.h[0], p, eps=0.02)
    np.testing.assert_allclose(F, ref, rtol=0, atol=1e-14)
