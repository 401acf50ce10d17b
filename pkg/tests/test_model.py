import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zeroflux.grid import RectDomain, build_grid
from zeroflux.model import (BUILTIN_PARAMS, DiffusionModel, FluxModel, InitialData,
                            InvalidModelError, Problem, check_problem, derivative_mismatch,
                            make_builtin, nd_condition_probe, probe_directions,
                            validate_degeneracy_structure, validate_problem,
                            validate_zero_endpoints)


def logistic(M=1.0):
    return FluxModel(M, (lambda u: u * (M - u),), (lambda u: M - 2 * u,))


def linear(M=1.0):
    return FluxModel(M, (lambda u: np.asarray(u, float),),
                     (lambda u: np.ones_like(np.asarray(u, float)),))


def zero_diffusion():
    z = lambda u: np.zeros_like(np.asarray(u, float))  # noqa: E731
    return DiffusionModel(z, z)


# --- zero endpoints ---------------------------------------------------------

def test_zero_endpoints_logistic_passes():
    assert validate_zero_endpoints(logistic()).status == "pass"


def test_zero_endpoints_linear_fails_and_reports_value():
    rep = validate_zero_endpoints(linear())
    assert rep.status == "fail"
    assert rep.details["fM"] == [1.0]
    assert rep.details["max_abs"] == 1.0


def test_zero_endpoints_sedimentation_passes():
    p = make_builtin("batch_sedimentation", {"v0": 1, "u_c": 0.5, "kappa": 0.25, "M": 1})
    assert p.flux(0.0) == 0.0 and p.flux(1.0) == 0.0
    assert validate_zero_endpoints(p.flux).passed


def test_zero_endpoints_evaluation_failure_is_invalid_model():
    def boom(u):
        raise ZeroDivisionError("bad closure")
    with pytest.raises(InvalidModelError):
        validate_zero_endpoints(FluxModel(1.0, (boom,), (boom,)))


@pytest.mark.parametrize("name", sorted(BUILTIN_PARAMS))
@pytest.mark.parametrize("dim", [1, 2])
def test_every_builtin_has_zero_endpoints(name, dim):
    assert validate_zero_endpoints(make_builtin(name, {"dim": dim}).flux).passed


# --- degeneracy structure ---------------------------------------------------

def test_degeneracy_structure_sedimentation_passes():
    p = make_builtin("batch_sedimentation")
    assert validate_degeneracy_structure(p.flux, p.diffusion, samples=64).status == "pass"


def test_degeneracy_structure_heat_not_applicable():
    p = make_builtin("heat")
    rep = validate_degeneracy_structure(p.flux, p.diffusion)
    assert rep.status == "not-applicable"
    assert not rep.passed


def test_degeneracy_structure_logistic_with_sedimentation_diffusion_fails():
    sed = make_builtin("batch_sedimentation")
    assert logistic()(0.75) == pytest.approx(0.1875)
    rep = validate_degeneracy_structure(logistic(), sed.diffusion, samples=64)
    assert rep.status == "fail"


def test_degeneracy_structure_needs_two_samples():
    sed = make_builtin("batch_sedimentation")
    with pytest.raises(ValueError):
        validate_degeneracy_structure(sed.flux, sed.diffusion, samples=1)


# --- nonlinearity-diffusivity probe -----------------------------------------

def test_probe_heat_is_zero():
    p = make_builtin("heat")
    assert np.max(nd_condition_probe(p.flux, p.diffusion)) == 0.0


def test_probe_logistic_is_near_zero():
    tol = 1e-3
    est = nd_condition_probe(logistic(), zero_diffusion(), tol=tol)
    # level sets of f' = 1 - 2u are points; the band |tau + xi f'| < tol has width tol/|xi|
    dirs = probe_directions(1, 181)
    bound = np.where(np.abs(dirs[:, 1]) > 0, tol / np.abs(dirs[:, 1]), 1.0) + 2.0 / 4096
    assert np.all(est <= bound)


def test_probe_linear_flux_is_fully_degenerate():
    est = nd_condition_probe(linear(), zero_diffusion(), directions=2, tol=1e-3)
    dirs = probe_directions(1, 2)
    assert dirs[0] == pytest.approx([np.cos(np.pi / 4), np.sin(np.pi / 4)])
    # (tau, xi) = (1/sqrt2, 1/sqrt2) has tau + xi f' = sqrt2, but its opposite class
    # (-1/sqrt2, 1/sqrt2) makes tau + xi f' vanish identically
    assert est[1] == pytest.approx(1.0)


def test_probe_argument_checks():
    with pytest.raises(ValueError):
        nd_condition_probe(logistic(), zero_diffusion(), u_samples=8)
    with pytest.raises(ValueError):
        nd_condition_probe(logistic(), zero_diffusion(), tol=0)


@pytest.mark.parametrize("name,dim", [("heat", 1), ("heat", 2), ("zero_flux_conservation", 1)])
def test_probe_builtins_within_four_tol(name, dim):
    p = make_builtin(name, {"dim": dim})
    assert np.max(nd_condition_probe(p.flux, p.diffusion, tol=1e-3)) <= 4e-3 * p.M


@pytest.mark.xfail(strict=True, reason=(
    "f' of the sedimentation closed form is stationary at u = 2 u_c / 3, so the band "
    "|tau + xi f'(u)| < tol has width O(sqrt(tol)), about 0.006 > 4 tol at tol = 1e-3"))
def test_probe_sedimentation_within_four_tol():
    p = make_builtin("batch_sedimentation")
    assert np.max(nd_condition_probe(p.flux, p.diffusion, tol=1e-3)) <= 4e-3 * p.M


@pytest.mark.parametrize("name,dim", [("batch_sedimentation", 1), ("batch_sedimentation", 2),
                                      ("zero_flux_conservation", 2)])
def test_probe_estimates_shrink_with_tol(name, dim):
    p = make_builtin(name, {"dim": dim})
    worst = [np.max(nd_condition_probe(p.flux, p.diffusion, tol=t)) for t in (1e-2, 1e-3, 1e-4)]
    assert worst[0] > worst[1] > worst[2]
    assert worst[2] < 0.01 * p.M


def test_probe_sedimentation_excess_sits_at_inflection():
    p = make_builtin("batch_sedimentation")
    tol = 1e-3
    est = nd_condition_probe(p.flux, p.diffusion, tol=tol)
    tau, xi = probe_directions(1, 181)[int(np.argmax(est))]
    u = (np.arange(4096) + 0.5) / 4096
    flagged = u[(np.abs(tau + xi * p.flux.derivative(u)) < tol)
                & (p.diffusion.derivative(u) * xi * xi < tol)]
    assert np.all(np.abs(flagged - 2 * 0.5 / 3) < 0.05)


# --- catalog ----------------------------------------------------------------

def test_heat_builtin():
    p = make_builtin("heat", {"d": 0.1, "M": 1})
    u = np.linspace(0, 1, 11)
    np.testing.assert_array_equal(p.flux(u), 0.0)
    np.testing.assert_allclose(p.diffusion(u), 0.1 * u)


def test_sedimentation_builtin_closed_forms():
    p = make_builtin("batch_sedimentation", {"v0": 1, "u_c": 0.5, "kappa": 0.25, "M": 1})
    u = np.array([0.1, 0.25, 0.4, 0.6, 0.9])
    np.testing.assert_allclose(p.flux(u), np.where(u < 0.5, u * (1 - u / 0.5) ** 2, 0.0))
    np.testing.assert_allclose(p.diffusion(u), np.where(u > 0.5, 0.25 * (u - 0.5) ** 2, 0.0))


def test_sedimentation_is_c1_at_critical_value():
    p = make_builtin("batch_sedimentation")
    uc, e = 0.5, 1e-7
    for fn in (p.flux, p.diffusion):
        left = (fn(uc) - fn(uc - e)) / e
        right = (fn(uc + e) - fn(uc)) / e
        assert abs(left) < 1e-6 and abs(right) < 1e-6
    assert p.flux.derivative(uc) == 0.0 and p.diffusion.derivative(uc) == 0.0


def test_zero_flux_builtin():
    p = make_builtin("zero_flux_conservation", {"M": 1})
    u = np.linspace(0, 1, 11)
    np.testing.assert_allclose(p.flux(u), u * (1 - u))
    np.testing.assert_array_equal(p.diffusion(u), 0.0)


def test_sedimentation_derivatives_match_finite_differences():
    p = make_builtin("batch_sedimentation")
    pts = np.linspace(0.01, 0.99, 100)
    pts = pts[np.abs(pts - 0.5) > 1e-3]
    assert derivative_mismatch(p.flux, p.flux.derivative, pts) <= 1e-6
    assert derivative_mismatch(p.diffusion, p.diffusion.derivative, pts) <= 1e-6


@pytest.mark.parametrize("name", sorted(BUILTIN_PARAMS))
def test_builtin_2d_second_component_derivatives(name):
    p = make_builtin(name, {"dim": 2})
    pts = np.linspace(0.01, 0.99, 100)
    pts = pts[np.abs(pts - 0.5) > 1e-3]
    for axis in range(2):
        err = derivative_mismatch(lambda u: p.flux(u, axis), lambda u: p.flux.derivative(u, axis),
                                  pts)
        assert err <= 1e-6


@pytest.mark.parametrize("name", sorted(BUILTIN_PARAMS))
def test_builtins_pass_their_validators(name):
    p = make_builtin(name)
    assert all(r.status in ("pass", "not-applicable") for r in validate_problem(p))
    check_problem(p)


@pytest.mark.parametrize("params", [{"u_c": 0.0}, {"u_c": 1.0}, {"u_c": 1.5}, {"kappa": -1},
                                    {"v0": 0.0}, {"M": 0.0}, {"dim": 3}, {"bogus": 1}])
def test_sedimentation_rejects_bad_parameters(params):
    with pytest.raises(InvalidModelError):
        make_builtin("batch_sedimentation", params)


def test_unknown_builtin():
    with pytest.raises(InvalidModelError):
        make_builtin("burgers")


def test_heat_rejects_nonpositive_diffusivity():
    with pytest.raises(InvalidModelError):
        make_builtin("heat", {"d": 0.0})


# --- problems and initial data ----------------------------------------------

def test_problem_rejects_nonpositive_horizon():
    p = make_builtin("heat")
    with pytest.raises(InvalidModelError):
        Problem(p.domain, 0.0, p.flux, p.diffusion, p.initial)


def test_initial_data_outside_range_rejected():
    p = make_builtin("heat", {"initial": InitialData("constant", {"value": 1.5})})
    with pytest.raises(InvalidModelError):
        p.initial_values(build_grid(p.domain, 10))


def test_initial_step_and_cosine_sampling():
    g = build_grid(RectDomain((0.0,), (1.0,)), 10)
    step = InitialData("step", {"left": 0.2, "right": 0.7, "position": 0.5}).sample(g)
    np.testing.assert_array_equal(step, [0.2] * 5 + [0.7] * 5)
    cos = InitialData("cosine", {"coeffs": [0.5, 0.4]}).sample(g)
    np.testing.assert_allclose(cos, 0.5 + 0.4 * np.cos(np.pi * g.centers(0)))


def test_initial_file_shape_checked():
    g = build_grid(RectDomain((0.0,), (1.0,)), 10)
    with pytest.raises(InvalidModelError):
        InitialData("file", {"values": np.zeros(9)}).sample(g)


def test_initial_cosine_2d_tensor_product():
    g = build_grid(RectDomain((0.0, 0.0), (1.0, 2.0)), (8, 6))
    v = InitialData("cosine", {"coeffs": [[0.5, 0.2], [1.0, 0.5]]}).sample(g)
    X, Y = g.mesh()
    np.testing.assert_allclose(v, (0.5 + 0.2 * np.cos(np.pi * X)) * (1 + 0.5 * np.cos(np.pi * Y / 2)))


@given(v0=st.floats(0.1, 5.0), uc=st.floats(0.05, 0.95), kappa=st.floats(0.01, 5.0))
@settings(max_examples=40, deadline=None)
def test_sedimentation_family_structure(v0, uc, kappa):
    p = make_builtin("batch_sedimentation", {"v0": v0, "u_c": uc, "kappa": kappa})
    assert validate_zero_endpoints(p.flux).passed
    assert validate_degeneracy_structure(p.flux, p.diffusion).passed
    u = np.linspace(0, 1, 257)
    assert np.all(np.diff(p.diffusion(u)) >= 0)
