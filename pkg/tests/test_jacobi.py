import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import shoot_linear
from twopoint.errors import DomainViolation
from twopoint.experiments import jacobi_deviation, random_pairs
from twopoint.geodesic import build_frame, connect
from twopoint.geometry import Euclidean, ManifoldModel, Sphere, inner
from twopoint.jacobi import (
    SERIES_SWITCH,
    jacobi_closed_form,
    solve_linear_bvp,
    transfer_matrix,
    v_profile,
)

MODELS = [
    ManifoldModel((Sphere(2, 1.0),)),
    ManifoldModel((Sphere(2, 1.0), Sphere(2, 4.0))),
    ManifoldModel((Sphere(2, 1.0), Euclidean(1))),
]


@given(st.floats(0.0, 2.0), st.floats(0.05, 0.7))
def test_profile_matches_shooting(kappa, speed):
    prof = v_profile(kappa, speed)
    t = np.linspace(-1.0, 1.0, 11)
    # v(1 + t) solves v'' + kappa |Gdot|^2 v = 0 with v = 0 at t = -1 and 1 at t = 1
    ref = shoot_linear(kappa * speed**2, 0.0, 1.0, t)
    assert np.allclose(prof.v(1.0 + t), ref, atol=1e-10)


def test_profile_derivatives_consistent():
    prof = v_profile(1.3, 0.6)
    t = np.linspace(-0.9, 0.9, 7)
    h = 1e-5
    assert np.allclose((prof.v(t + h) - prof.v(t - h)) / (2 * h), prof.vdot(t), atol=1e-8)
    assert np.allclose((prof.vdot(t + h) - prof.vdot(t - h)) / (2 * h), prof.vddot(t), atol=1e-7)


def test_profile_series_switch_is_continuous():
    w = SERIES_SWITCH
    t = np.linspace(-2.0, 2.0, 9)
    below = v_profile((0.999 * w) ** 2, 1.0)
    above = v_profile((1.001 * w) ** 2, 1.0)
    assert np.allclose(below.v(t), above.v(t), atol=1e-9)
    assert np.allclose(below.vdot(t), above.vdot(t), atol=1e-9)


def test_flat_limit():
    t = np.linspace(-2.0, 2.0, 9)
    assert np.allclose(v_profile(1e-14, 1.0).v(t), t / 2, atol=1e-12)
    assert np.allclose(v_profile(0.0, 1.0).v(t), t / 2)


def test_conjugate_points_rejected():
    with pytest.raises(DomainViolation):
        v_profile(1.0, np.pi / 2)
    with pytest.raises(DomainViolation):
        v_profile(-1.0, 0.5)


@given(st.floats(0.0, 2.0), st.floats(0.05, 0.7))
def test_transfer_entries_are_cos_omega(kappa, speed):
    prof = v_profile(kappa, speed)
    assert 1.0 / (2.0 * float(prof.v(1.0))) == pytest.approx(np.cos(prof.omega), abs=1e-12)


@pytest.mark.parametrize("M", MODELS)
def test_transfer_matrix_contracts(M, rng):
    (x, y), = random_pairs(M, 1, 0.6, rng)
    frame = build_frame(connect(M, x, y))
    V = transfer_matrix(frame)
    assert np.allclose(V.entries, np.cos(np.sqrt(frame.kappas) * frame.speed), atol=1e-12)
    assert np.all(V.entries <= 1.0 + 1e-15) and np.all(V.entries > 0)
    assert np.allclose(V @ np.ones(frame.n), V.entries)


@pytest.mark.parametrize("M", MODELS)
def test_closed_form_matches_bvp(M, rng):
    (x, y), = random_pairs(M, 1, 0.5, rng)
    frame = build_frame(connect(M, x, y))
    assert jacobi_deviation(frame) < 1e-8


def test_closed_form_boundary_values(rng):
    M = MODELS[1]
    (x, y), = random_pairs(M, 1, 0.5, rng)
    frame = build_frame(connect(M, x, y))
    for a in range(frame.n):
        Jx = jacobi_closed_form(frame, "x", a, np.array([-1.0, 1.0]))
        assert np.allclose(Jx[0], frame.E(-1.0)[a], atol=1e-12)
        assert np.allclose(Jx[1], 0.0, atol=1e-12)
        Jy = jacobi_closed_form(frame, "y", a, np.array([-1.0, 1.0]))
        assert np.allclose(Jy[0], 0.0, atol=1e-12)
        assert np.allclose(inner(M, Jy[1], frame.E(1.0)[a]), 1.0, atol=1e-12)


def test_linear_bvp_solver_with_source():
    # phi'' + phi + s = 0 with phi = cos(pi t / 2) (1 - t^2)-free manufactured solution
    k = 0.7
    exact = lambda t: np.sin(2.0 * t) + t**3
    src = lambda t: -(-4.0 * np.sin(2.0 * t) + 6.0 * t + k * exact(t))[None]
    t, phi = solve_linear_bvp(k, src, exact(-1.0), exact(1.0), n=200)
    assert np.max(np.abs(phi[0] - exact(t))) < 1e-9
