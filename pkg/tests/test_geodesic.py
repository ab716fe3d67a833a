import numpy as np
import pytest
from hypothesis import given, strategies as st

from twopoint.errors import DegenerateSegment, DomainViolation
from twopoint.geodesic import build_frame, connect, curvature_constants
from twopoint.geometry import Euclidean, ManifoldModel, Sphere, distance, inner, random_point
from twopoint.experiments import random_pairs

MODELS = [
    ManifoldModel((Euclidean(2),)),
    ManifoldModel((Sphere(2, 1.0),)),
    ManifoldModel((Sphere(2, 1.0), Sphere(2, 4.0))),
    ManifoldModel((Sphere(2, 1.0), Euclidean(1))),
]
model = st.sampled_from(MODELS)
seeds = st.integers(0, 2**32 - 1)


def one_frame(M, seed, half=0.5):
    (x, y), = random_pairs(M, 1, half, np.random.default_rng(seed))
    return build_frame(connect(M, x, y))


@given(model, seeds)
def test_segment_endpoints_and_speed(M, seed):
    (x, y), = random_pairs(M, 1, 0.5, np.random.default_rng(seed))
    seg = connect(M, x, y)
    assert np.allclose(seg.point(-1.0), x, atol=1e-12)
    assert np.allclose(seg.point(1.0), y, atol=1e-12)
    assert seg.length == pytest.approx(distance(M, x, y), abs=1e-12)
    t = np.linspace(-1, 1, 7)
    v = seg.velocity(t)
    assert np.allclose(np.sqrt(inner(M, v, v)), seg.speed, atol=1e-12)
    # midpoint is equidistant
    z = seg.point(0.0)
    assert distance(M, x, z) == pytest.approx(distance(M, z, y), abs=1e-12)


@given(model, seeds)
def test_frame_is_parallel_orthonormal_and_diagonalising(M, seed):
    fr = one_frame(M, seed)
    for t in (-1.0, -0.3, 0.0, 0.6, 1.0):
        assert fr.orthonormality_residual(t) < 1e-12
        assert fr.eigen_residual(t) < 1e-12
        assert np.max(np.abs(fr.curvature_constants_at(t) - fr.c)) < 1e-12
    # E_1 is the direction of travel and carries kappa = 0
    v = fr.segment.velocity(0.3)
    assert np.allclose(fr.E(0.3)[0] * fr.speed, v, atol=1e-12)
    assert fr.kappas[0] == pytest.approx(0.0, abs=1e-12)
    assert np.all(fr.kappas >= -1e-12) and np.all(fr.kappas <= M.curvature_bound_A + 1e-12)
    assert np.all(np.diff(fr.kappas[1:]) >= -1e-12)


def test_curvature_constants_audit(rng):
    fr = one_frame(MODELS[2], 3)
    c = curvature_constants(fr)
    assert c.shape == (4, 4, 4)
    # <R(E_a, Gdot) E_b, E_g> is antisymmetric in (b, g)
    assert np.allclose(c, -c.transpose(0, 2, 1), atol=1e-12)


def test_reversed_segment(rng):
    M = MODELS[1]
    (x, y), = random_pairs(M, 1, 0.5, rng)
    seg = connect(M, x, y)
    r = seg.reversed()
    assert np.allclose(r.point(0.4), seg.point(-0.4), atol=1e-12)


def test_frame_is_deterministic():
    a, b = one_frame(MODELS[2], 7), one_frame(MODELS[2], 7)
    assert np.array_equal(a.E(0.2), b.E(0.2))


def test_degenerate_and_too_long_segments():
    M = MODELS[1]
    p = np.array([0.0, 0.0, 1.0])
    with pytest.raises(DegenerateSegment):
        connect(M, p, p)
    # the product with kappa = 4 has diameter bound pi/2
    P = MODELS[2]
    x = np.concatenate([p, p])
    y = np.concatenate([[np.sin(2.0), 0.0, np.cos(2.0)], p])
    with pytest.raises(DomainViolation):
        connect(P, x, y)


def test_frame_serialises():
    fr = one_frame(MODELS[3], 1)
    d = fr.to_dict()
    assert set(d) >= {"kappas", "speed"}
