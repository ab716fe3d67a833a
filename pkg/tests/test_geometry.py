import numpy as np
import pytest
from hypothesis import given, strategies as st

from twopoint.errors import ConfigError, DegenerateSpan, DomainViolation
from twopoint.geometry import (
    Euclidean,
    ManifoldModel,
    Sphere,
    curvature_op,
    distance,
    exp_map,
    inner,
    log_map,
    metric_inner,
    norm,
    parallel_transport,
    random_point,
    random_tangent,
    sectional_curvature,
    tangent,
    transport_between,
)
from twopoint.geodesic import connect

MODELS = [
    ManifoldModel((Euclidean(2),)),
    ManifoldModel((Sphere(2, 1.0),)),
    ManifoldModel((Sphere(2, 1.0), Sphere(2, 4.0))),
    ManifoldModel((Sphere(2, 1.0), Euclidean(1))),
    ManifoldModel((Sphere(3, 2.0),)),
]
model = st.sampled_from(MODELS)
seeds = st.integers(0, 2**32 - 1)


def short_pair(M, rng, length=0.8):
    x = random_point(M, rng)
    X = random_tangent(M, x, rng)
    X = X * (length / norm(M, X))
    return x, exp_map(M, x, X), X


@given(model, seeds)
def test_exp_log_roundtrip(M, seed):
    rng = np.random.default_rng(seed)
    x, y, X = short_pair(M, rng)
    assert np.allclose(log_map(M, x, y).vec, X.vec, atol=1e-12)
    assert distance(M, x, y) == pytest.approx(0.8, abs=1e-12)


@given(model, seeds)
def test_distance_symmetric_and_triangle(M, seed):
    rng = np.random.default_rng(seed)
    x, y, _ = short_pair(M, rng, 0.5)
    _, z, _ = short_pair(M, rng, 0.5)
    z = exp_map(M, y, random_tangent(M, y, rng, 0.1))
    assert distance(M, x, y) == pytest.approx(distance(M, y, x), abs=1e-13)
    assert distance(M, x, z) <= distance(M, x, y) + distance(M, y, z) + 1e-12


@given(model, seeds)
def test_transport_is_isometry(M, seed):
    rng = np.random.default_rng(seed)
    x, y, _ = short_pair(M, rng)
    U, W = random_tangent(M, x, rng), random_tangent(M, x, rng)
    TU, TW = transport_between(M, x, y, U.vec), transport_between(M, x, y, W.vec)
    assert float(inner(M, TU, TW)) == pytest.approx(metric_inner(M, U, W), abs=1e-12)
    # transported vectors are tangent at y
    assert np.allclose(M.project_tangent(y, TU), TU, atol=1e-12)


@given(model, seeds)
def test_transport_along_segment_matches_array_kernel(M, seed):
    rng = np.random.default_rng(seed)
    x, y, _ = short_pair(M, rng)
    seg = connect(M, x, y)
    U = random_tangent(M, x, rng)
    V = parallel_transport(M, seg, U, -1.0, 1.0)
    assert np.allclose(V.vec, transport_between(M, x, y, U.vec), atol=1e-12)


@given(model, seeds)
def test_sectional_curvature_in_bounds(M, seed):
    rng = np.random.default_rng(seed)
    x = random_point(M, rng)
    X, Y = random_tangent(M, x, rng), random_tangent(M, x, rng)
    k = sectional_curvature(M, X, Y)
    assert -1e-12 <= k <= M.curvature_bound_A + 1e-12


def test_round_sphere_has_constant_curvature(rng):
    M = ManifoldModel((Sphere(3, 2.5),))
    x = random_point(M, rng)
    for _ in range(5):
        X, Y = random_tangent(M, x, rng), random_tangent(M, x, rng)
        assert sectional_curvature(M, X, Y) == pytest.approx(2.5, rel=1e-12)


def test_curvature_symmetries(rng):
    M = MODELS[2]
    x = random_point(M, rng)
    X, Y, Z, W = (random_tangent(M, x, rng) for _ in range(4))
    R = lambda a, b, c: curvature_op(M, a, b, c)
    # antisymmetry in the first pair and the Bianchi identity
    assert np.allclose(R(X, Y, Z).vec, -R(Y, X, Z).vec, atol=1e-12)
    bianchi = R(X, Y, Z).vec + R(Y, Z, X).vec + R(Z, X, Y).vec
    assert np.allclose(bianchi, 0.0, atol=1e-12)
    # pair symmetry <R(X,Y)Z, W> = <R(Z,W)X, Y>
    assert metric_inner(M, R(X, Y, Z), W) == pytest.approx(metric_inner(M, R(Z, W, X), Y), abs=1e-12)


def test_flat_factor_has_zero_curvature(rng):
    M = ManifoldModel((Euclidean(3),))
    x = random_point(M, rng)
    X, Y, Z = (random_tangent(M, x, rng) for _ in range(3))
    assert np.allclose(curvature_op(M, X, Y, Z).vec, 0.0)


def test_degenerate_span_rejected(rng):
    M = MODELS[1]
    x = random_point(M, rng)
    X = random_tangent(M, x, rng)
    with pytest.raises(DegenerateSpan):
        sectional_curvature(M, X, 2.0 * X)


def test_antipodal_log_rejected():
    M = MODELS[1]
    p = np.array([0.0, 0.0, 1.0])
    with pytest.raises(DomainViolation):
        log_map(M, p, -p)


def test_config_roundtrip_and_rejection():
    M = MODELS[3]
    assert ManifoldModel.from_config(M.to_config()) == M
    with pytest.raises(ConfigError):
        ManifoldModel.from_config([{"type": "torus", "dim": 2}])
    with pytest.raises(ConfigError):
        ManifoldModel.from_config([{"type": "sphere", "dim": 2, "kappa": 1.0, "radius": 3}])


def test_tangent_projection_removes_normal_part():
    M = MODELS[1]
    p = np.array([0.0, 0.0, 1.0])
    v = tangent(M, p, np.array([1.0, 2.0, 3.0]))
    assert np.allclose(v.vec, [1.0, 2.0, 0.0])
