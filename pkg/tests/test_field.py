import numpy as np
import pytest
from hypothesis import given, strategies as st

from twopoint.errors import ConfigError, DomainViolation, GridMismatch
from twopoint.field import (
    DomainSpec,
    Grid,
    ScalarField,
    certify_convexity,
    covariant_gradient,
    covariant_hessian,
    disk,
    dump_csv,
    dump_header,
    geodesic_second_difference,
    interval,
    laplacian_at,
    product,
    rectangle,
    spherical_cap,
)
from twopoint.geometry import Euclidean, ManifoldModel, Sphere


def cubic(p):
    x, y = p[..., 0], p[..., 1]
    return x**3 - 2 * x * y**2 + y


def test_domain_validation():
    with pytest.raises(ConfigError):
        interval(-1.0)
    with pytest.raises(DomainViolation):
        spherical_cap(1.6)
    # product diameter must stay below pi/sqrt(A)
    with pytest.raises(DomainViolation):
        product(spherical_cap(1.4), interval(1.5))
    with pytest.raises(ConfigError):
        DomainSpec.from_config({"kind": "annulus", "R": 1.0})
    d = product(spherical_cap(0.8, 1.0), interval(0.5))
    assert DomainSpec.from_config(d.to_config()) == d
    assert d.manifold == ManifoldModel((Sphere(2, 1.0), Euclidean(1)))


def test_grid_resolution_mismatch():
    with pytest.raises(GridMismatch):
        Grid(disk(1.0), [(10,)])
    with pytest.raises(GridMismatch):
        Grid(interval(1.0), [(10,), (10,)])
    g = Grid(interval(1.0), [(10,)])
    with pytest.raises(GridMismatch):
        ScalarField(g, np.zeros(5))


@given(st.floats(-0.95, 0.95), st.floats(-0.95, 0.95))
def test_cubic_interpolation_is_exact(x, y):
    g = Grid(rectangle(1.0, 1.0), [(10, 10)])
    f = ScalarField.from_function(g, cubic, order=3)
    P = np.array([[x, y]])
    j = f.jet(P, order=2, strict=False)
    assert j.value[0] == pytest.approx(cubic(P)[0], abs=1e-12)
    H = np.array([[6 * x, -4 * y], [-4 * y, -4 * x]])
    assert np.allclose(j.basis[0] @ j.basis[0].T, np.eye(2))
    assert np.allclose(j.basis[0].T @ j.hess[0] @ j.basis[0], H, atol=1e-9)


def test_cap_laplacian_of_height_function():
    # -Lap p_z = 2 kappa p_z on the sphere of curvature kappa
    for kappa in (1.0, 2.0):
        g = Grid(spherical_cap(0.9 / np.sqrt(kappa), kappa), [(20, 40)])
        f = ScalarField.from_function(g, lambda p: p[:, 2], order=5)
        q = np.array([[0.3, 1.0], [0.0, 0.0], [0.5, 2.0], [0.01, 4.0]]) / np.sqrt(kappa)
        pts = g.chart_to_ambient(q)
        assert np.allclose(laplacian_at(f, pts), -2 * kappa * pts[:, 2], atol=1e-5)


def test_pole_gradient_and_hessian():
    g = Grid(spherical_cap(1.0), [(20, 40)])
    f = ScalarField.from_function(g, lambda p: p[:, 0] + p[:, 2], order=5)
    pole = np.array([0.0, 0.0, 1.0])
    G = covariant_gradient(f, pole)
    assert np.allclose(G.vec, [1.0, 0.0, 0.0], atol=1e-6)
    H = covariant_hessian(f, pole)
    # Hess of (x + z) at the pole is -z g = -g
    assert np.allclose(H.matrix, -np.eye(2), atol=1e-5)
    assert H.asymmetry() < 1e-12


def test_geodesic_second_difference_on_flat_quadratic():
    g = Grid(rectangle(1.0, 1.0), [(10, 10)])
    f = ScalarField.from_function(g, lambda p: p[:, 0] ** 2 + 3 * p[:, 1] ** 2)
    x, y = np.array([-0.5, 0.0]), np.array([0.5, 0.0])
    # second derivative along the segment parameter t: |Gdot|^2 * 2 with |Gdot| = 0.5
    assert geodesic_second_difference(f, x, y, 1e-3) == pytest.approx(0.5, abs=1e-6)


def test_query_outside_raises():
    g = Grid(disk(1.0), [(10, 20)])
    f = ScalarField.from_function(g, lambda p: p[:, 0])
    with pytest.raises(DomainViolation):
        f.values_at(np.array([[1.5, 0.0]]))
    with pytest.raises(GridMismatch):
        f.values_at(np.array([[0.1, 0.0, 0.0]]))


@pytest.mark.parametrize("dom,res", [
    (interval(1.0), [(8,)]),
    (disk(1.0), [(8, 16)]),
    (product(spherical_cap(0.8), interval(0.5)), [(8, 16), (8,)]),
])
def test_refine_map_hits_same_points(dom, res):
    g = Grid(dom, res)
    fine = g.refined()
    assert np.allclose(fine.node_points[g.refine_map], g.node_points, atol=1e-13)


@pytest.mark.parametrize("dom", [interval(1.0), disk(1.0), rectangle(1.0, 0.5), spherical_cap(1.2),
                                 product(spherical_cap(0.8), interval(0.5))])
def test_domains_are_convex(dom):
    assert certify_convexity(dom, n_pairs=100)


def test_dump_csv_and_header(tmp_path):
    g = Grid(interval(1.0), [(4,)])
    f = ScalarField.from_function(g, lambda p: p[:, 0] ** 2, meta={"note": "x2"})
    dump_csv(f, tmp_path / "f.csv")
    rows = (tmp_path / "f.csv").read_text().splitlines()
    assert rows[0] == "q0,value" and len(rows) == 1 + g.n_nodes
    dump_header(f, tmp_path / "f.json")
    assert '"note": "x2"' in (tmp_path / "f.json").read_text()
