import numpy as np
import pytest

from oracles import liouville_shooting
from twopoint.errors import ConfigError, DomainViolation
from twopoint.experiments import heat_exact, liouville_1d_exact, torsion_exact
from twopoint.field import Grid, ScalarField, disk, interval, spherical_cap
from twopoint.pde import (
    SemilinearSpec,
    evans_audit,
    log_transform,
    perturbation_ladder,
    solve_heat,
    solve_liouville,
    solve_poisson,
    solve_semilinear,
    solve_torsion,
    trust_mask,
)


@pytest.mark.parametrize("dom,res", [(interval(1.0), [(20,)]), (disk(1.0), [(20, 40)])])
def test_flat_torsion_exact_for_quadratics(dom, res):
    u = solve_torsion(None, dom, res)
    assert np.max(np.abs(u.values - torsion_exact(dom)(u.grid.node_chart))) < 1e-12


def test_second_order_on_manufactured_solution():
    errs = []
    for N in (20, 40):
        g = Grid(interval(1.0), [(N,)])
        x = g.node_points[:, 0]
        u = solve_poisson(g, (np.pi / 2) ** 2 * np.cos(np.pi * x / 2), 0.0)
        errs.append(np.max(np.abs(u - np.cos(np.pi * x / 2))))
    assert np.log2(errs[0] / errs[1]) == pytest.approx(2.0, abs=0.05)


def test_cap_torsion_converges_and_richardson_helps():
    dom = spherical_cap(1.0)
    ex = torsion_exact(dom)
    errs = [np.max(np.abs(f.values - ex(f.grid.node_chart)))
            for f in (solve_torsion(None, dom, [(N, 2 * N)]) for N in (10, 20))]
    assert np.log2(errs[0] / errs[1]) > 1.8
    rich = solve_torsion(None, dom, [(10, 20)], richardson=True)
    assert np.max(np.abs(rich.values - ex(rich.grid.node_chart))) < errs[1] / 4


def test_torsion_is_positive_inside():
    u = solve_torsion(None, spherical_cap(1.0), [(12, 24)])
    assert np.all(u.values[~u.grid.boundary] > 0)
    assert u.meta["b"] == {"key": "constant", "c": 1.0}


def test_liouville_matches_shooting():
    L, c, d, B = 1.0, 1.0, 1.0, 10.0
    u = solve_liouville(None, interval(L), [(2000,)], c=c, d=d, B=B, richardson=True)
    x = u.grid.node_points[:, 0]
    ref = liouville_shooting(L, c, d, B)(x)
    assert np.max(np.abs(u.values - ref)) < 1e-5
    assert np.allclose(ref, liouville_1d_exact(L, c, d, B)(x), atol=1e-10)
    assert u.meta["growth_condition"] and u.meta["trust_collar"] == pytest.approx(5 * u.grid.h)


def test_trust_mask_excludes_collar():
    u = solve_liouville(None, interval(1.0), [(100,)], B=5.0, collar_cells=5.0)
    m = trust_mask(u)
    x = u.grid.node_points[:, 0]
    assert not np.any(m[np.abs(x) > 1.0 - 5 * u.grid.h + 1e-12])
    assert np.all(m[np.abs(x) < 0.9 - 1e-12])


def test_negative_liouville_constants_rejected():
    with pytest.raises(DomainViolation):
        solve_liouville(None, interval(1.0), [(20,)], c=-1.0)


def test_gradient_coupled_rhs_rejected_by_newton():
    with pytest.raises(ConfigError):
        solve_semilinear(None, interval(1.0), [(20,)], SemilinearSpec("gradient_coupled"))
    with pytest.raises(ConfigError):
        SemilinearSpec("no_such_rhs")
    with pytest.raises(ConfigError):
        SemilinearSpec("liouville", {"q": 1.0})


def heat_case(N=60, steps=40, T=0.4):
    dom = interval(1.0)
    g = Grid(dom, [(N,)])
    ex = heat_exact("exp_cosh", dom)
    u0 = ScalarField.from_function(g, lambda p: ex(0.0, p))
    return g, ex, solve_heat(None, u0, T, steps, boundary=ex)


def test_heat_first_order_in_time():
    errs = []
    for steps in (20, 40):
        g, ex, s = heat_case(N=400, steps=steps)
        errs.append(np.max(np.abs(s.fields[-1].values - ex(s.times[-1], g.node_points))))
    assert np.log2(errs[0] / errs[1]) == pytest.approx(1.0, abs=0.15)


def test_heat_respects_max_principle():
    g, ex, s = heat_case()
    lo = min(s.fields[0].values.min(), ex(s.times, np.array([[1.0]])).min())
    hi = max(s.fields[0].values.max(), ex(s.times, np.array([[1.0]])).max())
    for f in s.fields:
        assert f.values.min() >= lo - 1e-10 and f.values.max() <= hi + 1e-10
    assert s.meta["moving_boundary"]


def test_log_transform_chain_rule():
    g = Grid(interval(1.0), [(40,)])
    f = ScalarField.from_function(g, lambda p: np.cosh(p[:, 0]), order=5)
    v = log_transform(f, "neg")
    x = np.array([[0.3]])
    j = v.jet(x, order=2)
    assert j.value[0] == pytest.approx(-np.log(np.cosh(0.3)), abs=1e-9)
    assert j.hess[0, 0, 0] == pytest.approx(-1 / np.cosh(0.3) ** 2, abs=1e-6)
    with pytest.raises(ConfigError):
        log_transform(f, "sideways")
    with pytest.raises(DomainViolation):
        log_transform(ScalarField.from_function(g, lambda p: p[:, 0]))


def test_log_transform_of_series_is_gradient_coupled():
    _, _, s = heat_case(steps=5)
    t = log_transform(s, "neg")
    assert len(t) == len(s) and t.meta["b"]["key"] == "gradient_coupled"


def test_perturbation_ladder_is_linear_in_eps():
    outer = solve_torsion(None, interval(1.0), [(200,)])
    lad = perturbation_ladder(None, interval(0.8), [(160,)], SemilinearSpec("constant", {"c": 1.0}), outer)
    assert lad["spread"] < 2.0
    with pytest.raises(DomainViolation):
        perturbation_ladder(None, interval(1.2), [(160,)], SemilinearSpec("constant"), outer)


def test_evans_audit_at_zero_eps_is_identity():
    _, _, s = heat_case(steps=10)
    a = evans_audit(s, 0.0)
    assert a["residual_v"] == pytest.approx(a["residual_u"], rel=1e-14)
    b = evans_audit(s, 1e-2)
    assert b["ratio"] < 5


def test_heat_rejects_bad_steps():
    g = Grid(interval(1.0), [(10,)])
    u0 = ScalarField.from_function(g, lambda p: 1 + p[:, 0] ** 2)
    with pytest.raises(ConfigError):
        solve_heat(None, u0, 0.1, 0)
