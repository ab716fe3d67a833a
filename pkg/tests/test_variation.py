import numpy as np
import pytest

from twopoint.errors import GridMismatch
from twopoint.experiments import random_pairs
from twopoint.geodesic import build_frame, connect
from twopoint.geometry import Euclidean, ManifoldModel, Sphere
from twopoint.variation import (
    KINDS,
    eta,
    eta_oddness,
    export_csv,
    fundamental_identity_residual,
    k_combos,
    k_fields_fd,
    k_fields_ode,
)

SPHERE = ManifoldModel((Sphere(2, 1.0),))
PRODUCT = ManifoldModel((Sphere(2, 1.0), Euclidean(1)))
T21 = np.linspace(-1.0, 1.0, 21)


@pytest.fixture(scope="module", params=[SPHERE, PRODUCT], ids=["sphere", "product"])
def setup(request):
    M = request.param
    (x, y), = random_pairs(M, 1, 0.5, np.random.default_rng(4))
    frame = build_frame(connect(M, x, y))
    return M, x, y, frame, k_fields_ode(frame, n=400)


def test_ode_fields_vanish_at_ends(setup):
    *_, ode = setup
    for kind in KINDS:
        assert ode[kind].boundary_residual() < 1e-14


def test_combos_vanish_at_midpoint_and_are_odd(setup):
    *_, ode = setup
    for s in "+-":
        combo = k_combos(ode, s)
        assert combo.midpoint_residual() < 1e-8
        assert combo.oddness_residual(T21) < 1e-8


def test_mixed_fields_are_transposes(setup):
    *_, ode = setup
    # K_{x^a y^b} = K_{y^b x^a}
    assert np.allclose(ode["xy"].comps, ode["yx"].comps.transpose(1, 0, 2, 3), atol=1e-10)


def test_eta_is_odd(setup):
    *_, frame, _ = setup
    n = frame.n
    for a in range(n):
        for b in range(n):
            for g in range(n):
                assert eta_oddness(frame, a, b, g) < 1e-12


def test_identity_holds(setup):
    *_, frame, ode = setup
    n = frame.n
    worst = max(fundamental_identity_residual(frame, a, b, g, s, ode)
                for a in range(n) for b in range(n) for g in range(n) for s in "+-")
    assert worst < 1e-6


def test_fd_converges_to_ode(setup):
    M, x, y, frame, ode = setup
    idx = np.searchsorted(ode["xx"].t, T21 - 1e-12)
    devs = []
    for h in (1e-2, 5e-3):
        fd = k_fields_fd(M, x, y, h, T21, frame)
        devs.append(max(np.max(np.abs(fd[k].comps - ode[k].comps[:, :, idx, :])) for k in KINDS))
        # FD midpoint combinations vanish up to roundoff
        assert max(np.max(np.abs(k_combos(fd, s).value_at(0.0))) for s in "+-") < 1e-8
    assert np.log(devs[0] / devs[1]) / np.log(2.0) > 1.9


def test_sphere_normal_directionality():
    (x, y), = random_pairs(SPHERE, 1, 0.5, np.random.default_rng(1))
    frame = build_frame(connect(SPHERE, x, y))
    ode = k_fields_ode(frame, n=400)
    # for normal indices only the tangential component survives
    for s in "+-":
        c = k_combos(ode, s).comps
        assert np.max(np.abs(c[1:, 1:, :, 1:])) < 1e-10


def test_flat_fields_vanish():
    M = ManifoldModel((Euclidean(2),))
    (x, y), = random_pairs(M, 1, 0.5, np.random.default_rng(2))
    ode = k_fields_ode(build_frame(connect(M, x, y)), n=100)
    for kind in KINDS:
        assert np.max(np.abs(ode[kind].comps)) < 1e-14


def test_grid_mismatch(setup):
    *_, ode = setup
    combo = k_combos(ode, "+")
    with pytest.raises(GridMismatch):
        combo.value_at(0.123456789)
    bad = dict(ode)
    from twopoint.variation import KField
    f = ode["xy"]
    bad["xy"] = KField(f.frame, "xy", f.t[::2], f.comps[:, :, ::2])
    with pytest.raises(GridMismatch):
        k_combos(bad, "-")


def test_eta_sign_argument(setup):
    *_, frame, _ = setup
    with pytest.raises(ValueError):
        k_combos(setup[4], "*")
    assert eta(frame, 0, 0, 0, "+", np.zeros(3)).shape == (3,)


def test_export_csv(setup, tmp_path):
    *_, ode = setup
    small = {k: type(v)(v.frame, k, v.t[::100], v.comps[:, :, ::100]) for k, v in ode.items()}
    p = tmp_path / "k.csv"
    export_csv(small, p)
    lines = p.read_text().splitlines()
    n = small["xx"].comps.shape[0]
    assert lines[0].startswith("t,kind,alpha,beta,gamma1")
    assert len(lines) == 1 + 4 * n * n * small["xx"].t.size
