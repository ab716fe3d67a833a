"""Second variations of the geodesic map: the K fields and their +/- combinations.

Arrays of frame components are indexed ``comps[a, b, i, g]`` =
``<K_{..a..b}(t_i), E_g(t_i)>`` with 0-based frame indices.  A kind ``"xy"``
means K_{x^a y^b}, the derivative in the y^b direction of the Jacobi field
J_{x^a}.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DomainViolation, GridMismatch
from .geodesic import ParallelFrame, build_frame, connect
from .geometry import ManifoldModel, exp_array, inner, transport_between
from .jacobi import profiles, solve_linear_bvp

KINDS = ("xx", "xy", "yx", "yy")


@dataclass(frozen=True, eq=False)
class KField:
    frame: ParallelFrame
    kind: str
    t: np.ndarray
    comps: np.ndarray

    def at(self, alpha: int, beta: int) -> np.ndarray:
        return self.comps[alpha, beta]

    def boundary_residual(self) -> float:
        return float(max(np.max(np.abs(self.comps[:, :, 0, :])), np.max(np.abs(self.comps[:, :, -1, :]))))


@dataclass(frozen=True, eq=False)
class KCombo:
    sign: str
    t: np.ndarray
    comps: np.ndarray

    def value_at(self, t0: float) -> np.ndarray:
        i = int(np.argmin(np.abs(self.t - t0)))
        if abs(self.t[i] - t0) > 1e-12:
            raise GridMismatch(f"t = {t0} is not a sample time")
        return self.comps[:, :, i, :]

    def midpoint_residual(self) -> float:
        return float(np.max(np.abs(self.value_at(0.0))))

    def oddness_residual(self, ts=None) -> float:
        """max |phi(t) + phi(-t)| over sample times present with their mirror."""
        ts = self.t if ts is None else np.asarray(ts)
        worst = 0.0
        for t0 in ts:
            worst = max(worst, float(np.max(np.abs(self.value_at(t0) + self.value_at(-t0)))))
        return worst

    def symmetry_residual(self) -> float:
        return float(np.max(np.abs(self.comps - self.comps.transpose(1, 0, 2, 3))))


def _coeffs(prof, endpoint, t):
    """(a, a-dot) with J_{endpoint^a}(t) = a(t) E_a(t)."""
    if endpoint == "x":
        return prof.v(1.0 - t), -prof.vdot(1.0 - t)
    return prof.v(1.0 + t), prof.vdot(1.0 + t)


def k_source(frame: ParallelFrame, kind: str, t) -> np.ndarray:
    """s[a, b, g, i] in K'' + kappa_g |Gdot|^2 K + s = 0 for K_{Q^a P^b}."""
    Q, P = kind
    profs = profiles(frame)
    t = np.asarray(t, dtype=float)
    aQ, adQ = zip(*(_coeffs(p, Q, t) for p in profs))
    aP, adP = zip(*(_coeffs(p, P, t) for p in profs))
    aQ, adQ, aP, adP = (np.array(v) for v in (aQ, adQ, aP, adP))  # (n, T)
    c = frame.c
    # 2 a_Q^a adot_P^b c_abg + 2 a_P^b adot_Q^a c_bag
    s = 2.0 * np.einsum("ai,bi,abg->abgi", aQ, adP, c)
    s += 2.0 * np.einsum("bi,ai,bag->abgi", aP, adQ, c)
    return s


def _check_diagonal(frame: ParallelFrame, tol: float = 1e-9):
    r = frame.eigen_residual(-1.0)
    if r > tol * max(1.0, frame.speed**2):
        raise AssertionError(f"frame does not diagonalise R(., Gdot)Gdot (residual {r:.3g})")


def k_fields_ode(frame: ParallelFrame, n: int = 800, levels: int = 3) -> dict:
    """All four K kinds from their frame-component linear ODEs with zero boundary data."""
    _check_diagonal(frame)
    N = frame.n
    k = np.tile(frame.kappas * frame.speed**2, N * N)  # flattened over (a, b, g)
    out = {}
    for kind in KINDS:
        src = lambda tt, kind=kind: k_source(frame, kind, tt).reshape(N * N * N, -1)
        t, phi = solve_linear_bvp(k, src, 0.0, 0.0, n=n, levels=levels)
        comps = phi.reshape(N, N, N, -1).transpose(0, 1, 3, 2)
        out[kind] = KField(frame, kind, t, comps)
    return out


def _perturbed_jacobi(frame_p: ParallelFrame, endpoint: str, W, t):
    """Jacobi field on a perturbed segment with value W at ``endpoint`` and 0 at the other end."""
    tb = -1.0 if endpoint == "x" else 1.0
    Eb = frame_p.E(tb)  # (n, D)
    coef = inner(frame_p.manifold, W[:, None, :], Eb[None, :, :])  # (m, n)
    Et = frame_p.E(t)  # (T, n, D)
    vals = np.array([_coeffs(p, endpoint, t)[0] for p in profiles(frame_p)])  # (n, T)
    return np.einsum("mg,gi,igd->mid", coef, vals, Et)  # (m, T, D)


def k_fields_fd(M: ManifoldModel, x, y, h: float, t=None, frame: ParallelFrame | None = None) -> dict:
    """K fields by central differences over endpoint perturbations exp(+-h E_b).

    Jacobi fields on perturbed geodesics are closed-form on their own frames
    and are carried back to the base geodesic by parallel transport along the
    short geodesic joining Gamma_pert(t) to Gamma(t).
    """
    t = np.linspace(-1.0, 1.0, 21) if t is None else np.asarray(t, dtype=float)
    seg = connect(M, x, y)
    frame = build_frame(seg) if frame is None else frame
    N = frame.n
    base_pts = seg.point(t)
    E_t = frame.E(t)
    ends = {"x": (seg.x, frame.E(-1.0)), "y": (seg.y, frame.E(1.0))}
    acc = {kind: np.zeros((N, N, t.size, N)) for kind in KINDS}
    for P in ("x", "y"):
        p0, Ep = ends[P]
        for b in range(N):
            sides = []
            for s in (+1.0, -1.0):
                p1 = exp_array(M, p0, s * h * Ep[b])
                try:
                    seg_p = connect(M, p1, y) if P == "x" else connect(M, x, p1)
                except DomainViolation as exc:
                    raise DomainViolation(f"perturbation of size {h} leaves the admissible region") from exc
                frame_p = build_frame(seg_p)
                pts_p = seg_p.point(t)
                fields = {}
                for Q in ("x", "y"):
                    q0, Eq = ends[Q]
                    W = transport_between(M, p0, p1, Eq) if Q == P else Eq
                    J = _perturbed_jacobi(frame_p, Q, W, t)  # (a, T, D)
                    fields[Q] = transport_between(M, pts_p[None], base_pts[None], J)
                sides.append(fields)
            for Q in ("x", "y"):
                diff = (sides[0][Q] - sides[1][Q]) / (2.0 * h)  # (a, T, D)
                comps = inner(M, diff[:, :, None, :], E_t[None])  # (a, T, g)
                acc[Q + P][:, b] = comps
    return {kind: KField(frame, kind, t, acc[kind]) for kind in KINDS}


def k_combos(fields: dict, sign: str) -> KCombo:
    xx, xy, yx, yy = (fields[k] for k in KINDS)
    t = xx.t
    for f in (xy, yx, yy):
        if f.t.shape != t.shape or np.max(np.abs(f.t - t)) > 1e-14:
            raise GridMismatch("K fields sampled on different grids")
    if sign == "+":
        comps = xx.comps + yy.comps + xy.comps + yx.comps
    elif sign == "-":
        comps = xx.comps + yy.comps - xy.comps - yx.comps
    else:
        raise ValueError("sign must be '+' or '-'")
    return KCombo(sign, t, comps)


def eta(frame: ParallelFrame, alpha: int, beta: int, gamma: int, sign: str, t) -> np.ndarray:
    """Source of the combined ODE  phi'' + kappa_g |Gdot|^2 phi + eta = 0, phi = <K^sign_ab, E_g>."""
    t = np.asarray(t, dtype=float)
    pa, pb = profiles(frame)[alpha], profiles(frame)[beta]
    c = frame.c
    if sign == "+":
        f = lambda p, q: (p.v(1 - t) + p.v(1 + t)) * (-q.vdot(1 - t) + q.vdot(1 + t))
    else:
        f = lambda p, q: (p.v(1 - t) - p.v(1 + t)) * (-q.vdot(1 - t) - q.vdot(1 + t))
    return 2.0 * c[alpha, beta, gamma] * f(pa, pb) + 2.0 * c[beta, alpha, gamma] * f(pb, pa)


def eta_oddness(frame: ParallelFrame, alpha: int, beta: int, gamma: int, n: int = 200) -> float:
    """max over both signs and a symmetric grid of |eta(t) + eta(-t)|."""
    t = np.linspace(0.0, 1.0, n + 1)
    return float(max(np.max(np.abs(eta(frame, alpha, beta, gamma, s, t) + eta(frame, alpha, beta, gamma, s, -t))) for s in "+-"))


def fundamental_identity_residual(frame: ParallelFrame, alpha: int, beta: int, gamma: int, sign: str,
                                  fields: dict | None = None, stride: int = 8) -> float:
    """sup_t |phi'' + kappa_g |Gdot|^2 phi - rhs| for phi = <K^sign_ab, E_g>.

    phi comes from the four separately solved K fields; phi'' is a fourth-order
    difference on every ``stride``-th sample; rhs is the closed-form right side
    of the combined identity.
    """
    fields = k_fields_ode(frame) if fields is None else fields
    combo = k_combos(fields, sign)
    t = combo.t[::stride]
    phi = combo.comps[alpha, beta, ::stride, gamma]
    H = t[1] - t[0]
    d2 = (-phi[4:] + 16 * phi[3:-1] - 30 * phi[2:-2] + 16 * phi[1:-3] - phi[:-4]) / (12 * H * H)
    tm = t[2:-2]
    lhs = d2 + frame.kappas[gamma] * frame.speed**2 * phi[2:-2]
    rhs = -eta(frame, alpha, beta, gamma, sign, tm)
    return float(np.max(np.abs(lhs - rhs)))


def export_csv(fields: dict, path) -> None:
    """Write long-format samples: t, kind, alpha, beta, then one column per frame component."""
    kinds = [k for k in KINDS if k in fields] + [k for k in fields if k not in KINDS]
    any_field = next(iter(fields.values()))
    n = any_field.comps.shape[-1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "kind", "alpha", "beta"] + [f"gamma{g + 1}" for g in range(n)])
        for kind in kinds:
            f = fields[kind]
            for a in range(f.comps.shape[0]):
                for b in range(f.comps.shape[1]):
                    for i, ti in enumerate(f.t):
                        w.writerow([repr(float(ti)), kind, a + 1, b + 1] + [repr(float(v)) for v in f.comps[a, b, i]])
