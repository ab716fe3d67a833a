"""Closed-form Jacobi fields along a framed geodesic, plus a finite-difference oracle."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .errors import DomainViolation
from .geodesic import ParallelFrame

# below this value of sqrt(kappa)*speed the sine ratio is evaluated by series
SERIES_SWITCH = 1e-4


def _sin_over(z):
    """sin(z)/z through five Taylor terms (valid for small |z|)."""
    z2 = z * z
    return 1 - z2 / 6 + z2**2 / 120 - z2**3 / 5040 + z2**4 / 362880


@dataclass(frozen=True)
class JacobiProfile:
    """v(t) = sin(w t)/sin(2 w), w = sqrt(kappa)*speed, with the flat limit v(t) = t/2."""

    kappa: float
    speed: float

    @property
    def omega(self) -> float:
        return float(np.sqrt(self.kappa) * self.speed)

    def v(self, t):
        t = np.asarray(t, dtype=float)
        w = self.omega
        if self.kappa == 0.0:
            return 0.5 * t
        if w < SERIES_SWITCH:
            return t * _sin_over(w * t) / (2.0 * _sin_over(2.0 * w))
        return np.sin(w * t) / np.sin(2.0 * w)

    def vdot(self, t):
        t = np.asarray(t, dtype=float)
        w = self.omega
        if self.kappa == 0.0:
            return np.full_like(t, 0.5)
        if w < SERIES_SWITCH:
            return np.cos(w * t) / (2.0 * _sin_over(2.0 * w))
        return w * np.cos(w * t) / np.sin(2.0 * w)

    def vddot(self, t):
        return -self.kappa * self.speed**2 * self.v(t)


def v_profile(kappa: float, speed: float) -> JacobiProfile:
    if kappa < 0 or speed < 0:
        raise DomainViolation("curvature and speed must be nonnegative")
    if kappa > 0 and 2.0 * np.sqrt(kappa) * speed >= np.pi:
        raise DomainViolation("2*sqrt(kappa)*speed reaches pi: conjugate points")
    return JacobiProfile(float(kappa), float(speed))


def profiles(frame: ParallelFrame) -> list:
    return [v_profile(k, frame.speed) for k in frame.kappas]


@dataclass(frozen=True)
class TransferDiag:
    entries: np.ndarray

    def __matmul__(self, v):
        return self.entries * np.asarray(v)

    def as_matrix(self) -> np.ndarray:
        return np.diag(self.entries)


def transfer_matrix(frame: ParallelFrame) -> TransferDiag:
    """Diagonal gradient-transfer map with entries 1/(2 v_a(1))."""
    return TransferDiag(np.array([1.0 / (2.0 * float(p.v(1.0))) for p in profiles(frame)]))


def jacobi_closed_form(frame: ParallelFrame, endpoint: str, alpha: int, t):
    """J_{x^a}(t) = v_a(1-t) E_a(t) or J_{y^a}(t) = v_a(1+t) E_a(t), ambient (..., D)."""
    t = np.asarray(t, dtype=float)
    prof = v_profile(frame.kappas[alpha], frame.speed)
    arg = 1.0 - t if endpoint == "x" else 1.0 + t
    if endpoint not in ("x", "y"):
        raise ValueError("endpoint must be 'x' or 'y'")
    return prof.v(arg)[..., None] * frame.E(t)[..., alpha, :]


# ---------------------------------------------------------------------------
# finite-difference boundary value solver for phi'' + k phi + s(t) = 0


def _fd_solve(k, src, left, right, n):
    t = np.linspace(-1.0, 1.0, n + 1)
    h = 2.0 / n
    S = np.atleast_2d(src(t[1:-1]))  # (m, n-1)
    m = S.shape[0]
    k = np.broadcast_to(np.asarray(k, dtype=float), (m,))
    left = np.broadcast_to(np.asarray(left, dtype=float), (m,))
    right = np.broadcast_to(np.asarray(right, dtype=float), (m,))
    out = np.empty((m, n + 1))
    for i in range(m):
        ab = np.empty((3, n - 1))
        ab[0, :] = 1.0
        ab[2, :] = 1.0
        ab[1, :] = -2.0 + k[i] * h * h
        rhs = -h * h * S[i]
        rhs[0] -= left[i]
        rhs[-1] -= right[i]
        out[i, 1:-1] = solve_banded((1, 1), ab, rhs)
        out[i, 0], out[i, -1] = left[i], right[i]
    return t, out


def solve_linear_bvp(k, source, left=0.0, right=0.0, n: int = 400, levels: int = 3):
    """Solve phi'' + k phi + s = 0 on [-1, 1] with Dirichlet data, batched.

    ``k``, ``left``, ``right`` broadcast against the leading axis of
    ``source(t)`` (shape (m, len(t))).  Second-order differences on grids n,
    2n, ..., Richardson-extrapolated ``levels - 1`` times; values returned on
    the coarsest grid.
    """
    sols = []
    t0 = None
    for lev in range(levels):
        t, phi = _fd_solve(k, source, left, right, n * 2**lev)
        if t0 is None:
            t0 = t
        sols.append(phi[:, :: 2**lev])
    for order in range(1, levels):
        f = 4.0**order
        sols = [(f * sols[i + 1] - sols[i]) / (f - 1.0) for i in range(len(sols) - 1)]
    return t0, sols[0]


def jacobi_bvp_oracle(frame: ParallelFrame, endpoint: str, alpha: int, n: int = 400):
    """Jacobi field from the frame-component ODE phi_g'' + kappa_g |Gdot|^2 phi_g = 0.

    Returns ``(t, comps)`` with comps[i, g] = <J(t_i), E_g(t_i)>.
    """
    N = frame.n
    left = np.zeros(N)
    right = np.zeros(N)
    (left if endpoint == "x" else right)[alpha] = 1.0
    k = frame.kappas * frame.speed**2
    t, phi = solve_linear_bvp(k, lambda tt: np.zeros((N, tt.size)), left, right, n=n)
    return t, phi.T
