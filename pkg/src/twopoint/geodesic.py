"""Geodesic segments on [-1, 1] and their parallel curvature eigenframes."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DegenerateSegment, DomainViolation
from .geometry import (
    ManifoldModel,
    curvature_array,
    dist_array,
    exp_array,
    inner,
    log_array,
    transport_between,
)

# relative tolerance used to group numerically repeated eigenvalues
_EIG_CLUSTER = 1e-9


@dataclass(frozen=True, eq=False)
class GeodesicSegment:
    """Constant-speed minimizing geodesic with Gamma(-1) = x and Gamma(1) = y."""

    manifold: ManifoldModel
    x: np.ndarray
    y: np.ndarray
    initial: np.ndarray  # log_x(y); Gamma(t) = exp_x((1+t)/2 * initial)

    @cached_property
    def speed(self) -> float:
        return 0.5 * float(np.sqrt(inner(self.manifold, self.initial, self.initial)))

    @property
    def length(self) -> float:
        return 2.0 * self.speed

    def point(self, t):
        t = np.asarray(t, dtype=float)
        s = (1.0 + t)[..., None] / 2.0
        return exp_array(self.manifold, self.x, s * self.initial)

    def velocity(self, t):
        """Gamma-dot(t) in ambient representation, shape (..., D)."""
        pts = self.point(t)
        return transport_between(self.manifold, self.x, pts, 0.5 * self.initial)

    def transport(self, X, t0: float, t1: float):
        """Parallel transport of X from Gamma(t0) to Gamma(t1)."""
        return transport_between(self.manifold, self.point(t0), self.point(t1), X)

    def reversed(self) -> "GeodesicSegment":
        return connect(self.manifold, self.y, self.x)


def connect(M: ManifoldModel, x, y) -> GeodesicSegment:
    x = M.check_point(x)
    y = M.check_point(y)
    d = float(dist_array(M, x, y))
    if d == 0.0 or d < 1e-14:
        raise DegenerateSegment("x and y coincide")
    if d >= M.diameter_bound:
        raise DomainViolation(f"distance {d:.6g} is not below pi/sqrt(A) = {M.diameter_bound:.6g}")
    return GeodesicSegment(M, x, y, log_array(M, x, y))


def _householder_complement(e: np.ndarray) -> np.ndarray:
    """Columns form an orthonormal basis of the complement of the unit vector e."""
    n = e.size
    s = 1.0 if e[0] >= 0 else -1.0
    v = e.copy()
    v[0] += s
    H = np.eye(n) - 2.0 * np.outer(v, v) / (v @ v)
    return H[:, 1:]


def _canonical_eigenbasis(S: np.ndarray):
    """Ascending eigenpairs of symmetric S, with repeated eigenvalues given a
    basis that depends only on the eigenspace (Gram-Schmidt of the projected
    canonical basis)."""
    w, V = np.linalg.eigh(S)
    scale = max(1.0, float(np.max(np.abs(w)))) if w.size else 1.0
    out_w, out_V = [], []
    i = 0
    while i < len(w):
        j = i + 1
        while j < len(w) and w[j] - w[i] <= _EIG_CLUSTER * scale:
            j += 1
        block = V[:, i:j]
        P = block @ block.T
        basis = []
        for k in range(S.shape[0]):
            q = P[:, k].copy()
            for b in basis:
                q -= (q @ b) * b
            nq = np.linalg.norm(q)
            if nq > 1e-6:
                basis.append(q / nq)
            if len(basis) == j - i:
                break
        out_V.extend(basis)
        out_w.extend([float(np.mean(w[i:j]))] * (j - i))
        i = j
    return np.array(out_w), np.array(out_V).T


@dataclass(frozen=True, eq=False)
class ParallelFrame:
    """Parallel orthonormal frame diagonalising R(., Gamma-dot) Gamma-dot.

    ``E0`` holds the frame at x (row alpha = E_alpha(-1)); ``kappas`` are the
    eigenvalues divided by speed**2; ``c[a, b, g] = <R(E_a, Gdot) E_b, E_g>``.
    Indices are 0-based in code: frame index 0 is the direction of travel.
    """

    segment: GeodesicSegment
    E0: np.ndarray
    kappas: np.ndarray
    c: np.ndarray

    @property
    def n(self) -> int:
        return self.E0.shape[0]

    @property
    def speed(self) -> float:
        return self.segment.speed

    @property
    def manifold(self) -> ManifoldModel:
        return self.segment.manifold

    def E(self, t):
        """Frame at parameter(s) t, shape (..., n, D)."""
        t = np.asarray(t, dtype=float)
        pts = self.segment.point(t)
        return transport_between(self.manifold, self.segment.x, pts[..., None, :], self.E0)

    def components(self, t, X):
        """Frame components <X, E_g(t)> of ambient tangent arrays X (..., D)."""
        return inner(self.manifold, np.asarray(X)[..., None, :], self.E(t))

    def curvature_constants_at(self, t: float) -> np.ndarray:
        E = self.E(t)
        G = self.segment.velocity(t)
        R = curvature_array(self.manifold, E[:, None, :], G, E[None, :, :])  # R(E_a, G) E_b
        return inner(self.manifold, R[:, :, None, :], E[None, None, :, :])

    def eigen_residual(self, t: float) -> float:
        """max |<R(E_a, Gdot) Gdot, E_b> - kappa_a |Gdot|^2 delta_ab| at t."""
        E = self.E(t)
        G = self.segment.velocity(t)
        R = curvature_array(self.manifold, E, G, G)
        S = inner(self.manifold, R[:, None, :], E[None, :, :])
        return float(np.max(np.abs(S - np.diag(self.kappas) * self.speed**2)))

    def orthonormality_residual(self, t: float) -> float:
        E = self.E(t)
        G = inner(self.manifold, E[:, None, :], E[None, :, :])
        return float(np.max(np.abs(G - np.eye(self.n))))

    def to_dict(self, ts=(-1.0, 0.0, 1.0)) -> dict:
        return {
            "kappas": self.kappas.tolist(),
            "speed": self.speed,
            "c": self.c.tolist(),
            "E": {repr(float(t)): self.E(t).tolist() for t in ts},
        }


def build_frame(segment: GeodesicSegment) -> ParallelFrame:
    M = segment.manifold
    if segment.speed <= 0:
        raise DegenerateSegment("frame needs a nondegenerate segment")
    B = M.tangent_basis(segment.x)  # rows orthonormal in the metric
    G = segment.velocity(-1.0)
    g = inner(M, B, G)  # coefficients of Gdot in B
    e1 = g / np.linalg.norm(g)
    R = curvature_array(M, B, G, G)
    S = inner(M, R[:, None, :], B[None, :, :])
    S = 0.5 * (S + S.T)
    Q = _householder_complement(e1)
    w, V = _canonical_eigenbasis(Q.T @ S @ Q)
    coeffs = np.column_stack([e1, Q @ V]) if V.size else e1[:, None]
    E0 = coeffs.T @ B
    kap = np.concatenate([[0.0], w / segment.speed**2])
    kap[np.abs(kap) < 1e-13] = 0.0
    frame = ParallelFrame(segment, E0, kap, np.zeros((0,)))
    object.__setattr__(frame, "c", frame.curvature_constants_at(-1.0))
    return frame


def curvature_constants(frame: ParallelFrame, audit_ts=(-0.5, 0.0, 0.5, 1.0), tol: float = 1e-10) -> np.ndarray:
    """c_{abg}, with an audit that they stay constant along the segment."""
    for t in audit_ts:
        drift = np.max(np.abs(frame.curvature_constants_at(t) - frame.c)) if frame.c.size else 0.0
        if drift > tol:
            raise AssertionError(f"curvature constants drift by {drift:.3g} at t={t}")
    return frame.c
