"""Closed-form geometry of products of Euclidean spaces and round spheres.

Points are flat numpy arrays of ambient coordinates, one block per factor.
A Euclidean(dim) block holds ``dim`` reals; a Sphere(dim, kappa) block holds a
unit vector in R^(dim+1).  The sphere of curvature kappa has radius
1/sqrt(kappa); the radius only enters through the metric, which on a sphere
block is ``(1/kappa) * ambient_dot``.  Tangent vectors on a sphere block are
ambient vectors orthogonal to the base direction.

Every low-level routine here broadcasts over leading axes, so ``P`` may be a
single point of shape ``(D,)`` or a batch ``(..., D)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence, Union

import numpy as np

from .errors import BaseMismatch, ConfigError, DegenerateSpan, DomainViolation

_UNIT_TOL = 1e-12
# below this ambient angle a sphere block is treated as a zero-length segment
_ANGLE_EPS = 1e-15


@dataclass(frozen=True)
class Euclidean:
    dim: int

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise ConfigError(f"Euclidean dim must be a positive integer, got {self.dim!r}")

    @property
    def ambient_dim(self) -> int:
        return self.dim

    @property
    def kappa(self) -> float:
        return 0.0


@dataclass(frozen=True)
class Sphere:
    dim: int
    kappa: float = 1.0

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise ConfigError(f"Sphere dim must be a positive integer, got {self.dim!r}")
        if not (self.kappa > 0 and np.isfinite(self.kappa)):
            raise ConfigError(f"Sphere curvature must be positive, got {self.kappa!r}")

    @property
    def ambient_dim(self) -> int:
        return self.dim + 1


Factor = Union[Euclidean, Sphere]


@dataclass(frozen=True)
class ManifoldModel:
    """Riemannian product of Euclidean and round-sphere factors."""

    factors: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(self.factors))
        if not self.factors:
            raise ConfigError("a manifold needs at least one factor")
        for f in self.factors:
            if not isinstance(f, (Euclidean, Sphere)):
                raise ConfigError(f"unknown factor {f!r}")

    @cached_property
    def total_dim(self) -> int:
        return sum(f.dim for f in self.factors)

    @cached_property
    def ambient_dim(self) -> int:
        return sum(f.ambient_dim for f in self.factors)

    @cached_property
    def curvature_bound_A(self) -> float:
        return max((f.kappa for f in self.factors if isinstance(f, Sphere)), default=0.0)

    @cached_property
    def slices(self) -> tuple:
        out, start = [], 0
        for f in self.factors:
            out.append(slice(start, start + f.ambient_dim))
            start += f.ambient_dim
        return tuple(out)

    @cached_property
    def diameter_bound(self) -> float:
        """pi/sqrt(A); infinite for flat models."""
        A = self.curvature_bound_A
        return np.inf if A == 0 else np.pi / np.sqrt(A)

    def blocks(self):
        return zip(self.factors, self.slices)

    def point(self, *parts) -> np.ndarray:
        """Assemble a point from per-factor coordinates (sphere parts are normalised)."""
        if len(parts) != len(self.factors):
            raise ValueError(f"expected {len(self.factors)} factor coordinates, got {len(parts)}")
        out = []
        for f, part in zip(self.factors, parts):
            part = np.atleast_1d(np.asarray(part, dtype=float))
            if part.shape != (f.ambient_dim,):
                raise ValueError(f"factor {f} expects {f.ambient_dim} coordinates, got {part.shape}")
            if isinstance(f, Sphere):
                part = part / np.linalg.norm(part)
            out.append(part)
        return np.concatenate(out)

    def check_point(self, p, tol: float = _UNIT_TOL) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        if p.shape[-1] != self.ambient_dim:
            raise ValueError(f"point has {p.shape[-1]} coordinates, model needs {self.ambient_dim}")
        for f, sl in self.blocks():
            if isinstance(f, Sphere):
                err = np.abs(np.linalg.norm(p[..., sl], axis=-1) - 1.0)
                if np.any(err > tol):
                    raise DomainViolation(f"sphere block off the unit sphere by {err.max():.3g}")
        return p

    def project_tangent(self, p, v) -> np.ndarray:
        """Orthogonal projection of an ambient vector onto T_p."""
        v = np.array(v, dtype=float, copy=True)
        for f, sl in self.blocks():
            if isinstance(f, Sphere):
                b = p[..., sl]
                v[..., sl] -= np.sum(v[..., sl] * b, axis=-1, keepdims=True) * b
        return v

    def tangent_basis(self, p) -> np.ndarray:
        """Metric-orthonormal basis of T_p as rows of an (n, D) array.

        Deterministic: Euclidean blocks use the canonical basis; a sphere block
        drops the canonical axis most aligned with p and Gram-Schmidts the rest
        in index order.
        """
        p = np.asarray(p, dtype=float)
        rows = []
        for f, sl in self.blocks():
            if isinstance(f, Euclidean):
                for i in range(f.dim):
                    e = np.zeros(self.ambient_dim)
                    e[sl.start + i] = 1.0
                    rows.append(e)
                continue
            b = p[sl]
            skip = int(np.argmax(np.abs(b)))
            local = []
            for i in range(f.ambient_dim):
                if i == skip:
                    continue
                w = -b[i] * b
                w[i] += 1.0
                for q in local:
                    w -= (w @ q) * q
                local.append(w / np.linalg.norm(w))
            for q in local:
                e = np.zeros(self.ambient_dim)
                e[sl] = np.sqrt(f.kappa) * q
                rows.append(e)
        return np.array(rows)

    def to_config(self) -> list:
        out = []
        for f in self.factors:
            if isinstance(f, Sphere):
                out.append({"type": "sphere", "dim": f.dim, "kappa": float(f.kappa)})
            else:
                out.append({"type": "euclidean", "dim": f.dim})
        return out

    @classmethod
    def from_config(cls, factors: Sequence[dict]) -> "ManifoldModel":
        """Build from ``[{type="sphere", dim=2, kappa=1.0}, {type="euclidean", dim=1}]``."""
        out = []
        for spec in factors:
            if not isinstance(spec, dict):
                raise ConfigError(f"factor spec must be a table, got {spec!r}")
            spec = dict(spec)
            kind = spec.pop("type", None)
            if kind == "euclidean":
                allowed = {"dim"}
            elif kind == "sphere":
                allowed = {"dim", "kappa"}
            else:
                raise ConfigError(f"unknown factor type {kind!r}")
            extra = set(spec) - allowed
            if extra:
                raise ConfigError(f"unknown keys for {kind} factor: {sorted(extra)}")
            if "dim" not in spec:
                raise ConfigError(f"{kind} factor needs a dim")
            out.append(Euclidean(spec["dim"]) if kind == "euclidean" else Sphere(spec["dim"], float(spec.get("kappa", 1.0))))
        return cls(tuple(out))


@dataclass(frozen=True, eq=False)
class TangentVec:
    """A tangent vector in ambient representation together with its base point."""

    base: np.ndarray
    vec: np.ndarray

    def __add__(self, other: "TangentVec") -> "TangentVec":
        _same_base(self, other)
        return TangentVec(self.base, self.vec + other.vec)

    def __sub__(self, other: "TangentVec") -> "TangentVec":
        _same_base(self, other)
        return TangentVec(self.base, self.vec - other.vec)

    def __mul__(self, s: float) -> "TangentVec":
        return TangentVec(self.base, s * self.vec)

    __rmul__ = __mul__

    def __neg__(self) -> "TangentVec":
        return TangentVec(self.base, -self.vec)


def tangent(M: ManifoldModel, p, v) -> TangentVec:
    """Wrap ``v`` as a tangent vector at ``p`` (projected onto T_p)."""
    p = M.check_point(p)
    return TangentVec(p, M.project_tangent(p, v))


def _same_base(*vs: TangentVec, tol: float = 1e-12):
    b0 = vs[0].base
    for v in vs[1:]:
        if v.base is not b0 and (v.base.shape != b0.shape or np.max(np.abs(v.base - b0)) > tol):
            raise BaseMismatch("tangent vectors live at different base points")


# ---------------------------------------------------------------------------
# vectorised kernels on raw arrays


def inner(M: ManifoldModel, X, Y) -> np.ndarray:
    """Metric inner product of ambient tangent arrays (no base checks)."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    total = 0.0
    for f, sl in M.blocks():
        d = np.sum(X[..., sl] * Y[..., sl], axis=-1)
        total = total + (d / f.kappa if isinstance(f, Sphere) else d)
    return total


def exp_array(M: ManifoldModel, P, X) -> np.ndarray:
    P = np.asarray(P, dtype=float)
    X = np.asarray(X, dtype=float)
    out = np.empty(np.broadcast_shapes(P.shape, X.shape))
    for f, sl in M.blocks():
        p, x = P[..., sl], X[..., sl]
        if isinstance(f, Euclidean):
            out[..., sl] = p + x
            continue
        th = np.linalg.norm(x, axis=-1, keepdims=True)
        safe = np.where(th > _ANGLE_EPS, th, 1.0)
        sinc = np.where(th > _ANGLE_EPS, np.sin(th) / safe, 1.0)
        q = np.cos(th) * p + sinc * x
        out[..., sl] = q / np.linalg.norm(q, axis=-1, keepdims=True)
    return out


def _sphere_log(p, q):
    c = np.clip(np.sum(p * q, axis=-1, keepdims=True), -1.0, 1.0)
    w = q - c * p
    s = np.linalg.norm(w, axis=-1, keepdims=True)
    th = np.arctan2(s, c)
    scale = np.where(s > _ANGLE_EPS, th / np.where(s > _ANGLE_EPS, s, 1.0), 1.0)
    return scale * w, th[..., 0], c[..., 0]


def log_array(M: ManifoldModel, P, Q, check: bool = True) -> np.ndarray:
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    out = np.empty(np.broadcast_shapes(P.shape, Q.shape))
    for f, sl in M.blocks():
        if isinstance(f, Euclidean):
            out[..., sl] = Q[..., sl] - P[..., sl]
            continue
        v, th, c = _sphere_log(P[..., sl], Q[..., sl])
        if check and np.any(th > np.pi - 1e-9):
            raise DomainViolation("antipodal points on a sphere factor")
        out[..., sl] = v
    return out


def dist_array(M: ManifoldModel, P, Q) -> np.ndarray:
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    sq = 0.0
    for f, sl in M.blocks():
        if isinstance(f, Euclidean):
            sq = sq + np.sum((Q[..., sl] - P[..., sl]) ** 2, axis=-1)
        else:
            _, th, _ = _sphere_log(P[..., sl], Q[..., sl])
            sq = sq + th**2 / f.kappa
    return np.sqrt(sq)


def transport_between(M: ManifoldModel, P, Q, X) -> np.ndarray:
    """Parallel transport of X in T_P along the minimizing geodesic P -> Q.

    Sphere blocks rotate the component along the direction of travel in the
    plane (P, direction); the orthogonal complement is unchanged.  Zero-length
    blocks are the identity.
    """
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    X = np.asarray(X, dtype=float)
    out = np.array(np.broadcast_to(X, np.broadcast_shapes(P.shape, Q.shape, X.shape)), copy=True)
    for f, sl in M.blocks():
        if isinstance(f, Euclidean):
            continue
        p, q, x = P[..., sl], Q[..., sl], X[..., sl]
        v, th, _ = _sphere_log(p, q)
        moving = th > _ANGLE_EPS
        u = v / np.where(moving, th, 1.0)[..., None]
        a = np.sum(x * u, axis=-1, keepdims=True)
        t = th[..., None]
        rot = a * ((np.cos(t) - 1.0) * u - np.sin(t) * p)
        out[..., sl] = x + np.where(moving[..., None], rot, 0.0)
    return out


def curvature_array(M: ManifoldModel, X, Y, Z) -> np.ndarray:
    """R(X,Y)Z blockwise; a sphere block gives (Y.Z) X - (X.Z) Y in ambient dots."""
    X, Y, Z = (np.asarray(a, dtype=float) for a in (X, Y, Z))
    out = np.zeros(np.broadcast_shapes(X.shape, Y.shape, Z.shape))
    for f, sl in M.blocks():
        if isinstance(f, Euclidean):
            continue
        x, y, z = X[..., sl], Y[..., sl], Z[..., sl]
        out[..., sl] = np.sum(y * z, axis=-1, keepdims=True) * x - np.sum(x * z, axis=-1, keepdims=True) * y
    return out


# ---------------------------------------------------------------------------
# public operations


def metric_inner(M: ManifoldModel, X: TangentVec, Y: TangentVec) -> float:
    _same_base(X, Y)
    return float(inner(M, X.vec, Y.vec))


def norm(M: ManifoldModel, X: TangentVec) -> float:
    return float(np.sqrt(max(inner(M, X.vec, X.vec), 0.0)))


def exp_map(M: ManifoldModel, p, X: TangentVec) -> np.ndarray:
    p = M.check_point(p)
    _same_base(TangentVec(p, X.vec), X)
    return exp_array(M, p, X.vec)


def log_map(M: ManifoldModel, p, q) -> TangentVec:
    """Inverse of exp_map inside the injectivity region required by the diameter bound."""
    p = M.check_point(p)
    q = M.check_point(q)
    d = float(dist_array(M, p, q))
    if d >= M.diameter_bound:
        raise DomainViolation(f"distance {d:.6g} is not below pi/sqrt(A) = {M.diameter_bound:.6g}")
    return TangentVec(p, log_array(M, p, q))


def distance(M: ManifoldModel, p, q) -> float:
    return float(dist_array(M, M.check_point(p), M.check_point(q)))


def parallel_transport(M: ManifoldModel, segment, X: TangentVec, t0: float, t1: float) -> TangentVec:
    """Transport X from segment(t0) to segment(t1) along a GeodesicSegment."""
    for t in (t0, t1):
        if not -1.0 <= t <= 1.0:
            raise DomainViolation(f"curve parameter {t} outside [-1, 1]")
    start = segment.point(t0)
    if np.max(np.abs(start - X.base)) > 1e-10:
        raise BaseMismatch("vector is not based at the segment point for t0")
    return TangentVec(segment.point(t1), segment.transport(X.vec, t0, t1))


def curvature_op(M: ManifoldModel, X: TangentVec, Y: TangentVec, Z: TangentVec) -> TangentVec:
    _same_base(X, Y, Z)
    return TangentVec(X.base, curvature_array(M, X.vec, Y.vec, Z.vec))


def sectional_curvature(M: ManifoldModel, X: TangentVec, Y: TangentVec) -> float:
    _same_base(X, Y)
    xx = inner(M, X.vec, X.vec)
    yy = inner(M, Y.vec, Y.vec)
    xy = inner(M, X.vec, Y.vec)
    den = xx * yy - xy**2
    if den <= 1e-14 * max(xx * yy, 1e-300):
        raise DegenerateSpan("sectional curvature needs two independent vectors")
    num = inner(M, curvature_array(M, X.vec, Y.vec, Y.vec), X.vec)
    return float(num / den)


def random_point(M: ManifoldModel, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    parts = []
    for f in M.factors:
        v = rng.standard_normal(f.ambient_dim)
        parts.append(v / np.linalg.norm(v) if isinstance(f, Sphere) else scale * v)
    return np.concatenate(parts)


def random_tangent(M: ManifoldModel, p, rng: np.random.Generator, scale: float = 1.0) -> TangentVec:
    return tangent(M, p, scale * rng.standard_normal(M.ambient_dim))
