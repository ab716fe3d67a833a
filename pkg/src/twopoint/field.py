"""Scalar fields on chart grids over convex model-space domains.

A domain is a product of parts: intervals (flat, one chart axis), rectangles
(two intervals sharing one Euclidean(2) factor), flat disks and spherical caps
(polar charts centred at the pole).  Grids carry a symmetric finite-volume
discretisation of -Laplacian (stiffness K, diagonal mass M) so that K u = M f
is the discrete form of -Lap u = f at interior nodes.

Off-node values and derivatives come from tensor-product local Lagrange
interpolation.  Polar charts are extended across the pole with the reflection
u(-r, theta) = u(r, theta + pi) and wrap periodically in theta.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field as dc_field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, DomainViolation, GridMismatch
from .geometry import Euclidean, ManifoldModel, Sphere, TangentVec, exp_array, inner

# ---------------------------------------------------------------------------
# domain specifications


@dataclass(frozen=True)
class Interval:
    L: float

    kind = "interval"

    def __post_init__(self):
        if not self.L > 0:
            raise ConfigError("interval half-length must be positive")

    @property
    def diameter(self) -> float:
        return 2.0 * self.L

    def factor(self):
        return Euclidean(1)


@dataclass(frozen=True)
class Rectangle:
    Lx: float
    Ly: float

    kind = "rectangle"

    def __post_init__(self):
        if not (self.Lx > 0 and self.Ly > 0):
            raise ConfigError("rectangle half-widths must be positive")

    @property
    def diameter(self) -> float:
        return 2.0 * float(np.hypot(self.Lx, self.Ly))

    def factor(self):
        return Euclidean(2)


@dataclass(frozen=True)
class Disk:
    R: float

    kind = "disk"

    def __post_init__(self):
        if not self.R > 0:
            raise ConfigError("disk radius must be positive")

    @property
    def diameter(self) -> float:
        return 2.0 * self.R

    def factor(self):
        return Euclidean(2)


@dataclass(frozen=True)
class SphericalCap:
    r0: float
    kappa: float = 1.0

    kind = "spherical_cap"

    def __post_init__(self):
        if not (self.r0 > 0 and self.kappa > 0):
            raise ConfigError("cap radius and curvature must be positive")
        if self.r0 >= np.pi / (2.0 * np.sqrt(self.kappa)):
            raise DomainViolation("cap radius must be below pi/(2 sqrt(kappa)) for convexity")

    @property
    def diameter(self) -> float:
        return 2.0 * self.r0

    def factor(self):
        return Sphere(2, self.kappa)


_PARTS = {"interval": Interval, "rectangle": Rectangle, "disk": Disk, "spherical_cap": SphericalCap}


@dataclass(frozen=True)
class DomainSpec:
    """Product of convex parts; a single part is a product of length one."""

    components: tuple

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise ConfigError("domain needs at least one component")
        object.__setattr__(self, "components", comps)
        A = max((c.kappa for c in comps if isinstance(c, SphericalCap)), default=0.0)
        if A > 0 and self.diameter >= np.pi / np.sqrt(A):
            raise DomainViolation(f"domain diameter {self.diameter:.4g} is not below pi/sqrt(A)")

    @property
    def diameter(self) -> float:
        return float(np.sqrt(sum(c.diameter**2 for c in self.components)))

    @cached_property
    def manifold(self) -> ManifoldModel:
        return ManifoldModel(tuple(c.factor() for c in self.components))

    def check_manifold(self, M: ManifoldModel):
        if M.factors != self.manifold.factors:
            raise GridMismatch(f"domain lives on {self.manifold.factors}, not {M.factors}")

    def to_config(self) -> dict:
        out = []
        for c in self.components:
            d = {"kind": c.kind}
            d.update({k: float(v) for k, v in c.__dict__.items()})
            out.append(d)
        return {"components": out}

    @classmethod
    def from_config(cls, spec) -> "DomainSpec":
        comps = spec.get("components") if isinstance(spec, dict) and "components" in spec else [spec]
        out = []
        for c in comps:
            c = dict(c)
            kind = c.pop("kind", None)
            if kind not in _PARTS:
                raise ConfigError(f"unknown domain kind {kind!r}")
            try:
                out.append(_PARTS[kind](**{k: float(v) for k, v in c.items()}))
            except TypeError as exc:
                raise ConfigError(f"bad parameters for {kind}: {sorted(c)}") from exc
        return cls(tuple(out))


def interval(L):
    return DomainSpec((Interval(L),))


def rectangle(Lx, Ly):
    return DomainSpec((Rectangle(Lx, Ly),))


def disk(R):
    return DomainSpec((Disk(R),))


def spherical_cap(r0, kappa=1.0):
    return DomainSpec((SphericalCap(r0, kappa),))


def product(*domains: DomainSpec) -> DomainSpec:
    return DomainSpec(tuple(c for d in domains for c in d.components))


# ---------------------------------------------------------------------------
# one-dimensional Lagrange weights on unit-spaced stencils


class _Lagrange:
    def __init__(self, m: int):
        self.m = m
        V = np.vander(np.arange(m, dtype=float), m, increasing=True)
        self.C = np.linalg.inv(V)  # coefficient j of basis polynomial k is C[j, k]
        self.j = np.arange(m, dtype=float)

    def weights(self, xi):
        """(w0, w1, w2), each (..., m), for local coordinates xi in stencil units."""
        xi = np.asarray(xi, dtype=float)[..., None]
        j = self.j
        P0 = xi**j
        P1 = j * np.where(j >= 1, xi ** np.maximum(j - 1, 0), 0.0)
        P2 = j * (j - 1) * np.where(j >= 2, xi ** np.maximum(j - 2, 0), 0.0)
        return P0 @ self.C, P1 @ self.C, P2 @ self.C


# ---------------------------------------------------------------------------
# grid parts


class _Axis:
    """Uniform closed interval [-L, L] with N cells; one chart axis."""

    chart_dim = 1

    def __init__(self, L: float, N: int):
        if N < 2:
            raise ConfigError("an interval needs at least 2 cells")
        self.L, self.N = float(L), int(N)
        self.h = 2.0 * self.L / self.N
        self.x = -self.L + self.h * np.arange(self.N + 1)

    @property
    def n_nodes(self):
        return self.N + 1

    @property
    def reg_shape(self):
        return (self.N + 1,)

    @property
    def spacing(self):
        return self.h

    def boundary(self):
        b = np.zeros(self.n_nodes, bool)
        b[[0, -1]] = True
        return b

    def node_chart(self):
        return self.x[:, None]

    def to_reg(self, v):
        return v

    def matrices(self):
        h, n = self.h, self.n_nodes
        main = np.full(n, 2.0 / h)
        main[[0, -1]] = 1.0 / h
        K = sp.diags([np.full(n - 1, -1.0 / h), main, np.full(n - 1, -1.0 / h)], [-1, 0, 1], format="csr")
        m = np.full(n, h)
        m[[0, -1]] = h / 2
        return K, m

    def refine_map(self):
        return 2 * np.arange(self.n_nodes)

    def refined(self):
        return _Axis(self.L, 2 * self.N)

    def inside(self, q, tol):
        return np.abs(q[..., 0]) <= self.L * (1 + tol) + tol

    def interior(self, q, margin):
        return np.abs(q[..., 0]) < self.L - margin

    def dist_to_boundary(self, q):
        return self.L - np.abs(q[..., 0])

    def stencil(self, q, lag):
        m = lag.m
        xi = (q[..., 0] + self.L) / self.h
        start = np.clip(np.floor(xi).astype(int) - (m // 2 - 1), 0, self.N - m + 1)
        w0, w1, w2 = lag.weights(xi - start)
        idx = start[..., None] + np.arange(m)
        return idx, {(0,): w0, (1,): w1 / self.h, (2,): w2 / self.h**2}

    def sample(self, u):
        return (-self.L + 2 * self.L * u[..., 0])[..., None]

    def boundary_sample(self, u):
        return np.where(u[..., 0] < 0.5, -self.L, self.L)[..., None]

    def clamp(self, q):
        return np.clip(q, -self.L, self.L)


class _Polar:
    """Pole node plus Nr rings of Nt nodes at geodesic radius i*dr; kappa = 0 is the flat disk."""

    chart_dim = 2

    def __init__(self, R: float, kappa: float, Nr: int, Nt: int):
        if Nr < 3 or Nt < 4 or Nt % 2:
            raise ConfigError("polar grids need Nr >= 3 and an even Nt >= 4")
        self.R, self.kappa, self.Nr, self.Nt = float(R), float(kappa), int(Nr), int(Nt)
        self.dr = self.R / self.Nr
        self.dt = 2 * np.pi / self.Nt
        self.r = self.dr * np.arange(self.Nr + 1)
        self.theta = self.dt * np.arange(self.Nt)
        self.sk = np.sqrt(self.kappa)

    # metric helpers: g = dr^2 + J(r)^2 dtheta^2
    def J(self, r):
        return np.sin(self.sk * r) / self.sk if self.kappa > 0 else np.asarray(r, dtype=float)

    def dJ(self, r):
        return np.cos(self.sk * r) if self.kappa > 0 else np.ones_like(np.asarray(r, dtype=float))

    @property
    def n_nodes(self):
        return 1 + self.Nr * self.Nt

    @property
    def reg_shape(self):
        return (self.Nr + 1, self.Nt)

    @property
    def spacing(self):
        return self.dr

    def boundary(self):
        b = np.zeros(self.n_nodes, bool)
        b[1 + (self.Nr - 1) * self.Nt:] = True
        return b

    def node_chart(self):
        rr, tt = np.meshgrid(self.r[1:], self.theta, indexing="ij")
        q = np.column_stack([rr.ravel(), tt.ravel()])
        return np.vstack([[0.0, 0.0], q])

    def to_reg(self, v):
        """(..., n_nodes) -> (..., Nr+1, Nt) with the pole row replicated."""
        v = np.asarray(v)
        pole = np.repeat(v[..., :1], self.Nt, axis=-1)
        rings = v[..., 1:].reshape(v.shape[:-1] + (self.Nr, self.Nt))
        return np.concatenate([pole[..., None, :], rings], axis=-2)

    def _node(self, i, j):
        return 1 + (i - 1) * self.Nt + (j % self.Nt)

    def matrices(self):
        Nr, Nt, dr, dt = self.Nr, self.Nt, self.dr, self.dt
        rows, cols, vals = [], [], []

        def edge(a, b, w):
            rows.extend([a, b, a, b])
            cols.extend([a, b, b, a])
            vals.extend([w, w, -w, -w])

        wp = self.J(dr / 2) * dt / dr
        for j in range(Nt):
            edge(0, self._node(1, j), wp)
        for i in range(1, Nr + 1):
            wa = dr / (self.J(self.r[i]) * dt)
            if i == Nr:
                wa *= 0.5  # boundary ring owns half a control volume
            for j in range(Nt):
                a = self._node(i, j)
                edge(a, self._node(i, j + 1), wa)
                if i < Nr:
                    edge(a, self._node(i + 1, j), self.J(self.r[i] + dr / 2) * dt / dr)
        K = sp.csr_matrix((vals, (rows, cols)), shape=(self.n_nodes, self.n_nodes))
        m = np.empty(self.n_nodes)
        if self.kappa > 0:
            m[0] = 2 * np.pi * (1 - np.cos(self.sk * dr / 2)) / self.kappa
        else:
            m[0] = np.pi * (dr / 2) ** 2
        ring = self.J(self.r[1:]) * dr * dt
        ring[-1] *= 0.5
        m[1:] = np.repeat(ring, Nt)
        return K, m

    def refine_map(self):
        out = np.empty(self.n_nodes, int)
        out[0] = 0
        i, j = np.meshgrid(np.arange(1, self.Nr + 1), np.arange(self.Nt), indexing="ij")
        out[1:] = (1 + (2 * i - 1) * (2 * self.Nt) + 2 * j).ravel()
        return out

    def refined(self):
        return _Polar(self.R, self.kappa, 2 * self.Nr, 2 * self.Nt)

    # ambient maps
    def to_ambient(self, q):
        r, t = q[..., 0], q[..., 1]
        if self.kappa == 0:
            return np.stack([r * np.cos(t), r * np.sin(t)], axis=-1)
        s, c = np.sin(self.sk * r), np.cos(self.sk * r)
        return np.stack([s * np.cos(t), s * np.sin(t), c], axis=-1)

    def from_ambient(self, p):
        if self.kappa == 0:
            r = np.hypot(p[..., 0], p[..., 1])
        else:
            r = np.arctan2(np.hypot(p[..., 0], p[..., 1]), p[..., 2]) / self.sk
        t = np.mod(np.arctan2(p[..., 1], p[..., 0]), 2 * np.pi)
        return np.stack([r, t], axis=-1)

    def frame(self, q):
        """Orthonormal (e_r, e_theta) as ambient vectors, (..., 2, d)."""
        r, t = q[..., 0], q[..., 1]
        if self.kappa == 0:
            er = np.stack([np.cos(t), np.sin(t)], -1)
            et = np.stack([-np.sin(t), np.cos(t)], -1)
        else:
            c, s = np.cos(self.sk * r), np.sin(self.sk * r)
            er = self.sk * np.stack([c * np.cos(t), c * np.sin(t), -s], -1)
            et = self.sk * np.stack([-np.sin(t), np.cos(t), np.zeros_like(t)], -1)
        return np.stack([er, et], axis=-2)

    def cartesian_frame(self, p):
        """Orthonormal frame from the first two ambient axes; smooth through the pole."""
        if self.kappa == 0:
            return np.broadcast_to(np.eye(2), p.shape[:-1] + (2, 2)).copy()
        e = np.zeros(p.shape[:-1] + (2, 3))
        for k in range(2):
            w = -p[..., k:k + 1] * p
            w[..., k] += 1.0
            if k == 1:
                w -= np.sum(w * e[..., 0, :], -1, keepdims=True) * e[..., 0, :]
            e[..., k, :] = w / np.linalg.norm(w, axis=-1, keepdims=True)
        return self.sk * e

    def inside(self, q, tol):
        return q[..., 0] <= self.R * (1 + tol) + tol

    def interior(self, q, margin):
        return q[..., 0] < self.R - margin

    def dist_to_boundary(self, q):
        return self.R - q[..., 0]

    def stencil(self, q, lag):
        m = lag.m
        xr = q[..., 0] / self.dr
        sr = np.minimum(np.floor(xr).astype(int) - (m // 2 - 1), self.Nr - m + 1)
        xt = np.mod(q[..., 1], 2 * np.pi) / self.dt
        st = np.floor(xt).astype(int) - (m // 2 - 1)
        r0, r1, r2 = lag.weights(xr - sr)
        t0, t1, t2 = lag.weights(xt - st)
        i = sr[..., None, None] + np.arange(m)[:, None]
        j = st[..., None, None] + np.arange(m)[None, :]
        flip = i < 0
        row = np.abs(i)
        col = np.mod(j + np.where(flip, self.Nt // 2, 0), self.Nt)
        idx = (row * self.Nt + col).reshape(q.shape[:-1] + (m * m,))
        wr = [r0, r1 / self.dr, r2 / self.dr**2]
        wt = [t0, t1 / self.dt, t2 / self.dt**2]
        out = {}
        for a in range(3):
            for b in range(3 - a):
                out[(a, b)] = (wr[a][..., :, None] * wt[b][..., None, :]).reshape(idx.shape)
        return idx, out

    def sample(self, u):
        return np.stack([self.R * np.sqrt(u[..., 0]), 2 * np.pi * u[..., 1]], axis=-1)

    def boundary_sample(self, u):
        return np.stack([np.full(u.shape[:-1], self.R), 2 * np.pi * u[..., 1]], axis=-1)

    def clamp(self, q):
        # negative radius passes through the pole
        r, t = q[..., 0], q[..., 1]
        t = np.where(r < 0, t + np.pi, t)
        return np.stack([np.clip(np.abs(r), 0.0, self.R), np.mod(t, 2 * np.pi)], axis=-1)


# ---------------------------------------------------------------------------
# grids


def _make_parts(comp, res):
    res = tuple(int(v) for v in res)
    if isinstance(comp, Interval):
        return [(_Axis(comp.L, res[0]), 0)]
    if isinstance(comp, Rectangle):
        return [(_Axis(comp.Lx, res[0]), 0), (_Axis(comp.Ly, res[1]), 1)]
    if isinstance(comp, Disk):
        return [(_Polar(comp.R, 0.0, res[0], res[1]), 0)]
    return [(_Polar(comp.r0, comp.kappa, res[0], res[1]), 0)]


class Grid:
    """Tensor-product node set over a DomainSpec with FV matrices.

    ``resolution`` has one tuple per component: (N,) for intervals, (Nx, Ny)
    for rectangles, (Nr, Ntheta) for disks and caps.
    """

    def __init__(self, domain: DomainSpec, resolution):
        resolution = tuple(tuple(np.atleast_1d(r)) for r in resolution)
        if len(resolution) != len(domain.components):
            raise GridMismatch("one resolution entry per domain component is required")
        self.domain = domain
        self.resolution = resolution
        self.parts = []  # (part, ambient slice, chart slice)
        a0 = c0 = 0
        for comp, res in zip(domain.components, resolution):
            need = 1 if isinstance(comp, Interval) else 2
            if len(res) != need:
                raise GridMismatch(f"{comp.kind} needs {need} resolution numbers")
            for part, _ in _make_parts(comp, res):
                da = 1 if isinstance(part, _Axis) else (2 if part.kappa == 0 else 3)
                self.parts.append((part, slice(a0, a0 + da), slice(c0, c0 + part.chart_dim)))
                a0 += da
                c0 += part.chart_dim
        self.ambient_dim = a0
        self.chart_dim = c0
        self.manifold = domain.manifold

    @property
    def h(self) -> float:
        return max(p.spacing for p, _, _ in self.parts)

    @cached_property
    def shape(self):
        return tuple(p.n_nodes for p, _, _ in self.parts)

    @cached_property
    def n_nodes(self) -> int:
        return int(np.prod(self.shape))

    @cached_property
    def reg_shape(self):
        return tuple(s for p, _, _ in self.parts for s in p.reg_shape)

    @cached_property
    def boundary(self) -> np.ndarray:
        masks = [p.boundary() for p, _, _ in self.parts]
        out = ~masks[0]
        for m in masks[1:]:
            out = np.logical_and.outer(out, ~m)
        return ~np.ravel(out)

    @cached_property
    def interior_index(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary)

    @cached_property
    def matrices(self):
        mats = [p.matrices() for p, _, _ in self.parts]
        K = None
        for k in range(len(mats)):
            term = None
            for j, (Kj, mj) in enumerate(mats):
                factor = Kj if j == k else sp.diags(mj)
                term = factor if term is None else sp.kron(term, factor, format="csr")
            K = term if K is None else K + term
        m = mats[0][1]
        for _, mj in mats[1:]:
            m = np.multiply.outer(m, mj).ravel()
        return sp.csr_matrix(K), m

    @cached_property
    def part_matrices(self):
        return [p.matrices() for p, _, _ in self.parts]

    @cached_property
    def node_chart(self) -> np.ndarray:
        qs = [p.node_chart() for p, _, _ in self.parts]
        grids = np.meshgrid(*[np.arange(len(q)) for q in qs], indexing="ij")
        cols = [q[g.ravel()] for q, g in zip(qs, grids)]
        return np.concatenate(cols, axis=1)

    @cached_property
    def node_points(self) -> np.ndarray:
        return self.chart_to_ambient(self.node_chart)

    def chart_to_ambient(self, q):
        q = np.asarray(q, dtype=float)
        out = np.empty(q.shape[:-1] + (self.ambient_dim,))
        for part, asl, csl in self.parts:
            out[..., asl] = part.to_ambient(q[..., csl]) if isinstance(part, _Polar) else q[..., csl]
        return out

    def ambient_to_chart(self, p):
        p = np.asarray(p, dtype=float)
        out = np.empty(p.shape[:-1] + (self.chart_dim,))
        for part, asl, csl in self.parts:
            out[..., csl] = part.from_ambient(p[..., asl]) if isinstance(part, _Polar) else p[..., asl]
        return out

    def inside(self, q, tol: float = 1e-9):
        ok = np.ones(q.shape[:-1], bool)
        for part, _, csl in self.parts:
            ok &= part.inside(q[..., csl], tol)
        return ok

    def interior(self, q, margin: float = 0.0):
        ok = np.ones(q.shape[:-1], bool)
        for part, _, csl in self.parts:
            ok &= part.interior(q[..., csl], margin)
        return ok

    def dist_to_boundary(self, q):
        """Distance to the boundary of the product domain (min over parts)."""
        return np.min(np.stack([part.dist_to_boundary(q[..., csl]) for part, _, csl in self.parts]), axis=0)

    def clamp(self, q):
        q = np.array(q, dtype=float, copy=True)
        for part, _, csl in self.parts:
            q[..., csl] = part.clamp(q[..., csl])
        return q

    def sample_chart(self, u):
        """Map unit-cube samples (..., chart_dim) into the closed domain."""
        out = np.empty(u.shape)
        for part, _, csl in self.parts:
            out[..., csl] = part.sample(u[..., csl])
        return out

    def sample_boundary_chart(self, u, which):
        """As sample_chart but with part ``which`` pinned to its boundary."""
        out = self.sample_chart(u)
        part, _, csl = self.parts[which]
        out[..., csl] = part.boundary_sample(u[..., csl])
        return out

    def refined(self) -> "Grid":
        res = []
        for comp, r in zip(self.domain.components, self.resolution):
            res.append(tuple(2 * v for v in r))
        return Grid(self.domain, res)

    @cached_property
    def refine_map(self) -> np.ndarray:
        """Fine-grid flat index of every node of this grid."""
        fine = self.refined()
        maps = [p.refine_map() for p, _, _ in self.parts]
        fshape = fine.shape
        grids = np.meshgrid(*maps, indexing="ij")
        return np.ravel_multi_index(tuple(g.ravel() for g in grids), fshape)

    def to_reg(self, values):
        """Flat nodal values -> regular array of shape reg_shape (pole rows replicated)."""
        v = np.asarray(values).reshape(self.shape)
        ax = 0
        for part, _, _ in self.parts:
            nd = len(part.reg_shape)
            v = part.to_reg(np.moveaxis(v, ax, -1))
            v = np.moveaxis(v, list(range(-nd, 0)), list(range(ax, ax + nd)))
            ax += nd
        return v

    def describe(self) -> dict:
        kinds = []
        for p, _, _ in self.parts:
            kinds.append("uniform" if isinstance(p, _Axis) else ("polar_flat" if p.kappa == 0 else "polar_cap"))
        return {
            "domain": self.domain.to_config(),
            "resolution": [list(map(int, r)) for r in self.resolution],
            "shape": list(self.shape),
            "metric_kind": kinds,
        }


# ---------------------------------------------------------------------------
# fields


@dataclass(frozen=True, eq=False)
class BilinearForm:
    """Symmetric form with matrix entries in the metric-orthonormal basis ``basis`` (rows)."""

    manifold: ManifoldModel
    base: np.ndarray
    basis: np.ndarray
    matrix: np.ndarray

    def coords(self, X):
        return inner(self.manifold, np.asarray(X)[..., None, :], self.basis)

    def __call__(self, X, Y=None):
        a = self.coords(X)
        b = a if Y is None else self.coords(Y)
        return a @ self.matrix @ b

    def in_basis(self, B) -> np.ndarray:
        """Matrix of the form in another orthonormal basis (rows of B) of the same tangent space."""
        T = inner(self.manifold, B[:, None, :], self.basis[None, :, :])
        return T @ self.matrix @ T.T

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix))

    def asymmetry(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.T)))


@dataclass(frozen=True)
class Jet:
    """Values, orthonormal-frame gradients and Hessians at a batch of points."""

    value: np.ndarray
    grad: np.ndarray | None = None
    hess: np.ndarray | None = None
    basis: np.ndarray | None = None


class FieldBase:
    """Common query interface: subclasses supply ``values_at`` and ``jet``."""

    grid: Grid

    @property
    def domain(self) -> DomainSpec:
        return self.grid.domain

    @property
    def manifold(self) -> ManifoldModel:
        return self.grid.manifold

    def _charts(self, points, strict=False, allow_outside=False):
        p = np.asarray(points, dtype=float)
        if p.shape[-1] != self.grid.ambient_dim:
            raise GridMismatch(f"points need {self.grid.ambient_dim} ambient coordinates")
        q = self.grid.ambient_to_chart(p)
        if not allow_outside:
            ok = self.grid.interior(q) if strict else self.grid.inside(q)
            if not np.all(ok):
                where = "open domain" if strict else "domain closure"
                raise DomainViolation(f"{int(np.sum(~ok))} query point(s) outside the {where}")
        return p, q


class ScalarField(FieldBase):
    """Nodal values on a Grid with interpolation of order 3 (cubic) or 5."""

    def __init__(self, grid: Grid, values, order: int = 3, meta: dict | None = None):
        values = np.asarray(values, dtype=float).ravel()
        if values.size != grid.n_nodes:
            raise GridMismatch(f"expected {grid.n_nodes} nodal values, got {values.size}")
        if order not in (3, 5):
            raise ConfigError("interpolation order must be 3 or 5")
        self.grid = grid
        self.values = values
        self.values.setflags(write=False)
        self.order = order
        self.meta = dict(meta or {})
        self._lag = _Lagrange(order + 1)
        self._reg = grid.to_reg(values).ravel()
        self._strides = []
        stride = 1
        for part, _, _ in reversed(grid.parts):
            self._strides.insert(0, stride)
            stride *= int(np.prod(part.reg_shape))
        # near-pole radius below which derivatives use normal-coordinate differences
        self.pole_radius = 2.0
        self.fd_delta = 0.06

    @classmethod
    def from_function(cls, grid: Grid, func, order: int = 3, meta=None):
        """Sample ``func(points)`` (ambient (Q, D) -> (Q,)) at the nodes."""
        return cls(grid, func(grid.node_points), order=order, meta=meta)

    def with_values(self, values, meta=None) -> "ScalarField":
        return ScalarField(self.grid, values, order=self.order, meta=meta if meta is not None else self.meta)

    # -- interpolation -------------------------------------------------------
    def _stencils(self, q):
        idx, wts = [], []
        for part, _, csl in self.grid.parts:
            i, w = part.stencil(q[..., csl], self._lag)
            idx.append(i)
            wts.append(w)
        Q = q.shape[0]
        total = np.zeros((Q,) + tuple(i.shape[-1] for i in idx), dtype=np.int64)
        k = len(idx)
        for n, (i, s) in enumerate(zip(idx, self._strides)):
            shape = [Q] + [1] * k
            shape[n + 1] = i.shape[-1]
            total += (i * s).reshape(shape)
        return self._reg[total], wts

    @staticmethod
    def _contract(G, ws):
        out = G
        for w in reversed(ws):
            expand = w.reshape(w.shape[:1] + (1,) * (out.ndim - 2) + w.shape[1:])
            out = np.sum(out * expand, axis=-1)
        return out

    def _chart_jet(self, q, order):
        """value, chart gradient (Q, m), chart Hessian (Q, m, m)."""
        q = np.atleast_2d(q)
        G, wts = self._stencils(q)
        parts = self.grid.parts
        zero = [tuple(0 for _ in range(p.chart_dim)) for p, _, _ in parts]
        base = [w[z] for w, z in zip(wts, zero)]
        val = self._contract(G, base)
        if order == 0:
            return val, None, None
        # chart axis -> (part index, local axis)
        axes = [(n, a) for n, (p, _, _) in enumerate(parts) for a in range(p.chart_dim)]

        def unit(n, counts):
            ws = list(base)
            key = list(zero[n])
            for a in counts:
                key[a] += 1
            ws[n] = wts[n][tuple(key)]
            return ws

        m = len(axes)
        grad = np.empty((q.shape[0], m))
        for k, (n, a) in enumerate(axes):
            grad[:, k] = self._contract(G, unit(n, [a]))
        if order == 1:
            return val, grad, None
        hess = np.empty((q.shape[0], m, m))
        for k, (n, a) in enumerate(axes):
            for l in range(k, m):
                n2, b = axes[l]
                if n2 == n:
                    ws = unit(n, [a, b])
                else:
                    ws = list(base)
                    ka = list(zero[n]); ka[a] += 1
                    kb = list(zero[n2]); kb[b] += 1
                    ws[n] = wts[n][tuple(ka)]
                    ws[n2] = wts[n2][tuple(kb)]
                hess[:, k, l] = hess[:, l, k] = self._contract(G, ws)
        return val, grad, hess

    def values_at(self, points, allow_outside=False) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        flat = p.reshape(-1, p.shape[-1])
        _, q = self._charts(flat, allow_outside=allow_outside)
        if allow_outside:
            q = self.grid.clamp(q)
        return self._chart_jet(q, 0)[0].reshape(p.shape[:-1])

    def _near_pole(self, q):
        near = np.zeros(q.shape[0], bool)
        for part, _, csl in self.grid.parts:
            if isinstance(part, _Polar):
                near |= q[:, csl][:, 0] < self.pole_radius * part.dr
        return near

    def _frames(self, p, q, cartesian):
        """Orthonormal basis (Q, n, D) and chart scale factors (Q, n)."""
        Q = q.shape[0]
        basis = np.zeros((Q, self.grid.chart_dim, self.grid.ambient_dim))
        scale = np.ones((Q, self.grid.chart_dim))
        for part, asl, csl in self.grid.parts:
            if isinstance(part, _Axis):
                basis[:, csl.start, asl.start] = 1.0
                continue
            F = part.cartesian_frame(p[:, asl]) if cartesian else part.frame(q[:, csl])
            basis[:, csl, asl] = F
            scale[:, csl.start + 1] = part.J(q[:, csl.start])
        return basis, scale

    def jet(self, points, order: int = 2, strict: bool | None = None) -> Jet:
        """Covariant jet in a metric-orthonormal frame at each point.

        Away from polar centres the chart jet is converted with the polar
        Christoffel symbols; near a pole the gradient and Hessian are fourth-order
        differences along geodesics exp_p(t w) in a Cartesian-like frame.
        """
        strict = order >= 2 if strict is None else strict
        p = np.atleast_2d(np.asarray(points, dtype=float))
        p, q = self._charts(p, strict=strict)
        if order == 0:
            return Jet(self._chart_jet(q, 0)[0])
        near = self._near_pole(q)
        Q, n = q.shape[0], self.grid.chart_dim
        val = np.empty(Q)
        grad = np.empty((Q, n))
        hess = np.empty((Q, n, n)) if order >= 2 else None
        basis = np.empty((Q, n, self.grid.ambient_dim))
        far = ~near
        if np.any(far):
            v, g, H = self._chart_jet(q[far], order)
            B, s = self._frames(p[far], q[far], cartesian=False)
            val[far] = v
            grad[far] = g / s
            basis[far] = B
            if order >= 2:
                Hc = H.copy()
                for part, _, csl in self.grid.parts:
                    if isinstance(part, _Polar):
                        ir, it = csl.start, csl.start + 1
                        r = q[far][:, ir]
                        J, dJ = part.J(r), part.dJ(r)
                        Hc[:, ir, it] = Hc[:, it, ir] = H[:, ir, it] - (dJ / J) * g[:, it]
                        Hc[:, it, it] = H[:, it, it] + J * dJ * g[:, ir]
                hess[far] = Hc / (s[:, :, None] * s[:, None, :])
        if np.any(near):
            _, g_near, _ = self._chart_jet(q[near], 1)
        for n_k, k in enumerate(np.flatnonzero(near)):
            B, _ = self._frames(p[k:k + 1], q[k:k + 1], cartesian=True)
            v, g, H = self._fd_jet(p[k], q[k], B[0], order, g_near[n_k])
            val[k], grad[k], basis[k] = v, g, B[0]
            if order >= 2:
                hess[k] = H
        return Jet(val, grad, hess, basis)

    def _axis_rooms(self, q):
        """Distance to the boundary of the part owning each chart axis."""
        out = np.empty(self.grid.chart_dim)
        for part, _, csl in self.grid.parts:
            out[csl] = part.dist_to_boundary(q[csl][None])[0]
        return out

    def _fd_jet(self, p, q, B, order, chart_grad):
        """Fourth-order differences along exp_p(t w); step per direction kept inside the closure.

        Gradient components along directions with no room to step (axis parts
        sitting on their boundary) fall back to the chart derivative, which is
        exact there because the basis vector is the coordinate vector.
        """
        M = self.manifold
        n = B.shape[0]
        room = self._axis_rooms(q)
        pairs = [(a, b) for a in range(n) for b in range(a + 1, n)] if order >= 2 else []
        dirs = list(B) + [v for a, b in pairs for v in (B[a] + B[b], B[a] - B[b])]
        rooms = list(room) + [min(room[a], room[b]) for a, b in pairs for _ in (0, 1)]
        deltas = np.array([min(self.fd_delta, 0.45 * r) for r in rooms])
        usable = deltas > 1e-4
        steps = np.where(usable, deltas, 1.0)
        ts = np.array([-2, -1, 0, 1, 2], float)[None, :] * steps[:, None]
        pts = exp_array(M, p, ts[:, :, None] * np.array(dirs)[:, None, :])
        pts[~usable] = p
        f = self.values_at(pts, allow_outside=True)
        c1 = np.array([1, -8, 0, 8, -1]) / 12.0
        c2 = np.array([-1, 16, -30, 16, -1]) / 12.0
        d1 = (f @ c1) / steps
        d2 = (f @ c2) / steps**2
        val = float(f[0, 2])
        grad = np.where(usable[:n], d1[:n], chart_grad)
        if order < 2:
            return val, grad, None
        H = np.diag(d2[:n])
        for k, (a, b) in enumerate(pairs):
            H[a, b] = H[b, a] = (d2[n + 2 * k] - d2[n + 2 * k + 1]) / 4.0
        return val, grad, H


class TransformedField(FieldBase):
    """g(u) for g = -log or log, differentiated by the chain rule at query time."""

    KINDS = ("neg_log", "log")

    def __init__(self, base: FieldBase, kind: str):
        if kind not in self.KINDS:
            raise ConfigError(f"unknown transform {kind!r}")
        self.base = base
        self.grid = base.grid
        self.kind = kind
        u = base.values
        if np.any(u <= 0):
            raise DomainViolation("log transform needs strictly positive values")
        self.values = -np.log(u) if kind == "neg_log" else np.log(u)
        self.order = getattr(base, "order", 3)
        self.meta = dict(getattr(base, "meta", {}), transform=kind)

    def _g(self, u):
        s = -1.0 if self.kind == "neg_log" else 1.0
        if np.any(u <= 0):
            raise DomainViolation("log transform met a nonpositive interpolated value")
        return s * np.log(u), s / u, -s / u**2

    def values_at(self, points, allow_outside=False):
        return self._g(self.base.values_at(points, allow_outside=allow_outside))[0]

    def jet(self, points, order=2, strict=None) -> Jet:
        j = self.base.jet(points, order=order, strict=strict)
        g0, g1, g2 = self._g(j.value)
        if order == 0:
            return Jet(g0)
        grad = g1[:, None] * j.grad
        hess = None
        if order >= 2:
            hess = g1[:, None, None] * j.hess + g2[:, None, None] * j.grad[:, :, None] * j.grad[:, None, :]
        return Jet(g0, grad, hess, j.basis)


@dataclass(frozen=True, eq=False)
class TimeSeriesField:
    times: np.ndarray
    fields: list
    meta: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.size != len(self.fields):
            raise GridMismatch("one field per time")
        if np.any(np.diff(t) <= 0):
            raise GridMismatch("snapshot times must increase strictly")
        g = self.fields[0].grid
        if any(f.grid is not g for f in self.fields):
            raise GridMismatch("snapshots must share one grid")
        object.__setattr__(self, "times", t)

    @property
    def grid(self) -> Grid:
        return self.fields[0].grid

    def __len__(self):
        return len(self.fields)


# ---------------------------------------------------------------------------
# public operations


def covariant_gradient(field: FieldBase, p) -> TangentVec:
    p = np.asarray(p, dtype=float)
    j = field.jet(p[None], order=1, strict=False)
    return TangentVec(p, j.grad[0] @ j.basis[0])


def covariant_hessian(field: FieldBase, p) -> BilinearForm:
    p = np.asarray(p, dtype=float)
    j = field.jet(p[None], order=2, strict=True)
    H = 0.5 * (j.hess[0] + j.hess[0].T)
    return BilinearForm(field.manifold, p, j.basis[0], H)


def laplace_beltrami(field: FieldBase, p) -> float:
    return covariant_hessian(field, p).trace


def laplacian_at(field: FieldBase, points) -> np.ndarray:
    """Vectorised trace of the Hessian at many interior points."""
    j = field.jet(points, order=2, strict=True)
    return np.trace(j.hess, axis1=1, axis2=2)


def geodesic_second_difference(field: FieldBase, x, y, h: float) -> float:
    from .geodesic import connect

    seg = connect(field.manifold, x, y)
    f = field.values_at(seg.point(np.array([-h, 0.0, h])))
    return float((f[0] - 2 * f[1] + f[2]) / h**2)


def certify_convexity(domain: DomainSpec, n_pairs: int = 200, seed: int = 0, tol: float = 1e-9) -> bool:
    """Midpoints of random boundary-pair geodesics lie in the closure."""
    from .geodesic import connect

    grid = Grid(domain, [(4,) if isinstance(c, Interval) else (4, 4) for c in domain.components])
    rng = np.random.default_rng(seed)
    k = len(grid.parts)
    for _ in range(n_pairs):
        pts = []
        for _ in range(2):
            u = rng.random(grid.chart_dim)
            pts.append(grid.chart_to_ambient(grid.sample_boundary_chart(u, int(rng.integers(k)))))
        try:
            mid = connect(domain.manifold, pts[0], pts[1]).point(0.0)
        except Exception:
            continue
        if not grid.inside(grid.ambient_to_chart(mid), tol):
            return False
    return True


def dump_csv(field: FieldBase, path) -> None:
    g = field.grid
    q = g.node_chart
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"q{k}" for k in range(g.chart_dim)] + ["value"])
        for row, v in zip(q, field.values):
            w.writerow([repr(float(a)) for a in row] + [repr(float(v))])


def dump_header(field: FieldBase, path) -> None:
    head = dict(field.grid.describe(), order=getattr(field, "order", None), meta=getattr(field, "meta", {}))
    with open(path, "w") as fh:
        json.dump(head, fh, indent=2, sort_keys=True, default=str)
