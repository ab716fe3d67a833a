"""Model PDE solvers on chart grids: torsion, Liouville, heat, perturbations, transforms."""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.linalg import eigh
from scipy.sparse.linalg import splu, spsolve

from .errors import ConfigError, DomainViolation, SolverFailure
from .field import DomainSpec, Grid, ScalarField, TimeSeriesField, TransformedField

# ---------------------------------------------------------------------------
# semilinear right-hand sides b(x, u, p) with p = |grad u|


@dataclass(frozen=True)
class BEntry:
    func: Callable  # (x, u, p, **params) -> b
    du: Callable | None  # partial derivative in u, for Newton
    meta: Callable  # params -> dict of claimed properties


_B_REGISTRY: dict = {}


def register_b(key: str, func, du, meta):
    """Add a right-hand side to the registry (used for planted counterexamples in tests)."""
    _B_REGISTRY[key] = BEntry(func, du, meta)


register_b(
    "constant",
    lambda x, u, p, c=1.0: np.full(np.shape(u), float(c)),
    lambda x, u, p, c=1.0: np.zeros(np.shape(u)),
    lambda c=1.0: {"decrease_u": "weak", "nonincreasing_p": True, "jointly_concave": True, "uses_gradient": False},
)
register_b(
    "liouville",
    lambda x, u, p, c=1.0, d=1.0: c * np.exp(-d * np.asarray(u)),
    lambda x, u, p, c=1.0, d=1.0: -c * d * np.exp(-d * np.asarray(u)),
    lambda c=1.0, d=1.0: {
        "decrease_u": "strict" if c > 0 and d > 0 else "weak",
        "nonincreasing_p": True,
        "jointly_concave": True,  # the claim the checker puts to the test
        "uses_gradient": False,
    },
)
register_b(
    "power_log",
    lambda x, u, p, p_exp=1.0: -np.exp(np.asarray(u) * (1.0 - p_exp)),
    lambda x, u, p, p_exp=1.0: -(1.0 - p_exp) * np.exp(np.asarray(u) * (1.0 - p_exp)),
    lambda p_exp=1.0: {
        "decrease_u": "strict" if p_exp < 1 else "weak",
        "nonincreasing_p": True,
        "jointly_concave": p_exp <= 1,
        "uses_gradient": False,
    },
)
register_b(
    "gradient_coupled",
    lambda x, u, p: -np.asarray(p) ** 2,
    None,
    lambda: {"decrease_u": "weak", "nonincreasing_p": True, "jointly_concave": True, "uses_gradient": True},
)
register_b(
    "linear",
    lambda x, u, p, a=1.0: a * np.asarray(u),
    lambda x, u, p, a=1.0: np.full(np.shape(u), float(a)),
    lambda a=1.0: {
        "decrease_u": "strict" if a < 0 else ("weak" if a == 0 else "strict"),
        "nonincreasing_p": True,
        "jointly_concave": True,
        "uses_gradient": False,
    },
)


@dataclass(frozen=True)
class SemilinearSpec:
    key: str
    params: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        if self.key not in _B_REGISTRY:
            raise ConfigError(f"unknown right-hand side {self.key!r}; known: {sorted(_B_REGISTRY)}")
        try:
            self.metadata
        except TypeError as exc:
            raise ConfigError(f"bad parameters for {self.key}: {sorted(self.params)}") from exc

    @property
    def entry(self) -> BEntry:
        return _B_REGISTRY[self.key]

    @property
    def metadata(self) -> dict:
        return self.entry.meta(**self.params)

    def b(self, x, u, p):
        return self.entry.func(x, u, p, **self.params)

    def db_du(self, x, u, p):
        if self.entry.du is None:
            raise ConfigError(f"{self.key} has no u-derivative (gradient-coupled)")
        return self.entry.du(x, u, p, **self.params)

    def to_config(self) -> dict:
        return {"key": self.key, **{k: float(v) for k, v in self.params.items()}}


# ---------------------------------------------------------------------------
# linear Dirichlet solves


def _kron_parts(mats):
    K = None
    for k in range(len(mats)):
        term = None
        for j, (Kj, mj) in enumerate(mats):
            f = Kj if j == k else sp.diags(mj)
            term = f if term is None else sp.kron(term, f, format="csr")
        K = term if K is None else K + term
    m = mats[0][1]
    for _, mj in mats[1:]:
        m = np.multiply.outer(m, mj).ravel()
    return sp.csr_matrix(K), m


def _fast_diag_solve(grid: Grid, sigma: float, rhs_int: np.ndarray) -> np.ndarray:
    """Interior solve of (K + sigma M) u = rhs by diagonalising the last part."""
    mats = grid.part_matrices
    bmask = [p.boundary() for p, _, _ in grid.parts]
    KA, mA = _kron_parts(mats[:-1])
    iA = ~bmask[0]
    for b in bmask[1:-1]:
        iA = np.logical_and.outer(iA, ~b).ravel()
    iA = np.flatnonzero(np.ravel(iA))
    iB = np.flatnonzero(~bmask[-1])
    KB, mB = mats[-1]
    KBii = KB[iB][:, iB].toarray()
    lam, Phi = eigh(KBii, np.diag(mB[iB]))
    KAii = KA[iA][:, iA].tocsc()
    MAii = sp.diags(mA[iA]).tocsc()
    R = rhs_int.reshape(iA.size, iB.size) @ Phi
    W = np.empty_like(R)
    for k in range(lam.size):
        W[:, k] = spsolve(KAii + (lam[k] + sigma) * MAii, R[:, k])
    return (W @ Phi.T).ravel()


def solve_poisson(grid: Grid, f, g=0.0, sigma: float = 0.0, check: bool = True) -> np.ndarray:
    """Nodal solution of -Lap u + sigma u = f with u = g on the boundary.

    ``f`` and ``g`` are nodal arrays or scalars.  Products of two or more parts
    use fast diagonalisation of the last part; single parts use a sparse
    direct solve.
    """
    K, m = grid.matrices
    n = grid.n_nodes
    f = np.broadcast_to(np.asarray(f, dtype=float), (n,))
    g = np.broadcast_to(np.asarray(g, dtype=float), (n,))
    I = grid.interior_index
    Bd = np.flatnonzero(grid.boundary)
    rhs = m[I] * f[I] - K[I][:, Bd] @ g[Bd]
    A = (K[I][:, I] + sigma * sp.diags(m[I])).tocsc()
    if len(grid.parts) > 1:
        uI = _fast_diag_solve(grid, sigma, rhs)
        uI += _fast_diag_solve(grid, sigma, rhs - A @ uI)
    else:
        lu = splu(A)
        uI = lu.solve(rhs)
        uI += lu.solve(rhs - A @ uI)  # one step of iterative refinement
    if not np.all(np.isfinite(uI)):
        raise SolverFailure("linear solve produced non-finite values")
    if check:
        # normwise backward error
        scale = abs(A).sum(axis=1).max() * np.max(np.abs(uI)) + np.max(np.abs(rhs))
        res = np.max(np.abs(A @ uI - rhs)) / max(scale, 1e-300)
        if res > 1e-10:
            raise SolverFailure(f"discrete residual {res:.3g} above 1e-10")
    u = np.array(g, dtype=float)
    u[I] = uI
    return u


def discrete_laplacian(grid: Grid, values) -> np.ndarray:
    """Nodal -K u / m at interior nodes (zeros on the boundary)."""
    K, m = grid.matrices
    out = np.zeros(grid.n_nodes)
    I = grid.interior_index
    out[I] = -(K @ values)[I] / m[I]
    return out


# ---------------------------------------------------------------------------
# elliptic solvers


def _grid(domain: DomainSpec, resolution) -> Grid:
    return resolution if isinstance(resolution, Grid) else Grid(domain, resolution)


def solve_torsion(M, domain: DomainSpec, resolution, order: int = 3, richardson: bool = False) -> ScalarField:
    """-Lap u = 1, u = 0 on the boundary.  With ``richardson`` the values are
    (4 u_h/2 - u_h)/3 at the coarse nodes."""
    if M is not None:
        domain.check_manifold(M)
    grid = _grid(domain, resolution)
    u = solve_poisson(grid, 1.0, 0.0)
    meta = {"equation": "torsion", "b": {"key": "constant", "c": 1.0}, "f": "neg_trace", "richardson": richardson}
    if richardson:
        fine = grid.refined()
        uf = solve_poisson(fine, 1.0, 0.0)
        u = (4.0 * uf[grid.refine_map] - u) / 3.0
    return ScalarField(grid, u, order=order, meta=meta)


def _newton(grid: Grid, spec: SemilinearSpec, g, u0, sigma: float = 0.0, tol: float = 1e-10, max_iter: int = 50):
    """Damped Newton for K u = M (b(x,u) - sigma u) at interior nodes, u = g on the boundary."""
    if spec.metadata.get("uses_gradient"):
        raise ConfigError(f"{spec.key} couples to the gradient; use the log-transform pipeline instead")
    K, m = grid.matrices
    I = grid.interior_index
    X = grid.node_points
    u = np.array(u0, dtype=float)
    Bd = grid.boundary
    u[Bd] = np.broadcast_to(g, (grid.n_nodes,))[Bd]
    KI = K[I]

    def resid(v):
        return KI @ v - m[I] * (spec.b(X[I], v[I], 0.0) - sigma * v[I])

    F = resid(u)
    fn = np.max(np.abs(F))
    Knorm = abs(KI).sum(axis=1).max()
    for it in range(max_iter):
        # residual already at the roundoff floor of the discrete operator
        floor = 64 * np.finfo(float).eps * (Knorm * np.max(np.abs(u)) + np.max(np.abs(m[I] * spec.b(X[I], u[I], 0.0))))
        if fn <= floor:
            return u, it
        Jd = m[I] * (-spec.db_du(X[I], u[I], 0.0) + sigma)
        A = (K[I][:, I] + sp.diags(Jd)).tocsc()
        du = spsolve(A, -F)
        if not np.all(np.isfinite(du)):
            raise SolverFailure("Newton step is not finite")
        step = 1.0
        for _ in range(40):
            v = u.copy()
            v[I] += step * du
            with np.errstate(over="ignore", invalid="ignore"):
                Fv = resid(v)
            fv = np.max(np.abs(Fv)) if np.all(np.isfinite(Fv)) else np.inf
            if fv < fn or fv == 0.0:
                break
            step *= 0.5
        else:
            raise SolverFailure("damping could not reduce the residual")
        u, F, fn = v, Fv, fv
        if step * np.max(np.abs(du)) < tol:
            return u, it + 1
    raise SolverFailure(f"Newton did not converge in {max_iter} iterations")


def solve_liouville(M, domain: DomainSpec, resolution, c: float = 1.0, d: float = 1.0, B: float = 15.0,
                    order: int = 3, collar_cells: float = 5.0, richardson: bool = False) -> ScalarField:
    """-Lap u = c exp(-d u) with u = -B on the boundary (truncation of u -> -inf)."""
    if c < 0 or d < 0:
        raise DomainViolation("Liouville constants must be nonnegative")
    if M is not None:
        domain.check_manifold(M)
    grid = _grid(domain, resolution)
    spec = SemilinearSpec("liouville", {"c": c, "d": d})

    def newton_on(gr):
        tau = solve_poisson(gr, 1.0, 0.0)
        u0 = -B + B * tau / max(tau.max(), 1e-300)
        return _newton(gr, spec, -B, u0)

    u, iters = newton_on(grid)
    if richardson:
        uf, _ = newton_on(grid.refined())
        u = (4.0 * uf[grid.refine_map] - u) / 3.0
    meta = {
        "equation": "liouville", "b": spec.to_config(), "f": "neg_trace", "B": B,
        "trust_collar": collar_cells * grid.h, "newton_iterations": iters, "growth_condition": True,
        "richardson": richardson,
    }
    return ScalarField(grid, u, order=order, meta=meta)


def trust_mask(field: ScalarField, points=None):
    """Points (default: nodes) at distance greater than the trust collar from the boundary."""
    g = field.grid
    q = g.node_chart if points is None else g.ambient_to_chart(np.asarray(points, dtype=float))
    return g.dist_to_boundary(q) > field.meta.get("trust_collar", 0.0)


def solve_semilinear(M, domain: DomainSpec, resolution, spec: SemilinearSpec, g=0.0, order: int = 3) -> ScalarField:
    grid = _grid(domain, resolution)
    u, iters = _newton(grid, spec, g, np.zeros(grid.n_nodes) + np.broadcast_to(g, (grid.n_nodes,)))
    return ScalarField(grid, u, order=order, meta={"equation": "semilinear", "b": spec.to_config(), "f": "neg_trace"})


# ---------------------------------------------------------------------------
# parabolic solver


def solve_heat(M, u0: ScalarField, T: float, steps: int, boundary=None) -> TimeSeriesField:
    """Backward Euler for u_t = Lap u.

    Boundary values stay at u0's unless ``boundary(t, points)`` supplies
    time-dependent Dirichlet data.
    """
    grid = u0.grid
    if M is not None:
        grid.domain.check_manifold(M)
    if steps < 1 or T <= 0:
        raise ConfigError("heat flow needs T > 0 and at least one step")
    dt = T / steps
    K, m = grid.matrices
    I = grid.interior_index
    Bd = np.flatnonzero(grid.boundary)
    XB = grid.node_points[Bd]
    lu = splu((K[I][:, I] + sp.diags(m[I] / dt)).tocsc())
    KIB = K[I][:, Bd]
    lo, hi = float(u0.values.min()), float(u0.values.max())
    u = np.array(u0.values)
    fields = [u0]
    for k in range(steps):
        t = (k + 1) * dt
        new = u.copy()
        if boundary is not None:
            new[Bd] = boundary(t, XB)
            lo, hi = min(lo, float(new[Bd].min())), max(hi, float(new[Bd].max()))
        new[I] = lu.solve(m[I] * u[I] / dt - KIB @ new[Bd])
        if np.any(new <= 0) and lo > 0:
            raise SolverFailure(f"nonpositive value at step {k + 1}")
        if new.min() < lo - 1e-10 * max(1.0, abs(lo)) or new.max() > hi + 1e-10 * max(1.0, abs(hi)):
            raise SolverFailure("discrete maximum principle violated")
        u = new
        fields.append(u0.with_values(u, meta=dict(u0.meta, time=t)))
    times = dt * np.arange(steps + 1)
    return TimeSeriesField(times, fields, meta={"equation": "heat", "dt": dt, "b": {"key": "constant", "c": 0.0},
                                                "moving_boundary": boundary is not None})


def log_transform(field, sign: str = "neg"):
    """v = -log u (sign 'neg') or v = log u (sign 'pos'); also maps over a TimeSeriesField."""
    kind = {"neg": "neg_log", "pos": "log", "-": "neg_log", "+": "log"}.get(sign)
    if kind is None:
        raise ConfigError("sign must be 'neg' or 'pos'")
    if isinstance(field, TimeSeriesField):
        out = [TransformedField(f, kind) for f in field.fields]
        meta = dict(field.meta, transform=kind)
        if kind == "neg_log":
            meta["b"] = {"key": "gradient_coupled"}
        return TimeSeriesField(field.times, out, meta=meta)
    return TransformedField(field, kind)


# ---------------------------------------------------------------------------
# perturbation and time rescaling


def perturbed_solve(M, inner_domain: DomainSpec, resolution, spec: SemilinearSpec, eps: float,
                    boundary_from: ScalarField, order: int = 3) -> ScalarField:
    """-Lap v = b(x, v) - eps v on the inner domain with v = u on its boundary."""
    if eps < 0:
        raise DomainViolation("eps must be nonnegative")
    grid = _grid(inner_domain, resolution)
    outer = boundary_from.grid
    q = outer.ambient_to_chart(grid.node_points)
    if not np.all(outer.interior(q, margin=1e-12)):
        raise DomainViolation("inner domain is not compactly contained in the outer domain")
    u_in = boundary_from.values_at(grid.node_points)
    v, iters = _newton(grid, spec, u_in, u_in, sigma=eps)
    dev = float(np.max(np.abs(v - u_in)))
    meta = {"equation": "perturbed", "b": spec.to_config(), "eps": eps, "sup_deviation": dev,
            "ratio": dev / eps if eps > 0 else None, "newton_iterations": iters}
    return ScalarField(grid, v, order=order, meta=meta)


def perturbation_ladder(M, inner_domain, resolution, spec, boundary_from, eps_values=(1e-2, 1e-3, 1e-4)) -> dict:
    ratios = []
    for e in eps_values:
        ratios.append(perturbed_solve(M, inner_domain, resolution, spec, e, boundary_from).meta["ratio"])
    ratios = np.array(ratios)
    return {"eps": list(eps_values), "ratios": ratios.tolist(), "spread": float(ratios.max() / ratios.min())}


def evans_transform(series: TimeSeriesField, eps: float) -> TimeSeriesField:
    """v(x, t) = exp(-eps t) u(x, t), snapshot by snapshot."""
    out = [f.with_values(np.exp(-eps * t) * f.values, meta=dict(f.meta, evans_eps=eps)) for t, f in zip(series.times, series.fields)]
    return TimeSeriesField(series.times, out, meta=dict(series.meta, evans_eps=eps))


def parabolic_residual(series: TimeSeriesField, b_tilde) -> float:
    """sup over interior nodes and inner snapshots of |d_t v - Lap_h v - b_tilde(t, v)|,
    with a central difference in time."""
    grid = series.grid
    I = grid.interior_index
    t = series.times
    worst = 0.0
    for n in range(1, len(series) - 1):
        vt = (series.fields[n + 1].values - series.fields[n - 1].values) / (t[n + 1] - t[n - 1])
        v = series.fields[n].values
        r = vt - discrete_laplacian(grid, v) - b_tilde(t[n], v)
        worst = max(worst, float(np.max(np.abs(r[I]))))
    return worst


def evans_audit(series: TimeSeriesField, eps: float, spec: SemilinearSpec | None = None) -> dict:
    """Residuals of u_t = Lap u + b(u) and of the rescaled equation for v."""
    spec = SemilinearSpec("constant", {"c": 0.0}) if spec is None else spec
    if spec.metadata.get("uses_gradient"):
        raise ConfigError("the residual audit covers gradient-free right-hand sides")
    X = series.grid.node_points
    v = evans_transform(series, eps)
    r_u = parabolic_residual(series, lambda t, u: spec.b(X, u, 0.0))
    r_v = parabolic_residual(v, lambda t, w: -eps * w + np.exp(-eps * t) * spec.b(X, np.exp(eps * t) * w, 0.0))
    return {"eps": eps, "residual_u": r_u, "residual_v": r_v, "ratio": r_v / r_u if r_u > 0 else None}
