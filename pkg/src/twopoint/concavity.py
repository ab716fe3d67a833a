"""The two-point function Z and everything evaluated at its minima.

Z(x, y) = u(Gamma(0)) - (u(x) + u(y)) / 2 along the minimizing geodesic
Gamma = Gamma(x, y, .) on [-1, 1].  Z >= 0 everywhere is midpoint concavity.
"""
from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field as dc_field

import numpy as np
from scipy.stats import qmc

from .errors import ConeViolation, ConfigError, DegenerateSegment
from .field import FieldBase
from .geodesic import build_frame, connect
from .geometry import ManifoldModel, dist_array, exp_array, inner, log_array
from .jacobi import profiles, transfer_matrix
from .pde import SemilinearSpec
from .variation import k_fields_ode

BOUNDARY_TOL = 1e-9

# ---------------------------------------------------------------------------
# samples


@dataclass(frozen=True)
class TwoPointSample:
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    Zval: float
    classification: str

    def to_dict(self) -> dict:
        return {"x": self.x.tolist(), "y": self.y.tolist(), "z": self.z.tolist(), "Z": self.Zval,
                "classification": self.classification}


def _classify(grid, qx, qy) -> str:
    bx = grid.dist_to_boundary(qx[None])[0] <= BOUNDARY_TOL
    by = grid.dist_to_boundary(qy[None])[0] <= BOUNDARY_TOL
    return {(False, False): "interior", (True, False): "x_on_boundary",
            (False, True): "y_on_boundary", (True, True): "both_on_boundary"}[(bool(bx), bool(by))]


def midpoints(M: ManifoldModel, X, Y) -> np.ndarray:
    return exp_array(M, X, 0.5 * log_array(M, X, Y))


def z_batch(field: FieldBase, X, Y) -> np.ndarray:
    """Vectorised Z for pairs that are already known to be admissible."""
    M = field.manifold
    Zm = midpoints(M, X, Y)
    vals = field.values_at(np.concatenate([Zm, X, Y]))
    n = len(X)
    return vals[:n] - 0.5 * (vals[n:2 * n] + vals[2 * n:])


def z_value(M: ManifoldModel, field: FieldBase, x, y) -> TwoPointSample:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    field.domain.check_manifold(M)
    g = field.grid
    try:
        seg = connect(M, x, y)
    except DegenerateSegment:
        return TwoPointSample(x, y, x.copy(), 0.0, "diagonal")
    z = seg.point(0.0)
    vals = field.values_at(np.stack([z, x, y]))
    Z = float(vals[0] - 0.5 * (vals[1] + vals[2]))
    return TwoPointSample(x, y, z, Z, _classify(g, g.ambient_to_chart(x), g.ambient_to_chart(y)))


# ---------------------------------------------------------------------------
# first- and second-order diagnostics


@dataclass
class FirstOrder:
    residual_x: float
    residual_y: float
    grad_norms: tuple  # |grad u(x)|, |grad u(y)|, |grad u(z)|
    contraction_ok: bool
    equal_norms_ok: bool

    def to_dict(self):
        return asdict(self)


def _frame_jets(field: FieldBase, x, y, order):
    M = field.manifold
    seg = connect(M, x, y)
    frame = build_frame(seg)
    pts = np.stack([x, y, seg.point(0.0)])
    j = field.jet(pts, order=order, strict=order >= 2)
    frames = [frame.E(-1.0), frame.E(1.0), frame.E(0.0)]
    grads = []
    hess = []
    for k in range(3):
        # T[a, i] = <E_a, basis_i>: frame components from orthonormal-basis components
        T = inner(M, frames[k][:, None, :], j.basis[k][None, :, :])
        grads.append(T @ j.grad[k])
        if order >= 2:
            hess.append(T @ (0.5 * (j.hess[k] + j.hess[k].T)) @ T.T)
    return frame, j.value, grads, hess


def first_order_check(M: ManifoldModel, field: FieldBase, x, y, tol: float = 1e-4) -> FirstOrder:
    """|grad u(z) - V grad u(x)| and |grad u(z) - V grad u(y)| in frame components."""
    field.domain.check_manifold(M)
    frame, _, (gx, gy, gz), _ = _frame_jets(field, x, y, 1)
    V = transfer_matrix(frame)
    nx, ny, nz = (float(np.linalg.norm(g)) for g in (gx, gy, gz))
    return FirstOrder(
        float(np.linalg.norm(gz - V @ gx)),
        float(np.linalg.norm(gz - V @ gy)),
        (nx, ny, nz),
        bool(nz <= min(nx, ny) + tol),
        bool(abs(nx - ny) <= tol),
    )


@dataclass
class SecondOrder:
    min_eig_D1: float
    min_eig_D2: float
    D1: list
    D2: list

    def to_dict(self):
        return asdict(self)


def second_order_check(M: ManifoldModel, field: FieldBase, x, y) -> SecondOrder:
    """Minimum eigenvalues of D1 = H_z - (H_x + H_y)(V., V.)/2 and D2 = -(H_x + H_y)."""
    field.domain.check_manifold(M)
    frame, _, _, (Hx, Hy, Hz) = _frame_jets(field, x, y, 2)
    V = transfer_matrix(frame).as_matrix()
    D1 = Hz - 0.5 * V @ (Hx + Hy) @ V
    D2 = -(Hx + Hy)
    return SecondOrder(float(np.linalg.eigvalsh(D1)[0]), float(np.linalg.eigvalsh(D2)[0]), D1.tolist(), D2.tolist())


def hessian_z_fd(M: ManifoldModel, field: FieldBase, x, y, a, b, h: float = 1e-3) -> float:
    """Second difference of Z along (exp_x(s a.E(-1)), exp_y(s b.E(1))), a and b in frame components."""
    frame = build_frame(connect(M, x, y))
    wa = np.asarray(a, dtype=float) @ frame.E(-1.0)
    wb = np.asarray(b, dtype=float) @ frame.E(1.0)
    s = np.array([-h, 0.0, h])
    X = exp_array(M, x, s[:, None] * wa)
    Y = exp_array(M, y, s[:, None] * wb)
    Z = z_batch(field, X, Y)
    return float((Z[0] - 2 * Z[1] + Z[2]) / h**2)


def hessian_z_analytic(M: ManifoldModel, field: FieldBase, x, y, a, b, kfields=None) -> float:
    """Assembled Hessian of Z: Jacobi terms at z, endpoint Hessians and the K terms."""
    frame, _, (_, _, gz), (Hx, Hy, Hz) = _frame_jets(field, x, y, 2)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    prof = profiles(frame)
    v1 = np.array([float(p.v(1.0)) for p in prof])  # J_x(0) = J_y(0) = v(1) E
    w = v1 * (a + b)
    kf = k_fields_ode(frame) if kfields is None else kfields
    i0 = int(np.argmin(np.abs(kf["xx"].t)))
    Kz = (np.einsum("a,b,abg->g", a, a, kf["xx"].comps[:, :, i0]) + np.einsum("a,b,abg->g", a, b, kf["xy"].comps[:, :, i0])
          + np.einsum("a,b,abg->g", b, a, kf["yx"].comps[:, :, i0]) + np.einsum("a,b,abg->g", b, b, kf["yy"].comps[:, :, i0]))
    return float(w @ Hz @ w - 0.5 * (a @ Hx @ a + b @ Hy @ b) + gz @ Kz)


# ---------------------------------------------------------------------------
# isotropic f


@dataclass(frozen=True)
class IsotropicFSpec:
    key: str
    lambdas: tuple = ()
    cone: str = "all"

    def __post_init__(self):
        if self.key not in ("neg_trace", "trace_exp", "weighted_trace"):
            raise ConfigError(f"unknown isotropic f {self.key!r}")
        if self.cone not in ("all", "positive"):
            raise ConfigError("cone must be 'all' or 'positive'")
        if self.key == "weighted_trace" and not self.lambdas:
            raise ConfigError("weighted_trace needs lambdas")
        object.__setattr__(self, "lambdas", tuple(float(v) for v in self.lambdas))

    def to_config(self):
        return {"key": self.key, "lambdas": list(self.lambdas), "cone": self.cone}


def evaluate_isotropic_f(fspec: IsotropicFSpec, p: float, W) -> float:
    """f(p, W) through the ascending eigenvalues of W (W stands for minus the Hessian)."""
    W = np.asarray(W, dtype=float)
    k = np.linalg.eigvalsh(0.5 * (W + W.T))
    if fspec.cone == "positive" and k[0] < -1e-12 * max(1.0, float(np.max(np.abs(k)))):
        raise ConeViolation(f"eigenvalue {k[0]:.3g} outside the closed positive cone")
    if fspec.key == "neg_trace":
        return float(np.sum(k))
    if fspec.key == "trace_exp":
        return float(np.sum(np.exp(k)))
    lam = np.asarray(fspec.lambdas)
    if lam.size != k.size:
        raise ConfigError(f"weighted_trace has {lam.size} weights for a {k.size}x{k.size} matrix")
    return float(lam @ k)


def _rand_sym(rng, n, cone):
    G = rng.standard_normal((n, n))
    if cone == "positive":
        return G @ G.T / n
    return 0.5 * (G + G.T)


def _rand_orth(rng, n):
    Q, R = np.linalg.qr(rng.standard_normal((n, n)))
    return Q * np.sign(np.diag(R))


def check_f_properties(fspec: IsotropicFSpec, n_samples: int = 500, seed: int = 0, n: int | None = None) -> dict:
    """Sampled isotropy, monotonicity in p, eigenvalue monotonicity and midpoint convexity."""
    rng = np.random.default_rng(seed)
    n = len(fspec.lambdas) if (n is None and fspec.lambdas) else (n or 3)
    f = lambda p, W: evaluate_isotropic_f(fspec, p, W)
    checks = {}

    def record(name, witness):
        checks[name] = {"passed": witness is None, "witness": witness}

    wit = None
    for _ in range(n_samples):
        W, Q = _rand_sym(rng, n, fspec.cone), _rand_orth(rng, n)
        a, b = f(1.0, W), f(1.0, Q.T @ W @ Q)
        if abs(a - b) > 1e-10 * max(1.0, abs(a)):
            wit = {"W": W.tolist(), "Q": Q.tolist(), "f": a, "f_conj": b}
            break
    record("isotropy", wit)
    wit = None
    for _ in range(n_samples):
        W = _rand_sym(rng, n, fspec.cone)
        p1, p2 = np.sort(rng.random(2) * 5)
        if f(p1, W) > f(p2, W) + 1e-12:
            wit = {"W": W.tolist(), "p": [p1, p2]}
            break
    record("monotone_p", wit)
    wit = None
    for _ in range(n_samples):
        kap = rng.standard_normal(n) if fspec.cone == "all" else rng.random(n)
        lam = kap + rng.random(n) * rng.integers(0, 2, n)
        if f(1.0, np.diag(kap)) > f(1.0, np.diag(lam)) + 1e-12:
            wit = {"kappa": kap.tolist(), "lambda": lam.tolist()}
            break
    record("monotone_eigenvalues", wit)
    wit = None
    for _ in range(n_samples):
        A, B = _rand_sym(rng, n, fspec.cone), _rand_sym(rng, n, fspec.cone)
        lhs, rhs = f(1.0, 0.5 * (A + B)), 0.5 * (f(1.0, A) + f(1.0, B))
        if lhs > rhs + 1e-10 * max(1.0, abs(rhs)):
            wit = {"A": A.tolist(), "B": B.tolist(), "f_mid": lhs, "mean_f": rhs}
            break
    record("convex", wit)
    return {"f": fspec.to_config(), "passed": all(c["passed"] for c in checks.values()), "checks": checks}


def check_b_properties(bspec: SemilinearSpec, n_samples: int = 500, seed: int = 0, M: ManifoldModel | None = None,
                       u_range=(-3.0, 3.0)) -> dict:
    """Sampled slot monotonicity and midpoint joint concavity of b against its registry claims."""
    from .geometry import Euclidean, random_point

    M = ManifoldModel((Euclidean(2),)) if M is None else M
    rng = np.random.default_rng(seed)
    meta = bspec.metadata
    b = bspec.b
    checks = {}
    lo, hi = u_range

    def draw_u():
        return np.sort(lo + (hi - lo) * rng.random(2))

    strict_w = weak_w = None
    for _ in range(n_samples):
        x = random_point(M, rng)
        u1, u2 = draw_u()
        p = 3 * rng.random()
        b1, b2 = float(b(x, u1, p)), float(b(x, u2, p))
        if strict_w is None and not b1 > b2:
            strict_w = {"x": x.tolist(), "u": [u1, u2], "p": p, "b": [b1, b2]}
        if weak_w is None and b1 < b2 - 1e-12 * max(1.0, abs(b1)):
            weak_w = {"x": x.tolist(), "u": [u1, u2], "p": p, "b": [b1, b2]}
    claimed = meta.get("decrease_u")
    checks["decrease_u"] = {
        "claimed": claimed,
        "observed": "strict" if strict_w is None else ("weak" if weak_w is None else "none"),
        "passed": weak_w is None and (claimed != "strict" or strict_w is None),
        "weak_only": strict_w is not None and weak_w is None,
        "witness": weak_w if weak_w is not None else (strict_w if claimed == "strict" else None),
    }
    wit = None
    for _ in range(n_samples):
        x = random_point(M, rng)
        u = lo + (hi - lo) * rng.random()
        p1, p2 = np.sort(3 * rng.random(2))
        if float(b(x, u, p1)) < float(b(x, u, p2)) - 1e-12:
            wit = {"x": x.tolist(), "u": u, "p": [p1, p2]}
            break
    checks["nonincreasing_p"] = {"passed": wit is None, "witness": wit}
    wit = None
    for _ in range(n_samples):
        x, y = random_point(M, rng), random_point(M, rng)
        try:
            z = connect(M, x, y).point(0.0)
        except Exception:
            continue
        u1, u2 = lo + (hi - lo) * rng.random(2)
        p = 3 * rng.random()
        lhs = float(b(z, 0.5 * (u1 + u2), p))
        rhs = 0.5 * (float(b(x, u1, p)) + float(b(y, u2, p)))
        if lhs < rhs - 1e-12 * max(1.0, abs(rhs)):
            wit = {"x": x.tolist(), "y": y.tolist(), "u": [u1, u2], "p": p, "b_mid": lhs, "mean_b": rhs}
            break
    checks["jointly_concave"] = {"claimed": meta.get("jointly_concave"), "passed": wit is None, "witness": wit}
    return {"b": bspec.to_config(), "passed": all(c["passed"] for c in checks.values()), "checks": checks}


# ---------------------------------------------------------------------------
# chain of inequalities

CHAIN_RELATIONS = ("=", "<=", "<=", "<=", "=", "<=", "<=")
CHAIN_REASONS = (
    "PDE at z",
    "f non-decreasing in the matrix slot and the Hessian comparison",
    "f convex in the matrix slot",
    "f non-decreasing in the gradient slot, V contracting",
    "PDE at x and y",
    "b non-increasing in the gradient slot",
    "b jointly concave in point and value",
)


@dataclass
class ChainAudit:
    values: list  # E0 .. E7
    slacks: list  # seven entries, >= -tol means the step holds
    relations: tuple = CHAIN_RELATIONS
    Z: float = 0.0

    @property
    def min_slack(self) -> float:
        return float(min(self.slacks))

    def ok(self, tol: float) -> bool:
        return self.min_slack >= -tol

    def to_dict(self):
        return {"values": self.values, "slacks": self.slacks, "relations": list(self.relations),
                "reasons": list(CHAIN_REASONS), "Z": self.Z, "min_slack": self.min_slack}


def _check_provenance(field, fspec, bspec):
    meta = getattr(field, "meta", {}) or {}
    if "f" in meta and meta["f"] != fspec.key:
        raise ConfigError(f"field was produced with f = {meta['f']}, audit asked for {fspec.key}")
    if "b" in meta and meta["b"].get("key") != bspec.key:
        raise ConfigError(f"field was produced with b = {meta['b'].get('key')}, audit asked for {bspec.key}")
    if "b" in meta:
        mine = bspec.to_config()
        for k, v in meta["b"].items():
            if k != "key" and k in mine and abs(float(mine[k]) - float(v)) > 1e-12:
                raise ConfigError(f"b parameter {k} differs from the field's provenance")


def chain_audit(M: ManifoldModel, field: FieldBase, x, y, fspec: IsotropicFSpec, bspec: SemilinearSpec) -> ChainAudit:
    """Evaluate the eight expressions of the proof chain at (x, y, z) and their seven slacks."""
    field.domain.check_manifold(M)
    _check_provenance(field, fspec, bspec)
    frame, (ux, uy, uz), (gx, gy, gz), (Hx, Hy, Hz) = _frame_jets(field, x, y, 2)
    z = frame.segment.point(0.0)
    px, py, pz = (float(np.linalg.norm(g)) for g in (gx, gy, gz))
    f = lambda p, W: evaluate_isotropic_f(fspec, p, W)
    b = lambda pt, u, p: float(bspec.b(pt, u, p))
    E = [
        b(z, uz, pz),
        f(pz, -Hz),
        f(pz, -0.5 * (Hx + Hy)),
        0.5 * f(pz, -Hx) + 0.5 * f(pz, -Hy),
        0.5 * f(px, -Hx) + 0.5 * f(py, -Hy),
        0.5 * b(x, ux, px) + 0.5 * b(y, uy, py),
        0.5 * b(x, ux, pz) + 0.5 * b(y, uy, pz),
        b(z, 0.5 * (ux + uy), pz),
    ]
    slacks = []
    for k, rel in enumerate(CHAIN_RELATIONS):
        d = E[k + 1] - E[k]
        slacks.append(-abs(d) if rel == "=" else d)
    return ChainAudit([float(e) for e in E], [float(s) for s in slacks], Z=float(uz - 0.5 * (ux + uy)))


# ---------------------------------------------------------------------------
# boundary condition


@dataclass
class BoundaryCheck:
    state: str  # holds / violated / not-checked
    margin: float | None
    reason: str = ""
    witness: dict | None = None
    n_pairs: int = 0

    def to_dict(self):
        return asdict(self)


def boundary_condition_check(M: ManifoldModel, field: FieldBase, n_boundary_pairs: int = 200, seed: int = 0,
                             exclusion: float = 2.0) -> BoundaryCheck:
    """min over sampled (x on the boundary, y in the closure) of Du_x(Gdot(-1)) - Du_y(Gdot(1))."""
    meta = getattr(field, "meta", {}) or {}
    if meta.get("growth_condition"):
        return BoundaryCheck("not-checked", None, "growth_condition")
    g = field.grid
    rng = np.random.default_rng(seed)
    k = len(g.parts)
    qx = np.stack([g.sample_boundary_chart(rng.random(g.chart_dim), int(rng.integers(k))) for _ in range(n_boundary_pairs)])
    qy = g.sample_chart(rng.random((n_boundary_pairs, g.chart_dim)))
    X, Y = g.chart_to_ambient(qx), g.chart_to_ambient(qy)
    keep = dist_array(M, X, Y) >= exclusion * g.h
    X, Y = X[keep], Y[keep]
    if len(X) == 0:
        return BoundaryCheck("not-checked", None, "no admissible pairs")
    vx = 0.5 * log_array(M, X, Y)  # Gdot(-1)
    vy = -0.5 * log_array(M, Y, X)  # Gdot(1)
    jx = field.jet(X, order=1, strict=False)
    jy = field.jet(Y, order=1, strict=False)
    gx = np.einsum("qi,qid->qd", jx.grad, jx.basis)
    gy = np.einsum("qi,qid->qd", jy.grad, jy.basis)
    margin = inner(M, gx, vx) - inner(M, gy, vy)
    i = int(np.argmin(margin))
    state = "holds" if margin[i] > 0 else "violated"
    wit = {"x": X[i].tolist(), "y": Y[i].tolist(), "margin": float(margin[i])}
    return BoundaryCheck(state, float(margin[i]), "", wit, int(len(X)))


# ---------------------------------------------------------------------------
# scanning


@dataclass(frozen=True)
class ScanConfig:
    n_pairs: int = 10000
    seed: int = 0
    k_refine: int = 10
    exclusion: float = 2.0  # in grid spacings
    tol_Z: float = 1e-6
    max_iter: int = 200
    n_boundary_pairs: int = 200
    trust_only: bool = False
    interior_margin: float = 2.0  # grid spacings kept from the boundary for diagnostics
    workers: int = 1
    chunk: int = 4096
    min_valid: int = 100


@dataclass
class ConcavityReport:
    min_Z: float
    argmin: TwoPointSample
    n_samples: int
    refinement_trace: list
    boundary_condition: BoundaryCheck
    first_order: FirstOrder | None
    second_order: SecondOrder | None
    chain: ChainAudit | None
    grad_Z_norm: float | None
    verdict: str
    samples: tuple = dc_field(default=(), repr=False)  # (X, Y, Z) arrays
    provenance: dict = dc_field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "min_Z": self.min_Z,
            "argmin": self.argmin.to_dict(),
            "n_samples": self.n_samples,
            "refinement_trace": self.refinement_trace,
            "boundary_condition": self.boundary_condition.to_dict(),
            "first_order_residuals": None if self.first_order is None else self.first_order.to_dict(),
            "second_order_audit": None if self.second_order is None else self.second_order.to_dict(),
            "chain_audit": None if self.chain is None else self.chain.to_dict(),
            "grad_Z_norm": self.grad_Z_norm,
            "verdict": self.verdict,
            "provenance": self.provenance,
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)

    def samples_csv(self, path) -> None:
        write_samples_csv(path, *self.samples)


def write_samples_csv(path, X, Y, Z):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        D = X.shape[1] if len(X) else 0
        w.writerow([f"x{k}" for k in range(D)] + [f"y{k}" for k in range(D)] + ["Z"])
        for a, b, z in zip(X, Y, Z):
            w.writerow([repr(float(v)) for v in a] + [repr(float(v)) for v in b] + [repr(float(z))])


def _pair_ok(field, cfg, qx, qy, X, Y):
    g = field.grid
    ok = dist_array(field.manifold, X, Y) >= cfg.exclusion * g.h
    if cfg.trust_only:
        collar = field.meta.get("trust_collar", 0.0) if hasattr(field, "meta") else 0.0
        ok &= (g.dist_to_boundary(qx) > collar) & (g.dist_to_boundary(qy) > collar)
    return ok


def _z_chunks(field, X, Y, cfg):
    chunks = [(s, min(s + cfg.chunk, len(X))) for s in range(0, len(X), cfg.chunk)]
    run = lambda c: z_batch(field, X[c[0]:c[1]], Y[c[0]:c[1]])
    if cfg.workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(cfg.workers) as ex:
            parts = list(ex.map(run, chunks))
    else:
        parts = [run(c) for c in chunks]
    return np.concatenate(parts) if parts else np.zeros(0)


def _axis_steps(grid):
    steps = []
    for part, _, _ in grid.parts:
        steps.extend([part.spacing] if part.chart_dim == 1 else [part.dr, part.dt])
    return np.array(steps)


def _refine(field, cfg, qx, qy):
    """Coordinate descent in the product chart from (qx, qy)."""
    g = field.grid
    m = g.chart_dim
    q = np.concatenate([qx, qy])
    step0 = np.tile(_axis_steps(g), 2)
    step = step0.copy()

    def evaluate(Q):
        A = g.clamp(Q[:, :m])
        B = g.clamp(Q[:, m:])
        X, Y = g.chart_to_ambient(A), g.chart_to_ambient(B)
        ok = _pair_ok(field, cfg, A, B, X, Y)
        Z = np.full(len(Q), np.inf)
        if np.any(ok):
            Z[ok] = z_batch(field, X[ok], Y[ok])
        return np.concatenate([A, B], axis=1), Z

    qs, zs = evaluate(q[None])
    q, best = qs[0], zs[0]
    it = 0
    while it < cfg.max_iter and np.any(step > 1e-7 * step0):
        it += 1
        cand = np.repeat(q[None], 4 * m, axis=0)
        for k in range(2 * m):
            cand[2 * k, k] += step[k]
            cand[2 * k + 1, k] -= step[k]
        cq, cz = evaluate(cand)
        j = int(np.argmin(cz))
        if cz[j] < best:
            q, best = cq[j], cz[j]
        else:
            step *= 0.5
    return q[:m], q[m:], float(best), it


def _grad_z_norm(field, qx, qy):
    """Central-difference norm of grad Z in chart coordinates (diagnostic only)."""
    g = field.grid
    m = g.chart_dim
    q = np.concatenate([qx, qy])
    h = 1e-5 * np.tile(_axis_steps(g), 2) / np.tile(_axis_steps(g), 2).max()
    P = np.repeat(q[None], 4 * m, axis=0)
    for k in range(2 * m):
        P[2 * k, k] += h[k]
        P[2 * k + 1, k] -= h[k]
    try:
        Z = z_batch(field, g.chart_to_ambient(P[:, :m]), g.chart_to_ambient(P[:, m:]))
    except Exception:
        return None
    return float(np.linalg.norm((Z[0::2] - Z[1::2]) / (2 * h)))


def scan_min(M: ManifoldModel, field: FieldBase, cfg: ScanConfig = ScanConfig(), fspec: IsotropicFSpec | None = None,
             bspec: SemilinearSpec | None = None, diagnostics: bool = True) -> ConcavityReport:
    """Quasi-random pair scan plus local refinement of the k best candidates."""
    field.domain.check_manifold(M)
    g = field.grid
    m = g.chart_dim
    sampler = qmc.Halton(d=2 * m, scramble=True, seed=cfg.seed)
    U = sampler.random(cfg.n_pairs)
    qx, qy = g.sample_chart(U[:, :m]), g.sample_chart(U[:, m:])
    X, Y = g.chart_to_ambient(qx), g.chart_to_ambient(qy)
    ok = _pair_ok(field, cfg, qx, qy, X, Y)
    qx, qy, X, Y = qx[ok], qy[ok], X[ok], Y[ok]
    Z = _z_chunks(field, X, Y, cfg)
    trace = []
    if len(Z) == 0:
        empty = TwoPointSample(np.zeros(g.ambient_dim), np.zeros(g.ambient_dim), np.zeros(g.ambient_dim), 0.0, "diagonal")
        return ConcavityReport(np.nan, empty, 0, [], BoundaryCheck("not-checked", None, "no samples"), None, None, None,
                               None, "inconclusive", (X, Y, Z))
    order = np.argsort(Z, kind="stable")[: cfg.k_refine]
    best = (np.inf, None, None)
    for i in order:
        rx, ry, zr, its = _refine(field, cfg, qx[i], qy[i])
        trace.append({"start_Z": float(Z[i]), "refined_Z": zr, "iterations": its})
        if zr < best[0]:
            best = (zr, rx, ry)
    min_Z, bx, by = best
    x, y = g.chart_to_ambient(bx), g.chart_to_ambient(by)
    sample = z_value(M, field, x, y)
    bc = boundary_condition_check(M, field, cfg.n_boundary_pairs, cfg.seed, cfg.exclusion) if diagnostics else \
        BoundaryCheck("not-checked", None, "diagnostics disabled")
    fo = so = ch = None
    gz = None
    margin = cfg.interior_margin * g.h
    if cfg.trust_only:
        margin = max(margin, (getattr(field, "meta", {}) or {}).get("trust_collar", 0.0))
    interior = bool(g.dist_to_boundary(bx[None])[0] > margin and g.dist_to_boundary(by[None])[0] > margin)
    if diagnostics and interior:
        gz = _grad_z_norm(field, bx, by)
        fo = first_order_check(M, field, x, y)
        so = second_order_check(M, field, x, y)
        if fspec is not None and bspec is not None:
            ch = chain_audit(M, field, x, y, fspec, bspec)
    if min_Z < -cfg.tol_Z:
        verdict = "violation_found"
    elif len(Z) >= cfg.min_valid:
        verdict = "concave_certified_numerically"
    else:
        verdict = "inconclusive"
    prov = {"seed": cfg.seed, "grid": g.describe(), "scan": asdict(cfg), "n_valid": int(len(Z))}
    return ConcavityReport(float(min_Z), sample, int(len(Z)), trace, bc, fo, so, ch, gz, verdict,
                           (X, Y, Z), prov)


def lowest_pairs(M: ManifoldModel, field: FieldBase, report: ConcavityReport, k: int = 10, margin_cells: float = 5.0):
    """The k lowest-Z sampled pairs with both points at least margin_cells*h inside."""
    X, Y, Z = report.samples
    g = field.grid
    mg = margin_cells * g.h
    inside = (g.dist_to_boundary(g.ambient_to_chart(X)) > mg) & (g.dist_to_boundary(g.ambient_to_chart(Y)) > mg)
    idx = np.flatnonzero(inside)
    idx = idx[np.argsort(Z[idx], kind="stable")[:k]]
    return [(X[i], Y[i], float(Z[i])) for i in idx]


# ---------------------------------------------------------------------------
# parabolic


@dataclass
class ParabolicReport:
    times: list
    reports: list
    min_Z_over_time: float
    preservation: str  # holds / violated / skipped

    def to_dict(self):
        return {
            "times": self.times,
            "min_Z": [r.min_Z for r in self.reports],
            "verdicts": [r.verdict for r in self.reports],
            "min_Z_over_time": self.min_Z_over_time,
            "preservation": self.preservation,
            "initial": self.reports[0].to_dict() if self.reports else None,
        }


def parabolic_scan(M: ManifoldModel, series, cfg: ScanConfig = ScanConfig(n_pairs=2000, k_refine=3)) -> ParabolicReport:
    """scan_min on every snapshot; the preservation claim is gated on a concave initial snapshot."""
    reports = []
    first = scan_min(M, series.fields[0], cfg, diagnostics=False)
    reports.append(first)
    if first.verdict == "violation_found":
        return ParabolicReport(series.times.tolist(), reports, first.min_Z, "skipped")
    for f in series.fields[1:]:
        reports.append(scan_min(M, f, cfg, diagnostics=False))
    mins = [r.min_Z for r in reports]
    worst = float(np.min(mins))
    return ParabolicReport(series.times.tolist(), reports, worst, "holds" if worst >= -cfg.tol_Z else "violated")
