"""Strict TOML run configuration.

Every table maps onto a dataclass; unknown keys and wrongly typed values
raise ConfigError.  The documented schema lives in README.md.
"""
from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Any

from .errors import ConfigError

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib

SCHEMA_VERSION = 1

EXPERIMENTS = (
    "verify-geometry",
    "verify-jacobi",
    "verify-kfields",
    "solve",
    "scan",
    "parabolic-scan",
    "chain-audit",
    "check-hypotheses",
)


@dataclass
class DomainConfig:
    components: list = dc_field(default_factory=list)
    resolution: list = dc_field(default_factory=list)
    order: int = 3
    richardson: bool = False


@dataclass
class FieldConfig:
    # torsion | liouville | semilinear | function
    source: str = "torsion"
    function: str = ""
    c: float = 1.0
    d: float = 1.0
    B: float = 15.0
    collar_cells: float = 5.0
    key: str = "constant"
    params: dict = dc_field(default_factory=dict)


@dataclass
class ScanSection:
    n_pairs: int = 10000
    k_refine: int = 10
    exclusion: float = 2.0
    tol_Z: float = 1e-6
    max_iter: int = 200
    n_boundary_pairs: int = 200
    trust_only: bool = False
    interior_margin: float = 2.0
    chunk: int = 4096
    min_valid: int = 100


@dataclass
class VerifySection:
    n_pairs: int = 20
    half_length: float = 0.5
    h_ladder: list = dc_field(default_factory=lambda: [1e-2, 5e-3, 2.5e-3])
    n_ode: int = 800
    n_frames: int = 100
    tol_jacobi: float = 1e-8
    tol_midpoint_ode: float = 1e-8
    tol_midpoint_fd: float = 1e-6
    min_slope: float = 1.9
    tol_oddness: float = 1e-8
    tol_identity: float = 1e-6
    tol_geometry: float = 1e-10


@dataclass
class HeatSection:
    # exp_cosh on Euclidean domains, cap_cos on spherical caps
    initial: str = "exp_cosh"
    C: float = 4.0
    boundary: str = "exact"
    T: float = 0.5
    steps: int = 50
    transform: str = "neg"


@dataclass
class ChainSection:
    f: str = "neg_trace"
    lambdas: list = dc_field(default_factory=list)
    b: str = "constant"
    b_params: dict = dc_field(default_factory=lambda: {"c": 1.0})
    n_pairs: int = 10
    margin_cells: float = 5.0
    tol: float = 1e-5


@dataclass
class SolveSection:
    # optional analytic comparisons: none | torsion | liouville_1d
    oracle: str = "none"
    inner_fraction: float = 0.8
    tol_oracle: float = 1e-6
    B_sweep: list = dc_field(default_factory=list)
    tol_sweep: float = 1e-4
    perturb_inner: list = dc_field(default_factory=list)
    perturb_resolution: list = dc_field(default_factory=list)
    perturb_eps: list = dc_field(default_factory=lambda: [1e-2, 1e-3, 1e-4])
    tol_spread: float = 2.0
    write_field: bool = False


@dataclass
class HypothesesSection:
    f: list = dc_field(default_factory=list)
    b: list = dc_field(default_factory=list)
    n_samples: int = 500


@dataclass
class RunConfig:
    experiment: str
    seed: int = 0
    workers: int = 1
    schema: int = SCHEMA_VERSION
    manifold: list = dc_field(default_factory=list)
    domain: DomainConfig = dc_field(default_factory=DomainConfig)
    field: FieldConfig = dc_field(default_factory=FieldConfig)
    scan: ScanSection = dc_field(default_factory=ScanSection)
    verify: VerifySection = dc_field(default_factory=VerifySection)
    heat: HeatSection = dc_field(default_factory=HeatSection)
    chain: ChainSection = dc_field(default_factory=ChainSection)
    solve: SolveSection = dc_field(default_factory=SolveSection)
    hypotheses: HypothesesSection = dc_field(default_factory=HypothesesSection)
    out: str = "out"

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_SECTIONS = {
    "domain": DomainConfig,
    "field": FieldConfig,
    "scan": ScanSection,
    "verify": VerifySection,
    "heat": HeatSection,
    "chain": ChainSection,
    "solve": SolveSection,
    "hypotheses": HypothesesSection,
}


def _coerce(value: Any, default: Any, where: str):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where} must be a boolean")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where} must be an integer")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where} must be a number")
        return float(value)
    if isinstance(default, str) and not isinstance(value, str):
        raise ConfigError(f"{where} must be a string")
    if isinstance(default, list) and not isinstance(value, list):
        raise ConfigError(f"{where} must be an array")
    if isinstance(default, dict) and not isinstance(value, dict):
        raise ConfigError(f"{where} must be a table")
    return value


def _build(cls, table: dict, where: str):
    if not isinstance(table, dict):
        raise ConfigError(f"[{where}] must be a table")
    known = {f.name: f for f in dataclasses.fields(cls)}
    extra = sorted(set(table) - set(known))
    if extra:
        raise ConfigError(f"unknown keys in [{where}]: {extra}")
    proto = cls() if cls is not RunConfig else None
    kwargs = {}
    for name, value in table.items():
        default = getattr(proto, name)
        kwargs[name] = _coerce(value, default, f"{where}.{name}")
    return cls(**kwargs)


def _check_ranges(cfg: RunConfig) -> None:
    def need(ok, msg):
        if not ok:
            raise ConfigError(msg)

    need(cfg.experiment in EXPERIMENTS, f"unknown experiment {cfg.experiment!r}; known: {list(EXPERIMENTS)}")
    need(cfg.schema == SCHEMA_VERSION, f"schema {cfg.schema} is not supported (expected {SCHEMA_VERSION})")
    need(cfg.seed >= 0, "seed must be nonnegative")
    need(cfg.workers >= 1, "workers must be at least 1")
    need(cfg.domain.order in (3, 5), "domain.order must be 3 or 5")
    need(cfg.field.source in ("torsion", "liouville", "semilinear", "function"), "field.source is unknown")
    s = cfg.scan
    need(s.n_pairs >= 1 and s.k_refine >= 0 and s.max_iter >= 0, "scan counts must be nonnegative")
    need(s.exclusion >= 0 and s.tol_Z >= 0, "scan.exclusion and scan.tol_Z must be nonnegative")
    v = cfg.verify
    need(v.n_pairs >= 1 and v.n_ode >= 10 and v.n_frames >= 1, "verify counts are too small")
    need(0 < v.half_length, "verify.half_length must be positive")
    need(len(v.h_ladder) >= 2 and all(isinstance(h, (int, float)) and h > 0 for h in v.h_ladder),
         "verify.h_ladder needs at least two positive steps")
    h = cfg.heat
    need(h.initial in ("exp_cosh", "cap_cos"), "heat.initial must be exp_cosh or cap_cos")
    need(h.boundary in ("exact", "frozen"), "heat.boundary must be exact or frozen")
    need(h.transform in ("neg", "pos", "none"), "heat.transform must be neg, pos or none")
    need(h.T > 0 and h.steps >= 1, "heat.T must be positive and heat.steps at least 1")
    need(cfg.solve.oracle in ("none", "torsion", "liouville_1d"), "solve.oracle is unknown")
    need(0 < cfg.solve.inner_fraction <= 1, "solve.inner_fraction must lie in (0, 1]")


def parse_config(data: dict, seed: int | None = None, out: str | None = None) -> RunConfig:
    if not isinstance(data, dict) or "experiment" not in data:
        raise ConfigError("config needs an 'experiment' key")
    data = dict(data)
    top = {}
    for key in ("experiment", "seed", "workers", "schema", "out"):
        if key in data:
            top[key] = data.pop(key)
    if "manifold" in data:
        man = data.pop("manifold")
        if not isinstance(man, dict) or set(man) - {"factors"}:
            raise ConfigError("[manifold] takes exactly one key, 'factors'")
        top["manifold"] = man.get("factors", [])
    extra = sorted(set(data) - set(_SECTIONS))
    if extra:
        raise ConfigError(f"unknown top-level keys: {extra}")
    if not isinstance(top["experiment"], str):
        raise ConfigError("experiment must be a string")
    cfg = RunConfig(experiment=top["experiment"])
    for key in ("seed", "workers", "schema"):
        if key in top:
            setattr(cfg, key, _coerce(top[key], getattr(cfg, key), key))
    if "out" in top:
        cfg.out = _coerce(top["out"], "", "out")
    if "manifold" in top:
        if not isinstance(top["manifold"], list):
            raise ConfigError("manifold.factors must be an array of tables")
        cfg.manifold = top["manifold"]
    for name, cls in _SECTIONS.items():
        if name in data:
            setattr(cfg, name, _build(cls, data[name], name))
    if seed is not None:
        cfg.seed = int(seed)
    if out is not None:
        cfg.out = str(out)
    _check_ranges(cfg)
    return cfg


def load_config(path, seed: int | None = None, out: str | None = None) -> RunConfig:
    p = Path(path)
    try:
        with open(p, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file {p} not found") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config file {p} is not valid TOML: {exc}") from exc
    return parse_config(data, seed=seed, out=out)
