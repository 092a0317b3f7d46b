"""Run configuration: a TOML file with sections body, objective, noise,
smoothing, anneal and output, plus a top-level ``seed``.

Unknown sections or keys are rejected. ``emit`` writes a canonical form that
parses back to an equal ``RunConfig``; its SHA-256 is the config hash.
"""
from __future__ import annotations

import hashlib
import sys
from dataclasses import dataclass, field, fields
from typing import Any, Optional

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib
import tomli_w

from .annealing import AnnealConfig
from .geometry import ConvexBody, make_body
from .noise import NoisyOracle, make_oracle, make_ripple_noise
from .objective import OBJECTIVE_KINDS, ConvexObjective, make_test_objective
from .smoothing import SmoothedOracle, make_smoothed

__all__ = ["ConfigError", "RunConfig", "Instance", "parse_config", "load_config", "emit_config", "build_instance"]


class ConfigError(ValueError):
    """The configuration text is malformed or inconsistent."""


def _float(v):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise TypeError("expected a number")
    return float(v)


def _int(v):
    if isinstance(v, bool) or not isinstance(v, int):
        raise TypeError("expected an integer")
    return v


def _str(v):
    if not isinstance(v, str):
        raise TypeError("expected a string")
    return v


def _bool(v):
    if not isinstance(v, bool):
        raise TypeError("expected true or false")
    return v


def _vec(v):
    if not isinstance(v, list):
        raise TypeError("expected a list of numbers")
    return [_float(a) for a in v]


def _mat(v):
    if not isinstance(v, list) or not all(isinstance(r, list) for r in v):
        raise TypeError("expected a list of lists")
    return [_vec(r) for r in v]


def _sigma(v):
    if v == "auto":
        return v
    return _float(v)


@dataclass
class BodySection:
    kind: str = "ball"
    rounding_radius: float = 0.1
    center: Optional[list] = None
    radius: Optional[float] = None
    lo: Optional[list] = None
    hi: Optional[list] = None
    normals: Optional[list] = None
    offsets: Optional[list] = None
    bounding_center: Optional[list] = None
    bounding_radius: Optional[float] = None

    _types = dict(kind=_str, rounding_radius=_float, center=_vec, radius=_float, lo=_vec, hi=_vec,
                  normals=_mat, offsets=_vec, bounding_center=_vec, bounding_radius=_float)


@dataclass
class ObjectiveSection:
    kind: str = "quadratic"
    minimizer: list = field(default_factory=lambda: [0.0, 0.0])
    A: Optional[list] = None
    scale: Optional[float] = None
    width: Optional[float] = None
    slopes: Optional[list] = None
    tau: Optional[float] = None
    curvature: Optional[float] = None
    offset: float = 0.0  # minimum value of the raw oracle (unknown to shift-search)

    _types = dict(kind=_str, minimizer=_vec, A=_mat, scale=_float, width=_float, slopes=_mat,
                  tau=_float, curvature=_float, offset=_float)


@dataclass
class NoiseSection:
    kind: str = "none"  # none | ripple
    alpha: float = 0.0
    beta: float = 0.0
    alpha_dagger: Optional[float] = None
    wavelength: float = 0.1
    seed: int = 0
    thickening: Optional[float] = None  # width of the zero-extension margin; default r'

    _types = dict(kind=_str, alpha=_float, beta=_float, alpha_dagger=_float, wavelength=_float,
                  seed=_int, thickening=_float)


@dataclass
class SmoothingSection:
    sigma: Any = "auto"

    _types = dict(sigma=_sigma)


@dataclass
class AnnealSection:
    mode: str = "practical"
    eps_hat: float = 0.1
    delta_prime: float = 0.1
    eps: float = 1.0 / 50
    c: float = 1.0
    budget: Optional[int] = None  # total steps, split evenly over the epochs
    i_max: Optional[int] = None  # steps per epoch (ignored when budget is set)
    eta0: Optional[float] = None
    step_cap: str = "epoch"
    k_max: Optional[int] = None
    r: Optional[float] = None
    D: Optional[float] = None
    x0: Optional[list] = None
    shift_lo: Optional[float] = None
    shift_hi: Optional[float] = None
    shift_budget: Optional[int] = None

    _types = dict(mode=_str, eps_hat=_float, delta_prime=_float, eps=_float, c=_float, budget=_int,
                  i_max=_int, eta0=_float, step_cap=_str, k_max=_int, r=_float, D=_float, x0=_vec,
                  shift_lo=_float, shift_hi=_float, shift_budget=_int)


@dataclass
class OutputSection:
    dir: str = "out"
    trace: str = "trace.csv"
    summary: str = "summary.json"
    emit_coords: bool = False

    _types = dict(dir=_str, trace=_str, summary=_str, emit_coords=_bool)


_SECTIONS = {
    "body": BodySection,
    "objective": ObjectiveSection,
    "noise": NoiseSection,
    "smoothing": SmoothingSection,
    "anneal": AnnealSection,
    "output": OutputSection,
}


@dataclass
class RunConfig:
    body: BodySection = field(default_factory=BodySection)
    objective: ObjectiveSection = field(default_factory=ObjectiveSection)
    noise: NoiseSection = field(default_factory=NoiseSection)
    smoothing: SmoothingSection = field(default_factory=SmoothingSection)
    anneal: AnnealSection = field(default_factory=AnnealSection)
    output: OutputSection = field(default_factory=OutputSection)
    seed: int = 0

    def emit(self) -> str:
        return emit_config(self)

    def hash(self) -> str:
        return hashlib.sha256(self.emit().encode("utf-8")).hexdigest()

    def to_dict(self) -> dict:
        out: dict = {"seed": self.seed}
        for name in _SECTIONS:
            sec = getattr(self, name)
            out[name] = {f.name: getattr(sec, f.name) for f in fields(sec) if getattr(sec, f.name) is not None}
        return out


def _section(name: str, raw: Any):
    cls = _SECTIONS[name]
    if not isinstance(raw, dict):
        raise ConfigError(f"[{name}] must be a table")
    known = cls._types
    unknown = sorted(set(raw) - set(known))
    if unknown:
        raise ConfigError(f"unknown key(s) in [{name}]: {', '.join(unknown)}")
    kw = {}
    for k, v in raw.items():
        try:
            kw[k] = known[k](v)
        except TypeError as exc:
            raise ConfigError(f"[{name}] {k}: {exc}") from None
    return cls(**kw)


def _validate(cfg: RunConfig) -> None:
    if cfg.body.kind not in ("ball", "box", "polytope"):
        raise ConfigError(f"unknown body kind {cfg.body.kind!r}")
    if cfg.objective.kind not in OBJECTIVE_KINDS:
        raise ConfigError(f"unknown objective kind {cfg.objective.kind!r}")
    if cfg.noise.kind not in ("none", "ripple"):
        raise ConfigError(f"unknown noise kind {cfg.noise.kind!r}")
    if cfg.anneal.mode not in ("theory", "practical"):
        raise ConfigError(f"unknown anneal mode {cfg.anneal.mode!r}")
    if cfg.anneal.step_cap not in ("epoch", "global"):
        raise ConfigError(f"unknown step_cap {cfg.anneal.step_cap!r}")
    if not 0 <= cfg.seed < 2**64:
        raise ConfigError("seed must be a 64-bit unsigned integer")


def parse_config(text: str) -> RunConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"TOML syntax error: {exc}") from None
    top = set(raw) - set(_SECTIONS) - {"seed"}
    if top:
        raise ConfigError(f"unknown top-level key(s): {', '.join(sorted(top))}")
    kw = {name: _section(name, raw[name]) for name in _SECTIONS if name in raw}
    if "seed" in raw:
        try:
            kw["seed"] = _int(raw["seed"])
        except TypeError as exc:
            raise ConfigError(f"seed: {exc}") from None
    cfg = RunConfig(**kw)
    _validate(cfg)
    return cfg


def load_config(path) -> RunConfig:
    try:
        with open(path, "rb") as fh:
            text = fh.read().decode("utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    return parse_config(text)


def emit_config(cfg: RunConfig) -> str:
    return tomli_w.dumps(cfg.to_dict())


@dataclass
class Instance:
    body: ConvexBody
    objective: ConvexObjective
    oracle: NoisyOracle
    smoothed: SmoothedOracle
    anneal: AnnealConfig
    x0: np.ndarray
    thickening: float


def _opt(d: dict, **kw):
    return {k: v for k, v in kw.items() if v is not None} | d


def build_instance(cfg: RunConfig, mode: Optional[str] = None) -> Instance:
    """Materialize body, objective, oracle, smoothing and anneal settings."""
    b = cfg.body
    try:
        body = make_body(
            b.kind, b.rounding_radius, center=b.center, radius=b.radius or 0.0, lo=b.lo, hi=b.hi,
            normals=b.normals, offsets=b.offsets, bounding_center=b.bounding_center,
            bounding_radius=b.bounding_radius,
        )
        o = cfg.objective
        params = _opt({"minimizer": o.minimizer}, A=o.A, scale=o.scale, width=o.width,
                      slopes=o.slopes, tau=o.tau, curvature=o.curvature)
        n = cfg.noise
        thick = n.thickening if n.thickening is not None else body.rounding_radius
        obj = make_test_objective(o.kind, params, body=body, r_thick=thick)
        if n.kind == "ripple":
            psi, phi = make_ripple_noise(n.alpha, n.beta, n.wavelength, n.seed, body.dimension)
        else:
            psi = phi = None
        oracle = make_oracle(obj, psi, phi, n.alpha, n.beta, n.alpha_dagger, domain=body.thickened(thick))
        if o.offset:
            oracle = oracle.with_offset(o.offset)
        sm = make_smoothed(oracle, body, thick, sigma=cfg.smoothing.sigma)
        a = cfg.anneal
        ac = AnnealConfig(
            eps_hat=a.eps_hat, delta_prime=a.delta_prime, mode=mode or a.mode, eps=a.eps, c=a.c,
            i_max=a.i_max if a.i_max is not None else 100_000, eta0=a.eta0, step_cap=a.step_cap,
            r=a.r, D=a.D, k_max=a.k_max,
        )
        x0 = np.asarray(a.x0, dtype=float) if a.x0 is not None else body.inner.interior_point()
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(str(exc)) from None
    if x0.shape != (body.dimension,) or not body.contains(x0):
        raise ConfigError("anneal.x0 must be a point of the body")
    return Instance(body, obj, oracle, sm, ac, x0, thick)
