"""Annealing driver: parameter schedule, epoch loop, and the shift search."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Optional

import mpmath
import numpy as np

from .backend import compilable, compile_problem
from .chains import ChainTrace, SgldParams, sgld_run
from .geometry import ConvexBody, sample_uniform_ball_intersect
from .noise import NoisyOracle, noisy_eval
from .smoothing import DerivedConstants, SmoothedOracle

__all__ = [
    "AnnealConfig",
    "Schedule",
    "InfeasibleSchedule",
    "EpochSummary",
    "AnnealResult",
    "compute_k_max",
    "build_schedule",
    "compute_schedule",
    "compute_i_max",
    "anneal_run",
    "binary_search_shift",
]

log = logging.getLogger(__name__)

ETA_FLOOR = 1e-300
MATERIALIZE_DIGITS = 10_000


class InfeasibleSchedule(ValueError):
    """The theory schedule is undefined for these noise levels."""


@dataclass(frozen=True)
class AnnealConfig:
    eps_hat: float
    delta_prime: float = 0.1
    mode: str = "practical"
    eps: float = 1.0 / 50
    c: float = 1.0
    # practical-mode knobs
    i_max: int = 100_000
    eta0: Optional[float] = None  # step size at ξ(J_0); default from the caps
    step_cap: str = "epoch"  # "epoch": D_k = √(2η_k d); "global": D = √(2η̄d)
    # optional overrides
    r: Optional[float] = None
    D: Optional[float] = None
    k_max: Optional[int] = None
    overrides: tuple = ()  # per-epoch dicts with any of xi, eta, i_max

    def __post_init__(self):
        if self.mode not in ("theory", "practical"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "theory" and self.eps != 1.0 / 50:
            object.__setattr__(self, "eps", 1.0 / 50)
        if not 0 < self.eps < 1.0 / 25:
            raise ValueError("eps must lie in (0, 1/25)")
        if self.eps_hat <= 0 or not 0 < self.delta_prime < 1:
            raise ValueError("need eps_hat > 0 and delta_prime in (0, 1)")
        if self.eta0 is not None and not self.eta0 > 0:
            raise ValueError("eta0 must be positive")
        if self.step_cap not in ("epoch", "global"):
            raise ValueError(f"unknown step_cap {self.step_cap!r}")
        if self.i_max < 1:
            raise ValueError("i_max must be >= 1")

    @property
    def D_frak(self) -> float:
        return 2.0 * self.eps_hat / 3.0


def compute_k_max(J_0: float, D_frak: float, eps: float) -> int:
    """``⌈log(5J_0/𝔇)/log(1/(25ε))⌉ + 1``, at least 1."""
    if 25 * eps >= 1:
        raise ValueError("k_max needs 25·eps < 1")
    if D_frak <= 0:
        raise ValueError("D_frak must be positive")
    if J_0 <= 0:
        return 1
    val = math.log(5 * J_0 / D_frak) / math.log(1.0 / (25 * eps))
    return max(1, math.ceil(val - 1e-12) + 1)


@dataclass
class Schedule:
    """Every derived quantity of the parameter list, in one record."""

    mode: str
    d: int
    R: float
    lam: float
    alpha: float
    beta: float
    alpha_dagger: float
    eps: float
    eps_hat: float
    D_frak: float
    delta_prime: float
    delta: float
    c: float
    k_max: int
    J_0: float
    r_prime: float
    r_prime_eff: float
    log_term: float
    xi_bar: float
    r: float
    omega: float
    constants: DerivedConstants
    eta_bar_dagger: float
    B_prime: float
    log_i_max: float  # natural log of the theory i_max (nan when infeasible)
    i_max_theory: Optional[int]
    i_max_digits: Optional[int]
    B: float
    eta_bar: float
    D: float
    i_max: int  # steps actually run per epoch
    infeasible: Optional[str] = None
    eta0: float = float("nan")
    xi_ref: float = float("nan")
    step_cap: str = "global"

    def xi(self, J: float) -> float:
        J_hat = max(J, self.D_frak)
        if not J_hat > 0:
            raise ValueError("J_hat must be positive")
        return 4 * self.d * self.log_term / (0.2 * self.eps * J_hat)

    def _bracket(self, B: float) -> float:
        a, ad, b, Df = self.alpha, self.alpha_dagger, self.beta, self.D_frak
        return a / (1 - ad) * (3 + self.eps * B + b / Df) + b / Df

    def log_exp_factor(self) -> float:
        """log of the conductance factor e^{−(100d/ε)[…]log(R/ρ)}."""
        if self.mode != "theory":
            return 0.0
        return -(100 * self.d / self.eps) * self._bracket(self.B) * self.log_term

    def cap_terms(self) -> list:
        k = self.constants
        return [
            math.log(k.zeta_max),
            math.log(self.d * self.omega**2 / self.lam**2),
            math.log(k.b_max**2 / self.d),
        ]

    def eta(self, xi: float, with_factor: bool = True) -> float:
        """Step size at inverse temperature ``xi``.

        Practical mode: ``eta0 * (xi_ref / xi)**2`` with ``xi_ref = ξ(J_0)``.
        """
        if self.mode == "practical" and with_factor:
            return max(self.eta0 * (self.xi_ref / xi) ** 2, ETA_FLOOR)
        k = self.constants
        terms = self.cap_terms() + [
            (2 * self.log_exp_factor() if with_factor else 0.0)
            - math.log(self.R * self.d**3) - 2 * math.log((xi * k.G) ** 2 + xi * k.L),
        ]
        return max(self.c * math.exp(min(terms)), ETA_FLOOR)

    def step_cap_for(self, eta_k: float) -> float:
        if self.step_cap == "epoch":
            return math.sqrt(2 * eta_k * self.d)
        return self.D

    def as_dict(self) -> dict:
        out = {k: v for k, v in self.__dict__.items() if k != "constants"}
        out["constants"] = self.constants.as_dict()
        if self.i_max_theory is not None and self.i_max_digits and self.i_max_digits > 18:
            out["i_max_theory"] = None
        elif self.i_max_theory is not None:
            out["i_max_theory"] = int(self.i_max_theory)
        return out


def _i_max_log(s: Schedule, xi_k: float) -> tuple[float, float]:
    """Return (log of the bracketed ratio, log i_max before ceiling)."""
    k = s.constants
    d, R, eps, delta = s.d, s.R, s.eps, s.delta
    num = (
        8 * R * k.lambda_tilde * xi_k
        + 4 * d * (1 + math.log1p(s.xi_bar) + math.log(2 * R * k.lambda_tilde / delta))
        + 4 * math.log(1 / delta)
    )
    expo = -(150 * d / eps) * s._bracket(s.B_prime) * s.log_term
    log_den = -math.log(1536 * R) + 0.5 * math.log(s.eta_bar_dagger / d) + expo
    log_ratio = math.log(num) - 2 * log_den
    power = 1 - 150 * s.alpha / eps
    return log_ratio, log_ratio / power


def compute_i_max(s: Schedule, xi_k: Optional[float] = None):
    """Theory i_max at ``xi_k`` (default ξ̄).

    Returns ``(value, digits, log_value)``. ``value`` is an exact integer when
    it has at most ``MATERIALIZE_DIGITS`` digits, else ``None``. Practical
    mode returns the configured budget.
    """
    if s.mode == "practical":
        return s.i_max, len(str(s.i_max)), math.log(s.i_max)
    if 150 * s.alpha / s.eps >= 1:
        raise InfeasibleSchedule(
            f"(150/eps)*alpha = {150 * s.alpha / s.eps:.4g} >= 1: alpha too large for the theory schedule"
        )
    xi_k = s.xi_bar if xi_k is None else xi_k
    _, lv = _i_max_log(s, xi_k)
    digits = int(math.floor(lv / math.log(10))) + 1 if lv > 0 else 1
    if digits <= MATERIALIZE_DIGITS:
        with mpmath.workdps(digits + 30):
            val = int(mpmath.ceil(mpmath.exp(mpmath.mpf(lv)))) + 1
        return val, len(str(val)), lv
    return None, digits, lv


def build_schedule(
    config: AnnealConfig,
    body: ConvexBody,
    oracle: NoisyOracle,
    constants: DerivedConstants,
    J_0: float,
) -> Schedule:
    """Evaluate the parameter list for an initial oracle value ``J_0``.

    In theory mode an infeasible i_max raises ``InfeasibleSchedule``.
    """
    d = body.dimension
    R = body.bounding_radius
    lam = oracle.base.lipschitz
    alpha, beta, ad = oracle.alpha, oracle.beta, oracle.alpha_dagger
    eps = config.eps
    Df = config.D_frak
    if Df < beta / eps * (1 - 1e-12):
        log.warning("D_frak = %.4g is below beta/eps = %.4g", Df, beta / eps)
    k_max = config.k_max if config.k_max is not None else compute_k_max(J_0, Df, eps)
    delta = config.delta_prime / (6 * (k_max + 1))
    r_prime = body.rounding_radius
    r_eff = min(r_prime, Df / lam)
    if r_eff < r_prime:
        log.info("clamping r' from %.6g to D/lambda = %.6g in schedule formulas", r_prime, r_eff)
    rho = min(eps * Df / (2 * lam), r_eff)
    log_term = math.log(R / rho)
    xi_bar = 4 * d * log_term / (eps * Df / 25)
    r = config.r if config.r is not None else delta / (xi_bar * constants.lambda_tilde)
    if r > r_prime:
        raise ValueError(f"warm-start radius {r} exceeds r' = {r_prime}")
    omega = eps * Df
    s = Schedule(
        mode=config.mode, d=d, R=R, lam=lam, alpha=alpha, beta=beta, alpha_dagger=ad,
        eps=eps, eps_hat=config.eps_hat, D_frak=Df, delta_prime=config.delta_prime,
        delta=delta, c=config.c, k_max=k_max, J_0=J_0, r_prime=r_prime, r_prime_eff=r_eff,
        log_term=log_term, xi_bar=xi_bar, r=r, omega=omega, constants=constants,
        eta_bar_dagger=float("nan"), B_prime=float("nan"), log_i_max=float("nan"),
        i_max_theory=None, i_max_digits=None, B=float("nan"), eta_bar=float("nan"),
        D=float("nan"), i_max=int(config.i_max),
    )
    if config.mode == "practical":
        s.step_cap = config.step_cap
        s.xi_ref = s.xi(J_0)
        s.eta0 = config.eta0 if config.eta0 is not None else config.c * math.exp(min(s.cap_terms()))
    s.eta_bar_dagger = s.eta(xi_bar, with_factor=False)
    base = d * math.log(2 * R / r) + delta + math.log(1 / delta)
    s.B_prime = (base + 1) / (2 * d * log_term)
    if config.mode == "theory":
        try:
            val, digits, lv = compute_i_max(s)
        except InfeasibleSchedule as exc:
            s.infeasible = str(exc)
            raise
        s.i_max_theory, s.i_max_digits, s.log_i_max = val, digits, lv
        log_imax_p1 = math.log(val + 1) if val is not None else lv
        s.B = (base + log_imax_p1) / (2 * d * log_term)
    else:
        s.B = (base + math.log(s.i_max + 1)) / (2 * d * log_term)
    s.eta_bar = s.eta(xi_bar)
    s.D = config.D if config.D is not None else math.sqrt(2 * s.eta_bar * d)
    return s


def compute_schedule(s: Schedule, J_k: float) -> tuple[float, float]:
    """``(ξ_k, η_k)`` for the current oracle value ``J_k``."""
    xi = s.xi(J_k)
    return xi, s.eta(xi)


@dataclass
class EpochSummary:
    k: int
    xi: float
    eta: float
    D: float
    i_max: int
    J: float
    J_hat: float
    best_fhat: float
    best_f: float
    start: np.ndarray
    output: np.ndarray
    warm_rejections: int
    acceptance: float


@dataclass
class AnnealResult:
    x_hat: np.ndarray
    f_hat: float
    f_true: float
    epochs: list
    total_steps: int
    wall_time: float
    schedule: Schedule
    best_overall: np.ndarray
    best_overall_fhat: float
    traces: list = field(default_factory=list)


def _epoch_params(s: Schedule, config: AnnealConfig, k: int, J_k: float):
    xi, eta = compute_schedule(s, J_k)
    n = s.i_max
    if s.mode == "theory":
        n = int(min(s.i_max_theory or s.i_max, s.i_max))
    D = s.step_cap_for(eta)
    if k < len(config.overrides) and config.overrides[k]:
        ov = config.overrides[k]
        xi = float(ov.get("xi", xi))
        eta = float(ov.get("eta", eta))
        n = int(ov.get("i_max", n))
        D = float(ov.get("D", s.step_cap_for(eta) if "eta" in ov else D))
    return xi, eta, n, D


def anneal_run(
    body: ConvexBody,
    oracle: NoisyOracle,
    smoothed: SmoothedOracle,
    config: AnnealConfig,
    x0,
    rng,
    *,
    keep_traces: bool = False,
    backend: Optional[str] = None,
    schedule: Optional[Schedule] = None,
) -> AnnealResult:
    """Run the annealing driver for ``k_max`` epochs from ``x0``.

    ``rng`` is a ``(master_seed, label)`` pair or a callable
    ``rng(purpose, epoch) -> Generator``; each epoch draws its warm start,
    Langevin noise and gradient noise from separate streams.
    In theory mode the per-epoch step count is the theory i_max capped by
    ``config.i_max``, since the literal count cannot be executed.
    """
    t0 = time.perf_counter()
    streams = _streams(rng)
    x = np.asarray(x0, dtype=float)
    if not body.contains(x):
        raise ValueError("x0 lies outside the body")
    J = float(noisy_eval(oracle, x))
    s = schedule or build_schedule(config, body, oracle, smoothed.constants, J)
    problem = compile_problem(oracle, body, backend) if compilable(oracle) else None
    sm = replace(smoothed, base=oracle) if smoothed.base is not oracle else smoothed
    epochs, traces = [], []
    steps = 0
    best_x, best_v = x.copy(), J
    for k in range(s.k_max):
        xi, eta, n, D = _epoch_params(s, config, k, J)
        y, rej = sample_uniform_ball_intersect(body, x, s.r, streams("warm", k))
        params = SgldParams(xi, eta, n, D)
        tr = sgld_run(
            body, sm, oracle, params, y, (streams("langevin", k), streams("gradient", k)),
            problem=problem, backend=backend,
        )
        tr.epoch = k
        steps += n
        i = tr.i_star
        epochs.append(EpochSummary(
            k, xi, eta, D, n, J, max(J, s.D_frak), float(tr.fhat[i]), float(tr.f_true[i]),
            y, tr.X[i].copy(), rej, tr.acceptance_rate,
        ))
        x = tr.X[i].copy()
        J = float(tr.fhat[i])
        if J < best_v:
            best_x, best_v = x.copy(), J
        if keep_traces:
            traces.append(tr)
    f_true = float(oracle.base.evaluate(x))
    return AnnealResult(
        x, J, f_true, epochs, steps, time.perf_counter() - t0, s, best_x, best_v, traces
    )


def _streams(rng):
    from .seeding import generator

    if callable(rng) and not isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, tuple):
        master, label = rng
        return lambda purpose, k: generator(master, f"{label}/{purpose}", k)
    if isinstance(rng, (int, np.integer)):
        return lambda purpose, k: generator(int(rng), purpose, k)
    raise TypeError("rng must be a seed, a (seed, label) pair or a stream factory")


def binary_search_shift(
    raw_oracle: NoisyOracle,
    smoothed: SmoothedOracle,
    body: ConvexBody,
    beta: float,
    config: AnnealConfig,
    bounds: tuple,
    budget: int,
    x0,
    seed: int,
    backend: Optional[str] = None,
    probe_budget: Optional[int] = None,
) -> dict:
    """Bisect on a guess ``m′`` for the unknown minimum value.

    ``raw_oracle`` evaluates the unshifted objective (its ``offset`` carries
    the unknown minimum). Each probe anneals on ``raw − m′``; if the raw value
    at the returned point is at most ``m′ + β`` the guess is lowered,
    otherwise raised. Stops when the bracket is no wider than ε̂ or the
    budget is spent. With ``probe_budget`` each probe's total step count is
    split evenly over its own epochs.
    """
    lo, hi = float(bounds[0]), float(bounds[1])
    probes = []
    best_x, best_raw = None, math.inf
    j = 0
    while j < budget and hi - lo > config.eps_hat:
        m = 0.5 * (lo + hi)
        shifted = raw_oracle.with_offset(raw_oracle.offset - m)
        cfg = config
        if probe_budget is not None:
            J0 = float(noisy_eval(shifted, x0))
            k = config.k_max or compute_k_max(J0, config.D_frak, config.eps)
            cfg = replace(config, i_max=max(1, probe_budget // k))
        res = anneal_run(body, shifted, smoothed, cfg, x0, (seed, f"probe{j}"), backend=backend)
        raw_val = float(noisy_eval(raw_oracle, res.x_hat))
        if raw_val <= m + beta:
            hi = m
        else:
            lo = m
        probes.append({"guess": m, "raw_value": raw_val, "lo": lo, "hi": hi})
        if raw_val < best_raw:
            best_x, best_raw = res.x_hat.copy(), raw_val
        j += 1
    return {
        "m_estimate": 0.5 * (lo + hi),
        "x_hat": best_x,
        "bracket": (lo, hi),
        "probes": probes,
    }
