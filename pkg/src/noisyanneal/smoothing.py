"""Gaussian smoothing ``f̃_σ(x) = E F̂(x + Z)`` and the constants derived from it."""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .geometry import ConvexBody, zeta_max as _zeta_max
from .noise import NoisyOracle, noisy_eval

__all__ = [
    "DerivedConstants",
    "SmoothedOracle",
    "select_sigma",
    "derived_constants",
    "make_smoothed",
    "stochastic_gradient",
    "stochastic_gradients",
    "smoothed_value_mc",
]

log = logging.getLogger(__name__)

ALPHA_FLOOR = 1e-6


@dataclass(frozen=True)
class DerivedConstants:
    M: float
    M_hat: float
    L: float
    G: float
    b_max: float
    zeta_max: float
    lambda_tilde: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def select_sigma(lam: float, alpha: float, beta: float, d: int, r_thick: float) -> float:
    """``½·min(β/(λ(1+α)√d), 𝗋/√(log(1/α) + d))``."""
    if lam <= 0 or r_thick <= 0 or beta <= 0:
        raise ValueError("lambda, beta and r_thick must be positive")
    a_eff = alpha
    if alpha <= 0:
        warnings.warn(f"alpha = 0 makes log(1/alpha) undefined; using {ALPHA_FLOOR}")
        a_eff = ALPHA_FLOOR
    b1 = beta / (lam * (1.0 + alpha) * math.sqrt(d))
    b2 = r_thick / math.sqrt(math.log(1.0 / a_eff) + d)
    return 0.5 * min(b1, b2)


def derived_constants(lam, R, alpha, beta, sigma, r_prime, d) -> DerivedConstants:
    M = 2 * lam * R + 2 * beta
    M_hat = 6 * lam * R + beta
    L = 4 * M_hat / sigma**2
    G = 2 * M_hat / sigma
    lt = (math.sqrt(2 * d) / sigma) * (2 * lam * R * (1 + 2 * alpha) + 2 * beta)
    return DerivedConstants(M, M_hat, L, G, 1.0, _zeta_max(r_prime, d), lt)


@dataclass(frozen=True)
class SmoothedOracle:
    base: NoisyOracle
    sigma: float
    constants: DerivedConstants
    sigma_formula: float = float("nan")

    @property
    def dimension(self) -> int:
        return self.base.base.dimension


def make_smoothed(oracle: NoisyOracle, body: ConvexBody, r_thick: float, sigma=None) -> SmoothedOracle:
    """Wrap ``oracle`` with the formula σ unless an override is given.

    The formula value is always computed and logged; it is undefined when
    β = 0, in which case an override is required.
    """
    lam = oracle.base.lipschitz
    d = body.dimension
    try:
        s_formula = select_sigma(lam, oracle.alpha, oracle.beta, d, r_thick)
    except ValueError:
        s_formula = float("nan")
    log.info("formula sigma = %.6g", s_formula)
    s = s_formula if sigma is None or sigma == "auto" else float(sigma)
    if not s > 0:
        raise ValueError("sigma must be positive; supply an override when beta = 0")
    c = derived_constants(lam, body.bounding_radius, oracle.alpha, oracle.beta, s, body.rounding_radius, d)
    return SmoothedOracle(oracle, s, c, s_formula)


def stochastic_gradients(s: SmoothedOracle, x, rng, n: int) -> np.ndarray:
    """``n`` independent draws of ``Z(F̂(x+Z) − F̂(x))/σ²``."""
    x = np.asarray(x, dtype=float)
    z = s.sigma * rng.standard_normal((n, x.shape[0]))
    fx = noisy_eval(s.base, x)
    fz = np.asarray(noisy_eval(s.base, x + z), dtype=float)
    return z * ((fz - fx) / s.sigma**2)[:, None]


def stochastic_gradient(s: SmoothedOracle, x, rng) -> np.ndarray:
    return stochastic_gradients(s, x, rng, 1)[0]


def smoothed_value_mc(s: SmoothedOracle, x, n: int, rng) -> tuple[float, float]:
    """Mean of ``F̂(x + Z_j)`` over ``n`` draws, with its standard error."""
    if n < 1:
        raise ValueError("n must be >= 1")
    x = np.asarray(x, dtype=float)
    z = s.sigma * rng.standard_normal((n, x.shape[0]))
    v = np.asarray(noisy_eval(s.base, x + z), dtype=float)
    se = float(v.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return float(v.mean()), se
