"""Noisy zeroth-order oracles ``F̂ = F(1+ψ) + φ``.

Noise is a deterministic function of the query point: ripples are fixed
band-limited fields drawn once from a seed, so repeated queries agree.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .geometry import ConvexBody, sample_uniform_ball
from .objective import ConvexObjective
from .seeding import generator

__all__ = [
    "Ripple",
    "ConstantNoise",
    "NoisyOracle",
    "NoiseReport",
    "make_oracle",
    "make_ripple_noise",
    "make_equation_system_oracle",
    "equation_system_levels",
    "affine_components",
    "noisy_eval",
    "verify_noise_bounds",
    "sample_body",
]

RIPPLE_MODES = 8


@dataclass(frozen=True)
class Ripple:
    """``amplitude · Σ_k w_k cos(⟨ω_k, x⟩ + θ_k)`` with ``Σ|w_k| = 1``."""

    amplitude: float
    weights: np.ndarray
    freqs: np.ndarray
    phases: np.ndarray

    kind = "ripple"

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        arg = x @ self.freqs.T + self.phases
        return self.amplitude * (np.cos(arg) @ self.weights)


@dataclass(frozen=True)
class ConstantNoise:
    value: float = 0.0

    kind = "constant"

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.full(x.shape[:-1], self.value) if x.ndim > 1 else self.value


def _default_alpha_dagger(alpha: float) -> float:
    return min(2.0 * alpha, 0.99)


@dataclass(frozen=True)
class NoisyOracle:
    base: ConvexObjective
    psi: Callable
    phi: Callable
    alpha: float
    beta: float
    alpha_dagger: float
    domain: Optional[ConvexBody] = None  # K_𝗋; F̂ is 0 outside it
    offset: float = 0.0
    # direct evaluator for oracles not naturally written as F(1+ψ)+φ
    direct: Optional[Callable] = field(default=None, compare=False, repr=False)

    def __call__(self, x):
        return noisy_eval(self, x)

    def with_offset(self, offset: float) -> "NoisyOracle":
        return replace(self, offset=float(offset))


def make_oracle(base, psi=None, phi=None, alpha=0.0, beta=0.0, alpha_dagger=None, domain=None):
    if not 0.0 <= alpha < 1.0:
        raise ValueError("alpha must lie in [0, 1)")
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    psi = ConstantNoise(0.0) if psi is None else psi
    phi = ConstantNoise(0.0) if phi is None else phi
    ad = _default_alpha_dagger(alpha) if alpha_dagger is None else float(alpha_dagger)
    if not 0.0 <= ad < 1.0:
        raise ValueError("alpha_dagger must lie in [0, 1)")
    return NoisyOracle(base, psi, phi, float(alpha), float(beta), ad, domain)


def noisy_eval(oracle: NoisyOracle, x):
    x = np.asarray(x, dtype=float)
    if oracle.direct is not None:
        val = oracle.direct(x)
    else:
        f = oracle.base.evaluate(x)
        val = f * (1.0 + oracle.psi(x)) + oracle.phi(x)
    val = val + oracle.offset
    if oracle.domain is not None:
        inside = oracle.domain.contains(x)
        val = np.where(inside, val, 0.0)
    return float(val) if np.ndim(val) == 0 else val


def _ripple(amplitude, d, wavelength, rng, modes=RIPPLE_MODES) -> Ripple:
    w = rng.uniform(0.5, 1.0, modes) * rng.choice([-1.0, 1.0], modes)
    w /= np.abs(w).sum()
    u = rng.standard_normal((modes, d))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    k = (2.0 * np.pi / wavelength) * rng.uniform(0.8, 1.25, modes)
    theta = rng.uniform(0.0, 2.0 * np.pi, modes)
    return Ripple(float(amplitude), w, u * k[:, None], theta)


def make_ripple_noise(alpha: float, beta: float, wavelength: float, seed: int, d: int):
    """Deterministic ripples with ``|ψ| ≤ α`` and ``|φ| ≤ β``.

    Each field is a sum of a few plane waves with wavenumbers near
    ``2π/wavelength`` and absolute weights summing to one.
    """
    if not 0.0 <= alpha < 1.0 or beta < 0 or wavelength <= 0:
        raise ValueError("need alpha in [0,1), beta >= 0, wavelength > 0")
    psi = _ripple(alpha, d, wavelength, generator(seed, "ripple-psi"))
    phi = _ripple(beta, d, wavelength, generator(seed, "ripple-phi"))
    return psi, phi


def equation_system_levels(a: float, b: float) -> tuple[float, float]:
    """Objective-level (α, β) induced by component noise ``|N_i| ≤ b + a|h_i|``."""
    alpha = 2 * a + a * a + 2 * b + 2 * a * b
    beta = 0.5 * (b + a * b) + b * b
    return alpha, beta


def affine_components(A, c):
    """Components ``h_i(x) = A_i·x − c_i`` with their gradients."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    c = np.asarray(c, dtype=float)
    comps = [(lambda x, i=i: np.asarray(x, float) @ A[i] - c[i]) for i in range(A.shape[0])]
    grads = [(lambda x, i=i: np.broadcast_to(A[i], np.shape(x))) for i in range(A.shape[0])]
    return comps, grads


def make_equation_system_oracle(
    components: Sequence[Callable],
    a: float,
    b: float,
    x_star,
    seed: int = 0,
    gradients: Optional[Sequence[Callable]] = None,
    lipschitz: float = np.inf,
    wavelength: float = 0.1,
    domain: Optional[ConvexBody] = None,
) -> NoisyOracle:
    """``F̂ = (1/n)Σ ĥ_i²`` with ``ĥ_i = h_i + N_i`` and ``|N_i| ≤ b + a|h_i|``.

    Each ``N_i`` is a ripple of unit amplitude scaled by ``b + a|h_i|``. The
    realized noise is split into ``φ = clip(F̂ − F, −β, β)`` and
    ``ψ = (F̂ − F − φ)/F``.
    """
    n = len(components)
    if n == 0:
        raise ValueError("equation system needs at least one component")
    x_star = np.asarray(x_star, dtype=float)
    d = x_star.shape[0]
    alpha, beta = equation_system_levels(a, b)
    if alpha >= 1:
        raise ValueError(f"induced alpha {alpha} must be below 1")
    fields = [
        _ripple(1.0, d, wavelength, generator(seed, "eqsys", i)) for i in range(n)
    ]

    def F(x):
        return sum(h(x) ** 2 for h in components) / n

    def gradF(x):
        if gradients is None:
            raise NotImplementedError("component gradients not supplied")
        return sum(2.0 * np.asarray(h(x))[..., None] * g(x) for h, g in zip(components, gradients)) / n

    def fhat(x):
        total = 0.0
        for h, rho in zip(components, fields):
            hv = h(x)
            total = total + (hv + (b + a * np.abs(hv)) * rho(x)) ** 2
        return total / n

    def phi(x):
        return np.clip(fhat(x) - F(x), -beta, beta)

    def psi(x):
        f = F(x)
        resid = fhat(x) - f - phi(x)
        return np.where(f > 0, resid / np.where(f > 0, f, 1.0), 0.0)

    base = ConvexObjective(F, gradF, float(lipschitz), x_star.copy(), 0.0)
    f0 = F(x_star)
    if abs(f0) > 1e-12:
        raise ValueError("x_star does not solve the system")
    orc = NoisyOracle(base, psi, phi, alpha, beta, _default_alpha_dagger(alpha), domain, 0.0, fhat)
    return orc


@dataclass
class NoiseReport:
    max_violation: float
    worst_point: np.ndarray
    min_psi_margin: float
    samples: int

    @property
    def ok(self) -> bool:
        return self.max_violation <= 0.0


def sample_body(body: ConvexBody, n: int, rng, batch: int = 100_000) -> np.ndarray:
    """``n`` uniform points of the body via rejection from its bounding ball."""
    out = []
    got = 0
    while got < n:
        cand = sample_uniform_ball(body.bounding_center, body.bounding_radius, rng, batch)
        cand = cand[np.atleast_1d(body.contains(cand))]
        out.append(cand)
        got += len(cand)
    return np.concatenate(out)[:n]


def verify_noise_bounds(oracle: NoisyOracle, body: ConvexBody, samples: int, rng) -> NoiseReport:
    """Largest excess of ``|F̂ − F|`` over ``αF + β`` on uniform body samples."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    x = sample_body(body, samples, rng)
    f = np.asarray(oracle.base.evaluate(x), dtype=float)
    fh = np.asarray(noisy_eval(oracle, x), dtype=float) - oracle.offset
    excess = np.abs(fh - f) - (oracle.alpha * f + oracle.beta)
    j = int(np.argmax(excess))
    psi = np.broadcast_to(np.asarray(oracle.psi(x), dtype=float), f.shape)
    margin = float(np.min(psi + oracle.alpha_dagger))
    if margin <= 0 and not (oracle.alpha_dagger == 0 and np.all(psi >= 0)):
        warnings.warn(f"psi reaches -alpha_dagger (margin {margin:.3g})")
    return NoiseReport(float(excess[j]), x[j].copy(), margin, samples)
