"""Convex test objectives normalized so that ``F(x*) = 0``."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

__all__ = ["ConvexObjective", "make_test_objective", "shift_to_zero", "OBJECTIVE_KINDS"]

OBJECTIVE_KINDS = ("quadratic", "scaled_norm", "smoothed_max_affine", "flat_valley")


@dataclass(frozen=True)
class ConvexObjective:
    evaluate: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    lipschitz: float
    minimizer: np.ndarray
    min_value_offset: float = 0.0
    kind: str = "custom"
    # numeric description consumed by the compiled kernel (empty for custom)
    params: dict = field(default_factory=dict, compare=False, repr=False)

    def __call__(self, x):
        return self.evaluate(x)

    @property
    def dimension(self) -> int:
        return int(self.minimizer.shape[0])


def _huber(t, w):
    return np.where(t <= w, 0.5 * t * t / w, t - 0.5 * w)


def _huber_slope(t, w):
    return np.where(t <= w, t / w, 1.0)


def make_test_objective(kind: str, params: dict, body=None, r_thick: float = 0.0) -> ConvexObjective:
    """Build one of the shipped objective families.

    Common params: ``minimizer`` (point). Kind-specific params:

    * quadratic: ``A`` (PSD matrix, default identity); F = ½(x−x*)ᵀA(x−x*)
    * scaled_norm: ``scale`` (default 1), ``width`` (Huber width, default 1e−3·R)
    * smoothed_max_affine: ``slopes`` (m×d, rows are recentred to sum to 0),
      ``tau`` (softness, default 1e−2·R)
    * flat_valley: ``curvature`` (default 1); F = c·(x₁ − x*₁)²

    ``body`` supplies the extent used for the Lipschitz constant over the
    thickened body ``K_𝗋``, and validates that the minimizer lies inside.
    """
    if kind not in OBJECTIVE_KINDS:
        raise ValueError(f"unknown objective kind {kind!r}")
    x_star = np.asarray(params["minimizer"], dtype=float)
    d = x_star.shape[0]
    if body is not None:
        if body.dimension != d:
            raise ValueError("minimizer dimension does not match body")
        if not body.contains(x_star):
            raise ValueError("minimizer lies outside the body")
        R = body.bounding_radius
        extent = float(np.linalg.norm(body.bounding_center - x_star)) + R + r_thick
    else:
        R = float(params.get("R", 1.0))
        extent = float(params.get("extent", 2.0 * R))

    if kind == "quadratic":
        A = np.asarray(params.get("A", np.eye(d)), dtype=float)
        if A.shape != (d, d) or not np.allclose(A, A.T, atol=1e-12):
            raise ValueError("A must be a symmetric d×d matrix")
        evals = np.linalg.eigvalsh(A)
        if evals.min() < -1e-12 * max(1.0, abs(evals).max()):
            raise ValueError("A is not positive semidefinite")

        def f(x):
            y = np.asarray(x, float) - x_star
            return 0.5 * np.einsum("...i,ij,...j->...", y, A, y)

        def grad(x):
            return (np.asarray(x, float) - x_star) @ A

        lam = float(max(evals.max(), 0.0) * extent)
        kp = {"A": A}

    elif kind == "scaled_norm":
        s = float(params.get("scale", 1.0))
        w = float(params.get("width", 1e-3 * R))
        if s <= 0 or w <= 0:
            raise ValueError("scale and width must be positive")

        def f(x):
            t = np.linalg.norm(np.asarray(x, float) - x_star, axis=-1)
            return s * _huber(t, w)

        def grad(x):
            y = np.asarray(x, float) - x_star
            t = np.linalg.norm(y, axis=-1, keepdims=True)
            return s * _huber_slope(t, w) * y / np.where(t > 0, t, 1.0)

        lam = s
        kp = {"scale": s, "width": w}

    elif kind == "smoothed_max_affine":
        a = np.atleast_2d(np.asarray(params["slopes"], dtype=float))
        a = a - a.mean(axis=0)
        tau = float(params.get("tau", 1e-2 * R))
        if tau <= 0:
            raise ValueError("tau must be positive")
        m = a.shape[0]
        c0 = tau * np.log(m)

        def f(x):
            z = (np.asarray(x, float) - x_star) @ a.T / tau
            zmax = z.max(axis=-1, keepdims=True)
            lse = zmax[..., 0] + np.log(np.exp(z - zmax).sum(axis=-1))
            return np.maximum(tau * lse - c0, 0.0)

        def grad(x):
            z = (np.asarray(x, float) - x_star) @ a.T / tau
            p = np.exp(z - z.max(axis=-1, keepdims=True))
            p /= p.sum(axis=-1, keepdims=True)
            return p @ a

        lam = float(np.linalg.norm(a, axis=1).max())
        kp = {"slopes": a, "tau": tau}

    else:  # flat_valley
        c = float(params.get("curvature", 1.0))
        if c <= 0:
            raise ValueError("curvature must be positive")

        def f(x):
            y = np.asarray(x, float)
            return c * (y[..., 0] - x_star[0]) ** 2

        def grad(x):
            y = np.asarray(x, float)
            g = np.zeros_like(y)
            g[..., 0] = 2.0 * c * (y[..., 0] - x_star[0])
            return g

        lam = 2.0 * c * extent
        kp = {"curvature": c}

    return ConvexObjective(f, grad, lam, x_star.copy(), 0.0, kind, kp)


def shift_to_zero(raw_objective, x_star, gradient=None, lipschitz: float = np.inf) -> ConvexObjective:
    """Subtract ``raw(x*)`` so the shifted objective vanishes at its minimizer.

    Accepts a plain callable or a ``ConvexObjective``. ``min_value_offset``
    records the constant removed by this call, so a second shift is the
    identity with offset 0.
    """
    x_star = np.asarray(x_star, dtype=float)
    if isinstance(raw_objective, ConvexObjective):
        raw = raw_objective.evaluate
        gradient = raw_objective.gradient
        lipschitz = raw_objective.lipschitz
    else:
        raw = raw_objective
    offset = float(raw(x_star))
    if isinstance(raw_objective, ConvexObjective) and offset == 0.0:
        return replace(raw_objective, min_value_offset=0.0)

    def f(x):
        return raw(x) - offset

    if gradient is None:
        def gradient(x):
            raise NotImplementedError("no gradient supplied for shifted objective")

    return ConvexObjective(f, gradient, float(lipschitz), x_star.copy(), offset)
