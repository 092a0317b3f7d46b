"""Rounded convex bodies ``K = K' + B(0, r')`` and sampling on them.

The inner core ``K'`` is one of three shapes with an exact Euclidean
distance function (a ball, an axis-aligned box, or a bounded intersection of
half-spaces), so membership ``dist(x, K') <= r'`` is testable to floating
tolerance.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Union

import numpy as np

__all__ = [
    "InnerBall",
    "InnerBox",
    "InnerPolytope",
    "ConvexBody",
    "RejectionBudgetExceeded",
    "contains",
    "make_body",
    "sample_uniform_ball",
    "sample_uniform_ball_intersect",
    "roundness_probability",
    "zeta_max",
]

DYKSTRA_MAX_SWEEPS = 10_000
DEFAULT_REJECTION_BUDGET = 10**6


class RejectionBudgetExceeded(RuntimeError):
    """Raised when rejection sampling exhausts its attempt budget."""


@dataclass(frozen=True)
class InnerBall:
    center: np.ndarray
    radius: float

    kind = "ball"

    def distance(self, x: np.ndarray) -> np.ndarray:
        r = np.linalg.norm(x - self.center, axis=-1)
        return np.maximum(r - self.radius, 0.0)

    def project(self, x: np.ndarray) -> np.ndarray:
        diff = x - self.center
        r = np.linalg.norm(diff, axis=-1, keepdims=True)
        scale = np.where(r > self.radius, self.radius / np.where(r > 0, r, 1.0), 1.0)
        return self.center + diff * scale

    def extent(self, center: np.ndarray) -> float:
        return float(np.linalg.norm(self.center - center) + self.radius)

    def interior_point(self) -> np.ndarray:
        return self.center.copy()


@dataclass(frozen=True)
class InnerBox:
    lo: np.ndarray
    hi: np.ndarray

    kind = "box"

    def distance(self, x: np.ndarray) -> np.ndarray:
        return np.linalg.norm(x - self.project(x), axis=-1)

    def project(self, x: np.ndarray) -> np.ndarray:
        return np.clip(x, self.lo, self.hi)

    def extent(self, center: np.ndarray) -> float:
        far = np.maximum(np.abs(self.lo - center), np.abs(self.hi - center))
        return float(np.linalg.norm(far))

    def interior_point(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)


@dataclass(frozen=True)
class InnerPolytope:
    """``{x : normals @ x <= offsets}``; must be bounded and full-dimensional."""

    normals: np.ndarray
    offsets: np.ndarray
    tol: float = 1e-10
    vertices: np.ndarray = field(default=None, repr=False, compare=False)

    kind = "polytope"

    def __post_init__(self):
        if self.vertices is None:
            object.__setattr__(self, "vertices", _polytope_vertices(self.normals, self.offsets))

    def project(self, x: np.ndarray) -> np.ndarray:
        """Dykstra's alternating projections onto the half-spaces."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = x.copy()
        viol = (x @ self.normals.T - self.offsets > 0).any(axis=1)
        if not viol.any():
            return out
        y = x[viol].copy()
        m = len(self.offsets)
        norms2 = np.einsum("ij,ij->i", self.normals, self.normals)
        incr = np.zeros((m,) + y.shape)
        active = np.ones(len(y), dtype=bool)
        for _ in range(DYKSTRA_MAX_SWEEPS):
            prev = y.copy()
            for i in range(m):
                z = y + incr[i]
                s = (z @ self.normals[i] - self.offsets[i]) / norms2[i]
                s = np.where(active, np.maximum(s, 0.0), 0.0)
                ynew = z - s[:, None] * self.normals[i]
                incr[i] = np.where(active[:, None], z - ynew, incr[i])
                y = np.where(active[:, None], ynew, y)
            moved = np.linalg.norm(y - prev, axis=1)
            active &= moved > self.tol
            if not active.any():
                break
        out[viol] = y
        return out

    def distance(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        flat = np.atleast_2d(x)
        d = np.linalg.norm(flat - self.project(flat), axis=1)
        return d if x.ndim == 2 else d[0]

    def extent(self, center: np.ndarray) -> float:
        return float(np.max(np.linalg.norm(self.vertices - center, axis=1)))

    def interior_point(self) -> np.ndarray:
        return self.vertices.mean(axis=0)


Inner = Union[InnerBall, InnerBox, InnerPolytope]


def _polytope_vertices(normals: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    from scipy.optimize import linprog

    d = normals.shape[1]
    if d == 1:
        a = normals[:, 0]
        upper = np.min(offsets[a > 0] / a[a > 0]) if (a > 0).any() else np.inf
        lower = np.max(offsets[a < 0] / a[a < 0]) if (a < 0).any() else -np.inf
        if not np.isfinite(upper) or not np.isfinite(lower):
            raise ValueError("polytope is unbounded")
        if lower > upper:
            raise ValueError("polytope is empty")
        return np.array([[lower], [upper]])
    # Chebyshev center: maximize t s.t. a_i x + t |a_i| <= b_i
    row_norms = np.linalg.norm(normals, axis=1)
    res = linprog(
        c=np.r_[np.zeros(d), -1.0],
        A_ub=np.c_[normals, row_norms],
        b_ub=offsets,
        bounds=[(None, None)] * d + [(0, None)],
    )
    if res.status == 3:
        raise ValueError("polytope is unbounded")
    if res.status != 0 or res.x[-1] <= 0:
        raise ValueError("polytope is empty or not full-dimensional")
    from scipy.spatial import HalfspaceIntersection

    hs = HalfspaceIntersection(np.c_[normals, -offsets], res.x[:d])
    verts = hs.intersections
    if not np.all(np.isfinite(verts)) or np.abs(verts).max() > 1e12:
        raise ValueError("polytope is unbounded")
    return verts


@dataclass(frozen=True)
class ConvexBody:
    inner: Inner
    rounding_radius: float
    bounding_center: np.ndarray
    bounding_radius: float

    @property
    def dimension(self) -> int:
        return int(self.bounding_center.shape[0])

    @property
    def kind(self) -> str:
        return self.inner.kind

    def distance_to_inner(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dimension:
            raise ValueError(f"point has dimension {x.shape[-1]}, body has {self.dimension}")
        return self.inner.distance(x)

    def contains(self, x) -> Union[bool, np.ndarray]:
        tol = 1e-12 * self.bounding_radius
        inside = self.distance_to_inner(x) <= self.rounding_radius + tol
        return bool(inside) if np.ndim(inside) == 0 else inside

    def thickened(self, extra: float) -> "ConvexBody":
        """The outer body ``K + B(0, extra)``."""
        return replace(
            self,
            rounding_radius=self.rounding_radius + extra,
            bounding_radius=self.bounding_radius + extra,
        )

    def boundary_point(self, direction, start=None) -> np.ndarray:
        """Point on the boundary along a ray from ``start`` (an interior point)."""
        start = self.inner.interior_point() if start is None else np.asarray(start, float)
        u = np.asarray(direction, dtype=float)
        u = u / np.linalg.norm(u)
        lo, hi = 0.0, 2.0 * self.bounding_radius + 1.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if self.distance_to_inner(start + mid * u) <= self.rounding_radius:
                lo = mid
            else:
                hi = mid
        return start + lo * u


def make_body(
    kind: str,
    rounding_radius: float,
    *,
    center=None,
    radius: float = 0.0,
    lo=None,
    hi=None,
    normals=None,
    offsets=None,
    bounding_center=None,
    bounding_radius: float | None = None,
) -> ConvexBody:
    """Build a rounded body from an inner-shape description.

    ``bounding_radius`` defaults to the tightest radius about
    ``bounding_center`` (itself defaulting to the inner shape's center).
    A supplied radius that fails to enclose the body is rejected.
    """
    if rounding_radius <= 0:
        raise ValueError("rounding_radius must be positive")
    if kind == "ball":
        inner = InnerBall(np.asarray(center, dtype=float), float(radius))
        if inner.radius < 0:
            raise ValueError("ball radius must be nonnegative")
    elif kind == "box":
        lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
        if lo.shape != hi.shape or np.any(lo > hi):
            raise ValueError("box needs lo <= hi with matching shapes")
        inner = InnerBox(lo, hi)
    elif kind == "polytope":
        normals = np.atleast_2d(np.asarray(normals, dtype=float))
        offsets = np.asarray(offsets, dtype=float).ravel()
        if normals.shape[0] != offsets.shape[0]:
            raise ValueError("normals and offsets disagree in length")
        inner = InnerPolytope(normals, offsets)
    else:
        raise ValueError(f"unknown body kind {kind!r}")
    c = inner.interior_point() if bounding_center is None else np.asarray(bounding_center, float)
    needed = inner.extent(c) + rounding_radius
    if bounding_radius is None:
        bounding_radius = needed
    elif bounding_radius < needed * (1 - 1e-12):
        raise ValueError(f"bounding_radius {bounding_radius} < required {needed}")
    if rounding_radius > bounding_radius:
        raise ValueError("rounding_radius exceeds bounding_radius")
    return ConvexBody(inner, float(rounding_radius), c, float(bounding_radius))


def contains(body: ConvexBody, x) -> bool:
    return body.contains(x)


def zeta_max(r_prime: float, d: int) -> float:
    return (r_prime / (10.0 * np.sqrt(2.0) * (d + 20))) ** 2


def sample_uniform_ball(center, radius: float, rng: np.random.Generator, size: int) -> np.ndarray:
    center = np.asarray(center, dtype=float)
    d = center.shape[0]
    g = rng.standard_normal((size, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    u = rng.random(size) ** (1.0 / d)
    return center + radius * u[:, None] * g


def sample_uniform_ball_intersect(
    body: ConvexBody,
    center,
    radius: float,
    rng: np.random.Generator,
    max_attempts: int = DEFAULT_REJECTION_BUDGET,
    batch: int = 64,
) -> tuple[np.ndarray, int]:
    """Uniform draw from ``B(center, radius) ∩ body`` by rejection.

    Returns the point and the number of rejected proposals.
    """
    center = np.asarray(center, dtype=float)
    if radius == 0:
        return center.copy(), 0
    tried = 0
    while tried < max_attempts:
        n = min(batch, max_attempts - tried)
        cand = sample_uniform_ball(center, radius, rng, n)
        ok = np.atleast_1d(body.contains(cand))
        if ok.any():
            first = int(np.argmax(ok))
            return cand[first], tried + first
        tried += n
    raise RejectionBudgetExceeded(
        f"no point of B(center, {radius}) found in body after {max_attempts} attempts"
    )


def roundness_probability(body: ConvexBody, x, zeta: float, trials: int, rng) -> float:
    """Fraction of ``x + sqrt(2 zeta) W`` (W standard normal) that stay in the body."""
    x = np.asarray(x, dtype=float)
    hits = 0
    chunk = 50_000
    done = 0
    while done < trials:
        n = min(chunk, trials - done)
        pts = x + np.sqrt(2.0 * zeta) * rng.standard_normal((n, x.shape[0]))
        hits += int(np.count_nonzero(body.contains(pts)))
        done += n
    return hits / trials
