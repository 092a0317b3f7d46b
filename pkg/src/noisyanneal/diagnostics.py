"""Grid measures, Cheeger and conductance estimates, escape and stationarity checks.

Everything here works at desk scale (d = 1 or 2) and exists to validate the
analytic objects behind the sampler empirically.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy.special import logsumexp

from .chains import SgldParams, _log_proposal, sgld_run
from .geometry import ConvexBody, sample_uniform_ball_intersect
from .noise import noisy_eval
from .smoothing import SmoothedOracle

__all__ = [
    "GridMeasure",
    "CheegerEstimate",
    "StabilityResult",
    "build_grid_measure",
    "body_interval",
    "estimate_cheeger_1d",
    "estimate_cheeger_2d",
    "cheeger_stability_check",
    "conductance_estimate",
    "smoothed_value_quadrature",
    "escape_probability_experiment",
    "escape_bound",
    "stationarity_tv",
    "sample_from_measure",
    "detailed_balance_residual",
    "ratio_sandwich_check",
]

MAX_CHEEGER_CELLS_1D = 1024
MAX_CHEEGER_CELLS_2D = 32


@dataclass
class GridMeasure:
    """Midpoint discretization of ``μ ∝ exp(−ξ f)`` on a regular grid.

    ``weights`` has one entry per grid cell (shape ``(n,)`` or ``(n, n)``);
    cells whose centers fall outside the body carry weight 0.
    """

    edges: tuple
    mask: np.ndarray
    weights: np.ndarray
    values: np.ndarray
    xi: float

    @property
    def d(self) -> int:
        return len(self.edges)

    @property
    def axes(self) -> tuple:
        return tuple(0.5 * (e[1:] + e[:-1]) for e in self.edges)

    @property
    def widths(self) -> tuple:
        return tuple(float(e[1] - e[0]) for e in self.edges)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.widths))

    def centers(self) -> np.ndarray:
        """Cell centers, shape ``mask.shape + (d,)``."""
        grids = np.meshgrid(*self.axes, indexing="ij")
        return np.stack(grids, axis=-1)

    def same_grid(self, other: "GridMeasure") -> bool:
        return (
            self.d == other.d
            and all(np.array_equal(a, b) for a, b in zip(self.edges, other.edges))
            and np.array_equal(self.mask, other.mask)
        )


def body_interval(body: ConvexBody) -> tuple[float, float]:
    """Endpoints of a one-dimensional body."""
    if body.dimension != 1:
        raise ValueError("body_interval needs a 1D body")
    lo = body.boundary_point([-1.0])[0]
    hi = body.boundary_point([1.0])[0]
    return float(lo), float(hi)


def _eval_grid(f, pts):
    flat = pts.reshape(-1, pts.shape[-1])
    try:
        v = np.asarray(f(flat), dtype=float)
        if v.shape != (flat.shape[0],):
            raise ValueError
    except Exception:
        v = np.array([float(f(p)) for p in flat])
    return v.reshape(pts.shape[:-1])


def build_grid_measure(body, f: Callable, xi: float, cells_per_axis: int, bounds=None) -> GridMeasure:
    """Discretize ``μ ∝ exp(−ξ f)`` restricted to ``body``.

    ``body`` may be a ``ConvexBody`` or ``None`` with explicit ``bounds``
    (``(lo, hi)`` in 1D, ``((lo0, lo1), (hi0, hi1))`` in 2D). In 1D the grid
    spans the body exactly; in 2D it spans the bounding box and cells are
    kept when their centers lie in the body.
    """
    if cells_per_axis < 8:
        raise ValueError("need at least 8 cells per axis")
    if bounds is None:
        if body is None:
            raise ValueError("need a body or explicit bounds")
        d = body.dimension
        if d == 1:
            lo, hi = body_interval(body)
            lo, hi = np.array([lo]), np.array([hi])
        else:
            lo = body.bounding_center - body.bounding_radius
            hi = body.bounding_center + body.bounding_radius
    else:
        lo, hi = (np.atleast_1d(np.asarray(b, dtype=float)) for b in bounds)
        d = lo.shape[0]
    if d > 2:
        raise ValueError("grid measures support d in {1, 2}")
    edges = tuple(np.linspace(lo[j], hi[j], cells_per_axis + 1) for j in range(d))
    g = GridMeasure(edges, None, None, None, float(xi))
    pts = g.centers()
    if body is not None and d == 2:
        mask = np.asarray(body.contains(pts.reshape(-1, d))).reshape(pts.shape[:-1])
    else:
        mask = np.ones(pts.shape[:-1], dtype=bool)
    vals = np.full(mask.shape, np.nan)
    vals[mask] = _eval_grid(f, pts[mask][None, ...])[0] if mask.any() else []
    logw = np.full(mask.shape, -np.inf)
    logw[mask] = -xi * vals[mask] + math.log(g.cell_volume)
    w = np.zeros(mask.shape)
    w[mask] = np.exp(logw[mask] - logsumexp(logw[mask]))
    w /= w.sum()
    g.mask, g.weights, g.values = mask, w, vals
    return g


# -- Cheeger constants --------------------------------------------------------


@dataclass
class CheegerEstimate:
    value: float
    set_mask: np.ndarray
    kind: str  # "interval", "complement", "rectangle", ...
    family: str  # candidate family the infimum ranges over

    def __float__(self):
        return float(self.value)


def _as_cell_mask(measure: GridMeasure, V) -> np.ndarray:
    V = np.asarray(V)
    if V.dtype == bool:
        if V.shape != measure.weights.shape:
            raise ValueError("V mask has the wrong shape")
        return V & measure.mask
    if measure.d == 1 and V.shape == (2,):
        m = np.zeros(measure.weights.shape, dtype=bool)
        m[int(V[0]):int(V[1])] = True
        return m & measure.mask
    raise ValueError("V must be a boolean cell mask or a (start, stop) cell range")


def _quotients(A: np.ndarray, w: np.ndarray, eps: float):
    """Boundary-to-mass quotients for a stack of candidate sets ``A`` (m × n)."""
    grown = A.copy()
    grown[:, 1:] |= A[:, :-1]
    grown[:, :-1] |= A[:, 1:]
    mass = A @ w
    rim = (grown & ~A) @ w
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.where(mass > 0, rim / (eps * mass), np.inf)
    return q


def estimate_cheeger_1d(measure: GridMeasure, V) -> CheegerEstimate:
    """Infimum of ``(μ(A_ε) − μ(A)) / (ε μ(A))`` over ``A = V ∩ I`` and ``A = V \\ I``.

    ``I`` ranges over all intervals with endpoints on cell boundaries, and
    ``A_ε`` is the one-cell dilation of ``A`` (``ε`` = cell width).
    """
    if measure.d != 1:
        raise ValueError("estimate_cheeger_1d needs a 1D measure")
    Vm = _as_cell_mask(measure, V)
    if not Vm.any():
        raise ValueError("V is empty")
    n = Vm.shape[0]
    if n > MAX_CHEEGER_CELLS_1D:
        raise ValueError(f"at most {MAX_CHEEGER_CELLS_1D} cells supported")
    w = measure.weights
    eps = measure.widths[0]
    idx = np.arange(n)
    best = (math.inf, None, "")
    for a in range(n):
        b = np.arange(a + 1, n + 1)
        inside = (idx[None, :] >= a) & (idx[None, :] < b[:, None])
        for kind, A in (("interval", Vm & inside), ("complement", Vm & ~inside)):
            q = _quotients(A, w, eps)
            j = int(np.argmin(q))
            if q[j] < best[0]:
                best = (float(q[j]), A[j].copy(), kind)
    return CheegerEstimate(best[0], best[1], best[2], "intervals and complements of intervals within V")


def estimate_cheeger_2d(measure: GridMeasure, V) -> CheegerEstimate:
    """2D analogue over axis-aligned rectangles intersected with ``V`` and their complements in ``V``.

    The dilation is by one cell in each axis direction (including diagonals),
    and ``ε`` is the larger cell width.
    """
    if measure.d != 2:
        raise ValueError("estimate_cheeger_2d needs a 2D measure")
    Vm = _as_cell_mask(measure, V)
    if not Vm.any():
        raise ValueError("V is empty")
    n0, n1 = Vm.shape
    if max(n0, n1) > MAX_CHEEGER_CELLS_2D:
        raise ValueError(f"at most {MAX_CHEEGER_CELLS_2D} cells per axis supported")
    w = measure.weights.ravel()
    eps = max(measure.widths)
    i = np.arange(n0)[:, None]
    j = np.arange(n1)[None, :]
    rows = [(a, b) for a in range(n0) for b in range(a + 1, n0 + 1)]
    cols = [(a, b) for a in range(n1) for b in range(a + 1, n1 + 1)]
    colmask = np.array([(j >= a) & (j < b) for a, b in cols])[:, 0, :]  # (nc, n1)
    best = (math.inf, None, "")
    for ra, rb in rows:
        rmask = ((i >= ra) & (i < rb))[:, 0]  # (n0,)
        rect = rmask[None, :, None] & colmask[:, None, :]  # (nc, n0, n1)
        for kind, A in (("rectangle", Vm[None] & rect), ("complement", Vm[None] & ~rect)):
            grown = A.copy()
            grown[:, 1:, :] |= A[:, :-1, :]
            grown[:, :-1, :] |= A[:, 1:, :]
            g2 = grown.copy()
            g2[:, :, 1:] |= grown[:, :, :-1]
            g2[:, :, :-1] |= grown[:, :, 1:]
            flatA = A.reshape(len(cols), -1)
            mass = flatA @ w
            rim = (g2.reshape(len(cols), -1) & ~flatA) @ w
            with np.errstate(divide="ignore", invalid="ignore"):
                q = np.where(mass > 0, rim / (eps * mass), np.inf)
            k = int(np.argmin(q))
            if q[k] < best[0]:
                best = (float(q[k]), A[k].copy(), kind)
    return CheegerEstimate(best[0], best[1], best[2], "axis-aligned rectangles and complements within V")


def _cheeger(measure, V):
    return estimate_cheeger_1d(measure, V) if measure.d == 1 else estimate_cheeger_2d(measure, V)


@dataclass
class StabilityResult:
    passed: bool
    c_f: float
    c_fhat: float
    factor: float

    def __bool__(self):
        return bool(self.passed)


def cheeger_stability_check(measure_F: GridMeasure, measure_Fhat: GridMeasure, N: float, xi: float,
                            V=None, slack: float = 0.01) -> StabilityResult:
    """Check ``C(F̂) ≥ exp(−2ξN)·C(F)`` up to a relative ``slack``.

    ``V`` defaults to every cell in the body.
    """
    if not measure_F.same_grid(measure_Fhat):
        raise ValueError("measures live on different grids")
    gap = np.nanmax(np.abs(measure_F.values - measure_Fhat.values)[measure_F.mask])
    if gap > N * (1 + 1e-9) + 1e-12:
        warnings.warn(f"sup |F - Fhat| on the grid is {gap:.4g} > N = {N:.4g}")
    V = measure_F.mask if V is None else V
    cf = _cheeger(measure_F, V).value
    ch = _cheeger(measure_Fhat, V).value
    factor = math.exp(-2.0 * xi * N)
    return StabilityResult(bool(ch >= factor * cf * (1 - slack)), cf, ch, factor)


def conductance_estimate(trace, measure: GridMeasure, max_mass: float = 0.5) -> dict:
    """Empirical conductance of a 1D chain over half-line sets.

    For each half-line ``A`` (left or right of a cell edge) with
    ``μ(A) ≤ max_mass``, the crossing rate ``#{X_i ∈ A, X_{i+1} ∉ A} / #{X_i ∈ A}``
    is computed from the trace; the minimum is returned. This is an estimate
    from observed transitions, not the kernel integral.
    """
    if measure.d != 1:
        raise ValueError("conductance_estimate needs a 1D measure")
    X = np.asarray(trace.X if hasattr(trace, "X") else trace, dtype=float).reshape(-1)
    edges = measure.edges[0]
    cdf = np.concatenate([[0.0], np.cumsum(measure.weights)])
    best = {"phi": math.inf, "set": None, "mass": float("nan")}
    for k in range(1, len(edges) - 1):
        for side, mass in (("left", cdf[k]), ("right", 1.0 - cdf[k])):
            if not 0 < mass <= max_mass:
                continue
            inA = X < edges[k] if side == "left" else X >= edges[k]
            stay = np.count_nonzero(inA[:-1])
            if stay == 0:
                continue
            out = np.count_nonzero(inA[:-1] & ~inA[1:])
            phi = out / stay
            if phi < best["phi"]:
                best = {"phi": phi, "set": (side, float(edges[k])), "mass": float(mass)}
    return best


# -- smoothed values by quadrature -------------------------------------------


def smoothed_value_quadrature(s: SmoothedOracle, x, nodes: int = 101) -> np.ndarray:
    """``E F̂(x + σZ)`` by Gauss–Hermite quadrature (tensor rule in 2D).

    ``x`` may be a single point or an array of points.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    d = X.shape[1]
    if d > 2:
        raise ValueError("quadrature supports d in {1, 2}")
    t, wt = hermegauss(nodes)
    wt = wt / wt.sum()
    if d == 1:
        off, ww = t[:, None], wt
    else:
        g0, g1 = np.meshgrid(t, t, indexing="ij")
        off = np.stack([g0.ravel(), g1.ravel()], axis=1)
        ww = np.outer(wt, wt).ravel()
    out = np.empty(X.shape[0])
    step = max(1, 200_000 // len(ww))
    for a in range(0, X.shape[0], step):
        pts = X[a:a + step, None, :] + s.sigma * off[None, :, :]
        v = np.asarray(noisy_eval(s.base, pts.reshape(-1, d)), dtype=float).reshape(pts.shape[:2])
        out[a:a + step] = v @ ww
    return out[0] if single else out


# -- escape probability -------------------------------------------------------


def escape_bound(s: SmoothedOracle, body: ConvexBody, xi: float, h: float, ft_y: float, r: float,
                 delta: float) -> float:
    """``exp(ξ[f̃(y) + λ̃r] − ξh + d log(2R/r)) + 2rλ̃ξ + δ``."""
    lt = s.constants.lambda_tilde
    d, R = body.dimension, body.bounding_radius
    ex = xi * (ft_y + lt * r) - xi * h + d * math.log(2 * R / r)
    return math.exp(min(ex, 700.0)) + 2 * r * lt * xi + delta


def escape_probability_experiment(
    body: ConvexBody,
    s: SmoothedOracle,
    params: SgldParams,
    h: float,
    seeds: int,
    y,
    r: float,
    delta: float,
    seed: int = 0,
    grid_cells: int = 4001,
    check_step: bool = True,
) -> dict:
    """Fraction of SGLD chains started uniformly in ``B(y, r) ∩ K`` whose
    smoothed value ever reaches ``h``, next to the closed-form bound.

    f̃ is tabulated once by quadrature on a fine grid (1D) and interpolated.
    """
    from .seeding import generator

    d = body.dimension
    if d != 1:
        raise ValueError("escape_probability_experiment supports 1D bodies")
    c = s.constants
    eta_max = delta / (params.i_max * 16 * d * (c.G**2 + c.L))
    if check_step and params.eta > eta_max * (1 + 1e-12):
        raise ValueError(f"step size {params.eta:.3g} exceeds the precondition {eta_max:.3g}")
    lo, hi = body_interval(body)
    xs = np.linspace(lo, hi, grid_cells)
    ft = smoothed_value_quadrature(s, xs[:, None])
    y = np.atleast_1d(np.asarray(y, dtype=float))
    ft_y = float(smoothed_value_quadrature(s, y))
    hits = 0
    for k in range(seeds):
        x0, _ = sample_uniform_ball_intersect(body, y, r, generator(seed, "escape-start", k))
        tr = sgld_run(body, s, s.base, params, x0, (generator(seed, "escape-p", k), generator(seed, "escape-z", k)))
        vals = np.interp(tr.X[:, 0], xs, ft)
        hits += bool(np.any(vals >= h))
    p = hits / seeds
    return {
        "empirical": p,
        "stderr": math.sqrt(max(p * (1 - p), 1.0 / seeds) / seeds),
        "bound": escape_bound(s, body, params.xi, h, ft_y, r, delta),
        "f_tilde_y": ft_y,
        "eta_max": eta_max,
        "seeds": seeds,
    }


# -- stationarity ------------------------------------------------------------


def sample_from_measure(measure: GridMeasure, n: int, rng) -> np.ndarray:
    """i.i.d. draws: pick a cell by weight, then a uniform point inside it."""
    flat = measure.weights.ravel()
    cells = rng.choice(flat.size, size=n, p=flat)
    idx = np.unravel_index(cells, measure.weights.shape)
    pts = np.empty((n, measure.d))
    for j, e in enumerate(measure.edges):
        pts[:, j] = e[idx[j]] + (e[1] - e[0]) * rng.random(n)
    return pts


def stationarity_tv(tail, measure: GridMeasure) -> float:
    """Total-variation distance between the binned tail and the grid measure (1D)."""
    if measure.d != 1:
        raise ValueError("stationarity_tv needs a 1D measure")
    X = np.asarray(tail.X if hasattr(tail, "X") else tail, dtype=float).reshape(-1)
    if X.size < 10_000:
        warnings.warn("tail shorter than 1e4 samples; TV estimate is noisy")
    e = measure.edges[0]
    k = np.clip(np.searchsorted(e, X, side="right") - 1, 0, len(e) - 2)
    emp = np.bincount(k, minlength=len(e) - 1) / X.size
    return 0.5 * float(np.abs(emp - measure.weights).sum())


def detailed_balance_residual(body: ConvexBody, grad: Callable, f: Callable, xi: float, eta: float,
                              D: float, points, squared: bool = True) -> float:
    """Max ``|π(x)K(x,y) − π(y)K(y,x)|`` over pairs of grid points.

    ``K`` is the Metropolis-adjusted proposal density (deterministic
    gradient) on the given 1D points, ``π ∝ exp(−ξ f)``; the off-diagonal
    kernel needs no normalization for this check.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, body.dimension)
    fv = np.array([float(f(p)) for p in pts])
    g = np.array([np.asarray(grad(p), dtype=float) for p in pts])
    logpi = -xi * fv
    logpi -= logsumexp(logpi)
    n = len(pts)
    flux = np.zeros((n, n))
    temp = xi if squared else 1.0
    for a in range(n):
        for b in range(n):
            if a == b or np.linalg.norm(pts[b] - pts[a]) > D:
                continue
            lq_ab = _log_proposal(pts[a], pts[b], g[a][None], eta, xi, squared)
            lq_ba = _log_proposal(pts[b], pts[a], g[b][None], eta, xi, squared)
            ratio = min(0.0, lq_ba - lq_ab + temp * (fv[a] - fv[b]))
            flux[a, b] = math.exp(logpi[a] + lq_ab + ratio)
    return float(np.abs(flux - flux.T).max())


def ratio_sandwich_check(s: SmoothedOracle, points, fhat_values, t: float, draws: int, rng,
                         factor: float = 5.0) -> dict:
    """Check ``max(f̃,t)/factor ≤ max(F̂,t) ≤ factor·max(f̃,t)`` at each point.

    f̃ is a Monte-Carlo mean over ``draws`` Gaussian perturbations; the
    comparison allows three standard errors of slack.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    fh = np.asarray(fhat_values, dtype=float).reshape(-1)
    d = pts.shape[1]
    means = np.empty(len(pts))
    ses = np.empty(len(pts))
    step = max(1, 2_000_000 // max(draws, 1))
    for a in range(0, len(pts), step):
        blk = pts[a:a + step]
        z = s.sigma * rng.standard_normal((len(blk), draws, d))
        v = np.asarray(noisy_eval(s.base, (blk[:, None, :] + z).reshape(-1, d)), dtype=float).reshape(len(blk), draws)
        means[a:a + step] = v.mean(axis=1)
        ses[a:a + step] = v.std(axis=1, ddof=1) / math.sqrt(draws)
    H = np.maximum(means, t)
    J = np.maximum(fh, t)
    lo_ok = np.maximum(means - 3 * ses, t) / factor <= J
    hi_ok = J <= factor * np.maximum(means + 3 * ses, t)
    ok = lo_ok & hi_ok
    return {
        "passed": bool(ok.all()),
        "violations": int((~ok).sum()),
        "points": int(len(pts)),
        "min_ratio": float((J / H).min()),
        "max_ratio": float((J / H).max()),
    }
