"""SGLD, the lazy Metropolis-adjusted chain, their coupling, and hitting times."""
from __future__ import annotations

import io
import math
import sys
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .backend import compilable, compile_problem
from .geometry import ConvexBody
from .smoothing import SmoothedOracle, stochastic_gradient

__all__ = [
    "SgldParams",
    "ChainTrace",
    "ChainAborted",
    "sgld_run",
    "metropolis_sgld_run",
    "coupled_run",
    "hitting_time",
    "write_trace_csv",
    "CSV_HEADER",
]

CHUNK = 1 << 15
BLOWUP_FACTOR = 1e6
CSV_HEADER = "epoch,step,accepted,fhat,f_true"


class ChainAborted(RuntimeError):
    """A gradient step exceeded ``1e6·R``; the step size is mis-scaled."""


@dataclass(frozen=True)
class SgldParams:
    xi: float
    eta: float
    i_max: int
    D: float

    def __post_init__(self):
        if not (self.xi > 0 and self.eta > 0 and self.i_max > 0 and self.D > 0):
            raise ValueError(f"SGLD parameters must be positive: {self}")


@dataclass
class ChainTrace:
    """States ``X_0..X_n`` (row 0 is the start, marked accepted)."""

    X: np.ndarray
    accepted: np.ndarray
    fhat: np.ndarray
    f_true: np.ndarray
    epoch: int = 0
    extra: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.fhat)

    @property
    def i_star(self) -> int:
        return int(np.argmin(self.fhat))

    @property
    def output(self) -> np.ndarray:
        return self.X[self.i_star]

    @property
    def acceptance_rate(self) -> float:
        return float(self.accepted[1:].mean()) if len(self) > 1 else 1.0


def _split(rng):
    if isinstance(rng, (tuple, list)):
        return rng[0], rng[1]
    a, b = rng.spawn(2)
    return a, b


def _alloc(n, d):
    return (
        np.empty((n, d)),
        np.empty(n, dtype=np.uint8),
        np.empty(n),
        np.empty(n),
    )


def sgld_run(
    body: ConvexBody,
    grad,
    fhat: Optional[Callable],
    params: SgldParams,
    x0,
    rng,
    *,
    ftrue: Optional[Callable] = None,
    zero_noise: bool = False,
    backend: Optional[str] = None,
    problem=None,
) -> ChainTrace:
    """Run SGLD (proposals outside the body or longer than D are rejected) for ``params.i_max`` steps from ``x0``.

    ``grad`` is either a ``SmoothedOracle`` (its stochastic gradient is used,
    through the compiled kernel when the oracle allows it) or a callable
    ``grad(x, rng) -> vector``. ``rng`` may be a pair ``(rng_P, rng_Z)`` of
    streams for the Langevin noise and the gradient draws; a single generator
    is split into two.
    """
    x0 = np.asarray(x0, dtype=float)
    if not body.contains(x0):
        raise ValueError("x0 lies outside the body")
    rng_p, rng_z = _split(rng)
    n = int(params.i_max)
    d = body.dimension
    blowup = BLOWUP_FACTOR * body.bounding_radius

    fast = isinstance(grad, SmoothedOracle) and (problem is not None or compilable(grad.base))
    if fast:
        prob = problem if problem is not None else compile_problem(grad.base, body, backend)
        kmod = sys.modules[type(prob).__module__]
        X, acc, fh, ft = _alloc(n + 1, d)
        X[0] = x0
        acc[0] = 1
        fx = prob.fhat(x0)
        fh[0] = fx
        ft[0] = prob.ftrue(x0)
        x = x0.copy()
        done = 0
        while done < n:
            m = min(CHUNK, n - done)
            P = np.zeros((m, d)) if zero_noise else rng_p.standard_normal((m, d))
            Z = rng_z.standard_normal((m, d))
            s = slice(done + 1, done + 1 + m)
            status, k, fx = kmod.sgld_chunk(
                prob, x, fx, params.xi, params.eta, params.D, grad.sigma, blowup,
                P, Z, X[s], acc[s], fh[s], ft[s],
            )
            if status != 0:
                raise ChainAborted(f"gradient step exceeded {blowup:.3g} at step {done + k}")
            done += m
        return ChainTrace(X, acc.astype(bool), fh, ft)

    if isinstance(grad, SmoothedOracle):
        s_or = grad
        fhat = fhat if fhat is not None else s_or.base
        ftrue = ftrue if ftrue is not None else s_or.base.base.evaluate
        grad = lambda x, r: stochastic_gradient(s_or, x, r)
    return _sgld_generic(body, grad, fhat, ftrue, params, x0, rng_p, rng_z, zero_noise, blowup)


def _sgld_generic(body, grad, fhat, ftrue, params, x0, rng_p, rng_z, zero_noise, blowup):
    n = int(params.i_max)
    d = body.dimension
    X, acc, fh, ft = _alloc(n + 1, d)
    x = x0.copy()
    fx = float(fhat(x)) if fhat is not None else np.nan
    X[0], acc[0], fh[0] = x, 1, fx
    ft[0] = float(ftrue(x)) if ftrue is not None else np.nan
    noise = math.sqrt(2.0 * params.eta / params.xi)
    for i in range(1, n + 1):
        p = np.zeros(d) if zero_noise else rng_p.standard_normal(d)
        g = np.asarray(grad(x, rng_z), dtype=float)
        if params.eta * np.linalg.norm(g) > blowup:
            raise ChainAborted(f"gradient step exceeded {blowup:.3g} at step {i - 1}")
        y = x - params.eta * g + noise * p
        ok = np.linalg.norm(y - x) <= params.D and body.contains(y)
        if ok:
            x = y
            fx = float(fhat(x)) if fhat is not None else np.nan
            ft_cur = float(ftrue(x)) if ftrue is not None else np.nan
        else:
            ft_cur = ft[i - 1]
        X[i], acc[i], fh[i], ft[i] = x, ok, fx, ft_cur
    return ChainTrace(X, acc.astype(bool), fh, ft)


# -- Metropolis-adjusted chain ---------------------------------------------


def _log_proposal(a, b, grads_a, eta, xi, squared):
    """log E_g exp(−ξ‖b − a + η g(a)‖²/(4η)) (literal: exp(−‖·‖/(4η)))."""
    v = b - a + eta * grads_a
    nrm = np.linalg.norm(v, axis=-1)
    ex = -(xi * nrm * nrm) / (4 * eta) if squared else -nrm / (4 * eta)
    m = ex.max()
    return m + math.log(np.mean(np.exp(ex - m)))


class _MetropolisStepper:
    def __init__(self, body, grad, ftilde, params, mc_draws, squared, deterministic):
        self.body = body
        self.grad = grad
        self.ftilde = ftilde
        self.p = params
        self.mc = 1 if deterministic else mc_draws
        self.squared = squared
        self.noise = math.sqrt(2.0 * params.eta / params.xi)

    def grads(self, x, rng):
        return np.array([self.grad(x, rng) for _ in range(self.mc)])

    def step(self, y, fy, q, g_now, coin, u, rng, force_accept=False):
        """One proposal + Metropolis test; returns (y, fy, proposed, mh_rejected)."""
        p = self.p
        yp = y - p.eta * g_now + self.noise * q
        if not (np.linalg.norm(yp - y) <= p.D and self.body.contains(yp)):
            return y, fy, False, False
        fyp = float(self.ftilde(yp))
        if force_accept:
            return (yp, fyp, True, False) if coin else (y, fy, True, False)
        g_y = self.grads(y, rng)
        g_yp = self.grads(yp, rng)
        log_num = _log_proposal(yp, y, g_yp, p.eta, p.xi, self.squared)
        log_den = _log_proposal(y, yp, g_y, p.eta, p.xi, self.squared)
        temp = p.xi if self.squared else 1.0
        log_ratio = log_num - log_den + temp * (fy - fyp)
        if u >= math.exp(min(0.0, log_ratio)):
            return y, fy, True, True
        if not coin:
            return y, fy, True, False
        return yp, fyp, True, False


def metropolis_sgld_run(
    body: ConvexBody,
    grad: Callable,
    ftilde: Callable,
    params: SgldParams,
    x0,
    rng,
    *,
    deterministic: bool = False,
    mc_draws: int = 32,
    squared: bool = True,
    force_ratio_one: bool = False,
    force_lazy_one: bool = False,
) -> ChainTrace:
    """Lazy Metropolis-adjusted SGLD with target ∝ exp(−ξ f̃) on the body.

    ``grad(x, rng)`` returns one gradient draw (exact gradient when
    ``deterministic``). ``squared=False`` switches to the literal unsquared
    proposal exponent. The trace's ``extra`` holds the lazy coins, the
    Metropolis rejection flags and the proposal flags.
    """
    if ftilde is None:
        raise ValueError("a value oracle for the smoothed objective is required")
    x0 = np.asarray(x0, dtype=float)
    if not body.contains(x0):
        raise ValueError("x0 lies outside the body")
    n = int(params.i_max)
    d = body.dimension
    rng_q, rng_z = _split(rng)
    rng_v, rng_u = rng_q.spawn(2)
    Q = rng_q.standard_normal((n, d))
    V = np.ones(n, dtype=bool) if force_lazy_one else rng_v.random(n) < 0.5
    U = rng_u.random(n)
    st = _MetropolisStepper(body, grad, ftilde, params, mc_draws, squared, deterministic)
    X = np.empty((n + 1, d))
    fv = np.empty(n + 1)
    acc = np.zeros(n + 1, dtype=bool)
    mh_rej = np.zeros(n, dtype=bool)
    proposed = np.zeros(n, dtype=bool)
    y = x0.copy()
    fy = float(ftilde(y))
    X[0], fv[0], acc[0] = y, fy, True
    for i in range(n):
        g_now = np.asarray(grad(y, rng_z), dtype=float)
        y2, fy2, proposed[i], mh_rej[i] = st.step(y, fy, Q[i], g_now, V[i], U[i], rng_z, force_ratio_one)
        acc[i + 1] = y2 is not y
        y, fy = y2, fy2
        X[i + 1], fv[i + 1] = y, fy
    tr = ChainTrace(X, acc, fv, np.full(n + 1, np.nan))
    tr.extra.update(lazy=V, mh_rejected=mh_rej, proposed=proposed)
    return tr


def coupled_run(
    body_full: ConvexBody,
    body_restricted: ConvexBody,
    grad: Callable,
    ftilde: Callable,
    fhat: Callable,
    params: SgldParams,
    x0,
    rng,
    *,
    deterministic: bool = False,
    mc_draws: int = 32,
    force_ratio_one: bool = False,
    force_lazy_one: bool = False,
) -> dict:
    """Three chains driven by shared Gaussians ``Q``.

    ``Y`` (Metropolis, lazy) uses ``Q_i`` at step ``i``; ``X`` (SGLD on the
    full body) and ``X̂`` (SGLD on the restricted body) use ``Q_{t(i)}`` with
    ``t(0) = 0`` and ``t(i+1)`` the next index after ``i`` whose lazy coin is 1.
    Gradient draws are indexed the same way. ``X_{i+1}`` is compared with
    ``Y_{t(i)+1}``.
    """
    x0 = np.asarray(x0, dtype=float)
    n = int(params.i_max)
    d = body_full.dimension
    rng_q, rng_z = _split(rng)
    rng_v, rng_u = rng_q.spawn(2)
    Q = rng_q.standard_normal((n, d))
    V = np.ones(n, dtype=bool) if force_lazy_one else rng_v.random(n) < 0.5
    U = rng_u.random(n)
    zseeds = rng_z.integers(0, 2**63, n)
    zr = lambda j: np.random.Generator(np.random.Philox(int(zseeds[j])))

    # Y chain
    st = _MetropolisStepper(body_full, grad, ftilde, params, mc_draws, True, deterministic)
    Y = np.empty((n + 1, d))
    Y[0] = x0
    y, fy = x0.copy(), float(ftilde(x0))
    mh_rej = np.zeros(n, dtype=bool)
    proposed = np.zeros(n, dtype=bool)
    for j in range(n):
        r = zr(j)
        g_now = np.asarray(grad(y, r), dtype=float)
        y, fy, proposed[j], mh_rej[j] = st.step(y, fy, Q[j], g_now, V[j], U[j], r, force_ratio_one)
        Y[j + 1] = y

    # time change t(i)
    ones = np.flatnonzero(V)
    t = [0]
    for j in ones:
        if j > t[-1]:
            t.append(int(j))
    noise = math.sqrt(2.0 * params.eta / params.xi)

    def sgld_on(body):
        out = np.empty((len(t) + 1, d))
        x = x0.copy()
        out[0] = x
        for i, ti in enumerate(t):
            g = np.asarray(grad(x, zr(ti)), dtype=float)
            xp = x - params.eta * g + noise * Q[ti]
            if np.linalg.norm(xp - x) <= params.D and body.contains(xp):
                x = xp
            out[i + 1] = x
        return out

    X = sgld_on(body_full)
    Xh = sgld_on(body_restricted)
    decouple = None
    for i, ti in enumerate(t):
        if not (np.array_equal(X[i + 1], Xh[i + 1]) and np.array_equal(X[i + 1], Y[ti + 1])):
            decouple = i + 1
            break
    exit_step = None
    for i in range(len(X)):
        if not body_restricted.contains(X[i]):
            exit_step = i
            break
    return {
        "X": X,
        "X_hat": Xh,
        "Y": Y,
        "t": np.asarray(t),
        "lazy": V,
        "mh_rejected": mh_rej,
        "proposed": proposed,
        "first_decouple_step": decouple,
        "first_exit_step": exit_step,
    }


def hitting_time(trace, target: Callable) -> Optional[int]:
    """Least ``i`` with ``target(X_i)``, or ``None``."""
    X = trace.X if isinstance(trace, ChainTrace) else np.asarray(trace)
    for i in range(len(X)):
        if target(X[i]):
            return i
    return None


def _fmt(v) -> str:
    return repr(float(v))


def write_trace_csv(dest, traces: Sequence[ChainTrace], emit_coords: bool = False) -> None:
    """One row per step: ``epoch,step,accepted,fhat,f_true[,x_0..]``."""
    own = isinstance(dest, (str, bytes)) or hasattr(dest, "__fspath__")
    fh = open(dest, "w", encoding="utf-8", newline="") if own else dest
    try:
        d = traces[0].X.shape[1] if traces else 0
        head = CSV_HEADER + ("".join(f",x_{j}" for j in range(d)) if emit_coords else "")
        fh.write(head + "\n")
        for tr in traces:
            buf = io.StringIO()
            for i in range(len(tr)):
                row = [str(tr.epoch), str(i), "1" if tr.accepted[i] else "0", _fmt(tr.fhat[i]), _fmt(tr.f_true[i])]
                if emit_coords:
                    row.extend(_fmt(v) for v in tr.X[i])
                buf.write(",".join(row) + "\n")
            fh.write(buf.getvalue())
    finally:
        if own:
            fh.close()
