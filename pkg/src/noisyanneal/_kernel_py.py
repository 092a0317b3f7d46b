"""Pure-Python SGLD step loop; same interface and arithmetic order as ``_kernel``."""
from __future__ import annotations

import math

import numpy as np

BACKEND = "python"

OK, BLOWUP = 0, 1


class Problem:
    """Compiled description of body, domain, objective and noise.

    Built from the dictionary returned by ``backend.problem_spec``.
    """

    def __init__(self, spec: dict):
        self.d = int(spec["d"])
        self.body_kind = int(spec["body_kind"])
        self.center = np.asarray(spec["center"], float)
        self.radius = float(spec["radius"])
        self.lo = np.asarray(spec["lo"], float)
        self.hi = np.asarray(spec["hi"], float)
        self.normals = np.asarray(spec["normals"], float)
        self.offsets = np.asarray(spec["offsets"], float)
        self.norms2 = np.einsum("ij,ij->i", self.normals, self.normals) if len(self.offsets) else np.zeros(0)
        self.dyk_tol = float(spec["dyk_tol"])
        self.dyk_max = int(spec["dyk_max"])
        self.rprime = float(spec["rprime"])
        self.tol = float(spec["tol"])
        self.dom_enabled = int(spec["dom_enabled"])
        self.dom_rprime = float(spec["dom_rprime"])
        self.obj_kind = int(spec["obj_kind"])
        self.xstar = np.asarray(spec["xstar"], float)
        self.A = np.asarray(spec["A"], float)
        self.scale = float(spec["scale"])
        self.width = float(spec["width"])
        self.slopes = np.asarray(spec["slopes"], float)
        self.tau = float(spec["tau"])
        self.curv = float(spec["curv"])
        self.noise = []
        for key in ("psi", "phi"):
            self.noise.append((
                int(spec[key + "_kind"]),
                float(spec[key + "_amp"]),
                np.asarray(spec[key + "_w"], float),
                np.asarray(spec[key + "_freq"], float),
                np.asarray(spec[key + "_phase"], float),
                float(spec[key + "_const"]),
            ))
        self.offset = float(spec["offset"])

    # geometry -------------------------------------------------------------
    def dist(self, x) -> float:
        k = self.body_kind
        if k == 0:
            s = 0.0
            for j in range(self.d):
                t = x[j] - self.center[j]
                s += t * t
            return max(math.sqrt(s) - self.radius, 0.0)
        if k == 1:
            s = 0.0
            for j in range(self.d):
                t = 0.0
                if x[j] < self.lo[j]:
                    t = self.lo[j] - x[j]
                elif x[j] > self.hi[j]:
                    t = x[j] - self.hi[j]
                s += t * t
            return math.sqrt(s)
        return self._dykstra(x)

    def _dykstra(self, x) -> float:
        m = len(self.offsets)
        d = self.d
        inside = True
        for i in range(m):
            s = 0.0
            for j in range(d):
                s += self.normals[i, j] * x[j]
            if s - self.offsets[i] > 0:
                inside = False
                break
        if inside:
            return 0.0
        y = [float(v) for v in x]
        incr = [[0.0] * d for _ in range(m)]
        for _ in range(self.dyk_max):
            moved = 0.0
            for i in range(m):
                z = [y[j] + incr[i][j] for j in range(d)]
                s = 0.0
                for j in range(d):
                    s += self.normals[i, j] * z[j]
                s = (s - self.offsets[i]) / self.norms2[i]
                if s < 0:
                    s = 0.0
                for j in range(d):
                    yn = z[j] - s * self.normals[i, j]
                    incr[i][j] = z[j] - yn
                    moved += (yn - y[j]) * (yn - y[j])
                    y[j] = yn
            if math.sqrt(moved) <= self.dyk_tol:
                break
        s = 0.0
        for j in range(d):
            s += (x[j] - y[j]) * (x[j] - y[j])
        return math.sqrt(s)

    def contains(self, x) -> bool:
        return self.dist(x) <= self.rprime + self.tol

    # objective and oracle -------------------------------------------------
    def ftrue(self, x) -> float:
        k = self.obj_kind
        d = self.d
        if k == 0:
            s = 0.0
            for i in range(d):
                yi = x[i] - self.xstar[i]
                for j in range(d):
                    s += yi * self.A[i, j] * (x[j] - self.xstar[j])
            return 0.5 * s
        if k == 1:
            s = 0.0
            for j in range(d):
                t = x[j] - self.xstar[j]
                s += t * t
            t = math.sqrt(s)
            w = self.width
            return self.scale * (0.5 * t * t / w if t <= w else t - 0.5 * w)
        if k == 2:
            m = self.slopes.shape[0]
            zs = []
            zmax = -math.inf
            for i in range(m):
                s = 0.0
                for j in range(d):
                    s += self.slopes[i, j] * (x[j] - self.xstar[j])
                s /= self.tau
                zs.append(s)
                if s > zmax:
                    zmax = s
            acc = 0.0
            for i in range(m):
                acc += math.exp(zs[i] - zmax)
            v = self.tau * (zmax + math.log(acc)) - self.tau * math.log(m)
            return v if v > 0 else 0.0
        t = x[0] - self.xstar[0]
        return self.curv * t * t

    def _field(self, which, x) -> float:
        kind, amp, w, freq, phase, const = self.noise[which]
        if kind == 0:
            return const
        s = 0.0
        for k in range(len(w)):
            a = phase[k]
            for j in range(self.d):
                a += freq[k, j] * x[j]
            s += w[k] * math.cos(a)
        return amp * s

    def fhat_dist(self, x, dist) -> float:
        if self.dom_enabled and dist > self.dom_rprime + self.tol:
            return 0.0
        f = self.ftrue(x)
        return f * (1.0 + self._field(0, x)) + self._field(1, x) + self.offset

    def fhat(self, x) -> float:
        return self.fhat_dist(x, self.dist(x) if self.dom_enabled else 0.0)


def sgld_chunk(prob: Problem, x, fx, xi, eta, D, sigma, blowup, P, Z, X, acc, fh, ft):
    """Advance the chain ``len(P)`` steps from ``x`` (updated in place).

    Row ``i`` of ``X/acc/fh/ft`` receives the state after step ``i``.
    Returns ``(status, steps_done, fx)``.
    """
    d = prob.d
    n = P.shape[0]
    noise = math.sqrt(2.0 * eta / xi)
    inv_s2 = 1.0 / (sigma * sigma)
    y = [0.0] * d
    z = [0.0] * d
    fcur = prob.ftrue(x)
    for i in range(n):
        for j in range(d):
            z[j] = sigma * Z[i, j]
            y[j] = x[j] + z[j]
        diff = (prob.fhat(y) - fx) * inv_s2
        step2 = 0.0
        gnorm2 = 0.0
        for j in range(d):
            g = z[j] * diff
            gnorm2 += g * g
            y[j] = x[j] - eta * g + noise * P[i, j]
            t = y[j] - x[j]
            step2 += t * t
        if eta * math.sqrt(gnorm2) > blowup:
            return BLOWUP, i, fx
        ok = 0
        if math.sqrt(step2) <= D:
            dist = prob.dist(y)
            if dist <= prob.rprime + prob.tol:
                ok = 1
                for j in range(d):
                    x[j] = y[j]
                fx = prob.fhat_dist(x, dist)
                fcur = prob.ftrue(x)
        for j in range(d):
            X[i, j] = x[j]
        acc[i] = ok
        fh[i] = fx
        ft[i] = fcur
    return OK, n, fx
