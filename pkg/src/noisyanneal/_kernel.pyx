# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled SGLD step loop; mirrors ``_kernel_py`` operation for operation."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, exp, log, cos, INFINITY

cnp.import_array()

BACKEND = "cython"

OK = 0
BLOWUP = 1


cdef class Problem:
    cdef public int d
    cdef int body_kind, dyk_max, dom_enabled, obj_kind, m, ms
    cdef double[::1] center, lo, hi, offsets, norms2, xstar
    cdef double[:, ::1] normals, A, slopes
    cdef double radius, dyk_tol, rprime, tol, dom_rprime
    cdef double scale, width, tau, curv, offset
    cdef int nkind[2]
    cdef double namp[2]
    cdef double nconst[2]
    cdef double[::1] w0, w1, ph0, ph1
    cdef double[:, ::1] fr0, fr1
    cdef double[::1] ybuf, zbuf, zs
    cdef double[:, ::1] incr

    def __init__(self, dict spec):
        self.d = int(spec["d"])
        self.body_kind = int(spec["body_kind"])
        self.center = np.ascontiguousarray(spec["center"], dtype=np.float64)
        self.radius = float(spec["radius"])
        self.lo = np.ascontiguousarray(spec["lo"], dtype=np.float64)
        self.hi = np.ascontiguousarray(spec["hi"], dtype=np.float64)
        normals = np.ascontiguousarray(np.atleast_2d(spec["normals"]), dtype=np.float64)
        self.normals = normals
        self.offsets = np.ascontiguousarray(spec["offsets"], dtype=np.float64)
        self.m = self.offsets.shape[0]
        self.norms2 = np.ascontiguousarray(np.einsum("ij,ij->i", normals, normals) if self.m else np.zeros(0))
        self.dyk_tol = float(spec["dyk_tol"])
        self.dyk_max = int(spec["dyk_max"])
        self.rprime = float(spec["rprime"])
        self.tol = float(spec["tol"])
        self.dom_enabled = int(spec["dom_enabled"])
        self.dom_rprime = float(spec["dom_rprime"])
        self.obj_kind = int(spec["obj_kind"])
        self.xstar = np.ascontiguousarray(spec["xstar"], dtype=np.float64)
        self.A = np.ascontiguousarray(np.atleast_2d(spec["A"]), dtype=np.float64)
        self.scale = float(spec["scale"])
        self.width = float(spec["width"])
        slopes = np.ascontiguousarray(np.atleast_2d(spec["slopes"]), dtype=np.float64)
        self.slopes = slopes
        self.ms = slopes.shape[0]
        self.tau = float(spec["tau"])
        self.curv = float(spec["curv"])
        self.nkind[0] = int(spec["psi_kind"])
        self.nkind[1] = int(spec["phi_kind"])
        self.namp[0] = float(spec["psi_amp"])
        self.namp[1] = float(spec["phi_amp"])
        self.nconst[0] = float(spec["psi_const"])
        self.nconst[1] = float(spec["phi_const"])
        self.w0 = np.ascontiguousarray(spec["psi_w"], dtype=np.float64)
        self.w1 = np.ascontiguousarray(spec["phi_w"], dtype=np.float64)
        self.ph0 = np.ascontiguousarray(spec["psi_phase"], dtype=np.float64)
        self.ph1 = np.ascontiguousarray(spec["phi_phase"], dtype=np.float64)
        self.fr0 = np.ascontiguousarray(np.atleast_2d(spec["psi_freq"]), dtype=np.float64)
        self.fr1 = np.ascontiguousarray(np.atleast_2d(spec["phi_freq"]), dtype=np.float64)
        self.offset = float(spec["offset"])
        self.ybuf = np.zeros(self.d)
        self.zbuf = np.zeros(self.d)
        self.zs = np.zeros(max(self.ms, 1))
        self.incr = np.zeros((max(self.m, 1), self.d))

    cdef double c_dist(self, double[::1] x) nogil:
        cdef int j, i, it
        cdef double s, t, yn, moved
        if self.body_kind == 0:
            s = 0.0
            for j in range(self.d):
                t = x[j] - self.center[j]
                s += t * t
            t = sqrt(s) - self.radius
            return t if t > 0.0 else 0.0
        if self.body_kind == 1:
            s = 0.0
            for j in range(self.d):
                t = 0.0
                if x[j] < self.lo[j]:
                    t = self.lo[j] - x[j]
                elif x[j] > self.hi[j]:
                    t = x[j] - self.hi[j]
                s += t * t
            return sqrt(s)
        # polytope: fast path when inside, else Dykstra
        for i in range(self.m):
            s = 0.0
            for j in range(self.d):
                s += self.normals[i, j] * x[j]
            if s - self.offsets[i] > 0:
                break
        else:
            return 0.0
        for j in range(self.d):
            self.ybuf[j] = x[j]
        for i in range(self.m):
            for j in range(self.d):
                self.incr[i, j] = 0.0
        for it in range(self.dyk_max):
            moved = 0.0
            for i in range(self.m):
                s = 0.0
                for j in range(self.d):
                    self.zbuf[j] = self.ybuf[j] + self.incr[i, j]
                    s += self.normals[i, j] * self.zbuf[j]
                s = (s - self.offsets[i]) / self.norms2[i]
                if s < 0:
                    s = 0.0
                for j in range(self.d):
                    yn = self.zbuf[j] - s * self.normals[i, j]
                    self.incr[i, j] = self.zbuf[j] - yn
                    moved += (yn - self.ybuf[j]) * (yn - self.ybuf[j])
                    self.ybuf[j] = yn
            if sqrt(moved) <= self.dyk_tol:
                break
        s = 0.0
        for j in range(self.d):
            s += (x[j] - self.ybuf[j]) * (x[j] - self.ybuf[j])
        return sqrt(s)

    cdef double c_ftrue(self, double[::1] x) nogil:
        cdef int i, j
        cdef double s, t, yi, zmax, acc, v, w
        if self.obj_kind == 0:
            s = 0.0
            for i in range(self.d):
                yi = x[i] - self.xstar[i]
                for j in range(self.d):
                    s += yi * self.A[i, j] * (x[j] - self.xstar[j])
            return 0.5 * s
        if self.obj_kind == 1:
            s = 0.0
            for j in range(self.d):
                t = x[j] - self.xstar[j]
                s += t * t
            t = sqrt(s)
            w = self.width
            if t <= w:
                return self.scale * (0.5 * t * t / w)
            return self.scale * (t - 0.5 * w)
        if self.obj_kind == 2:
            zmax = -INFINITY
            for i in range(self.ms):
                s = 0.0
                for j in range(self.d):
                    s += self.slopes[i, j] * (x[j] - self.xstar[j])
                s /= self.tau
                self.zs[i] = s
                if s > zmax:
                    zmax = s
            acc = 0.0
            for i in range(self.ms):
                acc += exp(self.zs[i] - zmax)
            v = self.tau * (zmax + log(acc)) - self.tau * log(<double>self.ms)
            return v if v > 0 else 0.0
        t = x[0] - self.xstar[0]
        return self.curv * t * t

    cdef double c_field(self, int which, double[::1] x) nogil:
        cdef int k, j
        cdef double s, a
        cdef double[::1] w
        cdef double[::1] ph
        cdef double[:, ::1] fr
        if self.nkind[which] == 0:
            return self.nconst[which]
        if which == 0:
            w = self.w0
            ph = self.ph0
            fr = self.fr0
        else:
            w = self.w1
            ph = self.ph1
            fr = self.fr1
        s = 0.0
        for k in range(w.shape[0]):
            a = ph[k]
            for j in range(self.d):
                a += fr[k, j] * x[j]
            s += w[k] * cos(a)
        return self.namp[which] * s

    cdef double c_fhat_dist(self, double[::1] x, double dist) nogil:
        cdef double f
        if self.dom_enabled and dist > self.dom_rprime + self.tol:
            return 0.0
        f = self.c_ftrue(x)
        return f * (1.0 + self.c_field(0, x)) + self.c_field(1, x) + self.offset

    cdef double c_fhat(self, double[::1] x) nogil:
        cdef double dist = 0.0
        if self.dom_enabled:
            dist = self.c_dist(x)
        return self.c_fhat_dist(x, dist)

    def dist(self, x):
        return self.c_dist(np.ascontiguousarray(x, dtype=np.float64))

    def contains(self, x):
        return self.c_dist(np.ascontiguousarray(x, dtype=np.float64)) <= self.rprime + self.tol

    def ftrue(self, x):
        return self.c_ftrue(np.ascontiguousarray(x, dtype=np.float64))

    def fhat(self, x):
        return self.c_fhat(np.ascontiguousarray(x, dtype=np.float64))


def sgld_chunk(Problem prob, double[::1] x, double fx, double xi, double eta, double D,
               double sigma, double blowup, double[:, ::1] P, double[:, ::1] Z,
               double[:, ::1] X, unsigned char[::1] acc, double[::1] fh, double[::1] ft):
    cdef int d = prob.d
    cdef Py_ssize_t n = P.shape[0], i
    cdef int j
    cdef unsigned char ok
    cdef double noise = sqrt(2.0 * eta / xi)
    cdef double inv_s2 = 1.0 / (sigma * sigma)
    cdef double diff, step2, gnorm2, g, t, dist, fcur
    cdef double[::1] y = np.zeros(d)
    cdef double[::1] z = np.zeros(d)
    fcur = prob.c_ftrue(x)
    with nogil:
        for i in range(n):
            for j in range(d):
                z[j] = sigma * Z[i, j]
                y[j] = x[j] + z[j]
            diff = (prob.c_fhat(y) - fx) * inv_s2
            step2 = 0.0
            gnorm2 = 0.0
            for j in range(d):
                g = z[j] * diff
                gnorm2 += g * g
                y[j] = x[j] - eta * g + noise * P[i, j]
                t = y[j] - x[j]
                step2 += t * t
            if eta * sqrt(gnorm2) > blowup:
                with gil:
                    return BLOWUP, i, fx
            ok = 0
            if sqrt(step2) <= D:
                dist = prob.c_dist(y)
                if dist <= prob.rprime + prob.tol:
                    ok = 1
                    for j in range(d):
                        x[j] = y[j]
                    fx = prob.c_fhat_dist(x, dist)
                    fcur = prob.c_ftrue(x)
            for j in range(d):
                X[i, j] = x[j]
            acc[i] = ok
            fh[i] = fx
            ft[i] = fcur
    return OK, n, fx
