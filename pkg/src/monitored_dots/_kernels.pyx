# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels; semantics match ``_kernels_py`` exactly."""

import numpy as np
cimport numpy as cnp
from libc.math cimport log, tanh, expm1, sqrt, fabs, INFINITY

cnp.import_array()

cdef double LOG2 = 0.6931471805599453


cdef inline double _pair(double d) nogil:
    return log(d) + d + log(-expm1(-2.0 * d)) - LOG2


cdef void _drift(double[:, ::1] z, Py_ssize_t w, double[::1] out) nogil:
    cdef Py_ssize_t n = z.shape[1], i, m
    cdef double c
    for i in range(n):
        out[i] = 0.0
    # coth is odd: each pair is evaluated once
    for i in range(n):
        for m in range(i + 1, n):
            c = 2.0 / tanh(z[w, i] - z[w, m])
            out[i] += c
            out[m] -= c


def coth_drift(z_in):
    """Drift ``D_n = 2 sum_{m != n} coth(z_n - z_m)`` for a batch of shape ``(W, N)``."""
    cdef double[:, ::1] z = np.ascontiguousarray(np.atleast_2d(z_in), dtype=np.float64)
    cdef Py_ssize_t nw = z.shape[0], n = z.shape[1], w
    out = np.zeros((nw, n))
    cdef double[:, ::1] o = out
    for w in range(nw):
        _drift(z, w, o[w])
    return out


def langevin_run(double[:, ::1] z, double[::1] s_rem, double[:, :, ::1] normals,
                 cnp.int64_t[::1] pos, double dt_max, double dt_min):
    """Euler-Maruyama integration with gap-controlled steps; see ``_kernels_py.langevin_run``."""
    cdef Py_ssize_t nw = z.shape[0], n = z.shape[1], pool = normals.shape[1]
    cdef Py_ssize_t w, i
    cdef double dt, g, h, sq
    cdef bint ok
    status = np.zeros(nw, dtype=np.int64)
    cdef cnp.int64_t[::1] st = status
    cdef double[::1] drift = np.zeros(n)
    cdef double[::1] zp = np.zeros(n)
    with nogil:
        for w in range(nw):
            while s_rem[w] > 0:
                _drift(z, w, drift)
                g = INFINITY
                for i in range(n - 1):
                    if z[w, i] - z[w, i + 1] < g:
                        g = z[w, i] - z[w, i + 1]
                dt = dt_max
                if 0.1 * g * g < dt:
                    dt = 0.1 * g * g
                if s_rem[w] < dt:
                    dt = s_rem[w]
                while True:
                    if pos[w] >= pool:
                        st[w] = 1
                        break
                    sq = sqrt(2.0 * dt)
                    for i in range(n):
                        zp[i] = z[w, i] + drift[i] * dt + sq * normals[w, pos[w], i]
                    pos[w] += 1
                    ok = True
                    for i in range(n - 1):
                        if not zp[i] > zp[i + 1]:
                            ok = False
                            break
                    if ok:
                        break
                    dt *= 0.5
                    if dt < dt_min:
                        st[w] = 2
                        break
                if st[w] != 0:
                    break
                for i in range(n):
                    z[w, i] = zp[i]
                s_rem[w] -= dt
                if not s_rem[w] > 0:
                    s_rem[w] = 0.0
    return status


def metropolis_sweeps(double[:, ::1] z, double s, double[::1] scale,
                      double[:, :, ::1] xi, double[:, :, ::1] log_u,
                      Py_ssize_t record_every, double[:, :, ::1] out):
    """Per-coordinate Metropolis sweeps on the ordered sector; see ``_kernels_py.metropolis_sweeps``."""
    cdef Py_ssize_t nc = z.shape[0], n = z.shape[1], sweeps = xi.shape[1]
    cdef Py_ssize_t c, k, i, m
    cdef double old, new, delta, inv4s = 1.0 / (4.0 * s)
    cdef bint ok
    acc = np.zeros((nc, n), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] a = acc
    with nogil:
        for c in range(nc):
            for k in range(sweeps):
                for i in range(n):
                    old = z[c, i]
                    new = old + scale[i] * xi[c, k, i]
                    ok = True
                    if i > 0 and not new < z[c, i - 1]:
                        ok = False
                    if i < n - 1 and not new > z[c, i + 1]:
                        ok = False
                    if ok:
                        delta = -(new * new - old * old) * inv4s
                        for m in range(n):
                            if m != i:
                                delta = delta + _pair(fabs(new - z[c, m])) - _pair(fabs(old - z[c, m]))
                        if log_u[c, k, i] < delta:
                            z[c, i] = new
                            a[c, i] += 1
                if record_every > 0 and (k + 1) % record_every == 0:
                    for i in range(n):
                        out[c, (k + 1) // record_every - 1, i] = z[c, i]
    return acc
