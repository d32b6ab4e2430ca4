# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled CDF inversion for the closed-form lobe CDFs.

Each family evaluates ``F(x)`` and ``F'(x)`` for per-element parameters
``(p0, p1, p2)``; :func:`invert` runs bisection to a 1e-6 bracket followed by
safeguarded Newton steps, mirroring :func:`brdfgrad.decomp.invert.invert_cdf`.
"""

import numpy as np
from libc.math cimport sin, cos, exp, log, pow, sqrt, fabs, M_PI, fmax

# family codes, kept in sync with brdfgrad.accel
DEF HALF_ANGLE = 0
DEF HG = 1
DEF ABC_B = 2
DEF ABC_C = 3
DEF BURLEY1 = 4
DEF BURLEY2 = 5
DEF ON_BRANCH = 6


cdef inline void family_eval(int fam, double x, double p0, double p1, double p2,
                             double* F, double* f) noexcept nogil:
    cdef double c, s, g, K, Q, numer, B, C, v, Y, d, e1, e3, sx, den
    if fam == HALF_ANGLE:
        F[0] = (x + sin(x)) / M_PI
        f[0] = (1.0 + cos(x)) / M_PI
    elif fam == HG:
        # p0 = g, p1 = K, p2 = sign
        g = p0
        K = p1
        c = cos(x)
        s = 1.0 + g * g - 2.0 * g * c
        Q = (3.0 * g * g + 1.0 - g * (g * g + 3.0) * c) / pow(s, 1.5)
        numer = (g * g + 3.0) * c + g * (g * g - 5.0)
        if p2 > 0:
            F[0] = K * (Q - 1.0)
            f[0] = K * g * g * fmax(numer, 0.0) / pow(s, 2.5) * sin(x)
        else:
            F[0] = 1.0 + K - K * Q
            f[0] = K * g * g * fmax(-numer, 0.0) / pow(s, 2.5) * sin(x)
    elif fam == ABC_B or fam == ABC_C:
        B = p0
        C = p1
        c = cos(x)
        sx = sin(x)
        v = 1.0 + B * (1.0 - c)
        Y = B + 1.0
        if fam == ABC_B:
            den = 1.0 + B * C - pow(Y, C)
            F[0] = (pow(Y, C) * pow(v, -C) * (1.0 + B * C * (1.0 - c)) - pow(Y, C)) / den
            f[0] = B * B * C * (C - 1.0) * pow(Y, C) * (c - 1.0) * pow(v, -1.0 - C) / den * sx
        else:
            den = 1.0 - pow(Y, 1.0 - C) * ((C - 1.0) * log(Y) + 1.0)
            F[0] = (1.0 - pow(v, 1.0 - C) * ((C - 1.0) * log(v) + 1.0)) / den
            f[0] = B * (C - 1.0) * (C - 1.0) / den * log(v) / pow(v, C) * sx
    elif fam == BURLEY1:
        d = p0
        e1 = exp(-x / d)
        e3 = exp(-x / (3.0 * d))
        F[0] = 1.0 - 0.25 * e1 - 0.75 * e3
        f[0] = (e1 + e3) / (4.0 * d)
    elif fam == BURLEY2:
        d = p0
        e1 = exp(-x / d)
        e3 = exp(-x / (3.0 * d))
        F[0] = 1.0 - e1 * (x + d) / (4.0 * d) - e3 * (3.0 * d + x) / (4.0 * d)
        f[0] = x * (e1 + e3 / 3.0) / (4.0 * d * d)
    else:
        F[0] = x - sin(x) * cos(x)
        f[0] = 2.0 * sin(x) * sin(x)


cdef double invert_one(int fam, double u, double lo, double hi, double p0, double p1,
                       double p2, double tol, double bracket, int max_newton) noexcept nogil:
    cdef double flo, fhi, F, f, mid, x, xn, width_goal
    cdef int i
    family_eval(fam, lo, p0, p1, p2, &flo, &f)
    family_eval(fam, hi, p0, p1, p2, &fhi, &f)
    if u < flo:
        u = flo
    if u > fhi:
        u = fhi
    width_goal = bracket * fmax(1.0, fabs(hi - lo))
    while hi - lo > width_goal:
        mid = 0.5 * (lo + hi)
        family_eval(fam, mid, p0, p1, p2, &F, &f)
        if F < u:
            lo = mid
        else:
            hi = mid
    x = 0.5 * (lo + hi)
    for i in range(max_newton):
        family_eval(fam, x, p0, p1, p2, &F, &f)
        F = F - u
        if fabs(F) < tol:
            break
        if F > 0:
            hi = x
        else:
            lo = x
        if f > 1e-12:
            xn = x - F / f
            if not (xn > lo and xn < hi):
                xn = 0.5 * (lo + hi)
        else:
            xn = 0.5 * (lo + hi)
        if xn == x:
            break
        x = xn
    return x


def invert(int fam, u, lo, hi, p0, p1, p2, double tol=1e-10, double bracket=1e-6,
           int max_newton=30):
    """Vectorised inversion; all array arguments broadcast to ``u``'s shape."""
    ua = np.ascontiguousarray(u, dtype=np.float64)
    shape = ua.shape
    cdef const double[::1] uu = ua.ravel()
    cdef Py_ssize_t n = uu.shape[0]
    cdef const double[::1] a = np.ascontiguousarray(np.broadcast_to(lo, shape), dtype=np.float64).ravel()
    cdef const double[::1] b = np.ascontiguousarray(np.broadcast_to(hi, shape), dtype=np.float64).ravel()
    cdef const double[::1] q0 = np.ascontiguousarray(np.broadcast_to(p0, shape), dtype=np.float64).ravel()
    cdef const double[::1] q1 = np.ascontiguousarray(np.broadcast_to(p1, shape), dtype=np.float64).ravel()
    cdef const double[::1] q2 = np.ascontiguousarray(np.broadcast_to(p2, shape), dtype=np.float64).ravel()
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            o[i] = invert_one(fam, uu[i], a[i], b[i], q0[i], q1[i], q2[i], tol, bracket,
                              max_newton)
    return out.reshape(shape)
