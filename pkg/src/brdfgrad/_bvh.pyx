# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled BVH traversal for triangle soups built by ``render.geometry.build_bvh``."""

import numpy as np
from libc.math cimport fabs, INFINITY


cdef inline bint slab(const double[:, ::1] bmin, const double[:, ::1] bmax, Py_ssize_t k,
                      double ox, double oy, double oz, double ix, double iy, double iz,
                      double tmin, double tmax) noexcept nogil:
    cdef double t0, t1, tmp
    t0 = (bmin[k, 0] - ox) * ix
    t1 = (bmax[k, 0] - ox) * ix
    if t0 > t1:
        tmp = t0; t0 = t1; t1 = tmp
    if t0 > tmin:
        tmin = t0
    if t1 < tmax:
        tmax = t1
    t0 = (bmin[k, 1] - oy) * iy
    t1 = (bmax[k, 1] - oy) * iy
    if t0 > t1:
        tmp = t0; t0 = t1; t1 = tmp
    if t0 > tmin:
        tmin = t0
    if t1 < tmax:
        tmax = t1
    t0 = (bmin[k, 2] - oz) * iz
    t1 = (bmax[k, 2] - oz) * iz
    if t0 > t1:
        tmp = t0; t0 = t1; t1 = tmp
    if t0 > tmin:
        tmin = t0
    if t1 < tmax:
        tmax = t1
    return tmin <= tmax


def intersect(const double[:, ::1] bmin, const double[:, ::1] bmax, const long[::1] left,
              const long[::1] right, const long[::1] start, const long[::1] count,
              const long[::1] order, const double[:, ::1] v0, const double[:, ::1] e1,
              const double[:, ::1] e2, const double[:, ::1] o, const double[:, ::1] d,
              double tmin, double tmax):
    """Nearest hit per ray: ``(t, triangle, b1, b2)`` with ``t = inf`` on a miss."""
    cdef Py_ssize_t n = o.shape[0]
    out_t = np.full(n, np.inf)
    out_k = np.full(n, -1, dtype=np.int64)
    out_b1 = np.zeros(n)
    out_b2 = np.zeros(n)
    cdef double[::1] rt = out_t
    cdef long[::1] rk = out_k
    cdef double[::1] rb1 = out_b1
    cdef double[::1] rb2 = out_b2
    cdef long stack[128]
    cdef Py_ssize_t i, sp, node, j, tri
    cdef double ox, oy, oz, dx, dy, dz, ix, iy, iz, best
    cdef double px, py, pz, det, inv, sx, sy, sz, u, v, qx, qy, qz, t
    if bmin.shape[0] == 0:
        return out_t, out_k, out_b1, out_b2
    with nogil:
        for i in range(n):
            ox = o[i, 0]; oy = o[i, 1]; oz = o[i, 2]
            dx = d[i, 0]; dy = d[i, 1]; dz = d[i, 2]
            ix = 1.0 / dx if dx != 0.0 else INFINITY
            iy = 1.0 / dy if dy != 0.0 else INFINITY
            iz = 1.0 / dz if dz != 0.0 else INFINITY
            best = tmax
            sp = 0
            stack[0] = 0
            sp = 1
            while sp > 0:
                sp -= 1
                node = stack[sp]
                if not slab(bmin, bmax, node, ox, oy, oz, ix, iy, iz, tmin, best):
                    continue
                if count[node] > 0:
                    for j in range(start[node], start[node] + count[node]):
                        tri = order[j]
                        px = dy * e2[tri, 2] - dz * e2[tri, 1]
                        py = dz * e2[tri, 0] - dx * e2[tri, 2]
                        pz = dx * e2[tri, 1] - dy * e2[tri, 0]
                        det = px * e1[tri, 0] + py * e1[tri, 1] + pz * e1[tri, 2]
                        if fabs(det) <= 1e-14:
                            continue
                        inv = 1.0 / det
                        sx = ox - v0[tri, 0]; sy = oy - v0[tri, 1]; sz = oz - v0[tri, 2]
                        u = (sx * px + sy * py + sz * pz) * inv
                        if u < 0.0 or u > 1.0:
                            continue
                        qx = sy * e1[tri, 2] - sz * e1[tri, 1]
                        qy = sz * e1[tri, 0] - sx * e1[tri, 2]
                        qz = sx * e1[tri, 1] - sy * e1[tri, 0]
                        v = (dx * qx + dy * qy + dz * qz) * inv
                        if v < 0.0 or u + v > 1.0:
                            continue
                        t = (e2[tri, 0] * qx + e2[tri, 1] * qy + e2[tri, 2] * qz) * inv
                        if t > tmin and t < best:
                            best = t
                            rt[i] = t
                            rk[i] = tri
                            rb1[i] = u
                            rb2[i] = v
                else:
                    if sp + 2 <= 128:
                        stack[sp] = left[node]
                        stack[sp + 1] = right[node]
                        sp += 2
    return out_t, out_k, out_b1, out_b2
