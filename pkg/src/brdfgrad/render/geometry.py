"""Ray intersection: analytic spheres, triangles behind a median-split BVH."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import accel as _accel
from ..core import frame_from_axis

LEAF_SIZE = 4


@dataclass
class Hit:
    t: np.ndarray          # inf on miss
    obj: np.ndarray        # -1 on miss
    prim: np.ndarray       # sphere or triangle index
    is_tri: np.ndarray
    b1: np.ndarray
    b2: np.ndarray

    @property
    def found(self):
        return np.isfinite(self.t)


@dataclass
class SurfacePoint:
    position: np.ndarray
    normal: np.ndarray     # geometric normal, flipped towards the viewer
    tangent: np.ndarray
    bitangent: np.ndarray
    uv: np.ndarray
    obj: np.ndarray

    def to_local(self, v):
        return np.stack([np.einsum("...i,...i->...", v, self.tangent),
                         np.einsum("...i,...i->...", v, self.bitangent),
                         np.einsum("...i,...i->...", v, self.normal)], axis=-1)

    def to_world(self, v):
        return (v[..., 0:1] * self.tangent + v[..., 1:2] * self.bitangent
                + v[..., 2:3] * self.normal)

    def take(self, idx):
        return SurfacePoint(self.position[idx], self.normal[idx], self.tangent[idx],
                            self.bitangent[idx], self.uv[idx], self.obj[idx])

    def __len__(self):
        return len(self.obj)


# ---------------------------------------------------------------------------
# BVH


@dataclass
class BVH:
    """Flattened BVH.  Leaves have ``count > 0`` and cover
    ``order[start:start + count]``; inner nodes store their children in
    ``left``/``right``."""

    bmin: np.ndarray
    bmax: np.ndarray
    left: np.ndarray
    right: np.ndarray
    start: np.ndarray
    count: np.ndarray
    order: np.ndarray


def build_bvh(tris: np.ndarray, leaf_size: int = LEAF_SIZE) -> BVH:
    lo = tris.min(axis=1)
    hi = tris.max(axis=1)
    cen = tris.mean(axis=1)
    bmin, bmax, left, right, start, count = [], [], [], [], [], []
    order = []

    def node(idx):
        k = len(bmin)
        bmin.append(lo[idx].min(axis=0))
        bmax.append(hi[idx].max(axis=0))
        left.append(-1)
        right.append(-1)
        start.append(0)
        count.append(0)
        if len(idx) <= leaf_size:
            start[k] = len(order)
            count[k] = len(idx)
            order.extend(idx.tolist())
            return k
        c = cen[idx]
        axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
        srt = idx[np.argsort(c[:, axis], kind="stable")]
        mid = len(srt) // 2
        left[k] = node(srt[:mid])
        right[k] = node(srt[mid:])
        return k

    if len(tris):
        node(np.arange(len(tris)))
    return BVH(np.array(bmin, float).reshape(-1, 3), np.array(bmax, float).reshape(-1, 3),
               np.array(left, np.int64), np.array(right, np.int64),
               np.array(start, np.int64), np.array(count, np.int64),
               np.array(order, np.int64))


def _triangles_numpy(v0, e1, e2, o, d, tmin, tmax):
    """Moller-Trumbore over every triangle, vectorised over rays."""
    n = len(o)
    best = np.full(n, np.inf)
    tri = np.full(n, -1, np.int64)
    b1 = np.zeros(n)
    b2 = np.zeros(n)
    for k in range(len(v0)):
        p = np.cross(d, e2[k])
        det = p @ e1[k]
        ok = np.abs(det) > 1e-14
        inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
        s = o - v0[k]
        u = np.einsum("ij,ij->i", s, p) * inv
        q = np.cross(s, e1[k])
        v = np.einsum("ij,ij->i", d, q) * inv
        t = q @ e2[k] * inv
        hit = ok & (u >= 0) & (v >= 0) & (u + v <= 1) & (t > tmin) & (t < np.minimum(best, tmax))
        best = np.where(hit, t, best)
        tri = np.where(hit, k, tri)
        b1 = np.where(hit, u, b1)
        b2 = np.where(hit, v, b2)
    return best, tri, b1, b2


class Accelerator:
    """Nearest-hit queries against one scene's geometry."""

    def __init__(self, scene):
        self.scene = scene
        t = scene.triangles
        self.v0 = np.ascontiguousarray(t[:, 0]) if len(t) else np.zeros((0, 3))
        self.e1 = np.ascontiguousarray(t[:, 1] - t[:, 0]) if len(t) else np.zeros((0, 3))
        self.e2 = np.ascontiguousarray(t[:, 2] - t[:, 0]) if len(t) else np.zeros((0, 3))
        self.bvh = build_bvh(t)
        gn = np.cross(self.e1, self.e2)
        nn = np.linalg.norm(gn, axis=-1, keepdims=True)
        self.tri_normal = gn / np.where(nn > 0, nn, 1.0)

    def _triangles(self, o, d, tmin, tmax):
        if not len(self.v0):
            n = len(o)
            return np.full(n, np.inf), np.full(n, -1, np.int64), np.zeros(n), np.zeros(n)
        mod = _accel.bvh_module()
        if mod is not None:
            b = self.bvh
            return mod.intersect(b.bmin, b.bmax, b.left, b.right, b.start, b.count, b.order,
                                 self.v0, self.e1, self.e2,
                                 np.ascontiguousarray(o, float), np.ascontiguousarray(d, float),
                                 float(tmin), float(tmax))
        return _triangles_numpy(self.v0, self.e1, self.e2, o, d, tmin, tmax)

    def intersect(self, o, d, tmin: float = 1e-6, tmax: float = np.inf) -> Hit:
        o = np.asarray(o, float).reshape(-1, 3)
        d = np.asarray(d, float).reshape(-1, 3)
        t, tri, b1, b2 = self._triangles(o, d, tmin, tmax)
        n = len(o)
        prim = tri.copy()
        is_tri = tri >= 0
        sc = self.scene
        obj = np.where(is_tri, sc.tri_obj[np.maximum(tri, 0)] if len(sc.tri_obj) else -1, -1)
        for s, (cx, cy, cz, r) in enumerate(sc.spheres):
            oc = o - np.array([cx, cy, cz])
            bq = np.einsum("ij,ij->i", oc, d)
            cq = np.einsum("ij,ij->i", oc, oc) - r * r
            disc = bq * bq - cq
            ok = disc >= 0
            sq = np.sqrt(np.where(ok, disc, 0.0))
            t0 = -bq - sq
            t1 = -bq + sq
            ts = np.where(t0 > tmin, t0, np.where(t1 > tmin, t1, np.inf))
            closer = ok & (ts < t) & (ts < tmax)
            t = np.where(closer, ts, t)
            obj = np.where(closer, sc.sphere_obj[s], obj)
            prim = np.where(closer, s, prim)
            is_tri = np.where(closer, False, is_tri)
        return Hit(t, obj, prim, is_tri, b1, b2)

    def surface(self, o, d, hit: Hit, idx=None) -> SurfacePoint:
        """Shading geometry at the hits ``idx`` (default: all found hits)."""
        if idx is None:
            idx = np.nonzero(hit.found)[0]
        o = np.asarray(o, float).reshape(-1, 3)[idx]
        d = np.asarray(d, float).reshape(-1, 3)[idx]
        t = hit.t[idx]
        pos = o + t[:, None] * d
        prim = hit.prim[idx]
        tri = hit.is_tri[idx]
        sc = self.scene
        n = np.zeros_like(pos)
        uv = np.zeros((len(idx), 2))
        tan = np.zeros_like(pos)
        if np.any(tri):
            k = prim[tri]
            n[tri] = self.tri_normal[k]
            w1 = hit.b1[idx][tri][:, None]
            w2 = hit.b2[idx][tri][:, None]
            tuv = sc.tri_uv[k]
            uv[tri] = (1 - w1 - w2) * tuv[:, 0] + w1 * tuv[:, 1] + w2 * tuv[:, 2]
            tan[tri] = sc.tri_tangent[k]
        sph = ~tri
        if np.any(sph):
            s = sc.spheres[prim[sph]]
            rel = (pos[sph] - s[:, :3]) / s[:, 3:4]
            rel /= np.linalg.norm(rel, axis=-1, keepdims=True)
            n[sph] = rel
            phi = np.arctan2(rel[:, 1], rel[:, 0])
            uv[sph, 0] = (phi / (2 * np.pi)) % 1.0
            uv[sph, 1] = np.arccos(np.clip(rel[:, 2], -1.0, 1.0)) / np.pi
            tan[sph] = np.stack([-rel[:, 1], rel[:, 0], np.zeros(len(rel))], axis=-1)
        # shade on the side the ray arrives from
        flip = np.einsum("ij,ij->i", n, d) > 0
        n = np.where(flip[:, None], -n, n)
        # Gram-Schmidt the tangent against the normal; fall back to any frame
        tan = tan - np.einsum("ij,ij->i", tan, n)[:, None] * n
        tl = np.linalg.norm(tan, axis=-1)
        good = tl > 1e-9
        ft, _ = frame_from_axis(n)
        tan = np.where(good[:, None], tan / np.where(good, tl, 1.0)[:, None], ft)
        bit = np.cross(n, tan)
        return SurfacePoint(pos, n, tan, bit, uv, hit.obj[idx])


def intersect_quad_lights(lights, o, d, tmin: float = 1e-6):
    """Nearest quad-light hit: ``(t, light index, front-facing)``."""
    o = np.asarray(o, float).reshape(-1, 3)
    d = np.asarray(d, float).reshape(-1, 3)
    n = len(o)
    best = np.full(n, np.inf)
    which = np.full(n, -1, np.int64)
    front = np.zeros(n, bool)
    for i, q in enumerate(lights):
        nrm = np.cross(q.edge1, q.edge2)
        den = d @ nrm
        ok = np.abs(den) > 1e-14
        t = np.where(ok, ((q.corner - o) @ nrm) / np.where(ok, den, 1.0), np.inf)
        p = o + np.where(np.isfinite(t), t, 0.0)[:, None] * d - q.corner
        a = p @ q.edge1 / (q.edge1 @ q.edge1)
        b = p @ q.edge2 / (q.edge2 @ q.edge2)
        hit = ok & (t > tmin) & (t < best) & (a >= 0) & (a <= 1) & (b >= 0) & (b <= 1)
        best = np.where(hit, t, best)
        which = np.where(hit, i, which)
        front = np.where(hit, den < 0, front)
    return best, which, front
