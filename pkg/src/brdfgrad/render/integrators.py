"""Gradient integrators: direct lighting and bounded-depth global illumination.

The derivative of reflected radiance at a point on the differentiated object
splits into ``int dF L`` (the BRDF derivative against ordinary radiance) and
``int F dL`` (the BRDF against differential radiance).  The first term is
estimated with the chosen estimator, whose two samples each spawn an
ordinary radiance path; the second continues along one "carrier" sample
whose density covers the BRDF, so only one differential branch survives per
bounce and the ray count grows quadratically with depth.

Every tile draws from its own stream keyed by ``(seed, run, tile)``, and
tiles write to disjoint pixels, so images do not depend on the thread count.
"""

from __future__ import annotations

import concurrent.futures as cf
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .. import brdf as _b
from ..brdf import BrdfModel, ConfigError
from ..core import RandomStream
from ..decomp import Decomposition, build
from ..decomp.lobes import CosineLobe
from ..estimators import (DECOMPOSED, EstimatorConfig, EstimatorKind, as_kind, estimate)
from .geometry import SurfacePoint, intersect_quad_lights
from .image import GradientImage
from .scene import Scene

MAX_DEPTH = 16
EPS = 1e-5
DEFAULT_TILE = 32


# ---------------------------------------------------------------------------
# ray budget bookkeeping


def carrier_index(kind: EstimatorKind, pair) -> Optional[int]:
    """Which estimator radiance call continues the differential path, or None
    when an extra forward-sampled ray is needed."""
    if kind in (EstimatorKind.BrdfSampling, EstimatorKind.ZhangAntithetic):
        return 0
    if pair is None or pair.kind is Decomposition.Positivization:
        return None
    if pair.forward_index is not None:
        return pair.forward_index
    for k, lobe in enumerate(pair.lobes):
        if isinstance(lobe, CosineLobe):
            return k
    return None


def declared_rays(scene: Scene, target: str, kind, mis_with_light: bool = False,
                  max_depth: int = 1) -> int:
    """Rays per shading evaluation on the differentiated object."""
    kind = as_kind(kind)
    cfg = EstimatorConfig(kind, mis_with_light)
    obj, param = scene.resolve_target(target)
    n = cfg.rays
    if max_depth > 1:
        m = scene.objects[obj].material.model
        pair = build(m, param, DECOMPOSED[kind]) if kind in DECOMPOSED else None
        if carrier_index(kind, pair) is None:
            n += 1
    return n


# ---------------------------------------------------------------------------
# light sampling


class _QuadLightSampler:
    """Uniform area sampling of the quad lights, light chosen uniformly."""

    def __init__(self, lights):
        self.lights = list(lights)

    def __bool__(self):
        return bool(self.lights)

    def pdf_world(self, p, d):
        out = np.zeros(len(p))
        nl = len(self.lights)
        for q in self.lights:
            nrm = np.cross(q.edge1, q.edge2)
            den = d @ nrm
            ok = den < -1e-14
            t = np.where(ok, ((q.corner - p) @ nrm) / np.where(ok, den, -1.0), -1.0)
            x = p + np.maximum(t, 0.0)[:, None] * d - q.corner
            a = x @ q.edge1 / (q.edge1 @ q.edge1)
            b = x @ q.edge2 / (q.edge2 @ q.edge2)
            inside = ok & (t > 0) & (a >= 0) & (a <= 1) & (b >= 0) & (b <= 1)
            cos_l = np.abs(den) / np.linalg.norm(nrm)
            pdf = t * t / (q.area * np.where(inside, cos_l, 1.0))
            out += np.where(inside, pdf / nl, 0.0)
        return out

    def sample_world(self, p, u):
        nl = len(self.lights)
        pick = np.minimum((u[:, 0] * nl).astype(np.int64), nl - 1)
        a = u[:, 0] * nl - pick
        b = u[:, 1]
        corner = np.array([q.corner for q in self.lights])[pick]
        e1 = np.array([q.edge1 for q in self.lights])[pick]
        e2 = np.array([q.edge2 for q in self.lights])[pick]
        x = corner + a[:, None] * e1 + b[:, None] * e2
        d = x - p
        d /= np.linalg.norm(d, axis=-1, keepdims=True)
        return d


# ---------------------------------------------------------------------------
# tracer


@dataclass
class _Incoming:
    value: np.ndarray
    surf_idx: np.ndarray               # rays that hit geometry (not lights)
    surf: Optional[SurfacePoint]


class _Tracer:
    def __init__(self, scene: Scene, rng: RandomStream, target_obj: int = -1, param: str = "",
                 cfg: Optional[EstimatorConfig] = None, roulette: bool = False):
        self.scene = scene
        self.rng = rng
        self.target_obj = target_obj
        self.param = param
        self.cfg = cfg
        self.rays = 0
        self.roulette = roulette
        self.lights = _QuadLightSampler(scene.quad_lights)
        self._pairs: Dict = {}

    # -- rays -----------------------------------------------------------

    def trace(self, o, d) -> _Incoming:
        """Emitted radiance along rays plus the surfaces they hit."""
        n = len(o)
        self.rays += n
        sc = self.scene
        hit = sc.accel.intersect(o, d)
        val = np.zeros(n)
        if sc.quad_lights:
            tl, li, front = intersect_quad_lights(sc.quad_lights, o, d)
            lfirst = tl < hit.t
            if np.any(lfirst):
                rad = np.array([q.radiance for q in sc.quad_lights])[np.maximum(li, 0)]
                val = np.where(lfirst & front, rad, val)
        else:
            lfirst = np.zeros(n, bool)
        miss = ~hit.found & ~lfirst
        if sc.environment is not None and np.any(miss):
            val[miss] = sc.environment.lookup(d[miss])
        sidx = np.nonzero(hit.found & ~lfirst)[0]
        surf = sc.accel.surface(o, d, hit, sidx) if len(sidx) else None
        if surf is not None:
            em = np.array([ob.emission for ob in sc.objects])[surf.obj]
            val[sidx] += em
        return _Incoming(val, sidx, surf)

    def spawn(self, sp: SurfacePoint, wi_world):
        side = np.sign(np.einsum("ij,ij->i", wi_world, sp.normal))
        return sp.position + (EPS * (1.0 + np.abs(sp.position).max(axis=-1)) * side)[:, None] * sp.normal

    def groups(self, sp: SurfacePoint):
        """``(object index, positions, model)`` per object present, in index order."""
        for obj in np.unique(sp.obj):
            idx = np.nonzero(sp.obj == obj)[0]
            mat = self.scene.objects[obj].material
            yield int(obj), idx, mat.model_at(sp.uv[idx])

    # -- ordinary radiance ---------------------------------------------

    def incoming(self, sp: SurfacePoint, wi_world, k: int) -> _Incoming:
        """Radiance arriving along ``wi_world`` with ``k`` further bounces."""
        inc = self.trace(self.spawn(sp, wi_world), wi_world)
        if k > 0 and inc.surf is not None:
            inc.value[inc.surf_idx] += self.reflected(inc.surf, -wi_world[inc.surf_idx], k)
        return inc

    def reflected(self, sp: SurfacePoint, wo_world, k: int) -> np.ndarray:
        """BRDF-sampled estimate of reflected radiance with ``k`` bounces."""
        n = len(sp)
        u = self.rng.uniform(n, 2)
        out = np.zeros(n)
        for _, idx, m in self.groups(sp):
            s = sp.take(idx)
            wo = s.to_local(wo_world[idx])
            smp = _b.sample_forward(m, wo, u[idx])
            w = np.where(smp.valid, smp.value / np.where(smp.valid, smp.pdf, 1.0), 0.0)
            live = np.nonzero(w != 0.0)[0]
            if not len(live):
                continue
            sl = s.take(live)
            wi = sl.to_world(smp.wi[live])
            inc = self.incoming(sl, wi, k - 1)
            out[idx[live]] = w[live] * inc.value
        return out

    def reflected_direct_mis(self, sp: SurfacePoint, wo_world) -> np.ndarray:
        """One BRDF sample and one light sample, balance-weighted."""
        n = len(sp)
        u_b = self.rng.uniform(n, 2)
        u_l = self.rng.uniform(n, 2)
        out = np.zeros(n)
        for _, idx, m in self.groups(sp):
            s = sp.take(idx)
            wo = s.to_local(wo_world[idx])
            smp = _b.sample_forward(m, wo, u_b[idx])
            live = np.nonzero(smp.valid)[0]
            if len(live):
                sl = s.take(live)
                wi = sl.to_world(smp.wi[live])
                inc = self.trace(self.spawn(sl, wi), wi)
                den = smp.pdf[live]
                if self.lights:
                    den = den + self.lights.pdf_world(sl.position, wi)
                out[idx[live]] += smp.value[live] * inc.value / den
            if self.lights:
                wl = self.lights.sample_world(s.position, u_l[idx])
                wl_loc = s.to_local(wl)
                ok = wl_loc[:, 2] > 0
                live = np.nonzero(ok)[0]
                if len(live):
                    sl = s.take(live)
                    inc = self.trace(self.spawn(sl, wl[live]), wl[live])
                    pl = self.lights.pdf_world(sl.position, wl[live])
                    f = _b.eval(m.take(live) if _has_arrays(m) else m, wl_loc[live], wo[live])
                    pb = _b.pdf_forward(m.take(live) if _has_arrays(m) else m, wo[live], wl_loc[live])
                    den = pb + pl
                    out[idx[live]] += np.where(den > 0, f * inc.value / np.where(den > 0, den, 1.0), 0.0)
        return out

    # -- differential radiance -----------------------------------------

    def _pair(self, obj, m):
        kind = self.cfg.kind
        if kind not in DECOMPOSED:
            return None
        if obj not in self._pairs or _has_arrays(m):
            pair = build(m, self.param, DECOMPOSED[kind])
            if _has_arrays(m):
                return pair
            self._pairs[obj] = pair
        return self._pairs[obj]

    def grad_incoming(self, sp: SurfacePoint, wi_world, d: int) -> np.ndarray:
        inc = self.trace(self.spawn(sp, wi_world), wi_world)
        out = np.zeros(len(sp))
        if inc.surf is not None:
            out[inc.surf_idx] = self.grad(inc.surf, -wi_world[inc.surf_idx], d)
        return out

    def grad(self, sp: SurfacePoint, wo_world, d: int, texel_out=None) -> np.ndarray:
        """Differential reflected radiance with ``d`` bounces left (d >= 1)."""
        n = len(sp)
        out = np.zeros(n)
        for obj, idx, m in self.groups(sp):
            s = sp.take(idx)
            wo = s.to_local(wo_world[idx])
            if obj == self.target_obj:
                out[idx] = self._grad_target(obj, s, wo, m, d)
            elif d > 1:
                u = self.rng.uniform(len(idx), 2)
                smp = _b.sample_forward(m, wo, u)
                w = np.where(smp.valid, smp.value / np.where(smp.valid, smp.pdf, 1.0), 0.0)
                live = np.nonzero(w != 0.0)[0]
                if len(live):
                    sl = s.take(live)
                    g = self.grad_incoming(sl, sl.to_world(smp.wi[live]), d - 1)
                    out[idx[live]] = w[live] * g
        return out

    def _grad_target(self, obj, s: SurfacePoint, wo, m: BrdfModel, d: int) -> np.ndarray:
        cfg = self.cfg
        pair = self._pair(obj, m)
        field = _SceneRadiance(self, s, d - 1, self.lights if cfg.mis_with_light else None)
        est = estimate(cfg.kind, m, self.param, wo, field, self.rng, cfg.mis_with_light,
                       cfg.mis_between_lobes, pair=pair)
        val = est.value
        if d <= 1:
            return val
        c = carrier_index(cfg.kind, pair)
        if c is None:
            u = self.rng.uniform(len(s), 2)
            smp = _b.sample_forward(m, wo, u)
            wi_l, pdf, valid = smp.wi, smp.pdf, smp.valid
            inc_surf = None
        else:
            wi_l, inc_surf = field.calls[c]
            if pair is not None:
                pdf = pair.lobes[c].pdf_wi(wi_l, wo)
            else:
                pdf = _b.pdf_forward(m, wo, wi_l)
            valid = (wi_l[:, 2] > 0) & (pdf > 0)
        f = _b.eval(m, wi_l, wo)
        w = np.where(valid, f / np.where(valid, pdf, 1.0), 0.0)
        if inc_surf is None:
            live = np.nonzero(w != 0.0)[0]
            g = np.zeros(len(s))
            if len(live):
                sl = s.take(live)
                g[live] = self.grad_incoming(sl, sl.to_world(wi_l[live]), d - 1)
        else:
            g = np.zeros(len(s))
            rays_idx, surf = inc_surf
            if surf is not None and len(rays_idx):
                wi_w = s.take(rays_idx).to_world(wi_l[rays_idx])
                g[rays_idx] = self.grad(surf, -wi_w, d - 1)
        return val + w * g


def _has_arrays(m: BrdfModel) -> bool:
    return any(np.ndim(v) for v in m.params.values())


class _SceneRadiance:
    """Radiance field seen from a batch of shading points, in their local frames.

    Each :meth:`radiance` call is recorded with the surfaces it hit so the
    differential path can continue along one of the estimator's samples.
    """

    def __init__(self, tracer: _Tracer, sp: SurfacePoint, k: int, lights=None):
        self.tracer = tracer
        self.sp = sp
        self.k = k
        self.lights = lights
        self.calls = []

    def radiance(self, wi):
        wi = np.asarray(wi, float)
        n = len(self.sp)
        out = np.zeros(n)
        up = np.nonzero(wi[:, 2] > 0.0)[0]
        hits = (np.zeros(0, np.int64), None)
        if len(up):
            sl = self.sp.take(up)
            inc = self.tracer.incoming(sl, sl.to_world(wi[up]), self.k)
            out[up] = inc.value
            hits = (up[inc.surf_idx], inc.surf)
        self.calls.append((wi, hits))
        return out

    def sample(self, u):
        d = self.lights.sample_world(self.sp.position, np.asarray(u, float))
        loc = self.sp.to_local(d)
        return loc, self.pdf(loc)

    def pdf(self, wi):
        return self.lights.pdf_world(self.sp.position, self.sp.to_world(np.asarray(wi, float)))


# ---------------------------------------------------------------------------
# image loops


@dataclass
class SampleBatch:
    """Per camera sample: pixel index, value and (for textured targets) texel."""

    pixel: np.ndarray
    value: np.ndarray
    texel: np.ndarray
    rays: int


def _tiles(scene: Scene, tile: int):
    w, h = scene.width, scene.height
    out = []
    for ty in range(0, h, tile):
        for tx in range(0, w, tile):
            ys, xs = np.mgrid[ty:min(ty + tile, h), tx:min(tx + tile, w)]
            out.append((ys.ravel(), xs.ravel()))
    return out


def _primary(scene, rng, ys, xs, spp):
    px = np.repeat(xs, spp).astype(float)
    py = np.repeat(ys, spp).astype(float)
    jit = rng.uniform(len(px), 2)
    o, d = scene.camera.generate_rays(px, py, jit)
    pix = np.repeat(ys * scene.width + xs, spp)
    return o, d, pix


def _render_tile(scene, mode, ys, xs, spp, stream, target_obj, param, cfg, depth):
    tr = _Tracer(scene, stream, target_obj, param, cfg)
    o, d, pix = _primary(scene, stream, ys, xs, spp)
    first = tr.trace(o, d)
    value = np.zeros(len(o))
    texel = np.full(len(o), -1, np.int64)
    sp = first.surf
    if mode == "radiance":
        value += first.value
        if sp is not None:
            if depth == 1 and scene.quad_lights:
                value[first.surf_idx] += tr.reflected_direct_mis(sp, -d[first.surf_idx])
            else:
                value[first.surf_idx] += tr.reflected(sp, -d[first.surf_idx], depth)
    elif sp is not None:
        value[first.surf_idx] = tr.grad(sp, -d[first.surf_idx], depth)
        tex = scene.objects[target_obj].material.textures.get(param)
        if tex is not None:
            on = sp.obj == target_obj
            texel[first.surf_idx[on]] = tex.texel_index(sp.uv[on])
    return SampleBatch(pix, value, texel, tr.rays)


def render_samples(scene: Scene, mode: str, spp: int, seed: int, run: int = 0,
                   target: Optional[str] = None, kind="BrdfSampling", max_depth: int = 1,
                   mis_with_light: bool = False, mis_between_lobes: bool = False,
                   threads: int = 1, tile: int = DEFAULT_TILE) -> SampleBatch:
    """Render every camera sample.  ``mode`` is ``"radiance"`` or ``"gradient"``."""
    if spp < 1:
        raise ConfigError("spp must be at least 1")
    if not 1 <= max_depth <= MAX_DEPTH:
        raise ConfigError(f"max_depth must lie in [1, {MAX_DEPTH}]")
    target_obj, param, cfg = -1, "", None
    if mode == "gradient":
        if target is None:
            raise ConfigError("gradient rendering needs a target")
        target_obj, param = scene.resolve_target(target)
        cfg = EstimatorConfig(kind, mis_with_light, mis_between_lobes)
        if max_depth > 1 and mis_with_light:
            raise ConfigError("light MIS is only available for direct lighting")
        if mis_with_light and not scene.quad_lights:
            raise ConfigError("light MIS needs at least one quad light in the scene")
    elif mode != "radiance":
        raise ConfigError(f"unknown render mode {mode!r}")
    tiles = _tiles(scene, tile)

    def job(i):
        ys, xs = tiles[i]
        stream = RandomStream.from_keys(seed, run, i, 0 if mode == "radiance" else 1)
        return _render_tile(scene, mode, ys, xs, spp, stream, target_obj, param, cfg, max_depth)

    if threads > 1:
        with cf.ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(job, range(len(tiles))))
    else:
        parts = [job(i) for i in range(len(tiles))]
    return SampleBatch(np.concatenate([p.pixel for p in parts]),
                       np.concatenate([p.value for p in parts]),
                       np.concatenate([p.texel for p in parts]),
                       sum(p.rays for p in parts))


def _to_image(scene: Scene, batch: SampleBatch, spp: int) -> np.ndarray:
    n = scene.width * scene.height
    img = np.bincount(batch.pixel, weights=batch.value, minlength=n) / spp
    return img.reshape(scene.height, scene.width)


def render_radiance(scene: Scene, spp: int = 4, seed: int = 0, run: int = 0, max_depth: int = 1,
                    threads: int = 1, tile: int = DEFAULT_TILE) -> np.ndarray:
    """Forward render; direct lighting combines BRDF and light sampling."""
    b = render_samples(scene, "radiance", spp, seed, run, max_depth=max_depth, threads=threads,
                       tile=tile)
    return _to_image(scene, b, spp)


def _gradient_image(scene, target, batch, spp):
    img = _to_image(scene, batch, spp)
    n_cam = scene.width * scene.height * spp
    return GradientImage(scene.width, scene.height, {target: img}, batch.rays / n_cam)


def render_gradient_direct(scene: Scene, target: str, kind="BrdfSampling", spp: int = 9,
                           seed: int = 0, run: int = 0, mis_with_light: bool = False,
                           mis_between_lobes: bool = False, threads: int = 1,
                           tile: int = DEFAULT_TILE) -> GradientImage:
    """Per-pixel derivative of radiance under direct lighting."""
    b = render_samples(scene, "gradient", spp, seed, run, target, kind, 1, mis_with_light,
                       mis_between_lobes, threads, tile)
    return _gradient_image(scene, target, b, spp)


def render_gradient_gi(scene: Scene, target: str, kind="BrdfSampling", spp: int = 9,
                       max_depth: int = 2, seed: int = 0, run: int = 0,
                       mis_between_lobes: bool = False, threads: int = 1,
                       tile: int = DEFAULT_TILE) -> GradientImage:
    """Per-pixel derivative with up to ``max_depth`` bounces."""
    if max_depth > MAX_DEPTH:
        raise ConfigError(f"max_depth {max_depth} exceeds the budget guard ({MAX_DEPTH})")
    b = render_samples(scene, "gradient", spp, seed, run, target, kind, max_depth, False,
                       mis_between_lobes, threads, tile)
    return _gradient_image(scene, target, b, spp)


# ---------------------------------------------------------------------------
# variance benchmark


@dataclass
class VarianceReport:
    kinds: List[str]
    variance: Dict[str, np.ndarray]
    mean: Dict[str, np.ndarray]
    scene_mean_variance: Dict[str, float]
    ratio_vs_baseline: Dict[str, float]
    rays_per_pixel: Dict[str, float]
    spp: int
    n_runs: int

    def rows(self):
        return [(k, self.scene_mean_variance[k], self.ratio_vs_baseline[k], self.rays_per_pixel[k])
                for k in self.kinds]

    def write_csv(self, path) -> None:
        import csv
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["kind", "scene_mean_variance", "ratio_vs_baseline", "rays_per_pixel"])
            for k, v, r, rays in self.rows():
                wr.writerow([k, repr(float(v)), repr(float(r)), repr(float(rays))])


def variance_benchmark(scene: Scene, target: str, kinds: Sequence, spp: int = 9, n_runs: int = 50,
                       seed: int = 0, max_depth: int = 1, mis_with_light: bool = False,
                       threads: int = 1, tile: int = DEFAULT_TILE) -> VarianceReport:
    """Per-pixel variance over independent runs for each estimator kind.

    ``ratio_vs_baseline`` is the first kind's scene-mean variance divided by
    each kind's, so values above one mean a reduction.
    """
    kinds = [as_kind(k) for k in kinds]
    if not kinds:
        raise ConfigError("no estimator kinds given")
    if n_runs < 2:
        raise ConfigError("variance needs at least two runs")
    budgets = {k: declared_rays(scene, target, k, mis_with_light, max_depth) for k in kinds}
    if len(set(budgets.values())) != 1:
        table = ", ".join(f"{k.value}={v}" for k, v in budgets.items())
        raise ConfigError(f"ray budgets differ between kinds ({table})")
    var, mean, smv, rays = {}, {}, {}, {}
    for k in kinds:
        imgs = []
        total_rays = 0.0
        for r in range(n_runs):
            b = render_samples(scene, "gradient", spp, seed, r, target, k, max_depth,
                               mis_with_light, False, threads, tile)
            imgs.append(_to_image(scene, b, spp))
            total_rays += b.rays
        stack = np.stack(imgs)
        var[k.value] = stack.var(axis=0, ddof=1)
        mean[k.value] = stack.mean(axis=0)
        smv[k.value] = float(var[k.value].mean())
        rays[k.value] = total_rays / (n_runs * scene.width * scene.height)
    base = smv[kinds[0].value]
    ratio = {k: (base / v if v > 0 else (1.0 if base == 0 else np.inf)) for k, v in smv.items()}
    return VarianceReport([k.value for k in kinds], var, mean, smv, ratio, rays, spp, n_runs)
