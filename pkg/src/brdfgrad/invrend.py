"""Texture recovery by stochastic gradient descent on rendered images.

The objective is the mean squared pixel error summed over lighting
conditions.  Its texel gradient chains the residual with per-sample
radiance derivatives; the forward render and the gradient render use
independent streams so their product is an unbiased gradient estimate.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .brdf import ConfigError
from .render.integrators import render_radiance, render_samples
from .render.scene import ParamTexture, Scene


class OptimizationDiverged(RuntimeError):
    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


def image_loss(rendered, target) -> float:
    """Mean squared pixel difference."""
    r = np.asarray(rendered, float)
    t = np.asarray(target, float)
    if r.shape != t.shape:
        raise ConfigError(f"image shapes differ: {r.shape} vs {t.shape}")
    return float(np.mean((r - t) ** 2))


@dataclass
class AdamState:
    step_size: float = 0.02
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    m: Optional[np.ndarray] = None
    v: Optional[np.ndarray] = None
    t: int = 0


def adam_step(texture: ParamTexture, grad, state: AdamState) -> ParamTexture:
    """Bias-corrected ADAM update in place, then clamp to the texture range."""
    g = np.asarray(grad, float)
    if g.size != texture.values.size:
        raise ConfigError(f"gradient shape {g.shape} does not match the texture "
                          f"{texture.values.shape}")
    g = g.reshape(texture.values.shape)
    if state.m is None:
        state.m = np.zeros_like(texture.values)
        state.v = np.zeros_like(texture.values)
    if state.m.shape != g.shape:
        raise ConfigError(f"gradient shape {g.shape} does not match the moments {state.m.shape}")
    state.t += 1
    state.m = state.beta1 * state.m + (1 - state.beta1) * g
    state.v = state.beta2 * state.v + (1 - state.beta2) * g * g
    mh = state.m / (1 - state.beta1 ** state.t)
    vh = state.v / (1 - state.beta2 ** state.t)
    texture.values -= state.step_size * mh / (np.sqrt(vh) + state.epsilon)
    texture.clamp()
    return texture


@dataclass(frozen=True)
class TextureBinding:
    """Texture ``texture`` drives parameter ``param`` of object ``obj``."""

    obj: str
    param: str
    texture: ParamTexture

    @property
    def target(self) -> str:
        return f"{self.obj}.{self.param}"


def bind(scene: Scene, bindings: Sequence[TextureBinding]) -> Scene:
    out = scene
    for b in bindings:
        idx, param = scene.resolve_target(b.target)
        out = out.with_texture(idx, param, b.texture)
    return out


def binding_from_scene(scene: Scene, target: str) -> TextureBinding:
    """Wrap the texture already attached to ``target`` in a scene."""
    idx, param = scene.resolve_target(target)
    tex = scene.objects[idx].material.textures.get(param)
    if tex is None:
        raise ConfigError(f"{target}: no texture bound")
    return TextureBinding(scene.objects[idx].name, param, tex)


def backprop_texels(scene: Scene, binding: TextureBinding, target_image, kind="BrdfSampling",
                    spp: int = 4, seed: int = 0, run: int = 0, rendered=None, threads: int = 1,
                    mis_with_light: bool = False):
    """Stochastic ``d loss / d texel`` for one lighting condition.

    ``rendered`` defaults to an independent forward render at ``spp``.
    Returns ``(gradient (h, w), loss)``.
    """
    tex = binding.texture
    idx, param = scene.resolve_target(binding.target)
    if scene.objects[idx].material.textures.get(param) is not tex:
        raise ConfigError(f"{binding.target}: texture is not bound in this scene")
    if rendered is None:
        rendered = render_radiance(scene, spp, seed, run, threads=threads)
    target_image = np.asarray(target_image, float)
    loss = image_loss(rendered, target_image)
    b = render_samples(scene, "gradient", spp, seed, run, binding.target, kind,
                       mis_with_light=mis_with_light, threads=threads)
    resid = 2.0 * (rendered - target_image).ravel() / rendered.size
    on = b.texel >= 0
    w = resid[b.pixel[on]] * b.value[on] / spp
    grad = np.bincount(b.texel[on], weights=w, minlength=tex.size)
    return grad.reshape(tex.height, tex.width), loss


@dataclass
class OptimizeResult:
    textures: Dict[str, ParamTexture]
    loss_trace: List[float] = field(default_factory=list)
    l1_trace: Dict[str, List[float]] = field(default_factory=dict)

    def write_csv(self, path) -> None:
        names = list(self.l1_trace)
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["iteration", "loss"] + [f"l1_{n}" for n in names])
            # L1 has one more entry than the loss: the state after the last update
            n_rows = max([len(self.loss_trace)] + [len(v) for v in self.l1_trace.values()])
            for i in range(n_rows):
                loss = repr(self.loss_trace[i]) if i < len(self.loss_trace) else ""
                wr.writerow([i, loss] + [repr(self.l1_trace[n][i]) for n in names])


def texture_l1(tex: ParamTexture, truth) -> float:
    return float(np.mean(np.abs(tex.values - np.asarray(truth, float).reshape(tex.values.shape))))


def optimize(scenes: Sequence[Scene], targets: Sequence, bindings: Sequence[TextureBinding],
             kind="BrdfSampling", iterations: int = 100, seed: int = 0, spp: int = 4,
             step_size: float = 0.02, ground_truth: Optional[Dict[str, np.ndarray]] = None,
             threads: int = 1, mis_with_light: bool = False) -> OptimizeResult:
    """Gradient descent over all bound textures.

    ``scenes[i]`` is rendered against ``targets[i]`` (one entry per lighting
    condition).  The L1 trace is recorded before every update and once after
    the last one.
    """
    if not scenes or len(scenes) != len(targets):
        raise ConfigError("need one target image per lighting condition")
    bound = [bind(s, bindings) for s in scenes]
    states = {b.target: AdamState(step_size=step_size) for b in bindings}
    res = OptimizeResult({b.target: b.texture for b in bindings})
    for b in bindings:
        res.l1_trace[b.target] = []

    def record_l1():
        if ground_truth:
            for b in bindings:
                if b.target in ground_truth:
                    res.l1_trace[b.target].append(texture_l1(b.texture, ground_truth[b.target]))

    for it in range(iterations):
        record_l1()
        total = 0.0
        grads = {b.target: np.zeros((b.texture.height, b.texture.width)) for b in bindings}
        for ci, (sc, tgt) in enumerate(zip(bound, targets)):
            run = it * len(bound) + ci
            img = render_radiance(sc, spp, seed, run, threads=threads)
            for b in bindings:
                g, loss = backprop_texels(sc, b, tgt, kind, spp, seed, run, rendered=img,
                                          threads=threads, mis_with_light=mis_with_light)
                grads[b.target] += g
            total += loss
        res.loss_trace.append(total)
        if not np.isfinite(total):
            raise OptimizationDiverged(f"non-finite loss at iteration {it}", res)
        for b in bindings:
            adam_step(b.texture, grads[b.target], states[b.target])
    record_l1()
    if ground_truth:
        for k in list(res.l1_trace):
            if not res.l1_trace[k]:
                del res.l1_trace[k]
    return res


def setup(name: str, res: int = 32, init: Optional[float] = None, seed: int = 0):
    """Build a named recovery problem.

    ``"logo"``: one HK quad whose ``g`` texture holds a logo, lit by two
    panels; the start is a constant ``init`` (default -0.3).  ``"aniso"``:
    an AnisoBeckmann quad seen under two single-light conditions; the start
    is a random draw per texel unless ``init`` is given.  Targets are
    rendered at 256 spp with a fixed seed.  Returns ``(scenes, targets,
    bindings, ground_truth)``.
    """
    from .render import library
    from .render.scene import scene_from_dict
    if name == "logo":
        doc, gt = library.hk_logo(res)
        targets = [render_radiance(scene_from_dict(doc), 256, 999, 0)]
        d0, _ = library.hk_logo(res, init_g=-0.3 if init is None else init)
        scenes = [scene_from_dict(d0)]
        binds = [binding_from_scene(scenes[0], "panel.g")]
        return scenes, targets, binds, {"panel.g": gt}
    if name == "aniso":
        docs, (ax, ay) = library.aniso_two_light(res)
        targets = [render_radiance(scene_from_dict(d), 256, 999, i) for i, d in enumerate(docs)]
        start = (library.aniso_random_init(res, seed) if init is None
                 else (np.full_like(ax, init), np.full_like(ay, init)))
        d0, _ = library.aniso_two_light(res, init=start)
        scenes = [scene_from_dict(d) for d in d0]
        binds = [binding_from_scene(scenes[0], "panel.alpha_x"),
                 binding_from_scene(scenes[0], "panel.alpha_y")]
        return scenes, targets, binds, {"panel.alpha_x": ax, "panel.alpha_y": ay}
    raise ConfigError(f"unknown inverse-rendering setup {name!r} (logo, aniso)")


__all__ = ["setup", "image_loss", "AdamState", "adam_step", "TextureBinding", "bind", "binding_from_scene",
           "backprop_texels", "OptimizeResult", "optimize", "texture_l1", "OptimizationDiverged"]
