"""Procedural desk-scale scenes used by the benchmarks, tests and CLI.

Each builder returns a JSON-ready dict; :func:`builtin_scene` turns one into
a :class:`Scene`.  The lighting choices matter a great deal for variance
ratios, see the notes on each builder.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .scene import Scene, scene_from_dict


def _camera(position, look_at, fov, res):
    return {"position": list(map(float, position)), "look_at": list(map(float, look_at)),
            "fov": float(fov), "width": int(res), "height": int(res)}


def panel(center, target, size, radiance):
    """Square quad light centred at ``center`` emitting towards ``target``."""
    c = np.asarray(center, float)
    n = np.asarray(target, float) - c
    n /= np.linalg.norm(n)
    helper = np.array([0.0, 1.0, 0.0]) if abs(n[1]) < 0.9 else np.array([1.0, 0.0, 0.0])
    e1 = np.cross(n, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(n, e1)
    # quads emit along edge1 x edge2
    if np.dot(np.cross(e1, e2), n) < 0:
        e1, e2 = e2, e1
    corner = c - 0.5 * size * (e1 + e2)
    return {"type": "quad", "corner": corner.tolist(), "edge1": (size * e1).tolist(),
            "edge2": (size * e2).tolist(), "radiance": float(radiance)}


def _sphere(material, name="ball"):
    return {"name": name, "type": "sphere", "center": [0, 0, 0], "radius": 1, "material": material}


def _lam(rho):
    return {"kind": "Lambertian", "params": {"rho": rho}}


# Broad panel behind the camera: it covers the retro-reflection directions a
# back-scattering material sends light into.  A small overhead light adds a
# second, localized source.
KEY_WALL = {"type": "quad", "corner": [-8, -8, 5], "edge1": [0, 16, 0], "edge2": [16, 0, 0],
            "radiance": 1.0}
TOP_LIGHT = {"type": "quad", "corner": [-1.5, 2.5, -1.5], "edge1": [3, 0, 0], "edge2": [0, 0, 3],
             "radiance": 2.0}


def aniso_sphere(res=64, alpha_x=0.1, alpha_y=0.2):
    """AnisoBeckmann sphere under a constant environment."""
    mat = {"kind": "AnisoBeckmann", "params": {"alpha_x": alpha_x, "alpha_y": alpha_y}}
    return {"camera": _camera([0, 0, 4], [0, 0, 0], 35, res), "objects": [_sphere(mat)],
            "lights": [{"type": "environment", "radiance": 1.0}]}


def hk_two_light(res=64, g=-0.9):
    mat = {"kind": "HanrahanKrueger", "params": {"g": g}}
    return {"camera": _camera([0, 0, 4], [0, 0, 0], 35, res), "objects": [_sphere(mat)],
            "lights": [KEY_WALL, TOP_LIGHT]}


def mixture_two_light(res=64, w=0.5, alpha=0.05):
    mat = {"kind": "TwoLobeMixture", "params": {"w": w},
           "lobes": [_lam(0.8), {"kind": "IsoGGX", "params": {"alpha": alpha}}]}
    return {"camera": _camera([0, 0, 4], [0, 0, 0], 35, res), "objects": [_sphere(mat)],
            "lights": [KEY_WALL, TOP_LIGHT]}


def oren_nayar_grazing(res=64, sigma=0.5, elevation_deg=10.0):
    """Ground quad seen 80 degrees off its normal, constant environment."""
    el = np.deg2rad(elevation_deg)
    mat = {"kind": "OrenNayar", "params": {"sigma": sigma}}
    floor = {"name": "floor", "type": "quad", "corner": [-3, 0, 3], "edge1": [6, 0, 0],
             "edge2": [0, 0, -6], "material": mat}
    return {"camera": _camera([0, 4 * np.sin(el), 4 * np.cos(el)], [0, 0, 0], 20, res),
            "objects": [floor], "lights": [{"type": "environment", "radiance": 1.0}]}


def ggx_sphere_env(res=64, alpha=0.1):
    mat = {"kind": "IsoGGX", "params": {"alpha": alpha}}
    return {"camera": _camera([0, 0, 4], [0, 0, 0], 35, res), "objects": [_sphere(mat)],
            "lights": [{"type": "environment", "radiance": 1.0}]}


def cornell_mixture(res=64, w=0.5, alpha=0.1):
    """Open-front box room, two boxes, luminous ceiling panel; the short box
    carries a Lambertian + GGX mixture."""
    mix = {"kind": "TwoLobeMixture", "params": {"w": w},
           "lobes": [_lam(0.7), {"kind": "IsoGGX", "params": {"alpha": alpha}}]}

    def quad(name, corner, e1, e2, mat):
        return {"name": name, "type": "quad", "corner": corner, "edge1": e1, "edge2": e2,
                "material": mat}
    return {
        "camera": _camera([0, 1, 3.6], [0, 1, 0], 38, res),
        "objects": [
            quad("floor", [-1, 0, 1], [2, 0, 0], [0, 0, -2], _lam(0.7)),
            quad("ceiling", [-1, 2, -1], [2, 0, 0], [0, 0, 2], _lam(0.7)),
            quad("back", [-1, 0, -1], [2, 0, 0], [0, 2, 0], _lam(0.7)),
            quad("left", [-1, 0, 1], [0, 0, -2], [0, 2, 0], _lam(0.6)),
            quad("right", [1, 0, -1], [0, 0, 2], [0, 2, 0], _lam(0.6)),
            {"name": "tall", "type": "box", "min": [-0.7, 0, -0.6], "max": [-0.1, 1.2, 0.0],
             "material": _lam(0.7)},
            {"name": "short", "type": "box", "min": [0.1, 0, -0.1], "max": [0.7, 0.6, 0.5],
             "material": mix},
        ],
        "lights": [{"type": "quad", "corner": [-0.98, 1.98, -0.98], "edge1": [1.96, 0, 0],
                    "edge2": [0, 0, 1.96], "radiance": 2.0}],
    }


def furnace(res=16, rho=0.5, emission=1.0):
    """Camera inside a closed emissive Lambertian sphere: radiance after ``d``
    bounces is ``E (1 + rho + ... + rho^d)``."""
    shell = {"name": "shell", "type": "sphere", "center": [0, 0, 0], "radius": 1,
             "emission": emission, "material": _lam(rho)}
    return {"camera": _camera([0, 0, 0], [0, 0, -1], 60, res), "objects": [shell], "lights": []}


def furnace_derivative(rho, emission, depth):
    """Closed form of d/drho of ``E sum_{k<=d} rho^k``."""
    return emission * sum(k * rho ** (k - 1) for k in range(1, depth + 1))


# ---------------------------------------------------------------------------
# inverse-rendering setups


def _facing_quad_camera(res, half=1.0, fov=40.0):
    dist = half / np.tan(np.deg2rad(fov) / 2)
    return _camera([0, 0, dist], [0, 0, 0], fov, res)


def logo_mask(n=32):
    """A ring crossed by a diagonal bar, as a boolean ``(n, n)`` mask."""
    y, x = (np.mgrid[0:n, 0:n] + 0.5) / n
    r = np.hypot(x - 0.5, y - 0.5)
    ring = (r > 0.22) & (r < 0.36)
    bar = (np.abs((x - 0.5) - (y - 0.5)) < 0.07) & (r < 0.36)
    return ring | bar


def hk_logo(res=32, logo_g=-0.9, background_g=-0.3, init_g=None):
    """Quad filling the view; its HG ``g`` comes from a texture.  Returns the
    scene dict and the ground-truth texture values."""
    gt = np.where(logo_mask(res), logo_g, background_g)
    init = gt if init_g is None else np.full_like(gt, init_g)
    mat = {"kind": "HanrahanKrueger", "params": {"g": background_g},
           "textures": {"g": {"width": res, "height": res, "values": init.ravel().tolist(),
                              "lo": -0.95, "hi": 0.5}}}
    quad = {"name": "panel", "type": "quad", "corner": [-1, 1, 0], "edge1": [2, 0, 0],
            "edge2": [0, -2, 0], "material": mat}
    doc = {"camera": _facing_quad_camera(res), "objects": [quad], "lights": [KEY_WALL, TOP_LIGHT]}
    return doc, gt


def aniso_truth(res=32):
    y, x = (np.mgrid[0:res, 0:res] + 0.5) / res
    ax = 0.12 + 0.25 * x
    ay = 0.12 + 0.25 * (0.5 + 0.5 * np.sin(2 * np.pi * y))
    return ax, ay


def aniso_random_init(res=32, seed=0, lo=0.08, hi=0.45):
    """Independent uniform draws per texel for both roughness textures."""
    rng = np.random.default_rng(seed)
    return rng.uniform(lo, hi, (res, res)), rng.uniform(lo, hi, (res, res))


def _slope_light(sx, sy, distance, size, radiance):
    """Distant panel whose mirror half vector, seen from +z, has slopes ``(sx, sy)``."""
    h = np.array([sx, sy, 1.0]) / np.sqrt(1.0 + sx * sx + sy * sy)
    wi = 2.0 * h[2] * h - np.array([0.0, 0.0, 1.0])
    return panel(distance * wi, [0, 0, 0], size, radiance)


def aniso_two_light(res=32, init=None, slope=0.45, radiance=350.0):
    """Anisotropic quad under two lighting conditions (one light each).

    Camera and lights are far away, so every pixel sees nearly the same
    half vector: slope ``slope`` along the tangent for the first light and
    along the bitangent for the second.  Returns the two scene dicts and the
    ground-truth ``(alpha_x, alpha_y)``.
    """
    ax, ay = aniso_truth(res)
    ix, iy = (ax, ay) if init is None else init
    mat = {"kind": "AnisoBeckmann", "params": {"alpha_x": 0.3, "alpha_y": 0.3},
           "textures": {"alpha_x": {"width": res, "height": res, "values": ix.ravel().tolist(),
                                    "lo": 0.03, "hi": 1.0},
                        "alpha_y": {"width": res, "height": res, "values": iy.ravel().tolist(),
                                    "lo": 0.03, "hi": 1.0}}}
    quad = {"name": "panel", "type": "quad", "corner": [-1, 1, 0], "edge1": [2, 0, 0],
            "edge2": [0, -2, 0], "material": mat}
    dist = 20.0
    cam = _camera([0, 0, dist], [0, 0, 0], 2 * np.rad2deg(np.arctan(1.0 / dist)), res)
    lights = [[_slope_light(slope, 0.0, dist, 3.0, radiance)],
              [_slope_light(0.0, slope, dist, 3.0, radiance)]]
    return [{"camera": cam, "objects": [quad], "lights": L} for L in lights], (ax, ay)


BUILTIN = {
    "aniso_sphere": aniso_sphere,
    "hk_two_light": hk_two_light,
    "mixture_two_light": mixture_two_light,
    "oren_nayar_grazing": oren_nayar_grazing,
    "ggx_sphere_env": ggx_sphere_env,
    "cornell_mixture": cornell_mixture,
    "furnace": furnace,
}


def builtin_scene(name: str, **kwargs) -> Scene:
    try:
        fn = BUILTIN[name]
    except KeyError:
        raise KeyError(f"unknown built-in scene {name!r}; choose from {sorted(BUILTIN)}") from None
    return scene_from_dict(fn(**kwargs))


def write_builtin_scenes(directory) -> list:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    out = []
    for name, fn in BUILTIN.items():
        p = directory / f"{name}.json"
        p.write_text(json.dumps(fn(), indent=1))
        out.append(p)
    return out
