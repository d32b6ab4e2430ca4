"""Scene description: camera, spheres and triangle geometry, lights, textures.

Scenes are plain JSON documents::

    {
      "camera": {"position": [0, 0, 4], "look_at": [0, 0, 0], "up": [0, 1, 0],
                 "fov": 35, "width": 64, "height": 64},
      "materials": {"shiny": {"kind": "IsoGGX", "params": {"alpha": 0.3}}},
      "objects": [
        {"name": "ball", "type": "sphere", "center": [0, 0, 0], "radius": 1,
         "material": "shiny"},
        {"type": "quad", "corner": [-2, -1, -2], "edge1": [4, 0, 0], "edge2": [0, 0, 4],
         "material": {"kind": "Lambertian", "params": {"rho": 0.5}}}
      ],
      "lights": [
        {"type": "quad", "corner": [-0.5, 3, -0.5], "edge1": [1, 0, 0], "edge2": [0, 0, 1],
         "radiance": 10},
        {"type": "environment", "radiance": 0.2}
      ]
    }

Object types are ``sphere``, ``quad``, ``box`` (``min``/``max``) and ``mesh``
(``file`` pointing at an OBJ, or inline ``vertices``/``faces``/``uvs``).
Objects may set ``emission`` (a Lambertian emitter; constant in the
parameters).  A material may carry ``textures``: a mapping from a parameter
name to ``{"width", "height", "values" | "file", "lo", "hi"}``, looked up by the
object's UVs with nearest-texel filtering.  Quad lights emit from the side
facing ``edge1 x edge2``; environment lights are a constant or an
equirectangular PFM (``file``, +y up).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from .. import brdf as _b
from ..brdf import BrdfModel, ConfigError, Kind
from ..dbrdf import SUPPORTED, as_target
from .image import read_pfm


class SceneError(ConfigError):
    """Schema violation; the message starts with the offending field path."""


# ---------------------------------------------------------------------------
# textures


@dataclass
class ParamTexture:
    """A scalar texture driving one material parameter, clamped to ``[lo, hi]``."""

    width: int
    height: int
    values: np.ndarray
    lo: float = -np.inf
    hi: float = np.inf

    def __post_init__(self):
        self.values = np.array(self.values, dtype=float).reshape(self.height, self.width)
        if self.lo > self.hi:
            raise SceneError(f"texture range [{self.lo}, {self.hi}] is empty")
        self.clamp()

    def clamp(self):
        np.clip(self.values, self.lo, self.hi, out=self.values)

    @property
    def size(self) -> int:
        return self.width * self.height

    def texel_index(self, uv) -> np.ndarray:
        uv = np.asarray(uv, float)
        ix = np.clip(np.floor(uv[..., 0] * self.width).astype(np.int64), 0, self.width - 1)
        iy = np.clip(np.floor(uv[..., 1] * self.height).astype(np.int64), 0, self.height - 1)
        return iy * self.width + ix

    def lookup(self, uv) -> np.ndarray:
        return self.values.reshape(-1)[self.texel_index(uv)]

    def copy(self) -> "ParamTexture":
        return ParamTexture(self.width, self.height, self.values.copy(), self.lo, self.hi)

    def to_json(self):
        return {"width": self.width, "height": self.height,
                "values": self.values.reshape(-1).tolist(),
                "lo": None if np.isinf(self.lo) else self.lo,
                "hi": None if np.isinf(self.hi) else self.hi}


@dataclass
class Material:
    model: BrdfModel
    textures: Dict[str, ParamTexture] = field(default_factory=dict)

    def model_at(self, uv=None, n: Optional[int] = None) -> BrdfModel:
        """The BRDF with textured parameters evaluated at ``uv``."""
        if not self.textures:
            return self.model
        vals = {name: tex.lookup(uv) for name, tex in self.textures.items()}
        return self.model.replace(**vals)


# ---------------------------------------------------------------------------
# geometry records


@dataclass(frozen=True)
class Camera:
    position: np.ndarray
    look_at: np.ndarray
    up: np.ndarray = field(default_factory=lambda: np.array([0.0, 1.0, 0.0]))
    fov: float = 40.0
    width: int = 64
    height: int = 64

    def basis(self):
        fwd = np.asarray(self.look_at, float) - np.asarray(self.position, float)
        fwd = fwd / np.linalg.norm(fwd)
        right = np.cross(fwd, np.asarray(self.up, float))
        if np.linalg.norm(right) < 1e-12:
            raise SceneError("camera.up: parallel to the viewing direction")
        right = right / np.linalg.norm(right)
        up = np.cross(right, fwd)
        return fwd, right, up

    def generate_rays(self, px, py, jitter):
        """Primary rays through pixel ``(px, py)`` offset by ``jitter`` in [0, 1)^2."""
        fwd, right, up = self.basis()
        tan_half = np.tan(np.deg2rad(self.fov) * 0.5)
        aspect = self.width / self.height
        sx = (2.0 * (px + jitter[..., 0]) / self.width - 1.0) * tan_half * aspect
        sy = (1.0 - 2.0 * (py + jitter[..., 1]) / self.height) * tan_half
        d = fwd + sx[..., None] * right + sy[..., None] * up
        d = d / np.linalg.norm(d, axis=-1, keepdims=True)
        o = np.broadcast_to(np.asarray(self.position, float), d.shape).copy()
        return o, d


@dataclass
class SceneObject:
    name: str
    material: Material
    shape: str
    emission: float = 0.0
    spec: dict = field(default_factory=dict)


@dataclass(frozen=True)
class QuadLight:
    corner: np.ndarray
    edge1: np.ndarray
    edge2: np.ndarray
    radiance: float

    @property
    def normal(self):
        n = np.cross(self.edge1, self.edge2)
        return n / np.linalg.norm(n)

    @property
    def area(self):
        return float(np.linalg.norm(np.cross(self.edge1, self.edge2)))


@dataclass(frozen=True)
class EnvironmentLight:
    radiance: float = 1.0
    image: Optional[np.ndarray] = None
    file: Optional[str] = None

    def lookup(self, d) -> np.ndarray:
        d = np.asarray(d, float)
        if self.image is None:
            return np.full(d.shape[:-1], self.radiance)
        img = self.image if self.image.ndim == 2 else self.image.mean(axis=-1)
        h, w = img.shape
        u = np.arctan2(d[..., 0], -d[..., 2]) / (2.0 * np.pi) + 0.5
        v = np.arccos(np.clip(d[..., 1], -1.0, 1.0)) / np.pi
        ix = np.clip((u * w).astype(np.int64), 0, w - 1)
        iy = np.clip((v * h).astype(np.int64), 0, h - 1)
        return self.radiance * img[iy, ix]


# ---------------------------------------------------------------------------
# the scene


@dataclass
class Scene:
    camera: Camera
    objects: List[SceneObject]
    quad_lights: List[QuadLight] = field(default_factory=list)
    environment: Optional[EnvironmentLight] = None
    # flattened geometry, filled by :meth:`compile`
    spheres: Optional[np.ndarray] = None       # (S, 4): center, radius
    sphere_obj: Optional[np.ndarray] = None    # (S,)
    triangles: Optional[np.ndarray] = None     # (T, 3, 3)
    tri_uv: Optional[np.ndarray] = None        # (T, 3, 2)
    tri_obj: Optional[np.ndarray] = None       # (T,)
    tri_tangent: Optional[np.ndarray] = None   # (T, 3)
    source: Optional[dict] = None

    def __post_init__(self):
        if not self.objects:
            raise SceneError("objects: scene has no geometry")
        names = [o.name for o in self.objects]
        if len(set(names)) != len(names):
            raise SceneError("objects: duplicate object names")
        self.compile()

    # -- geometry ---------------------------------------------------------

    def compile(self):
        spheres, sobj, tris, uvs, tobj, tans = [], [], [], [], [], []
        for i, ob in enumerate(self.objects):
            if ob.shape == "sphere":
                spheres.append([*ob.spec["center"], ob.spec["radius"]])
                sobj.append(i)
                continue
            t, uv = _triangulate(ob)
            tris.append(t)
            uvs.append(uv)
            tobj.append(np.full(len(t), i))
            tans.append(_triangle_tangents(t, uv))
        self.spheres = np.array(spheres, float).reshape(-1, 4)
        self.sphere_obj = np.array(sobj, np.int64)
        if tris:
            self.triangles = np.concatenate(tris)
            self.tri_uv = np.concatenate(uvs)
            self.tri_obj = np.concatenate(tobj).astype(np.int64)
            self.tri_tangent = np.concatenate(tans)
        else:
            self.triangles = np.zeros((0, 3, 3))
            self.tri_uv = np.zeros((0, 3, 2))
            self.tri_obj = np.zeros(0, np.int64)
            self.tri_tangent = np.zeros((0, 3))
        from .geometry import Accelerator
        self.accel = Accelerator(self)

    # -- lookup -----------------------------------------------------------

    def object_index(self, name: str) -> int:
        for i, ob in enumerate(self.objects):
            if ob.name == name:
                return i
        raise SceneError(f"target: no object named {name!r}")

    def resolve_target(self, target: str) -> Tuple[int, str]:
        """``"name.param"`` to ``(object index, canonical parameter name)``."""
        if not isinstance(target, str) or "." not in target:
            raise SceneError(f"target: expected 'object.param', got {target!r}")
        name, param = target.rsplit(".", 1)
        idx = self.object_index(name)
        m = self.objects[idx].material.model
        try:
            tgt = as_target(m, param)
        except ConfigError as exc:
            raise SceneError(f"target: {exc}") from None
        return idx, tgt.param_name

    @property
    def width(self):
        return self.camera.width

    @property
    def height(self):
        return self.camera.height

    def with_texture(self, obj: int, param: str, tex: ParamTexture) -> "Scene":
        """A shallow copy whose object ``obj`` reads ``param`` from ``tex``."""
        objs = list(self.objects)
        ob = objs[obj]
        mat = Material(ob.material.model, {**ob.material.textures, param: tex})
        objs[obj] = SceneObject(ob.name, mat, ob.shape, ob.emission, ob.spec)
        out = Scene.__new__(Scene)
        out.__dict__.update(self.__dict__)
        out.objects = objs
        return out

    def with_camera(self, **changes) -> "Scene":
        cam = self.camera
        fields = dict(position=cam.position, look_at=cam.look_at, up=cam.up, fov=cam.fov,
                      width=cam.width, height=cam.height)
        fields.update(changes)
        out = Scene.__new__(Scene)
        out.__dict__.update(self.__dict__)
        out.camera = Camera(**fields)
        return out

    def with_lights(self, quad_lights=None, environment="keep") -> "Scene":
        out = Scene.__new__(Scene)
        out.__dict__.update(self.__dict__)
        if quad_lights is not None:
            out.quad_lights = list(quad_lights)
        if environment != "keep":
            out.environment = environment
        return out

    def to_json(self) -> dict:
        cam = self.camera
        mats = {}
        objs = []
        for ob in self.objects:
            d = {"name": ob.name, "type": ob.shape, **_jsonable(ob.spec),
                 "material": _material_json(ob.material)}
            if ob.emission:
                d["emission"] = ob.emission
            objs.append(d)
        lights = [{"type": "quad", "corner": list(map(float, q.corner)),
                   "edge1": list(map(float, q.edge1)), "edge2": list(map(float, q.edge2)),
                   "radiance": q.radiance} for q in self.quad_lights]
        if self.environment is not None:
            env = {"type": "environment", "radiance": self.environment.radiance}
            if self.environment.file:
                env["file"] = self.environment.file
            lights.append(env)
        return {"camera": {"position": list(map(float, cam.position)),
                           "look_at": list(map(float, cam.look_at)),
                           "up": list(map(float, cam.up)), "fov": cam.fov,
                           "width": cam.width, "height": cam.height},
                "materials": mats, "objects": objs, "lights": lights}


def _jsonable(spec):
    out = {}
    for k, v in spec.items():
        if isinstance(v, np.ndarray):
            v = v.tolist()
        out[k] = v
    return out


def _material_json(mat: Material) -> dict:
    m = mat.model
    d = {"kind": m.kind.value, "params": {k: float(v) for k, v in m.params.items()}}
    if m.lobes:
        d["lobes"] = [{"kind": lb.kind.value, "params": {k: float(v) for k, v in lb.params.items()}}
                      for lb in m.lobes]
    if mat.textures:
        d["textures"] = {k: t.to_json() for k, t in mat.textures.items()}
    return d


# ---------------------------------------------------------------------------
# triangulation


def _quad_tris(corner, e1, e2):
    c = np.asarray(corner, float)
    e1 = np.asarray(e1, float)
    e2 = np.asarray(e2, float)
    p00, p10, p11, p01 = c, c + e1, c + e1 + e2, c + e2
    tris = np.array([[p00, p10, p11], [p00, p11, p01]])
    uv = np.array([[[0, 0], [1, 0], [1, 1]], [[0, 0], [1, 1], [0, 1]]], float)
    return tris, uv


def _box_tris(lo, hi):
    lo = np.asarray(lo, float)
    hi = np.asarray(hi, float)
    dx, dy, dz = hi - lo
    X, Y, Z = np.array([dx, 0, 0]), np.array([0, dy, 0]), np.array([0, 0, dz])
    faces = [(lo, Z, Y), (lo + X, Y, Z), (lo, X, Z), (lo + Y, Z, X), (lo, Y, X), (lo + Z, X, Y)]
    ts, us = zip(*(_quad_tris(c, a, b) for c, a, b in faces))
    return np.concatenate(ts), np.concatenate(us)


def _triangulate(ob: SceneObject):
    s = ob.spec
    if ob.shape == "quad":
        return _quad_tris(s["corner"], s["edge1"], s["edge2"])
    if ob.shape == "box":
        return _box_tris(s["min"], s["max"])
    if ob.shape == "mesh":
        v = np.asarray(s["vertices"], float)
        f = np.asarray(s["faces"], np.int64)
        tris = v[f]
        if s.get("uvs") is not None:
            uv = np.asarray(s["uvs"], float)
            fuv = np.asarray(s.get("face_uvs", s["faces"]), np.int64)
            tuv = uv[fuv]
        else:
            tuv = np.zeros((len(f), 3, 2))
        return tris, tuv
    raise SceneError(f"objects: unknown object type {ob.shape!r}")


def _triangle_tangents(tris, uv):
    """``dp/du`` per triangle, or zeros when the UVs are degenerate."""
    e1 = tris[:, 1] - tris[:, 0]
    e2 = tris[:, 2] - tris[:, 0]
    du1 = uv[:, 1, 0] - uv[:, 0, 0]
    du2 = uv[:, 2, 0] - uv[:, 0, 0]
    dv1 = uv[:, 1, 1] - uv[:, 0, 1]
    dv2 = uv[:, 2, 1] - uv[:, 0, 1]
    det = du1 * dv2 - du2 * dv1
    ok = np.abs(det) > 1e-12
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    return (e1 * dv2[:, None] - e2 * dv1[:, None]) * inv[:, None]


def load_obj(path) -> dict:
    """Minimal OBJ reader: ``v``, ``vt`` and polygonal ``f`` (fan-triangulated)."""
    verts, uvs, faces, fuv = [], [], [], []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        try:
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif parts[0] == "vt":
                uvs.append([float(x) for x in parts[1:3]])
            elif parts[0] == "f":
                idx = [p.split("/") for p in parts[1:]]
                vi = [int(p[0]) for p in idx]
                ti = [int(p[1]) if len(p) > 1 and p[1] else 0 for p in idx]
                vi = [i - 1 if i > 0 else len(verts) + i for i in vi]
                ti = [i - 1 if i > 0 else len(uvs) + i for i in ti]
                for k in range(1, len(vi) - 1):
                    faces.append([vi[0], vi[k], vi[k + 1]])
                    fuv.append([ti[0], ti[k], ti[k + 1]])
        except (ValueError, IndexError):
            raise SceneError(f"{path}:{lineno}: malformed OBJ line") from None
    if not faces:
        raise SceneError(f"{path}: no faces")
    out = {"vertices": verts, "faces": faces}
    if uvs:
        out["uvs"] = uvs
        out["face_uvs"] = fuv
    return out


# ---------------------------------------------------------------------------
# JSON loading


def _vec(d, key, where, n=3):
    if key not in d:
        raise SceneError(f"{where}.{key}: missing")
    try:
        v = np.asarray(d[key], float)
    except (TypeError, ValueError):
        raise SceneError(f"{where}.{key}: not numeric") from None
    if v.shape != (n,) or not np.all(np.isfinite(v)):
        raise SceneError(f"{where}.{key}: expected {n} finite numbers")
    return v


def _num(d, key, where, default=None, lo=None):
    if key not in d:
        if default is None:
            raise SceneError(f"{where}.{key}: missing")
        return default
    try:
        v = float(d[key])
    except (TypeError, ValueError):
        raise SceneError(f"{where}.{key}: not a number") from None
    if not np.isfinite(v) or (lo is not None and v < lo):
        raise SceneError(f"{where}.{key}: invalid value {d[key]!r}")
    return v


def _parse_model(d, where) -> BrdfModel:
    if not isinstance(d, dict):
        raise SceneError(f"{where}: expected an object")
    kind = d.get("kind")
    try:
        k = Kind(kind)
    except ValueError:
        raise SceneError(f"{where}.kind: unknown material kind {kind!r}") from None
    if k is Kind.BurleyProfile:
        raise SceneError(f"{where}.kind: BurleyProfile is not a surface BRDF")
    lobes = ()
    if "lobes" in d:
        lobes = tuple(_parse_model(lb, f"{where}.lobes[{i}]") for i, lb in enumerate(d["lobes"]))
    try:
        return BrdfModel(k, dict(d.get("params", {})), lobes)
    except ConfigError as exc:
        raise SceneError(f"{where}.params: {exc}") from None


def _parse_texture(d, where, base: Path) -> ParamTexture:
    if "file" in d:
        vals = read_pfm(base / d["file"])
        if vals.ndim == 3:
            vals = vals.mean(axis=-1)
        h, w = vals.shape
    else:
        w = int(_num(d, "width", where))
        h = int(_num(d, "height", where))
        vals = np.asarray(d.get("values", []), float)
        if vals.size != w * h:
            raise SceneError(f"{where}.values: expected {w * h} entries, got {vals.size}")
    lo = d.get("lo")
    hi = d.get("hi")
    return ParamTexture(w, h, vals, -np.inf if lo is None else float(lo),
                        np.inf if hi is None else float(hi))


def _parse_material(d, where, library, base: Path) -> Material:
    if isinstance(d, str):
        if d not in library:
            raise SceneError(f"{where}: unknown material {d!r}")
        return library[d]
    model = _parse_model(d, where)
    textures = {}
    for name, td in dict(d.get("textures", {})).items():
        if name not in SUPPORTED.get(model.kind, ()) and name not in model.params:
            raise SceneError(f"{where}.textures.{name}: not a parameter of {model.kind.value}")
        textures[name] = _parse_texture(td, f"{where}.textures.{name}", base)
    return Material(model, textures)


def scene_from_dict(doc: dict, base=".") -> Scene:
    base = Path(base)
    if not isinstance(doc, dict):
        raise SceneError("scene: expected a JSON object")
    for key in doc:
        if key not in ("camera", "materials", "objects", "lights"):
            raise SceneError(f"{key}: unknown top-level field")
    cd = doc.get("camera")
    if not isinstance(cd, dict):
        raise SceneError("camera: missing")
    cam = Camera(_vec(cd, "position", "camera"), _vec(cd, "look_at", "camera"),
                 _vec(cd, "up", "camera") if "up" in cd else np.array([0.0, 1.0, 0.0]),
                 _num(cd, "fov", "camera", 40.0, lo=1e-3),
                 int(_num(cd, "width", "camera", 64, lo=1)),
                 int(_num(cd, "height", "camera", 64, lo=1)))
    cam.basis()
    library = {name: _parse_material(md, f"materials.{name}", {}, base)
               for name, md in dict(doc.get("materials", {})).items()}
    objects = []
    for i, od in enumerate(doc.get("objects", [])):
        where = f"objects[{i}]"
        if not isinstance(od, dict):
            raise SceneError(f"{where}: expected an object")
        shape = od.get("type")
        if "material" not in od:
            raise SceneError(f"{where}.material: missing")
        mat = _parse_material(od["material"], f"{where}.material", library, base)
        if shape == "sphere":
            spec = {"center": _vec(od, "center", where), "radius": _num(od, "radius", where, lo=1e-9)}
        elif shape == "quad":
            spec = {k: _vec(od, k, where) for k in ("corner", "edge1", "edge2")}
        elif shape == "box":
            spec = {"min": _vec(od, "min", where), "max": _vec(od, "max", where)}
            if np.any(spec["max"] <= spec["min"]):
                raise SceneError(f"{where}.max: must exceed min on every axis")
        elif shape == "mesh":
            if "file" in od:
                spec = load_obj(base / od["file"])
                spec["file"] = od["file"]
            else:
                spec = {k: od[k] for k in ("vertices", "faces", "uvs", "face_uvs") if k in od}
                if "vertices" not in spec or "faces" not in spec:
                    raise SceneError(f"{where}: mesh needs file or vertices/faces")
        else:
            raise SceneError(f"{where}.type: unknown object type {shape!r}")
        objects.append(SceneObject(od.get("name", f"obj{i}"), mat, shape,
                                   _num(od, "emission", where, 0.0, lo=0.0), spec))
    quads, env = [], None
    for i, ld in enumerate(doc.get("lights", [])):
        where = f"lights[{i}]"
        lt = ld.get("type")
        if lt == "quad":
            q = QuadLight(_vec(ld, "corner", where), _vec(ld, "edge1", where),
                          _vec(ld, "edge2", where), _num(ld, "radiance", where, lo=0.0))
            if q.area <= 0:
                raise SceneError(f"{where}: degenerate quad")
            quads.append(q)
        elif lt == "environment":
            if env is not None:
                raise SceneError(f"{where}: only one environment light is supported")
            img = read_pfm(base / ld["file"]) if "file" in ld else None
            env = EnvironmentLight(_num(ld, "radiance", where, 1.0, lo=0.0), img, ld.get("file"))
        else:
            raise SceneError(f"{where}.type: unknown light type {lt!r}")
    scene = Scene(cam, objects, quads, env)
    scene.source = doc
    return scene


def load_scene(path) -> Scene:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SceneError(f"{path}: invalid JSON ({exc})") from None
    return scene_from_dict(doc, path.parent)


def save_scene(scene: Scene, path) -> None:
    Path(path).write_text(json.dumps(scene.to_json(), indent=1))
