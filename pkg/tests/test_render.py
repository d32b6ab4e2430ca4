import json

import numpy as np
import pytest

from brdfgrad import accel
from brdfgrad.render import (GradientImage, ImageError, MAX_DEPTH, SceneError, declared_rays,
                             load_scene, read_pfm, render_gradient_direct, render_gradient_gi,
                             render_radiance, save_scene, scene_from_dict, variance_benchmark,
                             write_image, write_pfm)
from brdfgrad.render.library import (builtin_scene, cornell_mixture, furnace,
                                     furnace_derivative, ggx_sphere_env)
from brdfgrad.brdf import ConfigError


def test_pfm_header_and_round_trip(tmp_path):
    a = np.random.default_rng(0).normal(size=(64, 64))
    p = tmp_path / "a.pfm"
    write_pfm(a, p)
    raw = p.read_bytes()
    assert raw.startswith(b"Pf\n64 64\n-1.0\n")
    assert len(raw) == len(b"Pf\n64 64\n-1.0\n") + 64 * 64 * 4
    assert np.array_equal(read_pfm(p), a.astype(np.float32).astype(float))


def test_pfm_row_order(tmp_path):
    a = np.arange(6, dtype=float).reshape(2, 3)
    p = tmp_path / "r.pfm"
    write_pfm(a, p)
    first_row_on_disk = np.frombuffer(p.read_bytes()[-24:-12], "<f4")
    assert np.array_equal(first_row_on_disk, a[1])
    assert np.array_equal(read_pfm(p), a)


def test_image_writers_reject_bad_input(tmp_path):
    with pytest.raises(ImageError):
        write_pfm(np.array([[np.nan]]), tmp_path / "n.pfm")
    with pytest.raises(ImageError):
        write_image(np.zeros((2, 2)), tmp_path / "x.png")
    with pytest.raises(ImageError):
        GradientImage(2, 2, {"a.b": np.zeros((3, 2))})
    (tmp_path / "bad.pfm").write_bytes(b"P6\n1 1\n255\n")
    with pytest.raises(ImageError):
        read_pfm(tmp_path / "bad.pfm")


def test_image_csv(tmp_path):
    p = tmp_path / "g.csv"
    write_image(np.array([[1.0, 2.0]]), p)
    assert p.read_text().splitlines() == ["x,y,value", "0,0,1.0", "1,0,2.0"]


def test_scene_round_trip(tmp_path):
    sc = builtin_scene("cornell_mixture", res=16)
    p = tmp_path / "s.json"
    save_scene(sc, p)
    again = load_scene(p)
    assert [o.name for o in again.objects] == [o.name for o in sc.objects]
    assert np.array_equal(render_radiance(again, 1, seed=3), render_radiance(sc, 1, seed=3))


def test_unknown_kind_names_the_field():
    doc = ggx_sphere_env(8)
    doc["objects"][0]["material"]["kind"] = "Phong"
    with pytest.raises(SceneError, match=r"objects\[0\]\.material\.kind"):
        scene_from_dict(doc)


@pytest.mark.parametrize("mutate,field", [
    (lambda d: d.pop("camera"), "camera"),
    (lambda d: d.update(extra=1), "extra"),
    (lambda d: d["objects"][0].update(radius=-1), r"objects\[0\]\.radius"),
    (lambda d: d["lights"].append({"type": "spot"}), r"lights\[1\]\.type"),
    (lambda d: d["objects"][0]["material"]["params"].update(alpha=-0.1),
     r"objects\[0\]\.material\.params"),
])
def test_scene_errors(mutate, field):
    doc = ggx_sphere_env(8)
    mutate(doc)
    with pytest.raises(SceneError, match=field):
        scene_from_dict(doc)


def test_shipped_scene_files_load():
    from pathlib import Path
    import brdfgrad
    d = Path(brdfgrad.__file__).parent / "scenes"
    names = sorted(p.stem for p in d.glob("*.json"))
    assert "cornell_mixture" in names and "furnace" in names
    for n in names:
        json.loads((d / f"{n}.json").read_text())
        load_scene(d / f"{n}.json")


def test_bad_target():
    sc = builtin_scene("ggx_sphere_env", res=8)
    with pytest.raises(SceneError, match="no object named"):
        render_gradient_direct(sc, "teapot.alpha", spp=1)
    with pytest.raises(SceneError):
        render_gradient_direct(sc, "ball.kappa", spp=1)


def test_occluded_target_has_zero_gradient():
    doc = ggx_sphere_env(16)
    doc["objects"][0]["center"] = [0, 0, -3]
    doc["objects"].append({"name": "wall", "type": "quad", "corner": [-5, -5, 0],
                           "edge1": [10, 0, 0], "edge2": [0, 10, 0],
                           "material": {"kind": "Lambertian", "params": {"rho": 0.5}}})
    sc = scene_from_dict(doc)
    g = render_gradient_direct(sc, "ball.alpha", "brdf", spp=2)
    assert np.all(g.data == 0.0)


def test_depth_guard():
    sc = builtin_scene("furnace", res=4)
    with pytest.raises(ConfigError):
        render_gradient_gi(sc, "shell.rho", max_depth=MAX_DEPTH + 1, spp=1)
    with pytest.raises(ConfigError):
        render_gradient_gi(sc, "shell.rho", max_depth=0, spp=1)
    assert MAX_DEPTH == 16


@pytest.mark.parametrize("depth", [1, 2, 3])
def test_furnace(depth):
    rho, E = 0.5, 1.0
    sc = scene_from_dict(furnace(8, rho, E))
    rad = render_radiance(sc, 4, seed=1, max_depth=depth)
    assert np.allclose(rad, E * sum(rho ** k for k in range(depth + 1)), rtol=1e-2)
    g = render_gradient_gi(sc, "shell.rho", "brdf", spp=4, max_depth=depth, seed=1)
    assert np.allclose(g.data, furnace_derivative(rho, E, depth), rtol=1e-2)


def test_declared_rays():
    sc = scene_from_dict(cornell_mixture(8))
    assert declared_rays(sc, "short.w", "mix") == 2
    assert declared_rays(sc, "short.w", "mix", mis_with_light=True) == 3
    assert declared_rays(sc, "short.w", "brdf", max_depth=3) == 2


def test_thread_count_does_not_change_the_image():
    sc = builtin_scene("hk_two_light", res=24)
    a = render_gradient_direct(sc, "ball.g", "pos", spp=2, seed=5, threads=1).data
    b = render_gradient_direct(sc, "ball.g", "pos", spp=2, seed=5, threads=3).data
    assert np.array_equal(a, b)


@pytest.mark.skipif(not accel.compiled_available(), reason="compiled kernels not built")
def test_backends_agree():
    sc = builtin_scene("cornell_mixture", res=16)
    with accel.use_backend("python"):
        a = render_gradient_direct(sc, "short.w", "mix", spp=2, seed=2).data
    with accel.use_backend("compiled"):
        b = render_gradient_direct(sc, "short.w", "mix", spp=2, seed=2).data
    assert np.allclose(a, b, rtol=1e-6, atol=1e-9)


def test_variance_benchmark_budget_check():
    sc = builtin_scene("ggx_sphere_env", res=8)
    rep = variance_benchmark(sc, "ball.alpha", ["brdf", "pos"], spp=1, n_runs=3)
    assert rep.ratio_vs_baseline["BrdfSampling"] == 1.0
    assert set(rep.rays_per_pixel) == {"BrdfSampling", "Positivization"}
    with pytest.raises(ConfigError, match="ray budgets differ"):
        variance_benchmark(sc, "ball.alpha", ["brdf", "pos"], spp=1, n_runs=2, max_depth=2)
    with pytest.raises(ConfigError):
        variance_benchmark(sc, "ball.alpha", ["brdf"], n_runs=1)
