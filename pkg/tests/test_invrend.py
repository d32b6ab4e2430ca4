import csv

import numpy as np
import pytest
from hypothesis import given, strategies as st

from brdfgrad.brdf import ConfigError
from brdfgrad.invrend import (AdamState, OptimizeResult, adam_step, backprop_texels,
                              binding_from_scene, image_loss, optimize, texture_l1)
from brdfgrad.render import ParamTexture, render_gradient_direct, render_radiance, scene_from_dict
from brdfgrad.render.library import hk_logo


def logo_scene(res=8, g=-0.3):
    doc, gt = hk_logo(res, init_g=g)
    return scene_from_dict(doc), gt


def test_image_loss():
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert image_loss(a, a) == 0.0
    assert image_loss(a, a + 2.0) == 4.0
    with pytest.raises(ConfigError):
        image_loss(a, np.zeros((3, 3)))


@given(st.floats(-5, 5).filter(lambda g: abs(g) > 1e-3), st.floats(1e-4, 0.1))
def test_adam_first_step_is_signed_step(g, step):
    tex = ParamTexture(1, 1, [0.0])
    adam_step(tex, np.array([[g]]), AdamState(step_size=step))
    assert tex.values[0, 0] == pytest.approx(-step * np.sign(g), rel=1e-8 / abs(g) + 1e-12)


def test_adam_clamps_and_checks_shape():
    tex = ParamTexture(2, 1, [0.49, -0.94], lo=-0.95, hi=0.5)
    st_ = AdamState(step_size=0.1)
    adam_step(tex, np.array([[-1.0, 1.0]]), st_)
    assert np.array_equal(tex.values, [[0.5, -0.95]])
    with pytest.raises(ConfigError):
        adam_step(tex, np.zeros((3, 3)), st_)


def test_zero_residual_gives_zero_gradient():
    sc, _ = logo_scene()
    b = binding_from_scene(sc, "panel.g")
    img = render_radiance(sc, 2, seed=1)
    g, loss = backprop_texels(sc, b, img, "pos", 2, seed=1, rendered=img)
    assert loss == 0.0
    assert np.all(g == 0.0)


def test_gradient_is_residual_weighted_image():
    sc, _ = logo_scene()
    b = binding_from_scene(sc, "panel.g")
    img = render_radiance(sc, 2, seed=1)
    target = img * 0.7
    g, _ = backprop_texels(sc, b, target, "pos", 4, seed=6, run=2, rendered=img)
    d = render_gradient_direct(sc, "panel.g", "pos", spp=4, seed=6, run=2).data
    expect = np.sum(2.0 * (img - target) / img.size * d)
    assert g.sum() == pytest.approx(expect, rel=1e-10)


def test_gradient_is_local():
    sc, _ = logo_scene()
    b = binding_from_scene(sc, "panel.g")
    img = render_radiance(sc, 2, seed=1)
    target = img.copy()
    target[3, 5] += 1.0
    g, _ = backprop_texels(sc, b, target, "brdf", 2, seed=2, rendered=img)
    mask = np.ones_like(g, bool)
    mask[3, 5] = False
    assert np.all(g[mask] == 0.0)
    assert g[3, 5] != 0.0


def test_texel_gradient_matches_finite_differences():
    truth = render_radiance(logo_scene(8, None)[0], 256, seed=9)
    h = 0.02
    lp = image_loss(render_radiance(logo_scene(8, -0.3 + h)[0], 1024, seed=1), truth)
    lm = image_loss(render_radiance(logo_scene(8, -0.3 - h)[0], 1024, seed=1), truth)
    fd = (lp - lm) / (2 * h)
    sc, _ = logo_scene(8, -0.3)
    b = binding_from_scene(sc, "panel.g")
    img = render_radiance(sc, 1024, seed=2)
    g, _ = backprop_texels(sc, b, truth, "pos", 1024, seed=3, rendered=img)
    assert g.sum() == pytest.approx(fd, rel=0.05)


def test_unbound_texture_rejected():
    sc, _ = logo_scene()
    b = binding_from_scene(sc, "panel.g")
    other, _ = logo_scene()
    with pytest.raises(ConfigError):
        backprop_texels(other, b, np.zeros((8, 8)), "pos", 1)


def test_optimize_reduces_error_and_writes_csv(tmp_path):
    doc, gt = hk_logo(8)
    truth = render_radiance(scene_from_dict(doc), 64, seed=99)
    sc, _ = logo_scene(8, -0.3)
    b = binding_from_scene(sc, "panel.g")
    res = optimize([sc], [truth], [b], "pos", iterations=15, seed=1, spp=4, step_size=0.05,
                   ground_truth={"panel.g": gt})
    l1 = res.l1_trace["panel.g"]
    assert len(l1) == 16 and len(res.loss_trace) == 15
    assert l1[-1] < l1[0]
    assert texture_l1(b.texture, gt) == l1[-1]
    p = tmp_path / "trace.csv"
    res.write_csv(p)
    rows = list(csv.reader(open(p)))
    assert rows[0] == ["iteration", "loss", "l1_panel.g"]
    assert len(rows) == 17 and rows[-1][1] == ""


def test_optimize_needs_matching_targets():
    sc, _ = logo_scene()
    with pytest.raises(ConfigError):
        optimize([sc], [], [binding_from_scene(sc, "panel.g")])


def test_empty_result_csv(tmp_path):
    OptimizeResult({}).write_csv(tmp_path / "e.csv")
    assert (tmp_path / "e.csv").read_text().strip() == "iteration,loss"
