import numpy as np
import pytest

from brdfgrad import accel, brdf
from brdfgrad.core import RandomStream
from brdfgrad.decomp import build
from brdfgrad.render.library import builtin_scene

needs_compiled = pytest.mark.skipif(not accel.compiled_available(),
                                    reason="compiled kernels not built")

WO = np.array([0.3, 0.2, np.sqrt(1 - 0.13)])
LOBES = [
    (brdf.model("AnisoGGX", alpha_x=0.2, alpha_y=0.5), "alpha_x", 0),
    (brdf.model("AshikhminShirley", nu=10.0, nv=100.0), "nv", 0),
    (brdf.model("ABC", B=10.0, C=2.0), "B", 1),
    (brdf.model("ABC", B=100.0, C=4.0), "C", 1),
    (brdf.model("HanrahanKrueger", g=-0.6), "g", 0),
    (brdf.model("HanrahanKrueger", g=0.3), "g", 1),
    (brdf.model("BurleyProfile", d=1.0), "d", 0),
    (brdf.model("BurleyProfile", d=2.0), "d", 1),
    (brdf.model("OrenNayar", sigma=0.5), "sigma", 0),
]


def test_backend_switch():
    before = accel.backend()
    with accel.use_backend("python"):
        assert accel.backend() == "python"
    assert accel.backend() == before
    with pytest.raises(ValueError):
        with accel.use_backend("fortran"):
            pass


@needs_compiled
@pytest.mark.parametrize("m,param,k", LOBES, ids=lambda v: getattr(v, "value", None) or str(v))
def test_lobe_samplers_agree(m, param, k):
    lobe = build(m, param).lobes[k]
    u = RandomStream(11).uniform(5000, 2)
    with accel.use_backend("python"):
        a = lobe.sample(u, WO)
    with accel.use_backend("compiled"):
        b = lobe.sample(u, WO)
    assert np.allclose(a, b, atol=1e-7)


@needs_compiled
def test_bvh_agrees_with_brute_force():
    acc = builtin_scene("cornell_mixture", res=8).accel
    rng = np.random.default_rng(3)
    o = np.tile([0.0, 1.0, 0.5], (4000, 1)) + rng.uniform(-0.2, 0.2, (4000, 3))
    d = rng.normal(size=(4000, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    with accel.use_backend("python"):
        a = acc.intersect(o, d)
    with accel.use_backend("compiled"):
        b = acc.intersect(o, d)
    assert np.array_equal(a.obj, b.obj)
    assert np.allclose(a.t, b.t, rtol=1e-12)
    # open-front room: some rays escape
    hit = np.isfinite(a.t)
    assert 0.5 < hit.mean() < 1.0
