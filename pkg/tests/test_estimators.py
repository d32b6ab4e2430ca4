import numpy as np
import pytest
from hypothesis import given, strategies as st

from brdfgrad import brdf, dbrdf
from brdfgrad.brdf import ConfigError, Kind
from brdfgrad.core import QuadratureSpec, RandomStream, quadrature_integrate, spherical_to_dir
from brdfgrad.decomp import build
from brdfgrad.estimators import (ConstantIncident, EstimatorConfig, EstimatorKind, as_kind,
                                 estimate, estimate_decomposed, estimate_native,
                                 estimate_zeltner, gaussian_demo, mis_balance, mirror,
                                 supported_kinds)

WO = spherical_to_dir(0.6, 0.3)


def sky(wi):
    return 1.0 + 0.8 * wi[..., 0] + 0.5 * wi[..., 2] ** 2


def reference(m, param, L):
    spec = QuadratureSpec("hemisphere", (512, 256), graded=True)
    return quadrature_integrate(
        lambda wi: dbrdf.eval_derivative(m, param, wi, np.broadcast_to(WO, wi.shape)) * L(wi),
        spec)


def test_mis_balance():
    assert mis_balance([1.0, 3.0], 0) == 0.25
    assert mis_balance([0.0, 2.0, 2.0], 2) == 0.5
    with pytest.raises(ValueError):
        mis_balance([0.0, 0.0], 0)
    with pytest.raises(ValueError):
        mis_balance([-1.0, 2.0], 1)


@given(st.lists(st.floats(0.0, 1e6), min_size=2, max_size=5).filter(lambda p: sum(p) > 0))
def test_mis_balance_partition_of_unity(pdfs):
    assert sum(mis_balance(pdfs, i) for i in range(len(pdfs))) == pytest.approx(1.0)


def test_config_validation():
    assert EstimatorConfig("prod", mis_with_light=True).rays == 3
    assert EstimatorConfig("pos").rays == 2
    with pytest.raises(ConfigError):
        EstimatorConfig("pos", mis_between_lobes=True)
    with pytest.raises(ConfigError):
        EstimatorConfig("zhang", mis_with_light=True)
    with pytest.raises(ConfigError):
        as_kind("Russian")


def test_supported_kinds():
    iso = supported_kinds(brdf.model("IsoGGX"), "alpha")
    assert EstimatorKind.Positivization in iso and EstimatorKind.Product not in iso
    an = supported_kinds(brdf.model("AnisoGGX"), "alpha_x")
    assert EstimatorKind.Product in an and EstimatorKind.ZeltnerAntithetic not in an


@pytest.mark.parametrize("kind", list(EstimatorKind))
def test_zero_radiance_gives_zero(kind):
    m, param = ((brdf.model("IsoGGX", alpha=0.3), "alpha") if kind is not EstimatorKind.Product
                and kind is not EstimatorKind.Mixture else
                (brdf.model("AnisoGGX"), "alpha_x") if kind is EstimatorKind.Product else
                (brdf.model("OrenNayar"), "sigma"))
    e = estimate(kind, m, param, np.broadcast_to(WO, (500, 3)), L=0.0, rng=1)
    assert np.all(e.value == 0.0)


CASES = [
    (brdf.model("IsoGGX", alpha=0.3), "alpha", ["brdf", "pos", "zeltner", "zhang"], {}),
    (brdf.model("AnisoGGX", alpha_x=0.2, alpha_y=0.5), "alpha_x", ["brdf", "prod"], {}),
    (brdf.model("AnisoGGX", alpha_x=0.2, alpha_y=0.5), "alpha_x", ["prod"],
     {"mis_between_lobes": True}),
    (brdf.model("IsoBeckmann", alpha=0.4), "alpha", ["pos"], {"mis_with_light": True}),
    (brdf.model("OrenNayar", sigma=0.5), "sigma", ["brdf", "mix"], {}),
    (brdf.model("HanrahanKrueger", g=-0.3), "g", ["pos", "zhang"], {}),
]


@pytest.mark.parametrize("m,param,kinds,opts", CASES,
                         ids=[f"{c[0].kind.value}-{'/'.join(c[2])}" for c in CASES])
def test_unbiased_against_quadrature(m, param, kinds, opts):
    L = ConstantIncident(1.0) if opts.get("mis_with_light") else sky
    ref = reference(m, param, L.radiance if hasattr(L, "radiance") else L)
    n = 40_000
    for i, kind in enumerate(kinds):
        v = estimate(kind, m, param, np.broadcast_to(WO, (n, 3)), L=L, rng=100 + i, **opts).value
        se = v.std(ddof=1) / np.sqrt(n)
        assert abs(v.mean() - ref) < 4 * se + 1e-9, (kind, v.mean(), ref, se)


def test_zeltner_reuses_the_stream():
    pair = build(brdf.model("IsoGGX", alpha=0.3), "alpha")
    wo = np.broadcast_to(WO, (100, 3))
    r1, r2 = RandomStream(5), RandomStream(5)
    a = estimate_zeltner(pair, wo, sky, r1).value
    b = estimate_decomposed(pair, wo, sky, r2, correlated=True).value
    assert np.array_equal(a, b)
    assert r1.counter == 200
    r3 = RandomStream(5)
    estimate_decomposed(pair, wo, sky, r3)
    assert r3.counter == 400


def test_mirrored_estimator_cancels_odd_radiance():
    m = brdf.model("IsoGGX", alpha=0.4)
    wo = np.broadcast_to(np.array([0.0, 0.0, 1.0]), (1000, 3))
    v = estimate("zhang", m, "alpha", wo, L=lambda wi: wi[..., 0], rng=3).value
    assert np.max(np.abs(v)) < 1e-12


def test_mirror():
    assert np.array_equal(mirror([1.0, -2.0, 3.0]), [-1.0, 2.0, 3.0])


def test_positivized_ggx_zero_variance_native():
    pair = build(brdf.model("IsoGGX", alpha=0.5), "alpha")
    v = estimate_native(pair, 100_000, 4, wo=np.array([0.0, 0.0, 1.0]))
    assert v.std() < 1e-6
    assert abs(v.mean()) < 1e-6


def test_gaussian_demo():
    d = gaussian_demo(1.0, 20_000, seed=2)
    assert np.all(d["Positivization"] == 0.0)
    assert np.all(d["ZeltnerAntithetic"] == 0.0)
    assert d["BrdfSampling"].var() == pytest.approx(0.5, rel=0.05)
    assert abs(d["BrdfSampling"].mean()) < 4 * np.sqrt(0.5 / 20_000)


def test_light_mis_needs_sampler():
    m = brdf.model("IsoGGX", alpha=0.3)
    with pytest.raises(ConfigError):
        estimate("pos", m, "alpha", WO, L=sky, rng=1, mis_with_light=True)


def test_plane_pairs_reject_direction_estimator():
    pair = build(brdf.model("BurleyProfile"), "d")
    with pytest.raises(ConfigError):
        estimate_decomposed(pair, WO)


def test_unsupported_kind_for_model():
    with pytest.raises(ConfigError):
        estimate("prod", brdf.model("IsoGGX"), "alpha", WO)
    assert Kind.IsoGGX in brdf.HALF_VECTOR_KINDS
