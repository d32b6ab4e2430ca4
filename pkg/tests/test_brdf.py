import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from brdfgrad import brdf
from brdfgrad.brdf import ConfigError, Kind
from brdfgrad.core import (QuadratureSpec, RandomStream, chi_square_test, quadrature_integrate,
                           spherical_to_dir)

# frozen: 1 / (pi * 0.25)
GGX_D0_ALPHA_HALF = 1.2732395447351628

upper = st.tuples(st.floats(0.0, 1.5), st.floats(0.0, 2 * np.pi))
RECIPROCAL = [
    brdf.model("Lambertian"), brdf.model("IsoGGX", alpha=0.3), brdf.model("IsoBeckmann"),
    brdf.model("AnisoGGX"), brdf.model("AnisoBeckmann"), brdf.model("BlinnPhong"),
    brdf.model("ABC"), brdf.model("HemiEPD"), brdf.model("OrenNayar"),
    brdf.model("TwoLobeMixture"), brdf.model("Microcylinder"),
]


def test_ggx_ndf_at_pole():
    m = brdf.model("IsoGGX", alpha=0.5)
    assert brdf.ndf(m, np.array([0.0, 0.0, 1.0])) == pytest.approx(GGX_D0_ALPHA_HALF, rel=1e-12)
    v = quadrature_integrate(lambda w: brdf.ndf(m, w) * w[:, 2],
                             QuadratureSpec("hemisphere", (256, 64), graded=True))
    assert v == pytest.approx(1.0, abs=1e-3)


@pytest.mark.parametrize("kind", [Kind.IsoGGX, Kind.IsoBeckmann, Kind.AnisoGGX,
                                  Kind.AnisoBeckmann, Kind.BlinnPhong, Kind.ABC, Kind.HemiEPD,
                                  Kind.AshikhminShirley])
def test_projected_ndf_normalized(kind):
    m = brdf.model(kind)
    v = quadrature_integrate(lambda w: brdf.ndf_pdf(m, w),
                             QuadratureSpec("hemisphere", (256, 256), graded=True))
    assert v == pytest.approx(1.0, abs=1e-3)


@given(upper, upper)
def test_oren_nayar_zero_sigma_is_lambertian(a, b):
    wi, wo = spherical_to_dir(*a), spherical_to_dir(*b)
    on = brdf.eval(brdf.model("OrenNayar", sigma=0.0, rho=0.6), wi, wo)
    assert on == pytest.approx(0.6 / np.pi * np.cos(a[0]), rel=1e-12, abs=1e-15)


@given(upper, upper, st.floats(0.0, 1.0))
def test_mixture_of_identical_lobes_ignores_w(a, b, w):
    lobe = brdf.model("IsoGGX", alpha=0.4)
    wi, wo = spherical_to_dir(*a), spherical_to_dir(*b)
    m = brdf.model("TwoLobeMixture", w=w, lobes=(lobe, lobe))
    assert brdf.eval(m, wi, wo) == pytest.approx(float(brdf.eval(lobe, wi, wo)), rel=1e-12,
                                                 abs=1e-14)


@settings(max_examples=40)
@given(st.sampled_from(RECIPROCAL), upper, upper)
def test_helmholtz_reciprocity(m, a, b):
    wi, wo = spherical_to_dir(*a), spherical_to_dir(*b)
    f1 = brdf.eval(m, wi, wo, cosine_weighted=False)
    f2 = brdf.eval(m, wo, wi, cosine_weighted=False)
    assert f1 == pytest.approx(float(f2), rel=1e-9, abs=1e-12)


@pytest.mark.parametrize("kind", [k for k in Kind if k is not Kind.BurleyProfile])
def test_forward_pdf_normalized_at_normal_incidence(kind):
    m = brdf.model(kind)
    wo = np.array([0.0, 0.0, 1.0])
    spec = QuadratureSpec("sphere", (512, 256), graded=True)
    v = quadrature_integrate(lambda wi: brdf.pdf_forward(m, np.broadcast_to(wo, wi.shape), wi),
                             spec)
    assert v == pytest.approx(1.0, abs=1e-3)


def test_forward_pdf_aniso_ggx():
    m = brdf.model("AnisoGGX", alpha_x=0.2, alpha_y=0.6)
    wo = np.array([0.0, 0.0, 1.0])
    v = quadrature_integrate(lambda wi: brdf.pdf_forward(m, np.broadcast_to(wo, wi.shape), wi),
                             QuadratureSpec("sphere", (512, 256), graded=True))
    assert v == pytest.approx(1.0, abs=1e-3)


def test_lambert_pdf_value():
    m = brdf.model("Lambertian")
    z = np.array([0.0, 0.0, 1.0])
    assert brdf.pdf_forward(m, z, z) == pytest.approx(1 / np.pi)


@given(upper, upper)
def test_half_vector_pdf_jacobian(a, b):
    m = brdf.model("IsoBeckmann", alpha=0.3)
    wi, wo = spherical_to_dir(*a), spherical_to_dir(*b)
    wh = (wi + wo) / np.linalg.norm(wi + wo)
    expect = brdf.ndf_pdf(m, wh) / (4 * np.dot(wo, wh))
    assert brdf.pdf_forward(m, wo, wi) == pytest.approx(float(expect), rel=1e-10)


class _Forward:
    def __init__(self, m, wo):
        self.m, self.wo = m, wo

    def sample(self, u, wo=None):
        return brdf.sample_forward(self.m, np.broadcast_to(self.wo, u.shape[:-1] + (3,)), u).wi

    def pdf(self, x, wo=None):
        return brdf.pdf_forward(self.m, np.broadcast_to(self.wo, x.shape), x)


def test_lambert_sampler_chi_square():
    s = _Forward(brdf.model("Lambertian"), np.array([0.0, 0.0, 1.0]))
    r = chi_square_test(s, QuadratureSpec("hemisphere", (16, 32)), 200_000, rng=5)
    assert r.p_value > 0.01


# half-vector pdfs lose the wo.wh <= 0 mass at oblique incidence, so they are
# checked at normal incidence
@pytest.mark.parametrize("m,theta_o", [(brdf.model("AnisoGGX"), 0.0),
                                       (brdf.model("AshikhminShirley"), 0.0),
                                       (brdf.model("HanrahanKrueger", g=-0.5), 0.9),
                                       (brdf.model("OrenNayar"), 0.9)])
def test_forward_samplers_chi_square(m, theta_o):
    s = _Forward(m, spherical_to_dir(theta_o, 0.4))
    r = chi_square_test(s, QuadratureSpec("sphere", (32, 64), graded=True), 300_000, rng=9)
    assert r.p_value > 1e-3


def test_small_alpha_concentrates():
    m = brdf.model("IsoGGX", alpha=0.01)
    wh = brdf.ndf_sample(m, RandomStream(1).uniform(20_000, 2))
    assert np.median(np.arccos(wh[:, 2])) < 0.02


def test_below_horizon_samples_flagged():
    m = brdf.model("IsoGGX", alpha=0.9)
    wo = np.broadcast_to(spherical_to_dir(1.4, 0.0), (20_000, 3))
    s = brdf.sample_forward(m, wo, RandomStream(2).uniform(20_000, 2))
    assert np.any(~s.valid)
    assert np.all(s.value[~s.valid] == 0)


@pytest.mark.parametrize("kind,params", [("IsoGGX", {"alpha": -1.0}), ("HanrahanKrueger", {"g": 1.0}),
                                         ("ABC", {"C": 0.5}), ("Lambertian", {"rho": 2.0}),
                                         ("IsoGGX", {"beta": 1.0})])
def test_invalid_params(kind, params):
    with pytest.raises(ConfigError):
        brdf.model(kind, **params)


def test_unknown_kind():
    with pytest.raises(ConfigError):
        brdf.BrdfModel("Phong")
