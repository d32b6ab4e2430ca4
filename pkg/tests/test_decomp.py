import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import lambertw

from brdfgrad import brdf
from brdfgrad.brdf import ConfigError, Kind
from brdfgrad.core import QuadratureSpec, RandomStream, quadrature_integrate, spherical_to_dir
from brdfgrad.decomp import (Decomposition, NonMonotoneCDF, build, gaussian_demo_pair,
                             invert_cdf, lobe_weight_constancy_check, pdf_table, registry,
                             write_pdf_csv)
from brdfgrad.decomp import lobes as L
from brdfgrad.validation import OBLIQUE_WO, check_pair

# frozen: 1/2 + 1/pi
ANISO_PHI_CDF_QUARTER = 0.8183098861837907
# frozen: 1 - 2/e
BECKMANN_Y1_QUANTILE = 0.26424111765711533

SPHERE = QuadratureSpec("sphere", (512, 256), graded=True)
POSITIVIZED = [brdf.model("IsoGGX", alpha=0.3), brdf.model("IsoBeckmann", alpha=0.5),
               brdf.model("BlinnPhong", n=20.0)]


def _lobe_integrals(pair, wo):
    return [quadrature_integrate(lambda x: pair.term_native(k, x, wo), SPHERE) for k in (0, 1)]


def test_ggx_equal_area_and_half_weight():
    pair = build(brdf.model("IsoGGX", alpha=0.5), "alpha")
    assert pair.kind is Decomposition.Positivization
    pos, neg = _lobe_integrals(pair, OBLIQUE_WO)
    assert pos > 0 > neg
    assert pos + neg == pytest.approx(0.0, abs=1e-3 * pos)
    assert pos / (pos - neg) == pytest.approx(0.5, abs=1e-3)


@pytest.mark.parametrize("m", POSITIVIZED, ids=lambda m: m.kind.value)
def test_positivized_lobes_cancel(m):
    pair = build(m, m.kind is Kind.BlinnPhong and "n" or "alpha")
    pos, neg = _lobe_integrals(pair, np.array([0.0, 0.0, 1.0]))
    assert abs(pos + neg) < 1e-3 * pos


@pytest.mark.parametrize("m,param", [(brdf.model("IsoGGX", alpha=0.2), "alpha"),
                                     (brdf.model("HanrahanKrueger", g=0.3), "g"),
                                     (brdf.model("AnisoGGX", alpha_x=0.2, alpha_y=0.5), "alpha_x"),
                                     (brdf.model("ABC", B=10.0, C=2.0), "C"),
                                     (brdf.model("OrenNayar", sigma=0.5), "sigma")])
def test_check_pair_normalization(m, param):
    for r in check_pair(build(m, param), OBLIQUE_WO, resolution=(256, 256)):
        assert r.norm_ok and r.mass_ok, r


def test_blinn_phong_positive_cdf_at_root():
    for n in (2.0, 20.0, 200.0):
        lobe = L.BlinnPhongLobe(n, +1)
        root = np.exp(-1.0 / (n + 2.0))
        assert lobe.cdf(root) == pytest.approx(1.0, abs=1e-12)
        assert L.BlinnPhongLobe(n, -1).cdf(root) == pytest.approx(0.0, abs=1e-12)


def test_aniso_azimuth_cdf_quarter():
    assert L.aniso_phi_cdf(np.pi / 4, 1.0, 1.0) == pytest.approx(ANISO_PHI_CDF_QUARTER, rel=1e-12)
    assert L.aniso_phi_cdf(np.pi / 2, 0.3, 0.7) == pytest.approx(1.0)
    assert L.aniso_phi_cdf(0.0, 0.3, 0.7) == 0.0


@given(st.floats(0.05, 1.5), st.floats(0.05, 1.5), st.floats(0.01, 1.55))
def test_aniso_azimuth_sampler_inverts_cdf(a1, a2, phi):
    # compared in CDF space: the density vanishes at pi/2
    v = L.aniso_phi_cdf(np.array([phi]), a1, a2)
    back = L.aniso_phi_cdf(L.quarter_azimuth(v, a2 / a1), a1, a2)
    assert back[0] == pytest.approx(v[0], abs=1e-9)


def test_beckmann_shape_conditional_quantile():
    assert 1 - 2 / np.e == pytest.approx(BECKMANN_Y1_QUANTILE, rel=1e-15)
    y = -1.0 - np.real(lambertw(-(1 - BECKMANN_Y1_QUANTILE) / np.e, -1))
    assert y == pytest.approx(1.0, rel=1e-12)
    lobe = L.AnisoShapeLobe(Kind.AnisoBeckmann, 1.0, 1.0, "alpha_x")
    wh = lobe.sample(np.array([[BECKMANN_Y1_QUANTILE, 0.1]]))
    assert np.arccos(wh[0, 2]) == pytest.approx(np.pi / 4, abs=1e-9)


def test_oren_nayar_azimuth_quarter_point():
    lobe = L.OrenNayarBLobe(0.5, 0.8)
    wo = spherical_to_dir(0.7, 1.2)
    wi = lobe.sample(np.array([[0.4, 0.25]]), wo)
    assert np.arctan2(wi[0, 1], wi[0, 0]) == pytest.approx(1.2 - np.pi / 6, abs=1e-12)


@pytest.mark.parametrize("theta_o", [0.3, 0.9, 1.4])
def test_oren_nayar_branch_weight(theta_o):
    lobe = L.OrenNayarBLobe(0.5, 0.8)
    a21, a22 = L.oren_nayar_t2(theta_o)
    w = a21 / (a21 + a22)
    assert lobe.theta_cdf(theta_o - 1e-12, theta_o) == pytest.approx(w, abs=1e-9)
    assert lobe.theta_cdf(theta_o, theta_o) == pytest.approx(w, abs=1e-12)
    assert lobe.theta_cdf(np.pi / 2, theta_o) == pytest.approx(1.0, abs=1e-12)


def test_invert_cdf_identity_and_square():
    u = np.linspace(0, 1, 101)
    assert np.allclose(invert_cdf(lambda x: x, u, 0.0, 1.0), u, atol=1e-12)
    got = invert_cdf(lambda x: x * x, u, 0.0, 1.0, pdf=lambda x: 2 * x)
    assert np.max(np.abs(got ** 2 - u)) < 1e-10
    assert np.allclose(got[1:], np.sqrt(u[1:]), atol=1e-9)


def test_invert_cdf_rejects_decreasing():
    with pytest.raises(NonMonotoneCDF):
        invert_cdf(lambda x: 1 - x, np.array([0.5]), 0.0, 1.0)


@pytest.mark.parametrize("param", ["B", "C"])
def test_abc_inversion_accuracy(param):
    B, C = 10.0, 2.5
    lobe = L.ABCShapeLobe(B, C, param)
    u = RandomStream(4).uniform(2000, 2)
    c = lobe.sample(u)[:, 2]
    assert np.max(np.abs(lobe.cdf(c, B, C) - u[:, 0])) < 1e-9


@pytest.mark.parametrize("m", POSITIVIZED + [brdf.model("HanrahanKrueger", g=-0.5)],
                         ids=lambda m: m.kind.value)
def test_positivized_weights_are_constant(m):
    param = {Kind.BlinnPhong: "n", Kind.HanrahanKrueger: "g"}.get(m.kind, "alpha")
    rep = lobe_weight_constancy_check(build(m, param), 4000, rng=1, wo=OBLIQUE_WO)
    assert rep.max_rel_deviation < 1e-9
    assert rep.means[0] == pytest.approx(rep.means[1], rel=1e-9)


@settings(max_examples=30)
@given(st.floats(0.05, 1.0), st.integers(0, 2**31))
def test_lobe_samples_carry_their_sign(alpha, seed):
    pair = build(brdf.model("IsoGGX", alpha=alpha), "alpha")
    u = RandomStream(seed).uniform(64, 2)
    for k, lobe in enumerate(pair.lobes):
        x = lobe.sample(u)
        assert np.all(lobe.sign * pair.term_native(k, x, OBLIQUE_WO) >= 0)


def test_hg_backscatter_concentrates_near_wo():
    m = brdf.model("HanrahanKrueger", g=-0.9)
    wo = np.broadcast_to(spherical_to_dir(0.5, 0.2), (20_000, 3))
    s = brdf.sample_forward(m, wo, RandomStream(3).uniform(20_000, 2))
    ok = s.valid
    assert np.median(np.sum(s.wi[ok] * wo[ok], axis=1)) > 0.9


def test_positivization_inapplicable():
    with pytest.raises(ConfigError, match="positivization inapplicable"):
        build(brdf.model("AnisoGGX"), "alpha_x", "Positivization")
    with pytest.raises(ConfigError):
        build(brdf.model("Lambertian"), "rho")


def test_registry_rows():
    rows = {(r.model, r.param): r.decomposition for r in registry()}
    assert rows[(Kind.IsoGGX, "alpha")] is Decomposition.Positivization
    assert rows[(Kind.AshikhminShirley, "nu")] is Decomposition.Product
    assert rows[(Kind.OrenNayar, "sigma")] is Decomposition.Mixture
    assert len(rows) == 18


def test_gaussian_pair_zero_variance_weight():
    pair = gaussian_demo_pair(0.0, 2.0)
    u = RandomStream(2).uniform(500, 2)
    for k, lobe in enumerate(pair.lobes):
        w = pair.weight(k, lobe.sample(u))
        assert np.ptp(w) == 0.0


def test_pdf_table_csv(tmp_path):
    lobe = build(brdf.model("IsoGGX", alpha=0.4), "alpha").positive
    rows = pdf_table(lobe, 128, 32)
    assert rows[-1][3] == pytest.approx(1.0, abs=2e-3)
    path = tmp_path / "pdf.csv"
    write_pdf_csv(rows, path)
    with open(path) as fh:
        r = list(csv.reader(fh))
    assert r[0] == ["theta", "phi", "pdf", "cdf"]
    assert len(r) == 128 * 32 + 1
