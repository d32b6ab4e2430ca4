import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from brdfgrad import brdf, dbrdf
from brdfgrad.brdf import ConfigError, Kind
from brdfgrad.core import QuadratureSpec, quadrature_integrate, spherical_to_dir
from brdfgrad.decomp import registry
from brdfgrad.validation import derivative_check

# frozen: -2 / (pi * 0.5^3)
GGX_DALPHA_D0 = -5.092958178940651
# frozen: 1 / sqrt(2 pi)
GAUSS_HALF_MASS = 0.3989422804014327


def test_ggx_alpha_derivative_at_pole():
    m = brdf.model("IsoGGX", alpha=0.5)
    z = np.array([0.0, 0.0, 1.0])
    assert dbrdf.ndf_derivative(m, "alpha", z) == pytest.approx(GGX_DALPHA_D0, rel=1e-12)
    h = 1e-6
    fd = (brdf.ndf(m.replace(alpha=0.5 + h), z) - brdf.ndf(m.replace(alpha=0.5 - h), z)) / (2 * h)
    assert fd == pytest.approx(GGX_DALPHA_D0, rel=1e-7)


@given(st.floats(0.05, 2.0), st.floats(0.0, 2 * np.pi))
def test_ggx_alpha_derivative_root(alpha, phi):
    m = brdf.model("IsoGGX", alpha=alpha)
    wh = spherical_to_dir(np.arctan(alpha), phi)
    assert abs(dbrdf.ndf_derivative(m, "alpha", wh)) < 1e-9 * brdf.ndf(m, wh)


@given(st.tuples(st.floats(0.0, 1.5), st.floats(0.0, 6.28)),
       st.tuples(st.floats(0.0, 1.5), st.floats(0.0, 6.28)), st.floats(0.0, 1.0))
def test_mixture_identical_lobes_zero_derivative(a, b, w):
    lobe = brdf.model("IsoBeckmann", alpha=0.3)
    m = brdf.model("TwoLobeMixture", w=w, lobes=(lobe, lobe))
    d = dbrdf.eval_derivative(m, "w", spherical_to_dir(*a), spherical_to_dir(*b))
    assert d == 0.0


@pytest.mark.parametrize("kind,param", [(Kind.IsoBeckmann, "alpha"),
                                        (Kind.AshikhminShirley, "nu")])
def test_finite_difference_oracle_examples(kind, param):
    assert derivative_check(kind, param, 100, seed=1).max_rel_error < 1e-4


@pytest.mark.parametrize("row", registry(), ids=lambda r: f"{r.model.value}-{r.param}")
def test_every_registry_row_matches_finite_differences(row):
    assert derivative_check(row.model, row.param, 20, seed=2).passed


def test_central_difference_order_two():
    m = brdf.model("IsoGGX", alpha=0.4)
    wi, wo = spherical_to_dir(0.5, 0.3), spherical_to_dir(0.4, 2.0)
    exact = dbrdf.eval_derivative(m, "alpha", wi, wo)
    hs = np.array([4e-2, 2e-2, 1e-2, 5e-3])
    err = [abs(dbrdf.finite_difference(m, "alpha", wi, wo, h=h) - exact) for h in hs]
    slope = np.polyfit(np.log(hs), np.log(err), 1)[0]
    assert slope == pytest.approx(2.0, abs=0.2)


def test_finite_difference_range_error():
    m = brdf.model("HanrahanKrueger", g=0.999999)
    with pytest.raises(ConfigError):
        dbrdf.finite_difference(m, "g", spherical_to_dir(0.3, 0), spherical_to_dir(0.2, 1), h=1e-3)


def test_unsupported_target():
    with pytest.raises(ConfigError):
        dbrdf.eval_derivative(brdf.model("IsoGGX"), "F0", [0, 0, 1.0], [0, 0, 1.0])
    with pytest.raises(ConfigError):
        dbrdf.eval_derivative(brdf.model("Lambertian"), "sigma", [0, 0, 1.0], [0, 0, 1.0])


def test_unicode_aliases():
    m = brdf.model("IsoGGX", alpha=0.3)
    wi, wo = spherical_to_dir(0.3, 0.1), spherical_to_dir(0.5, 2.0)
    assert dbrdf.eval_derivative(m, "α", wi, wo) == dbrdf.eval_derivative(m, "alpha", wi, wo)


def test_gaussian_demo_integrand():
    assert dbrdf.gaussian_mean_derivative(0.3, 0.3, 1.0) == 0.0
    spec = QuadratureSpec("interval", (4096,), (-12.0, 12.0))
    assert abs(quadrature_integrate(lambda x: dbrdf.gaussian_mean_derivative(x, 0, 1), spec)) < 1e-6
    pos = QuadratureSpec("interval", (4096,), (0.0, 12.0))
    assert quadrature_integrate(lambda x: dbrdf.gaussian_mean_derivative(x, 0, 1), pos) == \
        pytest.approx(GAUSS_HALF_MASS, abs=1e-7)
    with pytest.raises(ConfigError):
        dbrdf.gaussian_mean_derivative(0.0, 0.0, 0.0)


@settings(max_examples=30)
@given(st.floats(0.5, 3.0), st.floats(0.01, 5.0))
def test_burley_profile_derivative(d, r):
    h = 1e-6 * d
    fd = (brdf.burley_profile(r, d + h) - brdf.burley_profile(r, d - h)) / (2 * h)
    assert dbrdf.burley_profile_derivative(r, d) == pytest.approx(float(fd), rel=1e-5, abs=1e-12)
