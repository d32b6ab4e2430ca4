import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from brdfgrad import brdf
from brdfgrad.core import (INV_PI, CosineHemisphereSampler, Direction, QuadratureSpec,
                           RandomStream, SphericalCoord, UniformHemisphereSampler,
                           chi_square_test, dir_to_spherical, frame_from_axis, half_vector,
                           half_vector_jacobian, quadrature_integrate, reflect, spherical_to_dir)
from brdfgrad.decomp import build

unit = st.tuples(st.floats(0.0, np.pi), st.floats(0.0, 2 * np.pi - 1e-9))


def test_spherical_poles_and_equator():
    assert np.allclose(spherical_to_dir(0.0, 0.0), [0, 0, 1])
    assert np.allclose(spherical_to_dir(np.pi / 2, 0.0), [1, 0, 0], atol=1e-15)
    assert np.allclose(spherical_to_dir(np.pi / 2, np.pi / 2), [0, 1, 0], atol=1e-15)


@given(unit)
def test_spherical_round_trip(tp):
    th, ph = tp
    d = spherical_to_dir(th, ph)
    assert abs(np.linalg.norm(d) - 1) < 1e-12
    th2, ph2 = dir_to_spherical(d)
    assert np.allclose(spherical_to_dir(th2, ph2), d, atol=1e-12)


def test_direction_rejects_non_unit():
    Direction(0.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        Direction(1.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        SphericalCoord(4.0, 0.0)


def test_half_vector_examples():
    z = np.array([0.0, 0.0, 1.0])
    assert np.allclose(half_vector(z, z), z)
    assert np.allclose(half_vector([1.0, 0, 0], z), np.array([1.0, 0, 1]) / np.sqrt(2))
    with pytest.raises(ValueError, match="undefined half vector"):
        half_vector(z, -z)


@given(unit, unit)
def test_half_vector_symmetric(a, b):
    wi, wo = spherical_to_dir(*a), spherical_to_dir(*b)
    if np.linalg.norm(wi + wo) < 1e-6:
        return
    assert np.allclose(half_vector(wi, wo), half_vector(wo, wi))


def test_jacobian_values():
    wh = np.array([0.0, 0.0, 1.0])
    assert half_vector_jacobian(wh, wh) == pytest.approx(0.25)
    wo = spherical_to_dir(np.pi / 3, 0.0)
    assert half_vector_jacobian(wo, wh) == pytest.approx(0.5)
    with pytest.raises(ValueError, match="back-facing"):
        half_vector_jacobian(-wh, wh)


def test_jacobian_gives_normalized_wi_density():
    # GGX half vectors reflected about wo = +z: pdf_wh * jacobian integrates to 1
    m = brdf.model("IsoGGX", alpha=0.4)
    wo = np.array([0.0, 0.0, 1.0])

    def p_wi(wi):
        wh = half_vector(wi, np.broadcast_to(wo, wi.shape))
        return brdf.ndf_pdf(m, wh) * 0.25 / np.maximum(wh[..., 2], 1e-300)
    v = quadrature_integrate(p_wi, QuadratureSpec("sphere", (256, 256), graded=True))
    assert v == pytest.approx(1.0, abs=1e-3)


@given(unit)
def test_frame_orthonormal(tp):
    n = spherical_to_dir(*tp)
    t, s = frame_from_axis(n)
    M = np.stack([t, s, n])
    assert np.allclose(M @ M.T, np.eye(3), atol=1e-12)


@given(unit, unit)
def test_reflect_preserves_angle(a, b):
    wo, wh = spherical_to_dir(*a), spherical_to_dir(*b)
    wi = reflect(wo, wh)
    assert np.dot(wi, wh) == pytest.approx(np.dot(wo, wh), abs=1e-12)


def test_quadrature_analytic():
    spec = QuadratureSpec("hemisphere", (128, 128))
    assert quadrature_integrate(lambda w: w[:, 2], spec) == pytest.approx(np.pi, abs=1e-4)
    assert quadrature_integrate(lambda w: np.ones(len(w)), spec) == pytest.approx(2 * np.pi,
                                                                                 abs=1e-4)


def test_quadrature_ggx_projected_ndf_two_resolutions():
    m = brdf.model("IsoGGX", alpha=0.5)
    f = lambda w: brdf.ndf(m, w) * w[:, 2]  # noqa: E731
    a = quadrature_integrate(f, QuadratureSpec("hemisphere", (128, 64), graded=True))
    b = quadrature_integrate(f, QuadratureSpec("hemisphere", (512, 64), graded=True))
    assert a == pytest.approx(1.0, abs=1e-3)
    assert b == pytest.approx(1.0, abs=1e-3)


def test_quadrature_reports_bad_coordinate():
    spec = QuadratureSpec("hemisphere", (16, 16))
    with pytest.raises(ValueError, match="non-finite"):
        quadrature_integrate(lambda w: np.where(w[:, 2] > 0.5, np.nan, 1.0), spec)


def test_quadrature_spec_validation():
    with pytest.raises(ValueError):
        QuadratureSpec("torus", (16, 16))
    with pytest.raises(ValueError):
        QuadratureSpec("interval", (16,))


def test_random_stream_counter_and_fork():
    a = RandomStream(42)
    x = a.uniform(10)
    assert a.counter == 10
    b = RandomStream(42, counter=5)
    assert np.array_equal(b.uniform(5), x[5:])
    c = a.fork()
    assert np.array_equal(c.uniform(3), a.uniform(3))


def test_random_stream_keys_distinct():
    a = RandomStream.from_keys(1, 2, 3).uniform(4)
    b = RandomStream.from_keys(1, 2, 4).uniform(4)
    assert not np.array_equal(a, b)
    assert np.array_equal(a, RandomStream.from_keys(1, 2, 3).uniform(4))


@settings(max_examples=25)
@given(st.integers(0, 2**63), st.integers(0, 1000))
def test_random_stream_range(seed, counter):
    u = RandomStream(seed, counter).uniform(64)
    assert np.all((u >= 0) & (u < 1))


def test_chi_square_uniform_passes():
    r = chi_square_test(UniformHemisphereSampler(), QuadratureSpec("hemisphere", (16, 32)),
                        200_000, rng=3)
    assert r.passed and r["pass"]


def test_chi_square_detects_mismatch():
    class Wrong(CosineHemisphereSampler):
        def pdf(self, x, wo=None):
            return np.where(np.asarray(x)[..., 2] >= 0, 0.5 * INV_PI, 0.0)
    r = chi_square_test(Wrong(), QuadratureSpec("hemisphere", (16, 32)), 200_000, rng=3)
    assert not r.passed
    assert r.p_value < 1e-10


def test_chi_square_positivized_ggx_lobe():
    pair = build(brdf.model("IsoGGX", alpha=0.5), "alpha")
    r = chi_square_test(pair.positive, QuadratureSpec("sphere", (32, 64), graded=True),
                        10**6, rng=11)
    assert r.p_value > 0.01


def test_chi_square_out_of_domain():
    class Below(UniformHemisphereSampler):
        def sample(self, u, wo=None):
            s = super().sample(u)
            s[..., 2] *= -1
            return s
    with pytest.raises(ValueError, match="outside domain"):
        chi_square_test(Below(), QuadratureSpec("hemisphere", (8, 8)), 1000, rng=1)


def test_chi_square_needs_enough_samples():
    with pytest.raises(ValueError):
        chi_square_test(UniformHemisphereSampler(), QuadratureSpec("hemisphere", (16, 16)), 100)
