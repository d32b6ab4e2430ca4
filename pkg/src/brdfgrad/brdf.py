"""Analytic BRDF models: evaluation and forward importance sampling.

All evaluation is vectorised: ``wi`` and ``wo`` are ``(..., 3)`` arrays in the
local shading frame and model parameters may be scalars or arrays that
broadcast against the leading axes (per-texel parameters).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from types import MappingProxyType
from typing import Mapping, Optional, Tuple

import numpy as np
from scipy import special

from .core import (INV_PI, TWO_PI, cosine_sample_hemisphere, dot, frame_from_axis,
                   from_frame, half_vector_unchecked, reflect, to_frame)


class Kind(str, Enum):
    Lambertian = "Lambertian"
    IsoGGX = "IsoGGX"
    IsoBeckmann = "IsoBeckmann"
    AnisoGGX = "AnisoGGX"
    AnisoBeckmann = "AnisoBeckmann"
    BlinnPhong = "BlinnPhong"
    Minnaert = "Minnaert"
    AshikhminShirley = "AshikhminShirley"
    ABC = "ABC"
    HemiEPD = "HemiEPD"
    HanrahanKrueger = "HanrahanKrueger"
    OrenNayar = "OrenNayar"
    TwoLobeMixture = "TwoLobeMixture"
    Microcylinder = "Microcylinder"
    BurleyProfile = "BurleyProfile"


HALF_VECTOR_KINDS = frozenset({Kind.IsoGGX, Kind.IsoBeckmann, Kind.AnisoGGX, Kind.AnisoBeckmann,
                               Kind.BlinnPhong, Kind.AshikhminShirley, Kind.ABC, Kind.HemiEPD})

DEFAULTS = {
    Kind.Lambertian: {"rho": 0.8},
    Kind.IsoGGX: {"alpha": 0.5, "F0": 1.0},
    Kind.IsoBeckmann: {"alpha": 0.5, "F0": 1.0},
    Kind.AnisoGGX: {"alpha_x": 0.2, "alpha_y": 0.6, "F0": 1.0},
    Kind.AnisoBeckmann: {"alpha_x": 0.2, "alpha_y": 0.6, "F0": 1.0},
    Kind.BlinnPhong: {"n": 20.0, "F0": 1.0},
    Kind.Minnaert: {"n": 2.0, "rho": 0.8},
    Kind.AshikhminShirley: {"nu": 10.0, "nv": 100.0, "F0": 1.0},
    Kind.ABC: {"B": 10.0, "C": 2.0, "F0": 1.0},
    Kind.HemiEPD: {"kappa": 5.0, "gamma": 1.0, "F0": 1.0},
    Kind.HanrahanKrueger: {"g": -0.3, "albedo": 0.8},
    Kind.OrenNayar: {"sigma": 0.5, "rho": 0.8},
    Kind.TwoLobeMixture: {"w": 0.5},
    Kind.Microcylinder: {"kd": 0.3, "gamma_v": 0.3, "albedo": 0.8, "F0": 1.0},
    Kind.BurleyProfile: {"d": 1.0},
}

# (lower, upper, lower_open, upper_open)
_RANGES = {
    "rho": (0.0, 1.0, False, False),
    "albedo": (0.0, 1.0, False, False),
    "F0": (0.0, 1.0, False, False),
    "alpha": (0.0, np.inf, True, True),
    "alpha_x": (0.0, np.inf, True, True),
    "alpha_y": (0.0, np.inf, True, True),
    "n": (0.0, np.inf, True, True),
    "nu": (0.0, np.inf, True, True),
    "nv": (0.0, np.inf, True, True),
    "B": (0.0, np.inf, True, True),
    "C": (1.0, np.inf, True, True),
    "kappa": (0.0, np.inf, True, True),
    "gamma": (0.0, np.inf, True, True),
    "g": (-1.0, 1.0, True, True),
    "sigma": (0.0, np.inf, False, True),
    "w": (0.0, 1.0, False, False),
    "kd": (0.0, 1.0, False, False),
    "gamma_v": (0.0, np.inf, True, True),
    "d": (0.0, np.inf, True, True),
}


class ConfigError(ValueError):
    """Invalid model configuration or unsupported derivative target."""


def check_param(name: str, value) -> None:
    lo, hi, lo_open, hi_open = _RANGES[name]
    v = np.asarray(value, dtype=float)
    if not np.all(np.isfinite(v)):
        raise ConfigError(f"parameter {name} must be finite")
    below = v <= lo if lo_open else v < lo
    above = v >= hi if hi_open else v > hi
    if np.any(below) or np.any(above):
        bad = v[below | above] if v.ndim else v
        raise ConfigError(f"parameter {name}={np.ravel(bad)[0]!r} outside "
                          f"{'(' if lo_open else '['}{lo}, {hi}{')' if hi_open else ']'}")


@dataclass(frozen=True, eq=False)
class BrdfModel:
    """A material: model kind, named parameters and optional sub-lobes.

    ``lobes`` is only used by :attr:`Kind.TwoLobeMixture` and holds
    ``(f_1, f_2)`` with ``f = w f_1 + (1 - w) f_2``.
    """

    kind: Kind
    params: Mapping[str, object] = field(default_factory=dict)
    lobes: Tuple["BrdfModel", ...] = ()

    def __post_init__(self):
        try:
            kind = Kind(self.kind)
        except ValueError:
            raise ConfigError(f"unknown material kind {self.kind!r}") from None
        object.__setattr__(self, "kind", kind)
        merged = dict(DEFAULTS[kind])
        for k, v in dict(self.params).items():
            if k not in merged:
                raise ConfigError(f"unknown parameter {k!r} for {kind.value}")
            merged[k] = v if np.ndim(v) else float(v)
        for k, v in merged.items():
            check_param(k, v)
        object.__setattr__(self, "params", MappingProxyType(merged))
        if kind is Kind.TwoLobeMixture:
            lobes = tuple(self.lobes) or (BrdfModel(Kind.Lambertian, {"rho": 0.8}),
                                          BrdfModel(Kind.IsoGGX, {"alpha": 0.1}))
            if len(lobes) != 2:
                raise ConfigError("TwoLobeMixture needs exactly two lobes")
            for lb in lobes:
                if lb.kind in (Kind.TwoLobeMixture, Kind.BurleyProfile):
                    raise ConfigError(f"{lb.kind.value} cannot be a mixture lobe")
            object.__setattr__(self, "lobes", lobes)
        elif self.lobes:
            raise ConfigError(f"{kind.value} takes no sub-lobes")

    def __getitem__(self, name: str):
        return self.params[name]

    def replace(self, **params) -> "BrdfModel":
        merged = dict(self.params)
        merged.update(params)
        return BrdfModel(self.kind, merged, self.lobes)

    def take(self, index) -> "BrdfModel":
        """Slice array-valued parameters (used when masking shading points)."""
        p = {k: (v[index] if np.ndim(v) else v) for k, v in self.params.items()}
        return BrdfModel(self.kind, p, tuple(lb.take(index) for lb in self.lobes))

    def __repr__(self):
        items = ", ".join(f"{k}={v if np.ndim(v) == 0 else 'array'}" for k, v in self.params.items())
        return f"BrdfModel({self.kind.value}, {items})"


def model(kind, **params) -> BrdfModel:
    lobes = params.pop("lobes", ())
    return BrdfModel(Kind(kind), params, tuple(lobes))


@dataclass
class BrdfSample:
    """Result of forward sampling.  ``valid`` is False for below-horizon draws."""

    wi: np.ndarray
    pdf: np.ndarray
    value: np.ndarray
    valid: np.ndarray


# ---------------------------------------------------------------------------
# small helpers


def _cos(v):
    return np.asarray(v)[..., 2]


def _p(m: BrdfModel, name):
    return np.asarray(m.params[name], dtype=float)


def fresnel_schlick(F0, cos_d):
    F0 = np.asarray(F0, dtype=float)
    return F0 + (1.0 - F0) * np.clip(1.0 - cos_d, 0.0, 1.0) ** 5


def _trig(wh):
    """cos^2, sin^2, tan^2 of the polar angle and cos^2/sin^2 of azimuth."""
    c = np.clip(_cos(wh), 0.0, 1.0)
    c2 = c * c
    s2 = np.maximum(0.0, 1.0 - c2)
    rxy2 = wh[..., 0] ** 2 + wh[..., 1] ** 2
    safe = np.where(rxy2 > 0.0, rxy2, 1.0)
    cp2 = np.where(rxy2 > 0.0, wh[..., 0] ** 2 / safe, 1.0)
    sp2 = np.where(rxy2 > 0.0, wh[..., 1] ** 2 / safe, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        t2 = np.where(c2 > 0.0, s2 / np.where(c2 > 0.0, c2, 1.0), np.inf)
    return c, c2, s2, t2, cp2, sp2


def _alphas(m: BrdfModel):
    if m.kind in (Kind.IsoGGX, Kind.IsoBeckmann):
        a = _p(m, "alpha")
        return a, a
    return _p(m, "alpha_x"), _p(m, "alpha_y")


def aniso_a(cp2, sp2, ax, ay):
    return cp2 / (ax * ax) + sp2 / (ay * ay)


# ---------------------------------------------------------------------------
# ABC and Hemi-EPD normalisation helpers


def _expm1_over(k, L):
    """``(exp(k L) - 1) / k`` with the k -> 0 limit."""
    k = np.asarray(k, dtype=float)
    kl = k * L
    small = np.abs(kl) < 1e-4
    ks = np.where(small, 1.0, k)
    series = L * (1.0 + kl / 2.0 + kl * kl / 6.0)
    return np.where(small, series, np.expm1(kl) / ks)


def _dexpm1_over(k, L):
    """d/dk of :func:`_expm1_over`: ``int_1^Y ln v v^(k-1) dv``."""
    k = np.asarray(k, dtype=float)
    kl = k * L
    small = np.abs(kl) < 1e-3
    ks = np.where(small, 1.0, k)
    series = L * L * (0.5 + kl / 3.0 + kl * kl / 8.0)
    exact = (L * np.exp(kl) * ks - np.expm1(kl)) / (ks * ks)
    return np.where(small, series, exact)


def abc_projected_integral(B, C):
    """``int_0^1 (1 + B(1-c))^-C c dc`` in closed form."""
    B = np.asarray(B, float)
    C = np.asarray(C, float)
    Y = 1.0 + B
    L = np.log(Y)
    return (Y * _expm1_over(1.0 - C, L) - _expm1_over(2.0 - C, L)) / (B * B)


def abc_projected_integral_grad(B, C):
    """Partial derivatives of :func:`abc_projected_integral` in B and C."""
    B = np.asarray(B, float)
    C = np.asarray(C, float)
    Y = 1.0 + B
    L = np.log(Y)
    J = lambda k: _expm1_over(k, L)  # noqa: E731
    K = lambda k: _dexpm1_over(k, L)  # noqa: E731
    dB = -C / B ** 3 * (-J(2.0 - C) + (Y + 1.0) * J(1.0 - C) - Y * J(-C))
    dC = -(Y * K(1.0 - C) - K(2.0 - C)) / (B * B)
    return dB, dC


def abc_norm(B, C):
    return 1.0 / (TWO_PI * abc_projected_integral(B, C))


def abc_partial_cdf(B, C, c):
    """``int_c^1 g(c') c' dc'`` for the ABC shape ``g``."""
    B = np.asarray(B, float)
    C = np.asarray(C, float)
    v = 1.0 + B * (1.0 - np.asarray(c, float))
    Y = 1.0 + B
    Lv = np.log(v)
    return (Y * _expm1_over(1.0 - C, Lv) - _expm1_over(2.0 - C, Lv)) / (B * B)


def lower_gamma_pos(s, x, terms: int = 400):
    """``G(s, x) = int_0^x t^(s-1) e^t dt`` for ``x >= 0`` by power series.

    ``G(s, x) = x^s sum_k x^k / (k! (s + k))``.  All terms are positive, so the
    sum has no cancellation.
    """
    s = np.asarray(s, float)
    x = np.asarray(x, float)
    s, x = np.broadcast_arrays(s, x)
    term = np.ones_like(x)
    total = term / s
    for k in range(1, terms):
        term = term * x / k
        inc = term / (s + k)
        total = total + inc
        if np.all(inc <= 1e-17 * total):
            break
    return np.power(x, s) * total


def epd_moment(m_exp, kappa, gamma, c=1.0):
    """``int_0^c t^m exp(kappa t^gamma) dt`` via :func:`lower_gamma_pos`."""
    kappa = np.asarray(kappa, float)
    gamma = np.asarray(gamma, float)
    s = (m_exp + 1.0) / gamma
    x = kappa * np.power(np.asarray(c, float), gamma)
    return lower_gamma_pos(s, x) / (gamma * np.power(kappa, s))


def epd_norm(kappa, gamma):
    """N with ``int (exp(kappa c^gamma) - 1) N c d(omega) = 1``."""
    return 1.0 / (TWO_PI * (epd_moment(1.0, kappa, gamma) - 0.5))


def epd_norm_grad(kappa, gamma):
    """dN/dkappa using ``d/dk int c e^{k c^g} dc = int c^{1+g} e^{k c^g} dc``."""
    N = epd_norm(kappa, gamma)
    dI = epd_moment(1.0 + np.asarray(gamma, float), kappa, gamma)
    return -TWO_PI * N * N * dI


# ---------------------------------------------------------------------------
# Normal distributions


def ndf(m: BrdfModel, wh) -> np.ndarray:
    """Microfacet normal distribution D(wh); zero on the lower hemisphere.

    Projected normalisation ``int D cos = 1`` holds for all kinds except
    Ashikhmin-Shirley, whose D is normalised in plain solid angle.
    """
    wh = np.asarray(wh, float)
    c, c2, s2, t2, cp2, sp2 = _trig(wh)
    up = c > 0.0
    k = m.kind
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        if k in (Kind.IsoGGX, Kind.AnisoGGX):
            ax, ay = _alphas(m)
            a = aniso_a(cp2, sp2, ax, ay)
            D = 1.0 / (np.pi * ax * ay * (a * s2 + c2) ** 2)
        elif k in (Kind.IsoBeckmann, Kind.AnisoBeckmann):
            ax, ay = _alphas(m)
            a = aniso_a(cp2, sp2, ax, ay)
            e = np.exp(-a * np.where(up, t2, 0.0))
            D = e / (np.pi * ax * ay * np.where(up, c2 * c2, 1.0))
        elif k is Kind.BlinnPhong:
            n = _p(m, "n")
            D = (n + 2.0) / TWO_PI * np.power(c, n)
        elif k is Kind.AshikhminShirley:
            nu, nv = _p(m, "nu"), _p(m, "nv")
            D = np.sqrt((nu + 1.0) * (nv + 1.0)) / TWO_PI * np.power(c, nu * cp2 + nv * sp2)
        elif k is Kind.ABC:
            B, C = _p(m, "B"), _p(m, "C")
            D = abc_norm(B, C) * (1.0 + B * (1.0 - c)) ** (-C)
        elif k is Kind.HemiEPD:
            kap, gam = _p(m, "kappa"), _p(m, "gamma")
            D = epd_norm(kap, gam) * np.expm1(kap * np.power(c, gam))
        else:
            raise ConfigError(f"{k.value} has no normal distribution")
    return np.where(up, D, 0.0)


def ndf_pdf(m: BrdfModel, wh) -> np.ndarray:
    """Density (per wh solid angle) of :func:`ndf_sample`."""
    if m.kind is Kind.AshikhminShirley:
        return ndf(m, wh)
    return ndf(m, wh) * np.maximum(_cos(wh), 0.0)


def _sample_aniso_phi(u, ax, ay):
    """Azimuth with density ``1 / (2 pi ax ay a(phi))`` (GGX/Beckmann marginal)."""
    ang = TWO_PI * u
    phi = np.arctan2(ay * np.sin(ang), ax * np.cos(ang))
    return np.where(phi < 0.0, phi + TWO_PI, phi)


def ndf_sample(m: BrdfModel, u) -> np.ndarray:
    """Draw wh with density :func:`ndf_pdf`.  ``u`` has shape ``(..., 2)``."""
    u = np.asarray(u, float)
    u1, u2 = u[..., 0], u[..., 1]
    k = m.kind
    if k in (Kind.IsoGGX, Kind.AnisoGGX, Kind.IsoBeckmann, Kind.AnisoBeckmann):
        ax, ay = _alphas(m)
        phi = _sample_aniso_phi(u2, ax, ay)
        a = aniso_a(np.cos(phi) ** 2, np.sin(phi) ** 2, ax, ay)
        if k in (Kind.IsoGGX, Kind.AnisoGGX):
            t2 = u1 / ((1.0 - u1) * a)
        else:
            t2 = -np.log1p(-u1) / a
        c = 1.0 / np.sqrt(1.0 + t2)
    elif k is Kind.BlinnPhong:
        n = _p(m, "n")
        c = np.power(1.0 - u1, 1.0 / (n + 2.0))
        phi = TWO_PI * u2
    elif k is Kind.AshikhminShirley:
        nu, nv = _p(m, "nu"), _p(m, "nv")
        phi = _sample_as_phi(u2, nu, nv)
        a = nu * np.cos(phi) ** 2 + nv * np.sin(phi) ** 2
        c = np.power(1.0 - u1, 1.0 / (a + 1.0))
    elif k in (Kind.ABC, Kind.HemiEPD):
        c = _sample_projected_isotropic(m, u1)
        phi = TWO_PI * u2
    else:
        raise ConfigError(f"{k.value} has no normal distribution")
    s = np.sqrt(np.maximum(0.0, 1.0 - c * c))
    return np.stack(np.broadcast_arrays(s * np.cos(phi), s * np.sin(phi), c), axis=-1)


def _sample_as_phi(u, nu, nv):
    """Ashikhmin-Shirley azimuth: quarter-domain inversion then unfolding."""
    q = 4.0 * u
    quadrant = np.minimum(np.floor(q), 3.0)
    v = q - quadrant
    base = np.arctan(np.sqrt((nu + 1.0) / (nv + 1.0)) * np.tan(0.5 * np.pi * v))
    return np.select([quadrant == 0, quadrant == 1, quadrant == 2],
                     [base, np.pi - base, np.pi + base], TWO_PI - base)


def _sample_projected_isotropic(m: BrdfModel, u):
    """cos(theta_h) for ABC / Hemi-EPD by inverting the projected-NDF CDF in theta."""
    from .decomp.invert import invert_cdf

    u = np.asarray(u, float)
    if m.kind is Kind.ABC:
        B, C = np.broadcast_arrays(_p(m, "B"), _p(m, "C"), u)[:2]
        total = abc_projected_integral(B, C)

        def cdf(th, i):
            return abc_partial_cdf(B.ravel()[i], C.ravel()[i], np.cos(th)) / total.ravel()[i]

        def pdf(th, i):
            c = np.cos(th)
            return (1.0 + B.ravel()[i] * (1.0 - c)) ** (-C.ravel()[i]) * c * np.sin(th) / total.ravel()[i]
    else:
        kap, gam = np.broadcast_arrays(_p(m, "kappa"), _p(m, "gamma"), u)[:2]
        norm = TWO_PI * epd_norm(kap, gam)

        def cdf(th, i):
            c = np.cos(th)
            k, g = kap.ravel()[i], gam.ravel()[i]
            part = epd_moment(1.0, k, g) - epd_moment(1.0, k, g, c) - 0.5 * (1.0 - c * c)
            return part * norm.ravel()[i]

        def pdf(th, i):
            c = np.cos(th)
            k, g = kap.ravel()[i], gam.ravel()[i]
            return np.expm1(k * np.power(c, g)) * c * np.sin(th) * norm.ravel()[i]
    th = invert_cdf(cdf, u, 0.0, 0.5 * np.pi, pdf=pdf)
    return np.cos(th)


# ---------------------------------------------------------------------------
# Shadowing-masking


def smith_lambda(m: BrdfModel, w) -> np.ndarray:
    """Smith Lambda for GGX / Beckmann with projected anisotropic roughness."""
    w = np.asarray(w, float)
    c, c2, s2, t2, cp2, sp2 = _trig(w)
    ax, ay = _alphas(m)
    alpha2 = ax * ax * cp2 + ay * ay * sp2
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if m.kind in (Kind.IsoGGX, Kind.AnisoGGX):
            lam = 0.5 * (np.sqrt(1.0 + alpha2 * t2) - 1.0)
        else:
            a = 1.0 / np.sqrt(alpha2 * t2)
            lam = np.where(a > 1e6, 0.0,
                           0.5 * (special.erf(a) - 1.0) + np.exp(-a * a) / (2.0 * a * np.sqrt(np.pi)))
    return np.where(c > 0.0, np.where(np.isfinite(lam), lam, 0.0), np.inf)


def smith_lambda_grad(m: BrdfModel, w, param: str) -> np.ndarray:
    """Partial derivative of :func:`smith_lambda` in a roughness parameter."""
    w = np.asarray(w, float)
    c, c2, s2, t2, cp2, sp2 = _trig(w)
    ax, ay = _alphas(m)
    alpha2 = ax * ax * cp2 + ay * ay * sp2
    if param == "alpha":
        dalpha2 = 2.0 * ax * (cp2 + sp2)
    elif param == "alpha_x":
        dalpha2 = 2.0 * ax * cp2
    elif param == "alpha_y":
        dalpha2 = 2.0 * ay * sp2
    else:
        raise ConfigError(f"no shadowing derivative for {param}")
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if m.kind in (Kind.IsoGGX, Kind.AnisoGGX):
            d = 0.25 * t2 / np.sqrt(1.0 + alpha2 * t2) * dalpha2
        else:
            a = 1.0 / np.sqrt(alpha2 * t2)
            dlam_da = -np.exp(-a * a) / (2.0 * a * a * np.sqrt(np.pi))
            da = -0.5 * a / alpha2 * dalpha2
            d = np.where(a > 1e6, 0.0, dlam_da * da)
    return np.where((c > 0.0) & np.isfinite(d), d, 0.0)


def shadowing(m: BrdfModel, wi, wo, wh) -> np.ndarray:
    """Height-correlated Smith G2 for GGX/Beckmann, 1 for other half-vector models."""
    vis = (dot(wi, wh) > 0.0) & (dot(wo, wh) > 0.0)
    if m.kind in (Kind.IsoGGX, Kind.AnisoGGX, Kind.IsoBeckmann, Kind.AnisoBeckmann):
        G = 1.0 / (1.0 + smith_lambda(m, wi) + smith_lambda(m, wo))
    else:
        G = np.ones(np.broadcast_shapes(np.shape(wi)[:-1], np.shape(wo)[:-1]))
    return np.where(vis, G, 0.0)


# ---------------------------------------------------------------------------
# Other model pieces


def hg_phase(c, g):
    """Henyey-Greenstein phase function of the scattering cosine ``c``."""
    g = np.asarray(g, float)
    return (1.0 - g * g) / (4.0 * np.pi * (1.0 + g * g - 2.0 * g * c) ** 1.5)


def hg_phase_dg(c, g):
    g = np.asarray(g, float)
    s = 1.0 + g * g - 2.0 * g * c
    return ((g * g + 3.0) * c + g * (g * g - 5.0)) / (4.0 * np.pi * s ** 2.5)


def oren_nayar_ab(sigma):
    s2 = np.asarray(sigma, float) ** 2
    return 1.0 - 0.5 * s2 / (s2 + 0.33), 0.45 * s2 / (s2 + 0.09)


def oren_nayar_ab_grad(sigma):
    s = np.asarray(sigma, float)
    s2 = s * s
    return -0.33 * s / (s2 + 0.33) ** 2, 0.45 * 0.18 * s / (s2 + 0.09) ** 2


def oren_nayar_b_shape(wi, wo) -> np.ndarray:
    """``max(0, cos(phi_i - phi_o)) sin(a) tan(b) cos(theta_i)``."""
    ci = np.clip(_cos(wi), 0.0, 1.0)
    co = np.clip(_cos(wo), 0.0, 1.0)
    si = np.sqrt(np.maximum(0.0, 1.0 - ci * ci))
    so = np.sqrt(np.maximum(0.0, 1.0 - co * co))
    proj = wi[..., 0] * wo[..., 0] + wi[..., 1] * wo[..., 1]
    denom = si * so
    cos_dphi = np.where(denom > 1e-12, proj / np.where(denom > 1e-12, denom, 1.0), 0.0)
    # sin(max) tan(min) = max(si, so) * min(si, so) / max(ci, co)
    sin_a = np.maximum(si, so)
    tan_b = np.minimum(si, so) / np.maximum(np.maximum(ci, co), 1e-300)
    out = np.maximum(cos_dphi, 0.0) * sin_a * tan_b * ci
    return np.where((_cos(wi) > 0.0) & (_cos(wo) > 0.0), out, 0.0)


def microcylinder_gaussian(theta_h, gamma_v):
    gamma_v = np.asarray(gamma_v, float)
    return np.exp(-0.5 * (theta_h / gamma_v) ** 2) / (np.sqrt(TWO_PI) * gamma_v)


def burley_profile(r, d):
    """Burley's normalised diffusion profile per unit area on the plane."""
    r = np.asarray(r, float)
    d = np.asarray(d, float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return (np.exp(-r / d) + np.exp(-r / (3.0 * d))) / (8.0 * np.pi * d * r)


# ---------------------------------------------------------------------------
# Evaluation


def eval(m: BrdfModel, wi, wo, cosine_weighted: bool = True,
         shadowing_model: Optional[BrdfModel] = None) -> np.ndarray:  # noqa: A001
    """Evaluate the BRDF, by default multiplied by ``cos(theta_i)``.

    ``shadowing_model`` evaluates the Smith term with different parameters,
    which lets finite differences hold G fixed.
    """
    wi = np.asarray(wi, float)
    wo = np.asarray(wo, float)
    ci, co = _cos(wi), _cos(wo)
    k = m.kind
    if k is Kind.BurleyProfile:
        raise ConfigError("BurleyProfile is a radial profile, use burley_profile")
    if k is Kind.HanrahanKrueger:
        upper = (ci > 0.0) & (co > 0.0)
        f = _p(m, "albedo") * hg_phase(-dot(wi, wo), _p(m, "g")) / np.where(upper, ci + co, 1.0)
    elif k is Kind.TwoLobeMixture:
        w = _p(m, "w")
        f1 = eval(m.lobes[0], wi, wo, False)
        f2 = eval(m.lobes[1], wi, wo, False)
        f = w * f1 + (1.0 - w) * f2
        upper = (ci > 0.0) & (co > 0.0)
    else:
        upper = (ci > 0.0) & (co > 0.0)
        safe_ci = np.where(upper, ci, 1.0)
        safe_co = np.where(upper, co, 1.0)
        if k is Kind.Lambertian:
            f = _p(m, "rho") * INV_PI * np.ones_like(ci)
        elif k is Kind.Minnaert:
            n = _p(m, "n")
            f = _p(m, "rho") * (n + 2.0) / TWO_PI * np.power(np.maximum(ci, 0.0), n)
        elif k is Kind.OrenNayar:
            A, B = oren_nayar_ab(_p(m, "sigma"))
            f = _p(m, "rho") * INV_PI * (A + B * oren_nayar_b_shape(wi, wo) / safe_ci)
        elif k is Kind.Microcylinder:
            wh = half_vector_unchecked(wi, wo)
            th = np.arccos(np.clip(_cos(wh), -1.0, 1.0))
            kd = _p(m, "kd")
            F = fresnel_schlick(_p(m, "F0"), dot(wi, wh))
            lobe = (1.0 - kd) * microcylinder_gaussian(th, _p(m, "gamma_v")) + kd
            f = _p(m, "albedo") * F * lobe / (safe_ci + safe_co)
        elif k in HALF_VECTOR_KINDS:
            wh = half_vector_unchecked(wi, wo)
            D = ndf(m, wh)
            F = fresnel_schlick(_p(m, "F0"), dot(wi, wh))
            G = shadowing(shadowing_model or m, wi, wo, wh)
            if k is Kind.AshikhminShirley:
                hk = np.maximum(dot(wi, wh), 1e-300)
                f = F * D / (4.0 * hk * np.maximum(safe_ci, safe_co))
            else:
                f = F * G * D / (4.0 * safe_ci * safe_co)
        else:
            raise ConfigError(f"cannot evaluate {k.value}")
    if cosine_weighted:
        f = f * np.maximum(ci, 0.0)
    return np.where(upper, f, 0.0)


# ---------------------------------------------------------------------------
# Forward sampling


def _hg_sample_cos(u, g):
    g = np.asarray(g, float)
    small = np.abs(g) < 1e-6
    gs = np.where(small, 1.0, g)
    sq = (1.0 - gs * gs) / (1.0 + gs - 2.0 * gs * u)
    c = (1.0 + gs * gs - sq * sq) / (2.0 * gs)
    return np.clip(np.where(small, 1.0 - 2.0 * u, c), -1.0, 1.0)


def scatter_to_wi(d_local, wo):
    """Map a direction in the frame whose +z axis is ``wo`` to ``wi = -d``."""
    t, s = frame_from_axis(wo)
    return -from_frame(d_local, t, s, np.asarray(wo, float))


def wi_to_scatter(wi, wo):
    t, s = frame_from_axis(wo)
    return to_frame(-np.asarray(wi, float), t, s, np.asarray(wo, float))


def _sample_wi(m: BrdfModel, wo, u):
    """Forward wi draw for a single (non-mixture) model."""
    k = m.kind
    if k in (Kind.Lambertian, Kind.OrenNayar, Kind.Microcylinder):
        return cosine_sample_hemisphere(u)
    if k is Kind.Minnaert:
        n = _p(m, "n")
        c = np.power(1.0 - u[..., 0], 1.0 / (n + 2.0))
        s = np.sqrt(np.maximum(0.0, 1.0 - c * c))
        phi = TWO_PI * u[..., 1]
        return np.stack(np.broadcast_arrays(s * np.cos(phi), s * np.sin(phi), c), axis=-1)
    if k is Kind.HanrahanKrueger:
        c = _hg_sample_cos(u[..., 0], _p(m, "g"))
        s = np.sqrt(np.maximum(0.0, 1.0 - c * c))
        phi = TWO_PI * u[..., 1]
        d = np.stack(np.broadcast_arrays(s * np.cos(phi), s * np.sin(phi), c), axis=-1)
        return scatter_to_wi(d, wo)
    if k in HALF_VECTOR_KINDS:
        wh = ndf_sample(m, u)
        return reflect(wo, wh)
    raise ConfigError(f"cannot sample {k.value}")


def pdf_forward(m: BrdfModel, wo, wi) -> np.ndarray:
    """Solid-angle density of :func:`sample_forward` at ``wi``.

    Half-vector models and Hanrahan-Krueger sample over the full sphere of
    ``wi``; the density is not truncated at the horizon.
    """
    wi = np.asarray(wi, float)
    wo = np.asarray(wo, float)
    k = m.kind
    ci = _cos(wi)
    if k in (Kind.Lambertian, Kind.OrenNayar, Kind.Microcylinder):
        return np.maximum(ci, 0.0) * INV_PI
    if k is Kind.Minnaert:
        n = _p(m, "n")
        return (n + 2.0) / TWO_PI * np.power(np.maximum(ci, 0.0), n + 1.0)
    if k is Kind.HanrahanKrueger:
        return hg_phase(-dot(wi, wo), _p(m, "g"))
    if k is Kind.TwoLobeMixture:
        w = _p(m, "w")
        return w * pdf_forward(m.lobes[0], wo, wi) + (1.0 - w) * pdf_forward(m.lobes[1], wo, wi)
    if k in HALF_VECTOR_KINDS:
        wh = half_vector_unchecked(wi, wo)
        woh = dot(wo, wh)
        ok = woh > 0.0
        return np.where(ok, ndf_pdf(m, wh) * 0.25 / np.where(ok, woh, 1.0), 0.0)
    raise ConfigError(f"cannot sample {k.value}")


def sample_forward(m: BrdfModel, wo, u) -> BrdfSample:
    """Standard forward importance sampling.

    ``u`` has shape ``(..., 2)``; TwoLobeMixture reuses ``u[..., 0]`` to pick a
    lobe with probability ``w`` and rescales it.
    """
    u = np.asarray(u, float)
    wo = np.asarray(wo, float)
    if m.kind is Kind.TwoLobeMixture:
        w = _p(m, "w")
        pick1 = u[..., 0] < w
        u0 = np.where(pick1, u[..., 0] / np.where(w > 0, w, 1.0),
                      (u[..., 0] - w) / np.where(w < 1, 1.0 - w, 1.0))
        uu = np.stack([np.clip(u0, 0.0, np.nextafter(1.0, 0.0)), u[..., 1]], axis=-1)
        wi = np.where(pick1[..., None], _sample_wi(m.lobes[0], wo, uu), _sample_wi(m.lobes[1], wo, uu))
    else:
        wi = _sample_wi(m, wo, u)
    pdf = pdf_forward(m, wo, wi)
    valid = (_cos(wi) > 0.0) & (_cos(wo) > 0.0) & (pdf > 0.0)
    value = np.where(valid, eval(m, wi, wo), 0.0)
    return BrdfSample(wi, pdf, value, valid)
