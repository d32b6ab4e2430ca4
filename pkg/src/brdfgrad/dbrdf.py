"""Closed-form parameter derivatives of the analytic BRDFs."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import brdf as _b
from .brdf import (INV_PI, TWO_PI, BrdfModel, ConfigError, Kind, _alphas, _cos, _p, _trig,
                   aniso_a, fresnel_schlick, shadowing, smith_lambda, smith_lambda_grad)
from .core import dot, half_vector_unchecked

ALIASES = {"α": "alpha", "αx": "alpha_x", "αy": "alpha_y", "κ": "kappa", "σ": "sigma",
           "ρ": "rho", "γ": "gamma", "γv": "gamma_v", "ax": "alpha_x", "ay": "alpha_y"}

SUPPORTED = {
    Kind.Lambertian: ("rho",),
    Kind.IsoGGX: ("alpha",),
    Kind.IsoBeckmann: ("alpha",),
    Kind.AnisoGGX: ("alpha_x", "alpha_y"),
    Kind.AnisoBeckmann: ("alpha_x", "alpha_y"),
    Kind.BlinnPhong: ("n",),
    Kind.Minnaert: ("n",),
    Kind.AshikhminShirley: ("nu", "nv"),
    Kind.ABC: ("B", "C"),
    Kind.HemiEPD: ("kappa",),
    Kind.HanrahanKrueger: ("g",),
    Kind.OrenNayar: ("sigma",),
    Kind.TwoLobeMixture: ("w",),
    Kind.Microcylinder: ("kd",),
    Kind.BurleyProfile: ("d",),
}


@dataclass(frozen=True)
class DerivativeTarget:
    model_kind: Kind
    param_name: str

    def __post_init__(self):
        try:
            kind = Kind(self.model_kind)
        except ValueError:
            raise ConfigError(f"unknown material kind {self.model_kind!r}") from None
        name = ALIASES.get(self.param_name, self.param_name)
        if name not in SUPPORTED[kind]:
            raise ConfigError(f"unsupported derivative target {kind.value}:{self.param_name}")
        object.__setattr__(self, "model_kind", kind)
        object.__setattr__(self, "param_name", name)

    def __str__(self):
        return f"{self.model_kind.value}:{self.param_name}"


def as_target(m: BrdfModel, target) -> DerivativeTarget:
    if isinstance(target, DerivativeTarget):
        if target.model_kind is not m.kind:
            raise ConfigError(f"target {target} does not match model {m.kind.value}")
        return target
    return DerivativeTarget(m.kind, target)


# ---------------------------------------------------------------------------
# NDF derivatives


def ndf_product_terms(m: BrdfModel, param: str, wh):
    """Split ``dD = dN * g + N * dg`` for ``D = N g``.

    Returns ``(dN * g, N * dg)``; each is single-signed over the hemisphere.
    """
    wh = np.asarray(wh, float)
    c, c2, s2, t2, cp2, sp2 = _trig(wh)
    up = c > 0.0
    k = m.kind
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        if k in (Kind.AnisoGGX, Kind.AnisoBeckmann, Kind.IsoGGX, Kind.IsoBeckmann):
            ax, ay = _alphas(m)
            N = 1.0 / (np.pi * ax * ay)
            a = aniso_a(cp2, sp2, ax, ay)
            if param in ("alpha_x", "alpha"):
                dN = -N / ax
                da = -2.0 * cp2 / ax ** 3
            elif param == "alpha_y":
                dN = -N / ay
                da = -2.0 * sp2 / ay ** 3
            else:
                raise ConfigError(f"no product split for {k.value}:{param}")
            if param == "alpha":
                dN = -2.0 * N / ax
                da = -2.0 * (cp2 + sp2) / ax ** 3
            if k in (Kind.AnisoGGX, Kind.IsoGGX):
                base = a * s2 + c2
                g = base ** -2.0
                dg = -2.0 * base ** -3.0 * s2 * da
            else:
                tt = np.where(up, t2, 0.0)
                g = np.exp(-a * tt) / np.where(up, c2 * c2, 1.0)
                dg = -g * tt * da
        elif k is Kind.AshikhminShirley:
            nu, nv = _p(m, "nu"), _p(m, "nv")
            N = np.sqrt((nu + 1.0) * (nv + 1.0)) / TWO_PI
            ex = nu * cp2 + nv * sp2
            g = np.power(c, ex)
            lc = np.log(np.where(up, c, 1.0))
            if param == "nu":
                dN = N / (2.0 * (nu + 1.0))
                dg = g * lc * cp2
            elif param == "nv":
                dN = N / (2.0 * (nv + 1.0))
                dg = g * lc * sp2
            else:
                raise ConfigError(f"no product split for {k.value}:{param}")
        elif k is Kind.ABC:
            B, C = _p(m, "B"), _p(m, "C")
            N = _b.abc_norm(B, C)
            I = _b.abc_projected_integral(B, C)
            dIB, dIC = _b.abc_projected_integral_grad(B, C)
            v = 1.0 + B * (1.0 - c)
            g = v ** (-C)
            if param == "B":
                dN = -dIB / (TWO_PI * I * I)
                dg = -C * (1.0 - c) * v ** (-C - 1.0)
            elif param == "C":
                dN = -dIC / (TWO_PI * I * I)
                dg = -np.log(v) * g
            else:
                raise ConfigError(f"no product split for {k.value}:{param}")
        elif k is Kind.HemiEPD:
            if param != "kappa":
                raise ConfigError(f"no product split for {k.value}:{param}")
            kap, gam = _p(m, "kappa"), _p(m, "gamma")
            N = _b.epd_norm(kap, gam)
            dN = _b.epd_norm_grad(kap, gam)
            cg = np.power(c, gam)
            g = np.expm1(kap * cg)
            dg = cg * np.exp(kap * cg)
        elif k is Kind.BlinnPhong:
            if param != "n":
                raise ConfigError(f"no product split for {k.value}:{param}")
            n = _p(m, "n")
            N = (n + 2.0) / TWO_PI
            dN = 1.0 / TWO_PI
            g = np.power(c, n)
            dg = g * np.log(np.where(up, c, 1.0))
        else:
            raise ConfigError(f"{k.value} has no normal distribution")
    t1 = np.where(up, dN * g, 0.0)
    t2_ = np.where(up, N * dg, 0.0)
    return t1, t2_


def ndf_derivative(m: BrdfModel, param: str, wh) -> np.ndarray:
    """Parameter derivative of :func:`brdf.ndf`."""
    wh = np.asarray(wh, float)
    k = m.kind
    if k in (Kind.IsoGGX, Kind.IsoBeckmann):
        if param != "alpha":
            raise ConfigError(f"unsupported derivative target {k.value}:{param}")
        c, c2, s2, t2, cp2, sp2 = _trig(wh)
        up = c > 0.0
        a = _p(m, "alpha")
        a2 = a * a
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            if k is Kind.IsoGGX:
                # D = a^2 / (pi (a^2 c^2 + s^2)^2)
                q = a2 * c2 + s2
                d = 2.0 * a * (s2 - a2 * c2) / (np.pi * q ** 3)
            else:
                tt = np.where(up, t2, 0.0)
                D = np.exp(-tt / a2) / (np.pi * a2 * np.where(up, c2 * c2, 1.0))
                d = 2.0 * D * (tt - a2) / (a2 * a)
        return np.where(up, d, 0.0)
    t1, t2 = ndf_product_terms(m, param, wh)
    return t1 + t2


def ndf_positional_derivative(m: BrdfModel, wh, axis: int = 0) -> np.ndarray:
    """Derivative of D with respect to the x (axis=0) or y (axis=1) component
    of the unnormalised half vector, holding the other components fixed.

    Odd under the mirror ``(x, y, z) -> (-x, -y, z)``.
    """
    wh = np.asarray(wh, float)
    if m.kind not in (Kind.IsoGGX, Kind.AnisoGGX, Kind.IsoBeckmann, Kind.AnisoBeckmann):
        raise ConfigError(f"positional derivative not available for {m.kind.value}")
    ax, ay = _alphas(m)
    x, y, z = wh[..., 0], wh[..., 1], wh[..., 2]
    ai = ax if axis == 0 else ay
    comp = wh[..., axis]
    if m.kind in (Kind.IsoGGX, Kind.AnisoGGX):
        q = x * x / (ax * ax) + y * y / (ay * ay) + z * z
        out = -4.0 * comp / (ai * ai) / (np.pi * ax * ay * q ** 3)
    else:
        e = np.exp(-(x * x / (ax * ax) + y * y / (ay * ay)) / (z * z))
        D = e / (np.pi * ax * ay * z ** 4)
        out = -2.0 * comp / (ai * ai * z * z) * D
    return np.where(z > 0.0, out, 0.0)


# ---------------------------------------------------------------------------
# BRDF derivatives


def eval_derivative(m: BrdfModel, target, wi, wo, include_dG: bool = False,
                    cosine_weighted: bool = True) -> np.ndarray:
    """Derivative of the (cosine-weighted) BRDF with respect to ``target``.

    The Smith shadowing derivative is left out unless ``include_dG``.
    """
    tgt = as_target(m, target)
    p = tgt.param_name
    wi = np.asarray(wi, float)
    wo = np.asarray(wo, float)
    ci, co = _cos(wi), _cos(wo)
    upper = (ci > 0.0) & (co > 0.0)
    safe_ci = np.where(upper, ci, 1.0)
    safe_co = np.where(upper, co, 1.0)
    k = m.kind
    if k is Kind.BurleyProfile:
        raise ConfigError("BurleyProfile is a radial profile, use burley_profile_derivative")
    if k is Kind.Lambertian:
        df = INV_PI * np.ones_like(ci)
    elif k is Kind.Minnaert:
        n = _p(m, "n")
        c = np.where(upper, ci, 1.0)
        df = _p(m, "rho") / TWO_PI * np.power(c, n) * (1.0 + (n + 2.0) * np.log(c))
    elif k is Kind.HanrahanKrueger:
        df = _p(m, "albedo") * _b.hg_phase_dg(-dot(wi, wo), _p(m, "g")) / (safe_ci + safe_co)
    elif k is Kind.OrenNayar:
        dA, dB = _b.oren_nayar_ab_grad(_p(m, "sigma"))
        df = _p(m, "rho") * INV_PI * (dA + dB * _b.oren_nayar_b_shape(wi, wo) / safe_ci)
    elif k is Kind.TwoLobeMixture:
        df = (_b.eval(m.lobes[0], wi, wo, False) - _b.eval(m.lobes[1], wi, wo, False))
    elif k is Kind.Microcylinder:
        wh = half_vector_unchecked(wi, wo)
        th = np.arccos(np.clip(_cos(wh), -1.0, 1.0))
        F = fresnel_schlick(_p(m, "F0"), dot(wi, wh))
        gv = _b.microcylinder_gaussian(th, _p(m, "gamma_v"))
        df = _p(m, "albedo") * F * (1.0 - gv) / (safe_ci + safe_co)
    elif k in _b.HALF_VECTOR_KINDS:
        wh = half_vector_unchecked(wi, wo)
        F = fresnel_schlick(_p(m, "F0"), dot(wi, wh))
        dD = ndf_derivative(m, p, wh)
        if k is Kind.AshikhminShirley:
            hk = np.maximum(dot(wi, wh), 1e-300)
            df = F * dD / (4.0 * hk * np.maximum(safe_ci, safe_co))
        else:
            G = shadowing(m, wi, wo, wh)
            num = G * dD
            if include_dG and k in (Kind.IsoGGX, Kind.AnisoGGX, Kind.IsoBeckmann, Kind.AnisoBeckmann):
                dlam = smith_lambda_grad(m, wi, p) + smith_lambda_grad(m, wo, p)
                num = num - G * G * dlam * _b.ndf(m, wh)
            df = F * num / (4.0 * safe_ci * safe_co)
    else:
        raise ConfigError(f"unsupported derivative target {tgt}")
    if cosine_weighted:
        df = df * np.maximum(ci, 0.0)
    return np.where(upper, df, 0.0)


def finite_difference(m: BrdfModel, target, wi, wo, h: Optional[float] = None,
                      include_dG: bool = False) -> np.ndarray:
    """Central difference ``(f(p + h) - f(p - h)) / 2h`` of the cosine-weighted BRDF.

    With ``include_dG`` off the Smith term is frozen at the nominal
    parameters, matching :func:`eval_derivative`.
    """
    tgt = as_target(m, target)
    p = tgt.param_name
    v = np.asarray(m.params[p], float)
    if h is None:
        h = 1e-5 * max(1.0, float(np.max(np.abs(v))))
    try:
        mp = m.replace(**{p: v + h})
        mm = m.replace(**{p: v - h})
    except ConfigError as exc:
        raise ConfigError(f"finite difference step leaves the valid range: {exc}") from None
    if m.kind is Kind.BurleyProfile:
        raise ConfigError("BurleyProfile is a radial profile, use burley_profile_derivative")
    frozen = None if include_dG else m
    fp = _b.eval(mp, wi, wo, shadowing_model=frozen)
    fm = _b.eval(mm, wi, wo, shadowing_model=frozen)
    return (fp - fm) / (2.0 * h)


def burley_profile_derivative(r, d):
    """d/dd of :func:`brdf.burley_profile`."""
    r = np.asarray(r, float)
    d = np.asarray(d, float)
    N = 1.0 / (8.0 * np.pi * d)
    e1, e3 = np.exp(-r / d), np.exp(-r / (3.0 * d))
    with np.errstate(divide="ignore", invalid="ignore"):
        g = (e1 + e3) / r
    dg = (e1 + e3 / 3.0) / (d * d)
    return -N / d * g + N * dg


def gaussian_density(x, mu, sigma):
    x = np.asarray(x, float)
    return np.exp(-0.5 * ((x - mu) / sigma) ** 2) / (np.sqrt(TWO_PI) * sigma)


def gaussian_mean_derivative(x, mu, sigma):
    """d/dmu of the normal density: ``(x - mu) / sigma^2 * N(x; mu, sigma)``."""
    if sigma <= 0:
        raise ConfigError("sigma must be positive")
    x = np.asarray(x, float)
    return (x - mu) / sigma ** 2 * gaussian_density(x, mu, sigma)
