"""Single-signed decompositions of BRDF derivatives into sampleable lobes."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

import numpy as np

from .. import brdf as _b
from .. import dbrdf as _d
from ..brdf import TWO_PI, BrdfModel, ConfigError, Kind
from ..core import as_stream, dot, half_vector_unchecked
from . import lobes as L
from .invert import NonMonotoneCDF, invert_cdf
from .lobes import BURLEY_RMAX, LobeSampler, forward_lobe


class Decomposition(str, Enum):
    Positivization = "Positivization"
    Product = "Product"
    Mixture = "Mixture"


@dataclass(frozen=True, eq=False)
class LobePair:
    """Two single-signed lobes whose signed targets sum to the derivative.

    ``wi_terms(wi, wo)`` returns the two cosine-weighted derivative pieces in
    incident-direction space; ``native_terms(k, x, wo)`` returns piece ``k`` in
    the native space of lobe ``k``.  ``forward_index`` names the lobe whose
    sampler is the model's plain forward sampler, if any.
    """

    positive: LobeSampler
    negative: LobeSampler
    kind: Decomposition
    overlap: bool
    model: Optional[BrdfModel] = None
    target: Optional[_d.DerivativeTarget] = None
    wi_terms: Optional[Callable] = field(default=None, repr=False)
    native_terms: Optional[Callable] = field(default=None, repr=False)
    forward_index: Optional[int] = None
    weight_fn: Optional[Callable] = field(default=None, repr=False)

    def __post_init__(self):
        if self.positive.sign != 1 or self.negative.sign != -1:
            raise ValueError("lobe signs must be (+1, -1)")
        if self.kind is Decomposition.Positivization and self.overlap:
            raise ValueError("positivization lobes cannot overlap")

    @property
    def lobes(self):
        return (self.positive, self.negative)

    @property
    def has_wi_view(self) -> bool:
        return self.wi_terms is not None

    def term_wi(self, k: int, wi, wo):
        if self.wi_terms is None:
            raise ConfigError(f"{self.positive.space} decomposition has no incident-direction view")
        return self.wi_terms(wi, wo)[k]

    def integrand_wi(self, wi, wo):
        a, b = self.wi_terms(wi, wo)
        return a + b

    def term_native(self, k: int, x, wo=None):
        if self.native_terms is not None:
            return self.native_terms(k, x, wo)
        lobe = self.lobes[k]
        wi, jac = lobe.to_wi(x, wo)
        return self.term_wi(k, wi, wo) * jac

    def weight(self, k: int, x, wo=None):
        """``term / pdf`` for a native sample of lobe ``k`` (0 where pdf = 0)."""
        if self.weight_fn is not None:
            return self.weight_fn(k, x, wo)
        t = self.term_native(k, x, wo)
        p = self.lobes[k].pdf(x, wo)
        ok = p > 0.0
        return np.where(ok, t / np.where(ok, p, 1.0), 0.0)


# ---------------------------------------------------------------------------
# helpers


def _signed_split(v):
    return np.maximum(v, 0.0), np.minimum(v, 0.0)


def _derivative_split(m, tgt):
    def terms(wi, wo):
        return _signed_split(_d.eval_derivative(m, tgt, wi, wo))
    return terms


def _microfacet_factor(m: BrdfModel, wi, wo):
    """``df = factor * dD`` (cosine weighted, shadowing held fixed)."""
    wi = np.asarray(wi, float)
    wo = np.asarray(wo, float)
    ci, co = wi[..., 2], wo[..., 2]
    up = (ci > 0.0) & (co > 0.0)
    wh = half_vector_unchecked(wi, wo)
    F = _b.fresnel_schlick(m.params["F0"], dot(wi, wh))
    sci = np.where(up, ci, 1.0)
    sco = np.where(up, co, 1.0)
    if m.kind is Kind.AshikhminShirley:
        hk = np.maximum(dot(wi, wh), 1e-300)
        fac = F / (4.0 * hk * np.maximum(sci, sco)) * sci
    else:
        G = _b.shadowing(m, wi, wo, wh)
        fac = F * G / (4.0 * sci * sco) * sci
    return np.where(up, fac, 0.0), wh


# ---------------------------------------------------------------------------
# builders


POSITIVIZABLE = {(Kind.IsoGGX, "alpha"), (Kind.IsoBeckmann, "alpha"), (Kind.BlinnPhong, "n"),
                 (Kind.Minnaert, "n"), (Kind.HanrahanKrueger, "g")}
PRODUCT = {(Kind.AnisoGGX, "alpha_x"), (Kind.AnisoGGX, "alpha_y"),
           (Kind.AnisoBeckmann, "alpha_x"), (Kind.AnisoBeckmann, "alpha_y"),
           (Kind.AshikhminShirley, "nu"), (Kind.AshikhminShirley, "nv"),
           (Kind.ABC, "B"), (Kind.ABC, "C"), (Kind.HemiEPD, "kappa"), (Kind.BurleyProfile, "d")}
MIXTURE = {(Kind.TwoLobeMixture, "w"), (Kind.OrenNayar, "sigma"), (Kind.Microcylinder, "kd")}


def build_positivized(m: BrdfModel, target) -> LobePair:
    tgt = _d.as_target(m, target)
    key = (m.kind, tgt.param_name)
    if key not in POSITIVIZABLE:
        raise ConfigError(f"positivization inapplicable for {tgt}: the derivative's sign "
                          "regions have no closed-form integrable boundary")
    p = m.params
    k = m.kind
    if k in (Kind.IsoGGX, Kind.IsoBeckmann):
        pos = L.IsoMicrofacetLobe(k, p["alpha"], +1)
        neg = L.IsoMicrofacetLobe(k, p["alpha"], -1)

        def native(j, x, wo):
            v = _d.ndf_derivative(m, "alpha", x) * np.maximum(np.asarray(x)[..., 2], 0.0)
            return _signed_split(v)[j]
    elif k is Kind.BlinnPhong:
        pos = L.BlinnPhongLobe(p["n"], +1, "wh")
        neg = L.BlinnPhongLobe(p["n"], -1, "wh")

        def native(j, x, wo):
            v = _d.ndf_derivative(m, "n", x) * np.maximum(np.asarray(x)[..., 2], 0.0)
            return _signed_split(v)[j]
    elif k is Kind.Minnaert:
        pos = L.BlinnPhongLobe(p["n"], +1, "wi", scale=p["rho"])
        neg = L.BlinnPhongLobe(p["n"], -1, "wi", scale=p["rho"])
        native = None
    else:
        pos = L.HenyeyGreensteinLobe(p["g"], +1)
        neg = L.HenyeyGreensteinLobe(p["g"], -1)

        def native(j, x, wo):
            return _signed_split(_b.hg_phase_dg(np.asarray(x)[..., 2], p["g"]))[j]
    return LobePair(pos, neg, Decomposition.Positivization, False, m, tgt,
                    wi_terms=_derivative_split(m, tgt), native_terms=native)


def build_product(m: BrdfModel, target) -> LobePair:
    tgt = _d.as_target(m, target)
    prm = tgt.param_name
    key = (m.kind, prm)
    if key not in PRODUCT:
        raise ConfigError(f"no product decomposition for {tgt}")
    p = m.params
    k = m.kind
    if k is Kind.BurleyProfile:
        d = p["d"]
        lobe1 = L.BurleyLobe(d, 1, -1)
        lobe2 = L.BurleyLobe(d, 2, +1)

        def native(j, x, wo):
            # piece 0: N dg (positive shape lobe); piece 1: N' g (profile lobe)
            r = np.linalg.norm(np.asarray(x, float), axis=-1)
            N = 1.0 / (8.0 * np.pi * d)
            e1, e3 = np.exp(-r / d), np.exp(-r / (3.0 * d))
            if j == 0:
                return N * (e1 + e3 / 3.0) / (d * d)
            with np.errstate(divide="ignore", invalid="ignore"):
                return np.where(r > 0, -N / d * (e1 + e3) / np.where(r > 0, r, 1.0), 0.0)
        return LobePair(lobe2, lobe1, Decomposition.Product, True, m, tgt,
                        native_terms=native, forward_index=1)

    if k in (Kind.AnisoGGX, Kind.AnisoBeckmann):
        a1 = p["alpha_x"] if prm == "alpha_x" else p["alpha_y"]
        lobe1 = L.ForwardLobe(m, -1, mass=1.0 / np.asarray(a1, float), exact=True)
        lobe2 = L.AnisoShapeLobe(k, p["alpha_x"], p["alpha_y"], prm, +1)
    elif k is Kind.AshikhminShirley:
        n1 = p[prm]
        lobe1 = L.ForwardLobe(m, +1, mass=0.5 / (np.asarray(n1, float) + 1.0), exact=True)
        lobe2 = L.AshikhminShirleyShapeLobe(p["nu"], p["nv"], prm, -1)
    elif k is Kind.ABC:
        I = _b.abc_projected_integral(p["B"], p["C"])
        dIB, dIC = _b.abc_projected_integral_grad(p["B"], p["C"])
        dI = dIB if prm == "B" else dIC
        lobe1 = L.ForwardLobe(m, +1, mass=np.abs(dI / I), exact=True)
        lobe2 = L.ABCShapeLobe(p["B"], p["C"], prm, -1)
    else:
        N = _b.epd_norm(p["kappa"], p["gamma"])
        dN = _b.epd_norm_grad(p["kappa"], p["gamma"])
        lobe1 = L.ForwardLobe(m, -1, mass=np.abs(dN / N), exact=True)
        lobe2 = L.EPDShapeLobe(p["kappa"], p["gamma"], +1)
    no_cos = k is Kind.AshikhminShirley

    def native(j, x, wo):
        t = _d.ndf_product_terms(m, prm, x)
        # piece 0 belongs to the forward lobe (N' g), piece 1 to the shape lobe
        v = t[0] if lobes_of[j] is lobe1 else t[1]
        return v if no_cos else v * np.maximum(np.asarray(x)[..., 2], 0.0)

    def wi_terms(wi, wo):
        fac, wh = _microfacet_factor(m, wi, wo)
        t1, t2 = _d.ndf_product_terms(m, prm, wh)
        pieces = {id(lobe1): fac * t1, id(lobe2): fac * t2}
        return pieces[id(lobes_of[0])], pieces[id(lobes_of[1])]

    lobes_of = (lobe1, lobe2) if lobe1.sign > 0 else (lobe2, lobe1)
    return LobePair(lobes_of[0], lobes_of[1], Decomposition.Product, True, m, tgt,
                    wi_terms=wi_terms, native_terms=native,
                    forward_index=0 if lobes_of[0] is lobe1 else 1)


def build_mixture(m: BrdfModel, target) -> LobePair:
    tgt = _d.as_target(m, target)
    key = (m.kind, tgt.param_name)
    if key not in MIXTURE:
        raise ConfigError(f"no mixture decomposition for {tgt}")
    p = m.params
    k = m.kind
    if k is Kind.TwoLobeMixture:
        f1, f2 = m.lobes

        def component(sub, sign):
            if sub.kind is Kind.Lambertian:
                return L.CosineLobe(sign, scale=sub.params["rho"], exact=True,
                                    name=f"mixture:{sub.kind.value}")
            return L.ForwardLobe(sub, sign)

        pos, neg = component(f1, +1), component(f2, -1)

        def wi_terms(wi, wo):
            return _b.eval(f1, wi, wo), -_b.eval(f2, wi, wo)
        return LobePair(pos, neg, Decomposition.Mixture, True, m, tgt, wi_terms=wi_terms)

    if k is Kind.OrenNayar:
        dA, dB = _b.oren_nayar_ab_grad(p["sigma"])
        rho = p["rho"]
        pos = L.OrenNayarBLobe(p["sigma"], rho, +1)
        neg = L.CosineLobe(-1, scale=np.abs(dA) * rho, exact=True, name="OrenNayar:A")

        def wi_terms(wi, wo):
            wi = np.asarray(wi, float)
            wo = np.asarray(wo, float)
            up = (wi[..., 2] > 0.0) & (wo[..., 2] > 0.0)
            tb = rho / np.pi * dB * _b.oren_nayar_b_shape(wi, wo)
            ta = rho / np.pi * dA * wi[..., 2]
            return np.where(up, tb, 0.0), np.where(up, ta, 0.0)
        return LobePair(pos, neg, Decomposition.Mixture, True, m, tgt, wi_terms=wi_terms,
                        forward_index=1)

    pos = L.CosineLobe(+1, scale=1.0, exact=False, name="Microcylinder:flat")
    neg = L.HalfGaussianThetaLobe(p["gamma_v"], -1)

    def wi_terms(wi, wo):
        wi = np.asarray(wi, float)
        wo = np.asarray(wo, float)
        ci, co = wi[..., 2], wo[..., 2]
        up = (ci > 0.0) & (co > 0.0)
        wh = half_vector_unchecked(wi, wo)
        th = np.arccos(np.clip(wh[..., 2], -1.0, 1.0))
        F = _b.fresnel_schlick(p["F0"], dot(wi, wh))
        base = p["albedo"] * F * ci / np.where(up, ci + co, 1.0)
        gv = _b.microcylinder_gaussian(th, p["gamma_v"])
        return np.where(up, base, 0.0), np.where(up, -base * gv, 0.0)
    return LobePair(pos, neg, Decomposition.Mixture, True, m, tgt, wi_terms=wi_terms,
                    forward_index=0)


def build(m: BrdfModel, target, decomposition=None) -> LobePair:
    """Build the natural decomposition for a target (or the one requested)."""
    tgt = _d.as_target(m, target)
    key = (m.kind, tgt.param_name)
    if decomposition is None:
        if key in POSITIVIZABLE:
            decomposition = Decomposition.Positivization
        elif key in PRODUCT:
            decomposition = Decomposition.Product
        elif key in MIXTURE:
            decomposition = Decomposition.Mixture
        else:
            raise ConfigError(f"no decomposition registered for {tgt}")
    decomposition = Decomposition(decomposition)
    return {Decomposition.Positivization: build_positivized,
            Decomposition.Product: build_product,
            Decomposition.Mixture: build_mixture}[decomposition](m, tgt)


def gaussian_demo_pair(mu: float = 0.0, sigma: float = 1.0) -> LobePair:
    """Positivized lobes of ``d/dmu`` of a normal density on the real line."""
    if sigma <= 0:
        raise ConfigError("sigma must be positive")
    pos = L.GaussianHalfLobe(mu, sigma, +1)
    neg = L.GaussianHalfLobe(mu, sigma, -1)
    scale = 1.0 / (sigma ** 2 * np.sqrt(TWO_PI) * sigma)

    def native(j, x, wo):
        lobe = (pos, neg)[j]
        t = lobe.shape(x)
        return _signed_split(t * scale)[j]

    def weight(j, x, wo):
        lobe = (pos, neg)[j]
        t = lobe.shape(x)
        # term = t * scale and pdf = sign * t / sigma^2 share the factor t
        ratio = np.where(t != 0.0, t / np.where(t != 0.0, t, 1.0), 1.0)
        return lobe.sign * (scale * sigma ** 2) * ratio

    return LobePair(pos, neg, Decomposition.Positivization, False, native_terms=native,
                    weight_fn=weight)


# ---------------------------------------------------------------------------
# diagnostics


@dataclass
class ConstancyReport:
    max_rel_deviation: float
    means: tuple

    def __getitem__(self, key):
        return getattr(self, key)


def lobe_weight_constancy_check(pair: LobePair, n: int, rng=None, wo=None) -> ConstancyReport:
    """Sample ``n`` points per lobe and report the spread of ``|term / pdf|``."""
    rng = as_stream(rng if rng is not None else 0)
    worst = 0.0
    means = []
    for k, lobe in enumerate(pair.lobes):
        x = lobe.sample(rng.uniform(n, 2), wo)
        w = np.abs(pair.weight(k, x, wo))
        w = w[lobe.pdf(x, wo) > 0.0]
        mean = float(np.mean(w))
        means.append(mean)
        if mean > 0:
            worst = max(worst, float(np.max(np.abs(w - mean)) / mean))
    return ConstancyReport(worst, tuple(means))


def pdf_table(lobe: LobeSampler, n_theta: int = 64, n_phi: int = 128, wo=None):
    """Tabulate a lobe pdf on a midpoint grid.

    Rows are ``(theta, phi, pdf, cdf)``; ``cdf`` is the mass accumulated over
    all azimuths up to and including the row's polar band.  For radial lobes
    the first column is the radius, for line lobes the coordinate.
    """
    rows = []
    if lobe.space in ("wi", "wh", "scatter"):
        hi = np.pi
        th = (np.arange(n_theta) + 0.5) * hi / n_theta
        ph = (np.arange(n_phi) + 0.5) * TWO_PI / n_phi
        T, P = np.meshgrid(th, ph, indexing="ij")
        from ..core import spherical_to_dir
        dirs = spherical_to_dir(T, P)
        pdf = lobe.pdf(dirs, wo)
        band = (pdf * np.sin(T)).sum(axis=1) * (hi / n_theta) * (TWO_PI / n_phi)
        cdf = np.cumsum(band)
        for i in range(n_theta):
            for j in range(n_phi):
                rows.append((th[i], ph[j], pdf[i, j], cdf[i]))
        return rows
    if lobe.space == "radial":
        rmax = float(np.max(L.BURLEY_RMAX * np.asarray(getattr(lobe, "d", 1.0))))
        r = (np.arange(n_theta) + 0.5) * rmax / n_theta
        pts = np.stack([r, np.zeros_like(r)], axis=-1)
        pdf = lobe.pdf(pts, wo)
        cdf = np.cumsum(pdf * TWO_PI * r * rmax / n_theta)
        return [(r[i], 0.0, pdf[i], cdf[i]) for i in range(n_theta)]
    lo, hi = lobe.mu - 8 * lobe.sigma, lobe.mu + 8 * lobe.sigma
    x = lo + (np.arange(n_theta) + 0.5) * (hi - lo) / n_theta
    pdf = lobe.pdf(x, wo)
    cdf = np.cumsum(pdf * (hi - lo) / n_theta)
    return [(x[i], 0.0, pdf[i], cdf[i]) for i in range(n_theta)]


def write_pdf_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["theta", "phi", "pdf", "cdf"])
        for r in rows:
            w.writerow([repr(float(v)) for v in r])


# ---------------------------------------------------------------------------
# registry of supported derivatives


@dataclass(frozen=True)
class RegistryRow:
    model: Kind
    param: str
    decomposition: Decomposition
    sampler: str

    def __iter__(self):
        return iter((self.model, self.param, self.decomposition, self.sampler))


_SAMPLER_FAMILY = {
    (Kind.IsoGGX, "alpha"): "iso-GGX sign split",
    (Kind.IsoBeckmann, "alpha"): "iso-Beckmann sign split",
    (Kind.BlinnPhong, "n"): "Blinn-Phong sign split",
    (Kind.Minnaert, "n"): "Minnaert sign split",
    (Kind.HanrahanKrueger, "g"): "Henyey-Greenstein sign split",
    (Kind.AnisoGGX, "alpha_x"): "aniso-GGX shape",
    (Kind.AnisoGGX, "alpha_y"): "aniso-GGX shape",
    (Kind.AnisoBeckmann, "alpha_x"): "aniso-Beckmann shape",
    (Kind.AnisoBeckmann, "alpha_y"): "aniso-Beckmann shape",
    (Kind.AshikhminShirley, "nu"): "Ashikhmin-Shirley shape",
    (Kind.AshikhminShirley, "nv"): "Ashikhmin-Shirley shape",
    (Kind.ABC, "B"): "ABC shape",
    (Kind.ABC, "C"): "ABC shape",
    (Kind.HemiEPD, "kappa"): "Hemi-EPD shape",
    (Kind.BurleyProfile, "d"): "Burley radial shape",
    (Kind.TwoLobeMixture, "w"): "component lobes",
    (Kind.OrenNayar, "sigma"): "Oren-Nayar A/B lobes",
    (Kind.Microcylinder, "kd"): "microcylinder flat/Gaussian lobes",
}


def registry():
    rows = []
    for (kind, param), fam in _SAMPLER_FAMILY.items():
        if (kind, param) in POSITIVIZABLE:
            dec = Decomposition.Positivization
        elif (kind, param) in PRODUCT:
            dec = Decomposition.Product
        else:
            dec = Decomposition.Mixture
        rows.append(RegistryRow(kind, param, dec, fam))
    return rows


__all__ = [
    "Decomposition", "LobePair", "LobeSampler", "build", "build_positivized", "build_product",
    "build_mixture", "gaussian_demo_pair", "lobe_weight_constancy_check", "pdf_table",
    "write_pdf_csv", "registry", "RegistryRow", "invert_cdf", "NonMonotoneCDF", "forward_lobe",
    "BURLEY_RMAX",
]
