"""Monte Carlo estimators of ``integral dF(wi) L(wi) dwi`` for BRDF derivatives.

All estimators are vectorised over shading points: ``wo`` has shape
``(N, 3)`` in the local shading frame and model parameters may be arrays of
shape ``(N,)``.  Incident radiance comes from an object with
``radiance(wi)``; light sampling additionally needs ``sample(u)`` and
``pdf(wi)``.  Every estimator draws a fixed number of uniform pairs from the
stream so ray budgets and random-number consumption are known up front.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import erfinv as _erfinv

from . import brdf as _b
from . import dbrdf as _d
from .brdf import BrdfModel, ConfigError, Kind
from .core import as_stream, dot, half_vector_unchecked, reflect
from .decomp import Decomposition, LobePair, build, forward_lobe, gaussian_demo_pair


class EstimatorKind(str, Enum):
    BrdfSampling = "BrdfSampling"
    ZeltnerAntithetic = "ZeltnerAntithetic"
    ZhangAntithetic = "ZhangAntithetic"
    Positivization = "Positivization"
    Product = "Product"
    Mixture = "Mixture"


ALIASES = {"brdf": EstimatorKind.BrdfSampling, "zeltner": EstimatorKind.ZeltnerAntithetic,
           "zhang": EstimatorKind.ZhangAntithetic, "pos": EstimatorKind.Positivization,
           "prod": EstimatorKind.Product, "mix": EstimatorKind.Mixture}
DECOMPOSED = {EstimatorKind.Positivization: Decomposition.Positivization,
              EstimatorKind.ZeltnerAntithetic: Decomposition.Positivization,
              EstimatorKind.Product: Decomposition.Product,
              EstimatorKind.Mixture: Decomposition.Mixture}


def as_kind(kind) -> EstimatorKind:
    if isinstance(kind, EstimatorKind):
        return kind
    key = str(kind)
    if key.lower() in ALIASES:
        return ALIASES[key.lower()]
    try:
        return EstimatorKind(key)
    except ValueError:
        raise ConfigError(f"unknown estimator kind {kind!r}") from None


@dataclass(frozen=True)
class EstimatorConfig:
    kind: EstimatorKind
    mis_with_light: bool = False
    mis_between_lobes: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kind", as_kind(self.kind))
        if self.mis_between_lobes and self.kind not in (EstimatorKind.Product,
                                                        EstimatorKind.Mixture):
            raise ConfigError("MIS between lobes needs overlapping (product or mixture) lobes")
        if self.mis_with_light and self.kind is EstimatorKind.ZhangAntithetic:
            raise ConfigError("the mirrored estimator has no MIS form")

    @property
    def rays(self) -> int:
        return 2 + (1 if self.mis_with_light else 0)


@dataclass
class GradEstimate:
    value: np.ndarray
    rays_used: int


# ---------------------------------------------------------------------------
# incident radiance


class ConstantIncident:
    """Unoccluded constant radiance, optionally with uniform-sphere 'light'
    sampling so MIS code paths can be exercised."""

    def __init__(self, value: float = 1.0):
        self.value = float(value)

    def radiance(self, wi):
        return np.full(np.shape(wi)[:-1], self.value)

    def sample(self, u):
        u = np.asarray(u, float)
        z = 1.0 - 2.0 * u[..., 0]
        r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
        phi = 2.0 * np.pi * u[..., 1]
        wi = np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=-1)
        return wi, np.full(z.shape, 0.25 / np.pi)

    def pdf(self, wi):
        return np.full(np.shape(wi)[:-1], 0.25 / np.pi)


class FunctionIncident:
    """Radiance given by a vectorised function of the local direction."""

    def __init__(self, fn: Callable, sampler=None):
        self.fn = fn
        self._sampler = sampler

    def radiance(self, wi):
        return np.asarray(self.fn(np.asarray(wi, float)), float)

    def sample(self, u):
        if self._sampler is None:
            raise ConfigError("this radiance field has no light sampler")
        return self._sampler.sample(u)

    def pdf(self, wi):
        if self._sampler is None:
            raise ConfigError("this radiance field has no light sampler")
        return self._sampler.pdf(wi)


def as_incident(L):
    if L is None:
        return ConstantIncident(1.0)
    if isinstance(L, (int, float)):
        return ConstantIncident(L)
    if hasattr(L, "radiance"):
        return L
    if callable(L):
        return FunctionIncident(L)
    raise ConfigError(f"cannot use {type(L).__name__} as incident radiance")


# ---------------------------------------------------------------------------
# MIS


def mis_balance(pdfs: Sequence[float], index: int) -> float:
    """Balance-heuristic weight of technique ``index``."""
    p = np.asarray(pdfs, float)
    if np.any(p < 0):
        raise ValueError("pdfs must be non-negative")
    total = p.sum()
    if total <= 0:
        raise ValueError("balance heuristic undefined: all pdfs are zero")
    return float(p[index] / total)


def _safe_div(a, b):
    ok = b > 0.0
    return np.where(ok, a / np.where(ok, b, 1.0), 0.0)


# ---------------------------------------------------------------------------
# helpers


def _batch(wo, n=None):
    wo = np.asarray(wo, float)
    if wo.ndim == 1:
        wo = np.broadcast_to(wo, ((n or 1), 3))
    return wo


def _derivative(m: BrdfModel, tgt, wi, wo):
    return _d.eval_derivative(m, tgt, wi, wo)


def _light_sample(L, u):
    wi, pdf = L.sample(u)
    return wi, pdf


# ---------------------------------------------------------------------------
# estimators in incident-direction space


def estimate_brdf_sampling(m: BrdfModel, target, wo, L=None, rng=None,
                           mis_with_light: bool = False) -> GradEstimate:
    """Two forward BRDF samples of ``dF * L / pdf``."""
    rng = as_stream(rng)
    L = as_incident(L)
    tgt = _d.as_target(m, target)
    wo = _batch(wo)
    n = wo.shape[0]
    us = [rng.uniform(n, 2) for _ in range(2)]
    acc = np.zeros(n)
    for u in us:
        s = _b.sample_forward(m, wo, u)
        df = _derivative(m, tgt, s.wi, wo)
        rad = np.where(s.valid, L.radiance(s.wi), 0.0)
        den = 2.0 * s.pdf
        if mis_with_light:
            den = den + L.pdf(s.wi)
        acc += np.where(s.valid, _safe_div(df * rad, den), 0.0)
    if not mis_with_light:
        return GradEstimate(acc, 2)
    wl, pl = _light_sample(L, rng.uniform(n, 2))
    pb = _b.pdf_forward(m, wo, wl)
    df = _derivative(m, tgt, wl, wo)
    acc += _safe_div(df * L.radiance(wl), 2.0 * pb + pl)
    return GradEstimate(acc, 3)


def _pair_for(m, target, kind: EstimatorKind, pair: Optional[LobePair]):
    if pair is not None:
        return pair
    return build(m, target, DECOMPOSED[kind])


def estimate_decomposed(pair: LobePair, wo, L=None, rng=None, mis_with_light: bool = False,
                        mis_between_lobes: bool = False, correlated: bool = False) -> GradEstimate:
    """One sample per lobe (deterministic mixture).

    Without lobe MIS each lobe estimates its own piece of the derivative.
    ``correlated`` feeds both lobes the same uniforms.
    """
    if not pair.has_wi_view:
        raise ConfigError("this decomposition lives on the plane; use estimate_native")
    if mis_between_lobes and not pair.overlap:
        raise ConfigError("MIS between lobes needs overlapping lobes")
    rng = as_stream(rng)
    L = as_incident(L)
    wo = _batch(wo)
    n = wo.shape[0]
    u0 = rng.uniform(n, 2)
    us = [u0, u0 if correlated else rng.uniform(n, 2)]
    lobes = pair.lobes
    acc = np.zeros(n)
    samples = []
    for k, lobe in enumerate(lobes):
        wi, valid = lobe.sample_wi(us[k], wo)
        samples.append((k, wi, valid))
    for k, wi, valid in samples:
        rad = np.where(valid, L.radiance(wi), 0.0)
        if mis_between_lobes:
            f = pair.integrand_wi(wi, wo)
            den = lobes[0].pdf_wi(wi, wo) + lobes[1].pdf_wi(wi, wo)
        else:
            f = pair.term_wi(k, wi, wo)
            den = lobes[k].pdf_wi(wi, wo)
        if mis_with_light:
            den = den + L.pdf(wi)
        acc += np.where(valid, _safe_div(f * rad, den), 0.0)
    if not mis_with_light:
        return GradEstimate(acc, 2)
    wl, pl = _light_sample(L, rng.uniform(n, 2))
    rad = L.radiance(wl)
    if mis_between_lobes:
        den = lobes[0].pdf_wi(wl, wo) + lobes[1].pdf_wi(wl, wo) + pl
        acc += _safe_div(pair.integrand_wi(wl, wo) * rad, den)
    else:
        for k, lobe in enumerate(lobes):
            acc += _safe_div(pair.term_wi(k, wl, wo) * rad, lobe.pdf_wi(wl, wo) + pl)
    return GradEstimate(acc, 3)


def estimate_positivized(pair: LobePair, wo, L=None, rng=None,
                         mis_with_light: bool = False) -> GradEstimate:
    if pair.kind is not Decomposition.Positivization:
        raise ConfigError("positivized estimator needs a positivization pair")
    return estimate_decomposed(pair, wo, L, rng, mis_with_light)


def estimate_zeltner(pair: LobePair, wo, L=None, rng=None,
                     mis_with_light: bool = False) -> GradEstimate:
    """Positivization with both lobes driven by the same uniforms."""
    if pair.kind is not Decomposition.Positivization:
        raise ConfigError("the correlated antithetic estimator needs a positivization pair")
    return estimate_decomposed(pair, wo, L, rng, mis_with_light, correlated=True)


def estimate_product(pair: LobePair, wo, L=None, rng=None, mis: bool = False,
                     mis_with_light: bool = False) -> GradEstimate:
    if pair.kind is not Decomposition.Product:
        raise ConfigError("product estimator needs a product pair")
    return estimate_decomposed(pair, wo, L, rng, mis_with_light, mis)


def estimate_mixture(pair: LobePair, wo, L=None, rng=None, mis: bool = False,
                     mis_with_light: bool = False) -> GradEstimate:
    if pair.kind is not Decomposition.Mixture:
        raise ConfigError("mixture estimator needs a mixture pair")
    return estimate_decomposed(pair, wo, L, rng, mis_with_light, mis)


def mirror(v):
    """Reflect through the normal axis: ``(x, y, z) -> (-x, -y, z)``."""
    v = np.asarray(v, float)
    out = v.copy()
    out[..., 0] *= -1.0
    out[..., 1] *= -1.0
    return out


def estimate_zhang(m: BrdfModel, target, wo, L=None, rng=None) -> GradEstimate:
    """Mirrored pair ``(h(x1) + h(x2)) / (p(x1) + p(x2))``.

    Half-vector models pair half vectors drawn from the NDF, where the
    integrand picks up the ``4 wo.wh`` reflection jacobian; the others pair
    incident directions drawn by forward sampling.
    """
    rng = as_stream(rng)
    L = as_incident(L)
    tgt = _d.as_target(m, target)
    wo = _batch(wo)
    n = wo.shape[0]
    u = rng.uniform(n, 2)
    if m.kind in _b.HALF_VECTOR_KINDS:
        wh1 = _b.ndf_sample(m, u)
        wh2 = mirror(wh1)
        num = np.zeros(n)
        for wh in (wh1, wh2):
            woh = dot(wo, wh)
            wi = reflect(wo, wh)
            ok = (woh > 0.0) & (wi[..., 2] > 0.0)
            h = _derivative(m, tgt, wi, wo) * 4.0 * np.maximum(woh, 0.0)
            num += np.where(ok, h * np.where(ok, L.radiance(wi), 0.0), 0.0)
        den = _b.ndf_pdf(m, wh1) + _b.ndf_pdf(m, wh2)
        return GradEstimate(_safe_div(num, den), 2)
    s = _b.sample_forward(m, wo, u)
    wi1 = s.wi
    wi2 = mirror(wi1)
    num = np.zeros(n)
    for wi in (wi1, wi2):
        ok = wi[..., 2] > 0.0
        h = _derivative(m, tgt, wi, wo)
        num += np.where(ok, h * np.where(ok, L.radiance(wi), 0.0), 0.0)
    den = _b.pdf_forward(m, wo, wi1) + _b.pdf_forward(m, wo, wi2)
    return GradEstimate(_safe_div(num, den), 2)


def estimate(kind, m: BrdfModel, target, wo, L=None, rng=None, mis_with_light: bool = False,
             mis_between_lobes: bool = False, pair: Optional[LobePair] = None) -> GradEstimate:
    """Dispatch on the estimator kind."""
    cfg = EstimatorConfig(kind, mis_with_light, mis_between_lobes)
    k = cfg.kind
    if k is EstimatorKind.BrdfSampling:
        return estimate_brdf_sampling(m, target, wo, L, rng, mis_with_light)
    if k is EstimatorKind.ZhangAntithetic:
        return estimate_zhang(m, target, wo, L, rng)
    pair = _pair_for(m, target, k, pair)
    if k is EstimatorKind.ZeltnerAntithetic:
        return estimate_zeltner(pair, wo, L, rng, mis_with_light)
    if k is EstimatorKind.Positivization:
        return estimate_positivized(pair, wo, L, rng, mis_with_light)
    if k is EstimatorKind.Product:
        return estimate_product(pair, wo, L, rng, mis_between_lobes, mis_with_light)
    return estimate_mixture(pair, wo, L, rng, mis_between_lobes, mis_with_light)


def supported_kinds(m: BrdfModel, target):
    """Estimator kinds applicable to a derivative target."""
    tgt = _d.as_target(m, target)
    from .decomp import MIXTURE, POSITIVIZABLE, PRODUCT
    key = (m.kind, tgt.param_name)
    kinds = [EstimatorKind.BrdfSampling, EstimatorKind.ZhangAntithetic]
    if key in POSITIVIZABLE:
        kinds += [EstimatorKind.Positivization, EstimatorKind.ZeltnerAntithetic]
    if key in PRODUCT:
        kinds.append(EstimatorKind.Product)
    if key in MIXTURE:
        kinds.append(EstimatorKind.Mixture)
    return kinds


# ---------------------------------------------------------------------------
# native-space estimators (unit radiance)


def estimate_native(pair: LobePair, n: int, rng=None, wo=None,
                    correlated: bool = False) -> np.ndarray:
    """``n`` independent two-sample estimates of the integral of the native
    derivative terms, i.e. the decomposition estimator under unit radiance."""
    rng = as_stream(rng)
    u0 = rng.uniform(n, 2)
    us = [u0, u0 if correlated else rng.uniform(n, 2)]
    wo_b = None if wo is None else _batch(wo, n)
    total = np.zeros(n)
    for k, lobe in enumerate(pair.lobes):
        x = lobe.sample(us[k], wo_b)
        total = total + pair.weight(k, x, wo_b)
    return total


def estimate_native_forward(pair: LobePair, n: int, rng=None, wo=None) -> np.ndarray:
    """Baseline for native-space pairs: two samples of the forward lobe,
    evaluated against the full derivative."""
    if pair.forward_index is None:
        raise ConfigError("pair has no forward lobe")
    rng = as_stream(rng)
    fwd = pair.lobes[pair.forward_index]
    wo_b = None if wo is None else _batch(wo, n)
    acc = np.zeros(n)
    for _ in range(2):
        x = fwd.sample(rng.uniform(n, 2), wo_b)
        p = fwd.pdf(x, wo_b)
        f = pair.term_native(0, x, wo_b) + pair.term_native(1, x, wo_b)
        acc += 0.5 * _safe_div(f, p)
    return acc


def estimate_native_mirrored(pair: LobePair, n: int, rng=None, wo=None) -> np.ndarray:
    """Mirrored-pair baseline in the native space of the forward lobe."""
    if pair.forward_index is None:
        raise ConfigError("pair has no forward lobe")
    rng = as_stream(rng)
    fwd = pair.lobes[pair.forward_index]
    wo_b = None if wo is None else _batch(wo, n)
    x1 = fwd.sample(rng.uniform(n, 2), wo_b)
    x2 = -x1 if fwd.space == "radial" else mirror(x1)

    def f(x):
        return pair.term_native(0, x, wo_b) + pair.term_native(1, x, wo_b)
    return _safe_div(f(x1) + f(x2), fwd.pdf(x1, wo_b) + fwd.pdf(x2, wo_b))


def gaussian_demo(sigma: float = 1.0, runs: int = 10000, seed: int = 0, mu: float = 0.0):
    """Two-sample estimates of the integral of ``d/dmu`` of a normal density
    (whose true value is 0), by detached sampling, positivization and
    correlated positivization.  Returns ``{name: estimates}``."""
    from .dbrdf import gaussian_density, gaussian_mean_derivative
    pair = gaussian_demo_pair(mu, sigma)
    rng = as_stream(seed)
    x = mu + sigma * np.sqrt(2.0) * _erfinv(2.0 * rng.uniform(runs * 2) - 1.0)
    w = gaussian_mean_derivative(x, mu, sigma) / gaussian_density(x, mu, sigma)
    return {
        "BrdfSampling": w.reshape(runs, 2).mean(axis=1),
        "Positivization": estimate_native(pair, runs, rng),
        "ZeltnerAntithetic": estimate_native(pair, runs, rng, correlated=True),
    }


__all__ = [
    "gaussian_demo",
    "EstimatorKind", "EstimatorConfig", "GradEstimate", "ConstantIncident", "FunctionIncident",
    "as_incident", "as_kind", "mis_balance", "estimate", "estimate_brdf_sampling",
    "estimate_decomposed", "estimate_positivized", "estimate_zeltner", "estimate_zhang",
    "estimate_product", "estimate_mixture", "estimate_native", "estimate_native_forward",
    "estimate_native_mirrored", "supported_kinds", "mirror", "forward_lobe",
]
