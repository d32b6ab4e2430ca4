"""Parameter-grid sweeps that validate every registered lobe sampler."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

from . import brdf as _b
from .brdf import Kind
from .core import QuadratureSpec, chi_square_test, quadrature_integrate, spherical_to_dir
from .decomp import BURLEY_RMAX, LobePair, build, registry

ROUGHNESS = (0.05, 0.2, 0.5, 0.9)
ANISO_RATIOS = (1.0, 2.0, 5.0)
HG_G = (-0.9, -0.3, 0.3, 0.9)
ABC_B = (1.0, 10.0, 100.0)
ABC_C = (1.5, 2.0, 4.0)
EPD_KAPPA = (1.0, 5.0, 20.0)
# the grid has no entry for these; values below bracket the defaults
BLINN_N = (2.0, 20.0, 200.0)
MINNAERT_N = (0.5, 2.0, 8.0)
AS_N = ((10.0, 10.0), (10.0, 100.0), (100.0, 10.0), (1.0, 50.0))
BURLEY_D = (0.5, 1.0, 3.0)
ON_SIGMA = (0.2, 0.5, 1.0)
MICRO_GAMMA = (0.1, 0.3, 0.6)
OBLIQUE_WO = spherical_to_dir(0.9, 0.4)
GRAZING_WO = spherical_to_dir(np.deg2rad(80.0), 1.1)


@dataclass(frozen=True)
class GridCase:
    model: _b.BrdfModel
    param: str
    wo: np.ndarray

    @property
    def label(self) -> str:
        shown = {k: v for k, v in self.model.params.items() if k in _LABEL_KEYS}
        body = ",".join(f"{k}={float(v):g}" for k, v in shown.items())
        return f"{self.model.kind.value}:{self.param}[{body}]"


_LABEL_KEYS = {"alpha", "alpha_x", "alpha_y", "n", "nu", "nv", "B", "C", "kappa", "g", "d",
               "sigma", "gamma_v", "kd", "w"}


def parameter_grid(kinds=None) -> Iterator[GridCase]:
    """Every (model, param) on the validation grid."""
    def want(k):
        return kinds is None or k in kinds

    def case(kind, param, wo=OBLIQUE_WO, **params):
        return GridCase(_b.model(kind, **params), param, wo)

    for kind in (Kind.IsoGGX, Kind.IsoBeckmann):
        if want(kind):
            for a in ROUGHNESS:
                yield case(kind, "alpha", alpha=a)
    if want(Kind.BlinnPhong):
        for n in BLINN_N:
            yield case(Kind.BlinnPhong, "n", n=n)
    if want(Kind.Minnaert):
        for n in MINNAERT_N:
            yield case(Kind.Minnaert, "n", n=n)
    if want(Kind.HanrahanKrueger):
        for g in HG_G:
            yield case(Kind.HanrahanKrueger, "g", g=g)
    for kind in (Kind.AnisoGGX, Kind.AnisoBeckmann):
        if want(kind):
            for a, r, prm in itertools.product(ROUGHNESS, ANISO_RATIOS, ("alpha_x", "alpha_y")):
                yield case(kind, prm, alpha_x=a, alpha_y=a * r)
    if want(Kind.AshikhminShirley):
        for (nu, nv), prm in itertools.product(AS_N, ("nu", "nv")):
            yield case(Kind.AshikhminShirley, prm, nu=nu, nv=nv)
    if want(Kind.ABC):
        for B, C, prm in itertools.product(ABC_B, ABC_C, ("B", "C")):
            yield case(Kind.ABC, prm, B=B, C=C)
    if want(Kind.HemiEPD):
        for k in EPD_KAPPA:
            yield case(Kind.HemiEPD, "kappa", kappa=k)
    if want(Kind.BurleyProfile):
        for d in BURLEY_D:
            yield case(Kind.BurleyProfile, "d", d=d)
    if want(Kind.TwoLobeMixture):
        for a in (0.05, 0.5):
            lobes = (_b.model(Kind.Lambertian, rho=0.8), _b.model(Kind.IsoGGX, alpha=a))
            yield GridCase(_b.model(Kind.TwoLobeMixture, lobes=lobes), "w", OBLIQUE_WO)
    if want(Kind.OrenNayar):
        for s, wo in itertools.product(ON_SIGMA, (OBLIQUE_WO, GRAZING_WO)):
            yield case(Kind.OrenNayar, "sigma", wo=wo, sigma=s)
    if want(Kind.Microcylinder):
        for gv in MICRO_GAMMA:
            yield case(Kind.Microcylinder, "kd", gamma_v=gv)


@dataclass
class LobeCheck:
    label: str
    lobe: str
    sign: int
    norm: float
    mass_rel_error: Optional[float]
    chi2_p: Optional[float]
    chi2_level: float = 0.01

    @property
    def norm_ok(self) -> bool:
        return abs(self.norm - 1.0) <= 1e-3

    @property
    def mass_ok(self) -> bool:
        return self.mass_rel_error is None or self.mass_rel_error <= 1e-3

    @property
    def chi2_ok(self) -> bool:
        return self.chi2_p is None or self.chi2_p > self.chi2_level

    @property
    def passed(self) -> bool:
        return self.norm_ok and self.mass_ok and self.chi2_ok


def _radial_max(pair: LobePair) -> float:
    return float(BURLEY_RMAX * np.max(pair.model.params["d"]))


def check_pair(pair: LobePair, wo, label: str = "", n_samples: int = 0, seed: int = 0,
               resolution=(256, 512)):
    """Quadrature normalization, mass consistency and (optionally) chi-square
    for both lobes of a pair.  ``n_samples = 0`` skips the chi-square test."""
    out = []
    for k, lobe in enumerate(pair.lobes):
        if lobe.space == "radial":
            rmax = _radial_max(pair)
            spec = QuadratureSpec("radial-line", (8 * resolution[0],), (0.0, rmax), graded=True)

            def on_line(fn):
                return lambda r: fn(np.stack([r, np.zeros_like(r)], axis=-1))
            norm = quadrature_integrate(on_line(lambda x: lobe.pdf(x, wo)), spec)
            term = quadrature_integrate(on_line(lambda x: pair.term_native(k, x, wo)), spec)
            cspec = QuadratureSpec("radial-line", (64,), (0.0, rmax))
        else:
            spec = QuadratureSpec("sphere", resolution, graded=True)
            norm = quadrature_integrate(lambda x: lobe.pdf(x, wo), spec)
            term = (quadrature_integrate(lambda x: pair.term_native(k, x, wo), spec)
                    if lobe.exact else None)
            cspec = QuadratureSpec("sphere", (32, 64), graded=True)
        mass_err = None
        if lobe.exact:
            mass = float(np.squeeze(lobe.mass(wo)))
            mass_err = abs(lobe.sign * mass - term) / max(abs(mass), 1e-300)
        p = None
        if n_samples:
            p = chi_square_test(lobe, cspec, n_samples, rng=seed + k, wo=wo).p_value
        out.append(LobeCheck(label, lobe.name, lobe.sign, norm, mass_err, p))
    return out


def sweep(n_samples: int = 0, seed: int = 0, kinds=None, resolution=(256, 512),
          progress=None):
    results = []
    for i, case in enumerate(parameter_grid(kinds)):
        pair = build(case.model, case.param)
        res = check_pair(pair, case.wo, case.label, n_samples, seed + 7919 * i, resolution)
        results.extend(res)
        if progress is not None:
            for r in res:
                progress(r)
    return results


def sidak_level(alpha: float, m: int) -> float:
    """Per-test level keeping the family-wise false-rejection rate of ``m``
    independent tests at ``alpha``."""
    return 1.0 - (1.0 - alpha) ** (1.0 / max(m, 1))


@dataclass
class SweepSummary:
    n_tests: int
    raw_failures: int       # chi-square p <= alpha, per test
    family_level: float
    family_failures: int    # chi-square p <= family_level
    norm_failures: int
    mass_failures: int

    @property
    def passed(self) -> bool:
        return self.family_failures == 0 and self.norm_failures == 0 and self.mass_failures == 0


def summarize(results, alpha: float = 0.01) -> SweepSummary:
    ps = [r.chi2_p for r in results if r.chi2_p is not None]
    level = sidak_level(alpha, len(ps))
    return SweepSummary(len(ps), sum(p <= alpha for p in ps), level, sum(p <= level for p in ps),
                        sum(not r.norm_ok for r in results), sum(not r.mass_ok for r in results))


def registry_coverage():
    """Registry rows that the validation grid reaches."""
    seen = {(c.model.kind, c.param) for c in parameter_grid()}
    return [(r.model, r.param) for r in registry() if (r.model, r.param) in seen]


# ---------------------------------------------------------------------------
# derivative check against central differences


def _random_params(kind: Kind, rng: np.random.Generator) -> dict:
    u = rng.uniform
    if kind in (Kind.IsoGGX, Kind.IsoBeckmann):
        return {"alpha": u(0.05, 0.9)}
    if kind in (Kind.AnisoGGX, Kind.AnisoBeckmann):
        return {"alpha_x": u(0.05, 0.9), "alpha_y": u(0.05, 0.9)}
    if kind is Kind.BlinnPhong:
        return {"n": np.exp(u(np.log(2.0), np.log(200.0)))}
    if kind is Kind.Minnaert:
        return {"n": u(0.5, 8.0)}
    if kind is Kind.HanrahanKrueger:
        return {"g": u(-0.9, 0.9)}
    if kind is Kind.AshikhminShirley:
        return {"nu": np.exp(u(0.0, np.log(100.0))), "nv": np.exp(u(0.0, np.log(100.0)))}
    if kind is Kind.ABC:
        return {"B": np.exp(u(0.0, np.log(100.0))), "C": u(1.5, 4.0)}
    if kind is Kind.HemiEPD:
        return {"kappa": u(1.0, 20.0)}
    if kind is Kind.TwoLobeMixture:
        return {"w": u(0.05, 0.95)}
    if kind is Kind.OrenNayar:
        return {"sigma": u(0.1, 1.0)}
    if kind is Kind.Microcylinder:
        return {"gamma_v": u(0.1, 0.6), "kd": u(0.1, 0.9)}
    if kind is Kind.BurleyProfile:
        return {"d": u(0.5, 3.0)}
    raise ValueError(kind)


@dataclass
class DerivativeCheck:
    model: Kind
    param: str
    n_configs: int
    max_rel_error: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= 1e-4


def derivative_check(kind, param: str, n_configs: int = 100, seed: int = 0) -> DerivativeCheck:
    """Analytic derivative vs central differences at random parameters and
    directions.  The error is relative to ``max(|fd|, 1e-6 * scale)`` where
    ``scale`` is the largest finite difference of the batch, so configurations
    where the derivative crosses zero do not divide by nothing."""
    from . import dbrdf
    kind = Kind(kind)
    rng = np.random.default_rng(seed)
    worst = 0.0
    if kind is Kind.BurleyProfile:
        for _ in range(n_configs):
            d = _random_params(kind, rng)["d"]
            r = rng.uniform(0.01, 3.0 * d, 8)
            h = 1e-6 * d
            fd = (_b.burley_profile(r, d + h) - _b.burley_profile(r, d - h)) / (2 * h)
            an = dbrdf.burley_profile_derivative(r, d)
            den = np.maximum(np.abs(fd), 1e-6 * np.max(np.abs(fd)))
            worst = max(worst, float(np.max(np.abs(an - fd) / den)))
        return DerivativeCheck(kind, param, n_configs, worst)
    for _ in range(n_configs):
        params = _random_params(kind, rng)
        lobes = ()
        if kind is Kind.TwoLobeMixture:
            lobes = (_b.model(Kind.Lambertian, rho=0.8),
                     _b.model(Kind.IsoGGX, alpha=rng.uniform(0.05, 0.9)))
        m = _b.model(kind, lobes=lobes, **params)
        th = np.arccos(rng.uniform(0.05, 1.0, (2, 8)))
        ph = rng.uniform(0.0, 2 * np.pi, (2, 8))
        wi = spherical_to_dir(th[0], ph[0])
        wo = spherical_to_dir(th[1], ph[1])
        an = dbrdf.eval_derivative(m, param, wi, wo)
        fd = dbrdf.finite_difference(m, param, wi, wo)
        den = np.maximum(np.abs(fd), 1e-6 * max(np.max(np.abs(fd)), 1e-300))
        worst = max(worst, float(np.max(np.abs(an - fd) / den)))
    return DerivativeCheck(kind, param, n_configs, worst)


# ---------------------------------------------------------------------------
# unbiasedness of every estimator kind against quadrature

# two parameter settings per registry row
UNBIASED_SETTINGS = {
    (Kind.IsoGGX, "alpha"): ({"alpha": 0.1}, {"alpha": 0.5}),
    (Kind.IsoBeckmann, "alpha"): ({"alpha": 0.2}, {"alpha": 0.7}),
    (Kind.BlinnPhong, "n"): ({"n": 5.0}, {"n": 50.0}),
    (Kind.Minnaert, "n"): ({"n": 0.5}, {"n": 4.0}),
    (Kind.HanrahanKrueger, "g"): ({"g": -0.7}, {"g": 0.4}),
    (Kind.AnisoGGX, "alpha_x"): ({"alpha_x": 0.1, "alpha_y": 0.3},
                                 {"alpha_x": 0.6, "alpha_y": 0.2}),
    (Kind.AnisoGGX, "alpha_y"): ({"alpha_x": 0.1, "alpha_y": 0.3},
                                 {"alpha_x": 0.6, "alpha_y": 0.2}),
    (Kind.AnisoBeckmann, "alpha_x"): ({"alpha_x": 0.15, "alpha_y": 0.4},
                                      {"alpha_x": 0.5, "alpha_y": 0.25}),
    (Kind.AnisoBeckmann, "alpha_y"): ({"alpha_x": 0.15, "alpha_y": 0.4},
                                      {"alpha_x": 0.5, "alpha_y": 0.25}),
    (Kind.AshikhminShirley, "nu"): ({"nu": 10.0, "nv": 100.0}, {"nu": 50.0, "nv": 5.0}),
    (Kind.AshikhminShirley, "nv"): ({"nu": 10.0, "nv": 100.0}, {"nu": 50.0, "nv": 5.0}),
    (Kind.ABC, "B"): ({"B": 10.0, "C": 2.0}, {"B": 50.0, "C": 3.0}),
    (Kind.ABC, "C"): ({"B": 10.0, "C": 2.0}, {"B": 50.0, "C": 3.0}),
    (Kind.HemiEPD, "kappa"): ({"kappa": 2.0}, {"kappa": 10.0}),
    (Kind.BurleyProfile, "d"): ({"d": 0.7}, {"d": 2.0}),
    (Kind.TwoLobeMixture, "w"): ({"w": 0.3}, {"w": 0.8}),
    (Kind.OrenNayar, "sigma"): ({"sigma": 0.3}, {"sigma": 0.9}),
    (Kind.Microcylinder, "kd"): ({"kd": 0.2, "gamma_v": 0.2}, {"kd": 0.7, "gamma_v": 0.5}),
}


@dataclass
class UnbiasedCheck:
    label: str
    kind: str
    mean: float
    reference: float
    std_error: float
    floor: float

    @property
    def passed(self) -> bool:
        # the floor absorbs quadrature error when an estimator has zero variance
        return abs(self.mean - self.reference) <= 3.0 * self.std_error + self.floor


def _settings_model(kind: Kind, params: dict) -> _b.BrdfModel:
    lobes = ()
    if kind is Kind.TwoLobeMixture:
        lobes = (_b.model(Kind.Lambertian, rho=0.8), _b.model(Kind.IsoGGX, alpha=0.2))
    return _b.model(kind, lobes=lobes, **params)


def _burley_reference(d: float) -> float:
    from scipy.integrate import quad

    from . import dbrdf
    val, _ = quad(lambda r: dbrdf.burley_profile_derivative(r, d) * 2 * np.pi * r, 0.0, np.inf,
                  epsabs=1e-12, limit=200)
    return float(val)


def unbiasedness_check(kind, param: str, n_runs: int = 100_000, seed: int = 0, wo=None):
    """Every supported estimator kind at the two registered settings.

    Directional models integrate the cosine-weighted derivative over the
    upper hemisphere by quadrature; the radial Burley profile uses adaptive
    quadrature over the plane.
    """
    from . import dbrdf
    from .estimators import (EstimatorKind, estimate, estimate_native, estimate_native_forward,
                             estimate_native_mirrored, supported_kinds)
    kind = Kind(kind)
    wo = OBLIQUE_WO if wo is None else np.asarray(wo, float)
    out = []
    for si, params in enumerate(UNBIASED_SETTINGS[(kind, param)]):
        m = _settings_model(kind, params)
        label = GridCase(m, param, wo).label
        kinds = supported_kinds(m, param)
        if kind is Kind.BurleyProfile:
            ref = _burley_reference(params["d"])
            pair = build(m, param)
            runners = {EstimatorKind.BrdfSampling: estimate_native_forward,
                       EstimatorKind.ZhangAntithetic: estimate_native_mirrored,
                       EstimatorKind.Product: estimate_native}
        else:
            spec = QuadratureSpec("hemisphere", (256, 512), graded=True)
            ref = quadrature_integrate(
                lambda wi: dbrdf.eval_derivative(m, param, wi, np.broadcast_to(wo, wi.shape)), spec)
        for ki, k in enumerate(kinds):
            rng = seed + 1000 * si + ki
            if kind is Kind.BurleyProfile:
                v = runners[k](pair, n_runs, rng)
            else:
                v = estimate(k, m, param, np.broadcast_to(wo, (n_runs, 3)), None, rng).value
            se = float(v.std(ddof=1) / np.sqrt(n_runs))
            out.append(UnbiasedCheck(label, k.value, float(v.mean()), ref, se,
                                     1e-6 * max(1.0, abs(ref))))
    return out
