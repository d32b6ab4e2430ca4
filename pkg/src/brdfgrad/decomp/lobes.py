"""Single-signed lobe samplers.

Each :class:`LobeSampler` draws points in its *native* space

* ``wh``      half vectors (solid angle), mapped to wi by reflection about wh
* ``wi``      incident directions (solid angle)
* ``scatter`` directions in the frame whose +z axis is ``wo``; ``wi = -d``
* ``radial``  2-D points on an infinite plane (per-area density)
* ``line``    real numbers

and reports the density of what it draws.  ``sign * mass * pdf`` is the
lobe's target function; when ``exact`` is set that target coincides with the
decomposition term the lobe is paired with, so ``term / pdf`` is constant.
"""

from __future__ import annotations

import numpy as np
from scipy import special

from .. import brdf as _b
from ..brdf import TWO_PI, BrdfModel, ConfigError, Kind
from ..core import (INV_PI, cosine_sample_hemisphere, dot, half_vector_unchecked, reflect,
                    spherical_to_dir)
from .. import accel as _accel
from .invert import invert_cdf

E = np.e
BURLEY_RMAX = 90.0  # truncation radius in units of d


def _bcast(u, *params):
    """Broadcast parameters to the sample shape and flatten them."""
    shape = np.shape(u)[:-1]
    return [np.broadcast_to(np.asarray(p, float), shape).ravel() for p in params]


def _polar(c, phi):
    c = np.clip(c, -1.0, 1.0)
    s = np.sqrt(np.maximum(0.0, 1.0 - c * c))
    return np.stack(np.broadcast_arrays(s * np.cos(phi), s * np.sin(phi), c), axis=-1)


def _azimuth(x):
    phi = np.arctan2(x[..., 1], x[..., 0])
    return np.where(phi < 0.0, phi + TWO_PI, phi)


def _unfold_quarter(phi_q, u):
    """Map a quarter-domain azimuth to [0, 2pi) using two bits drawn from ``u``.

    The density over the full circle is the quarter density divided by 4.
    """
    q = np.minimum(np.floor(4.0 * u), 3.0)
    mirror = (q == 1) | (q == 3)
    phi = np.where(mirror, np.pi - phi_q, phi_q)
    return np.where(q >= 2, phi + np.pi, phi)


def _quarter_split(u):
    """Split one uniform into the unfolding bits and a fresh uniform."""
    v = 4.0 * u
    return v - np.minimum(np.floor(v), 3.0)


class LobeSampler:
    space = "wi"
    exact = True
    name = "lobe"

    def __init__(self, sign: int):
        if sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")
        self.sign = int(sign)

    # native space -------------------------------------------------------
    def sample(self, u, wo=None):
        raise NotImplementedError

    def pdf(self, x, wo=None):
        raise NotImplementedError

    def mass(self, wo=None):
        raise NotImplementedError

    # incident-direction view --------------------------------------------
    def sample_wi(self, u, wo):
        """Draw wi; returns ``(wi, valid)``."""
        wo = np.asarray(wo, float)
        x = self.sample(u, wo)
        if self.space == "wi":
            return x, x[..., 2] > 0.0
        if self.space == "wh":
            wi = reflect(wo, x)
            return wi, (dot(wo, x) > 0.0) & (wi[..., 2] > 0.0)
        if self.space == "scatter":
            wi = _b.scatter_to_wi(x, wo)
            return wi, wi[..., 2] > 0.0
        raise ConfigError(f"{self.space} lobes have no incident-direction view")

    def pdf_wi(self, wi, wo):
        wi = np.asarray(wi, float)
        wo = np.asarray(wo, float)
        if self.space == "wi":
            return self.pdf(wi, wo)
        if self.space == "wh":
            wh = half_vector_unchecked(wi, wo)
            woh = dot(wo, wh)
            ok = woh > 0.0
            return np.where(ok, self.pdf(wh, wo) * 0.25 / np.where(ok, woh, 1.0), 0.0)
        if self.space == "scatter":
            return self.pdf(_b.wi_to_scatter(wi, wo), wo)
        raise ConfigError(f"{self.space} lobes have no incident-direction view")

    def to_wi(self, x, wo):
        """Incident direction of a native point plus the density factor
        ``d(omega_i) / d(native)``."""
        wo = np.asarray(wo, float)
        if self.space == "wi":
            return x, np.ones(np.shape(x)[:-1])
        if self.space == "wh":
            return reflect(wo, x), 4.0 * np.maximum(dot(wo, x), 0.0)
        if self.space == "scatter":
            return _b.scatter_to_wi(x, wo), np.ones(np.shape(x)[:-1])
        raise ConfigError(f"{self.space} lobes have no incident-direction view")

    def __repr__(self):
        return f"{type(self).__name__}({self.name}, sign={self.sign:+d}, space={self.space})"


# ---------------------------------------------------------------------------
# Forward (p1 proportional to g) samplers


class ForwardLobe(LobeSampler):
    """Standard BRDF sampling of one model, optionally relabelled with a sign
    and mass when it serves as the ``p1`` lobe of a product split."""

    def __init__(self, m: BrdfModel, sign: int = 1, mass=1.0, exact: bool = False):
        super().__init__(sign)
        self.model = m
        self._mass = mass
        self.exact = exact
        self.name = f"forward:{m.kind.value}"
        k = m.kind
        if k in _b.HALF_VECTOR_KINDS:
            self.space = "wh"
        elif k is Kind.HanrahanKrueger:
            self.space = "scatter"
        elif k is Kind.BurleyProfile:
            self.space = "radial"
        else:
            self.space = "wi"

    def sample(self, u, wo=None):
        m = self.model
        k = m.kind
        u = np.asarray(u, float)
        if self.space == "wh":
            return _b.ndf_sample(m, u)
        if k is Kind.HanrahanKrueger:
            c = _b._hg_sample_cos(u[..., 0], m.params["g"])
            return _polar(c, TWO_PI * u[..., 1])
        if k is Kind.BurleyProfile:
            return _burley_sample(u, m.params["d"], which=1)
        if k is Kind.TwoLobeMixture:
            return _b.sample_forward(m, wo, u).wi
        return _b._sample_wi(m, wo, u)

    def pdf(self, x, wo=None):
        m = self.model
        k = m.kind
        if self.space == "wh":
            return _b.ndf_pdf(m, x)
        if k is Kind.HanrahanKrueger:
            return _b.hg_phase(np.asarray(x)[..., 2], m.params["g"])
        if k is Kind.BurleyProfile:
            return _burley_pdf(x, m.params["d"], which=1)
        return _b.pdf_forward(m, wo, x)

    def mass(self, wo=None):
        return self._mass(wo) if callable(self._mass) else self._mass


def forward_lobe(m: BrdfModel) -> ForwardLobe:
    return ForwardLobe(m)


# ---------------------------------------------------------------------------
# Positivization lobes


class IsoMicrofacetLobe(LobeSampler):
    """Positive or negative part of ``d/dalpha D cos`` for isotropic GGX/Beckmann.

    In ``y = tan^2 / alpha^2`` the negative part lives on ``y < 1``.
    """

    space = "wh"

    def __init__(self, kind: Kind, alpha, sign: int):
        super().__init__(sign)
        if kind not in (Kind.IsoGGX, Kind.IsoBeckmann):
            raise ConfigError(f"{kind.value} is not an isotropic GGX/Beckmann model")
        self.kind = kind
        self.alpha = np.asarray(alpha, float)
        self.name = f"{kind.value}:alpha{'+' if sign > 0 else '-'}"

    def r(self, wh):
        c = np.clip(np.asarray(wh)[..., 2], 0.0, 1.0)
        a2 = self.alpha ** 2
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            t2 = (1.0 - c * c) / (c * c)
            sec3 = 1.0 / c ** 3
            if self.kind is Kind.IsoGGX:
                r = 8.0 * a2 * sec3 * (t2 - a2) / (t2 + a2) ** 3
            else:
                # halved against the tabulated form so that it integrates to one
                r = 2.0 * np.exp(1.0 - t2 / a2) * sec3 * (t2 - a2) / (a2 * a2)
        return np.where(c > 0.0, np.nan_to_num(r, nan=0.0, posinf=0.0, neginf=0.0), 0.0)

    def pdf(self, x, wo=None):
        return np.maximum(self.sign * self.r(x), 0.0) / TWO_PI

    def sample(self, u, wo=None):
        u = np.asarray(u, float)
        v = u[..., 0]
        (alpha,) = _bcast(u, self.alpha)
        alpha = alpha.reshape(v.shape)
        if self.kind is Kind.IsoGGX:
            if self.sign < 0:
                y = v / (1.0 + np.sqrt(1.0 - v)) ** 2
            else:
                y = (1.0 + np.sqrt(v)) ** 2 / np.maximum(1.0 - v, 1e-300)
        else:
            if self.sign < 0:
                y = -np.real(special.lambertw(-v / E, 0))
            else:
                y = -np.real(special.lambertw(-(1.0 - v) / E, -1))
                y = np.where(v <= 0.0, 1.0, y)
        t2 = alpha * alpha * y
        c = 1.0 / np.sqrt(1.0 + t2)
        return _polar(c, TWO_PI * u[..., 1])

    def mass(self, wo=None):
        if self.kind is Kind.IsoGGX:
            return 0.5 / self.alpha
        return 2.0 / (E * self.alpha)


class BlinnPhongLobe(LobeSampler):
    """Parts of ``d/dn (D cos)`` for Blinn-Phong, or of the Minnaert
    derivative in theta_i (``space='wi'``, scaled by ``rho``)."""

    def __init__(self, n, sign: int, space: str = "wh", scale=1.0):
        super().__init__(sign)
        self.n = np.asarray(n, float)
        self.space = space
        self.scale = np.asarray(scale, float)
        self.name = f"{'BlinnPhong' if space == 'wh' else 'Minnaert'}:n{'+' if sign > 0 else '-'}"

    def r(self, x):
        c = np.clip(np.asarray(x)[..., 2], 0.0, 1.0)
        n = self.n
        with np.errstate(divide="ignore", invalid="ignore"):
            r = E * (n + 2.0) * np.power(c, n + 1.0) * ((n + 2.0) * np.log(c) + 1.0)
        return np.where(c > 0.0, np.nan_to_num(r, nan=0.0), 0.0)

    def pdf(self, x, wo=None):
        return np.maximum(self.sign * self.r(x), 0.0) / TWO_PI

    def sample(self, u, wo=None):
        u = np.asarray(u, float)
        v = u[..., 0]
        (n,) = _bcast(u, self.n)
        n = n.reshape(v.shape)
        if self.sign > 0:
            # P+ = -e s ln s with s = c^(n+2), from c = 1 down to the root
            ls = np.real(special.lambertw(-v / E, 0))
        else:
            ls = np.real(special.lambertw(np.minimum((v - 1.0) / E, -1e-300), -1))
        c = np.exp(ls / (n + 2.0))
        return _polar(c, TWO_PI * u[..., 1])

    def cdf(self, c):
        """Tabulated CDFs, measured from the pole (positive) or the root (negative)."""
        c = np.asarray(c, float)
        n = self.n
        with np.errstate(divide="ignore", invalid="ignore"):
            core = E * (n + 2.0) * np.power(c, n + 2.0) * np.log(c)
        core = np.nan_to_num(core, nan=0.0)
        return -core if self.sign > 0 else 1.0 + core

    def mass(self, wo=None):
        return self.scale / (E * (self.n + 2.0))


class HenyeyGreensteinLobe(LobeSampler):
    """Parts of ``d/dg`` of the HG phase function over the scattering sphere.

    With ``c`` the scattering cosine, ``s = 1 + g^2 - 2 g c`` and
    ``Q = (3 g^2 + 1 - g (g^2 + 3) c) / s^(3/2)``, the positive part (towards
    ``c = 1``) has CDF ``K (Q - 1)`` and the negative part ``1 + K - K Q``,
    split at ``c* = g (5 - g^2) / (g^2 + 3)``.
    """

    space = "scatter"

    def __init__(self, g, sign: int):
        super().__init__(sign)
        self.g = np.asarray(g, float)
        self.name = f"HG:g{'+' if sign > 0 else '-'}"

    @staticmethod
    def root(g):
        return g * (5.0 - g * g) / (g * g + 3.0)

    @staticmethod
    def K(g):
        q = 3.0 ** 1.5 * (1.0 - g * g)
        return q / ((g * g + 3.0) ** 1.5 - q)

    @staticmethod
    def Q(c, g):
        s = 1.0 + g * g - 2.0 * g * c
        return (3.0 * g * g + 1.0 - g * (g * g + 3.0) * c) / s ** 1.5

    def _small(self, g):
        return np.abs(g) < 1e-6

    def pdf(self, x, wo=None):
        c = np.clip(np.asarray(x)[..., 2], -1.0, 1.0)
        g = self.g
        small = self._small(g)
        gs = np.where(small, 0.5, g)
        s = 1.0 + gs * gs - 2.0 * gs * c
        numer = (gs * gs + 3.0) * c + gs * (gs * gs - 5.0)
        p = self.K(gs) * gs * gs * np.maximum(self.sign * numer, 0.0) / (TWO_PI * s ** 2.5)
        p0 = np.maximum(self.sign * c, 0.0) * INV_PI
        return np.where(small, p0, p)

    def cdf_theta(self, theta, g):
        c = np.cos(theta)
        K = self.K(g)
        Q = self.Q(c, g)
        return K * (Q - 1.0) if self.sign > 0 else 1.0 + K - K * Q

    def sample(self, u, wo=None):
        u = np.asarray(u, float)
        v = u[..., 0]
        (g,) = _bcast(u, self.g)
        small = self._small(g)
        gs = np.where(small, 0.5, g)
        th_star = np.arccos(np.clip(self.root(gs), -1.0, 1.0))
        lo = np.zeros_like(gs) if self.sign > 0 else th_star
        hi = th_star if self.sign > 0 else np.full_like(gs, np.pi)

        def cdf(th, i):
            return self.cdf_theta(th, gs[i])

        def pdf(th, i):
            return _hg_lobe_theta_density(th, gs[i], self.sign)

        th = _accel.invert(_accel.HG, v.ravel(), lo, hi,
                           (gs, self.K(gs), float(self.sign)), cdf=cdf, pdf=pdf)
        th = th.reshape(v.shape)
        c = np.cos(th)
        c0 = np.sqrt(v) * self.sign
        c = np.where(small.reshape(v.shape), c0, c)
        return _polar(c, TWO_PI * u[..., 1])

    def mass(self, wo=None):
        g = self.g
        small = self._small(g)
        gs = np.where(small, 0.5, g)
        return np.where(small, 0.75, 1.0 / (2.0 * gs * gs * self.K(gs)))


def _hg_lobe_theta_density(th, g, sign):
    c = np.cos(th)
    s = 1.0 + g * g - 2.0 * g * c
    numer = (g * g + 3.0) * c + g * (g * g - 5.0)
    K = HenyeyGreensteinLobe.K(g)
    return K * g * g * np.maximum(sign * numer, 0.0) / s ** 2.5 * np.sin(th)


# ---------------------------------------------------------------------------
# Product lobes (p2 proportional to dg)


def solve_half_angle(v):
    """Solve ``(x + sin x) / pi = v`` for ``x`` in ``[0, pi]``."""
    return _accel.invert(_accel.HALF_ANGLE, v, 0.0, np.pi,
                         cdf=lambda x: (x + np.sin(x)) / np.pi,
                         pdf=lambda x: (1.0 + np.cos(x)) / np.pi)


def quarter_azimuth(v, ratio):
    """Invert the quarter-domain azimuth CDFs of the shape lobes.

    With ``tan(phi) = ratio * tan(psi)`` both the anisotropic microfacet CDF
    (``ratio = a2 / a1``) and the Ashikhmin-Shirley one
    (``ratio = sqrt((n1 + 1) / (n2 + 1))``) become ``(2 psi + sin 2 psi) / pi``,
    which no longer depends on the parameters.
    """
    psi = 0.5 * solve_half_angle(v)
    return np.arctan2(ratio * np.sin(psi), np.cos(psi))


def aniso_phi_cdf(phi, a1, a2):
    """Quarter-domain azimuth CDF of the shape derivative in ``a1``.

    ``a1`` is the differentiated roughness (``alpha_x`` for the x case).
    """
    phi = np.asarray(phi, float)
    with np.errstate(over="ignore"):
        at = np.arctan(a1 / a2 * np.tan(phi))
    at = np.where(phi >= 0.5 * np.pi, 0.5 * np.pi, at)
    frac = a2 * a1 * np.sin(2.0 * phi) / (a1 * a1 + a2 * a2 + (a2 * a2 - a1 * a1) * np.cos(2.0 * phi))
    return 2.0 / np.pi * (at + frac)


def aniso_phi_pdf(phi, a1, a2):
    """Quarter-domain density matching :func:`aniso_phi_cdf`."""
    c2 = np.cos(phi) ** 2
    a = c2 / (a1 * a1) + np.sin(phi) ** 2 / (a2 * a2)
    return 4.0 * c2 / (np.pi * a1 ** 3 * a2 * a * a)


def aniso_ggx_theta_cdf(theta, a):
    """Conditional CDF of the GGX shape derivative; equals ``(y / (1 + y))^2``
    with ``y = a tan^2``.  The closed form below divides by ``a^2 - 1``; near
    ``a = 1`` the simplified form is used instead."""
    theta = np.asarray(theta, float)
    a = np.asarray(a, float)
    near = np.abs(a * a - 1.0) < 1e-6
    asafe = np.where(near, 2.0, a)
    full = (asafe ** 2 / (asafe ** 2 - 1.0)
            - asafe ** 2 * ((1.0 - asafe) * np.cos(4.0 * theta) + asafe + 3.0)
            / (4.0 * (asafe ** 2 - 1.0) * ((asafe - 1.0) * np.sin(theta) ** 2 + 1.0) ** 2))
    y = a * np.tan(theta) ** 2
    simple = (y / (1.0 + y)) ** 2
    return np.where(near, simple, full)


class AnisoShapeLobe(LobeSampler):
    """``N * d g / d alpha_{x|y}`` for anisotropic GGX or Beckmann, in wh."""

    space = "wh"

    def __init__(self, kind: Kind, alpha_x, alpha_y, param: str, sign: int = 1):
        super().__init__(sign)
        if kind not in (Kind.AnisoGGX, Kind.AnisoBeckmann, Kind.IsoGGX, Kind.IsoBeckmann):
            raise ConfigError(f"{kind.value} is not a GGX/Beckmann model")
        self.ggx = kind in (Kind.AnisoGGX, Kind.IsoGGX)
        self.ax = np.asarray(alpha_x, float)
        self.ay = np.asarray(alpha_y, float)
        if param not in ("alpha_x", "alpha_y"):
            raise ConfigError(f"no shape lobe for {param}")
        self.param = param
        self.name = f"{kind.value}:{param}:shape"

    def _roles(self):
        return (self.ax, self.ay) if self.param == "alpha_x" else (self.ay, self.ax)

    def theta_pdf(self, c, a):
        """Conditional density per solid angle."""
        c = np.clip(c, 1e-300, 1.0)
        t2 = (1.0 - c * c) / (c * c)
        sec3 = 1.0 / c ** 3
        if self.ggx:
            return 4.0 * a * a * t2 * sec3 / (t2 * a + 1.0) ** 3
        return 2.0 * a * a * t2 * sec3 * np.exp(-a * t2)

    def pdf(self, x, wo=None):
        x = np.asarray(x, float)
        c = x[..., 2]
        phi = _azimuth(x)
        a1, a2 = self._roles()
        # fold into the quarter domain of the differentiated axis
        phq = np.arctan2(np.abs(np.sin(phi)), np.abs(np.cos(phi)))
        if self.param == "alpha_y":
            phq = 0.5 * np.pi - phq
        a = np.cos(phq) ** 2 / a1 ** 2 + np.sin(phq) ** 2 / a2 ** 2
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            p = aniso_phi_pdf(phq, a1, a2) / 4.0 * self.theta_pdf(c, a)
        return np.where(c > 0.0, np.nan_to_num(p, nan=0.0, posinf=0.0), 0.0)

    def sample(self, u, wo=None):
        u = np.asarray(u, float)
        a1, a2 = _bcast(u, *self._roles())
        shape = u.shape[:-1]
        ub = u[..., 1].ravel()
        phq = quarter_azimuth(_quarter_split(ub), a2 / a1)
        a = np.cos(phq) ** 2 / a1 ** 2 + np.sin(phq) ** 2 / a2 ** 2
        w = u[..., 0].ravel()
        if self.ggx:
            sw = np.sqrt(w)
            y = sw / np.maximum(1.0 - sw, 1e-300)
        else:
            y = -1.0 - np.real(special.lambertw(-(1.0 - w) / E, -1))
            y = np.where(w <= 0.0, 0.0, y)
        t2 = y / a
        c = 1.0 / np.sqrt(1.0 + t2)
        phi_local = phq if self.param == "alpha_x" else 0.5 * np.pi - phq
        phi = _unfold_quarter(phi_local, ub)
        return _polar(c, phi).reshape(shape + (3,))

    def mass(self, wo=None):
        a1, _ = self._roles()
        return 1.0 / a1


def as_phi_cdf(phi, n1, n2):
    phi = np.asarray(phi, float)
    with np.errstate(over="ignore"):
        at = np.arctan(np.sqrt((n2 + 1.0) / (n1 + 1.0)) * np.tan(phi))
    at = np.where(phi >= 0.5 * np.pi, 0.5 * np.pi, at)
    frac = (np.sqrt((n1 + 1.0) * (n2 + 1.0)) * np.sin(2.0 * phi)
            / (n1 + n2 + 2.0 + (n1 - n2) * np.cos(2.0 * phi)))
    return 2.0 / np.pi * (at + frac)


def as_phi_pdf(phi, n1, n2):
    c2 = np.cos(phi) ** 2
    a = n1 * c2 + n2 * np.sin(phi) ** 2
    return 4.0 * (n1 + 1.0) ** 1.5 * np.sqrt(n2 + 1.0) * c2 / (np.pi * (1.0 + a) ** 2)


class AshikhminShirleyShapeLobe(LobeSampler):
    """``N * |d g / d nu|`` (or nv) for Ashikhmin-Shirley, in wh."""

    space = "wh"

    def __init__(self, nu, nv, param: str, sign: int = -1):
        super().__init__(sign)
        self.nu = np.asarray(nu, float)
        self.nv = np.asarray(nv, float)
        if param not in ("nu", "nv"):
            raise ConfigError(f"no shape lobe for {param}")
        self.param = param
        self.name = f"AshikhminShirley:{param}:shape"

    def _roles(self):
        return (self.nu, self.nv) if self.param == "nu" else (self.nv, self.nu)

    def pdf(self, x, wo=None):
        x = np.asarray(x, float)
        c = np.clip(x[..., 2], 0.0, 1.0)
        phi = _azimuth(x)
        n1, n2 = self._roles()
        phq = np.arctan2(np.abs(np.sin(phi)), np.abs(np.cos(phi)))
        if self.param == "nv":
            phq = 0.5 * np.pi - phq
        a = n1 * np.cos(phq) ** 2 + n2 * np.sin(phq) ** 2
        with np.errstate(divide="ignore", invalid="ignore"):
            pt = -np.log(c) * (1.0 + a) ** 2 * np.power(c, a)
        p = as_phi_pdf(phq, n1, n2) / 4.0 * pt
        return np.where(c > 0.0, np.nan_to_num(p, nan=0.0), 0.0)

    def theta_cdf(self, c, a):
        return 1.0 - (1.0 - (a + 1.0) * np.log(c)) * np.power(c, a + 1.0)

    def sample(self, u, wo=None):
        u = np.asarray(u, float)
        n1, n2 = _bcast(u, *self._roles())
        shape = u.shape[:-1]
        ub = u[..., 1].ravel()
        phq = quarter_azimuth(_quarter_split(ub), np.sqrt((n1 + 1.0) / (n2 + 1.0)))
        a = n1 * np.cos(phq) ** 2 + n2 * np.sin(phq) ** 2
        w = u[..., 0].ravel()
        # 1 - (1 - ln s) s = w with s = c^(a+1)
        ls = 1.0 + np.real(special.lambertw(-(1.0 - w) / E, -1))
        ls = np.where(w <= 0.0, 0.0, ls)
        c = np.exp(ls / (a + 1.0))
        phi_local = phq if self.param == "nu" else 0.5 * np.pi - phq
        phi = _unfold_quarter(phi_local, ub)
        return _polar(c, phi).reshape(shape + (3,))

    def mass(self, wo=None):
        n1, _ = self._roles()
        return 0.5 / (n1 + 1.0)


class ABCShapeLobe(LobeSampler):
    """``N * |d g / d B|`` or ``|d g / d C|`` for the ABC NDF (no cosine)."""

    space = "wh"
    exact = False

    def __init__(self, B, C, param: str, sign: int = -1):
        super().__init__(sign)
        self.B = np.asarray(B, float)
        self.C = np.asarray(C, float)
        if param not in ("B", "C"):
            raise ConfigError(f"no shape lobe for {param}")
        self.param = param
        self.name = f"ABC:{param}:shape"

    def c_density(self, c, B, C):
        """Density in ``cos(theta_h)`` (tabulated form)."""
        v = 1.0 + B * (1.0 - c)
        Y = B + 1.0
        if self.param == "B":
            return (B * B * C * (C - 1.0) * Y ** C * (c - 1.0) * v ** (-1.0 - C)
                    / (1.0 + B * C - Y ** C))
        den = 1.0 - Y ** (1.0 - C) * ((C - 1.0) * np.log(Y) + 1.0)
        return B * (C - 1.0) ** 2 / den * np.log(v) / v ** C

    def cdf(self, c, B, C):
        """Tabulated CDF in theta (0 at the pole, 1 at the horizon)."""
        v = 1.0 + B * (1.0 - c)
        Y = B + 1.0
        if self.param == "B":
            return ((Y ** C * v ** (-C) * (1.0 + B * C * (1.0 - c)) - Y ** C)
                    / (1.0 + B * C - Y ** C))
        num = 1.0 - v ** (1.0 - C) * ((C - 1.0) * np.log(v) + 1.0)
        den = 1.0 - Y ** (1.0 - C) * ((C - 1.0) * np.log(Y) + 1.0)
        return num / den

    def pdf(self, x, wo=None):
        c = np.asarray(x, float)[..., 2]
        p = self.c_density(np.clip(c, 0.0, 1.0), self.B, self.C) / TWO_PI
        return np.where(c > 0.0, p, 0.0)

    def sample(self, u, wo=None):
        u = np.asarray(u, float)
        B, C = _bcast(u, self.B, self.C)
        shape = u.shape[:-1]
        fam = _accel.ABC_B if self.param == "B" else _accel.ABC_C
        th = _accel.invert(fam, u[..., 0].ravel(), 0.0, 0.5 * np.pi, (B, C),
                           cdf=lambda t, i: self.cdf(np.cos(t), B[i], C[i]),
                           pdf=lambda t, i: self.c_density(np.cos(t), B[i], C[i]) * np.sin(t))
        return _polar(np.cos(th), TWO_PI * u[..., 1].ravel()).reshape(shape + (3,))

    def mass(self, wo=None):
        B, C = self.B, self.C
        L = np.log1p(B)
        N = _b.abc_norm(B, C)
        if self.param == "B":
            integral = C / (B * B) * (_b._expm1_over(1.0 - C, L) - _b._expm1_over(-C, L))
        else:
            integral = _b._dexpm1_over(1.0 - C, L) / B
        return N * TWO_PI * integral


class EPDShapeLobe(LobeSampler):
    """``N * c^gamma exp(kappa c^gamma)`` for Hemi-EPD (no cosine)."""

    space = "wh"
    exact = False

    def __init__(self, kappa, gamma, sign: int = 1):
        super().__init__(sign)
        self.kappa = np.asarray(kappa, float)
        self.gamma = np.asarray(gamma, float)
        self.name = "HemiEPD:kappa:shape"

    def pdf(self, x, wo=None):
        c = np.clip(np.asarray(x, float)[..., 2], 0.0, 1.0)
        k, g = self.kappa, self.gamma
        cg = np.power(c, g)
        p = cg * np.exp(k * cg) / (TWO_PI * _b.epd_moment(g, k, g))
        return np.where(np.asarray(x)[..., 2] > 0.0, p, 0.0)

    def sample(self, u, wo=None):
        u = np.asarray(u, float)
        k, g = _bcast(u, self.kappa, self.gamma)
        shape = u.shape[:-1]
        total = _b.epd_moment(g, k, g)

        def cdf(t, i):
            ki, gi = k[i], g[i]
            return (total[i] - _b.epd_moment(gi, ki, gi, np.cos(t))) / total[i]

        def pdf(t, i):
            cg = np.power(np.cos(t), g[i])
            return cg * np.exp(k[i] * cg) * np.sin(t) / total[i]

        th = invert_cdf(cdf, u[..., 0].ravel(), 0.0, 0.5 * np.pi, pdf=pdf)
        return _polar(np.cos(th), TWO_PI * u[..., 1].ravel()).reshape(shape + (3,))

    def mass(self, wo=None):
        k, g = self.kappa, self.gamma
        return _b.epd_norm(k, g) * TWO_PI * _b.epd_moment(g, k, g)


# Burley radial profile ------------------------------------------------------


def burley_radial_cdf(r, d, which: int):
    r = np.asarray(r, float)
    if which == 1:
        return 1.0 - 0.25 * np.exp(-r / d) - 0.75 * np.exp(-r / (3.0 * d))
    return (1.0 - np.exp(-r / d) * (r + d) / (4.0 * d)
            - np.exp(-r / (3.0 * d)) * (3.0 * d + r) / (4.0 * d))


def burley_radial_density(r, d, which: int):
    """Density in ``r`` (the plane density times ``2 pi r``)."""
    r = np.asarray(r, float)
    if which == 1:
        return (np.exp(-r / d) + np.exp(-r / (3.0 * d))) / (4.0 * d)
    return r * (np.exp(-r / d) + np.exp(-r / (3.0 * d)) / 3.0) / (4.0 * d * d)


def _burley_sample(u, d, which):
    u = np.asarray(u, float)
    (dd,) = _bcast(u, d)
    shape = u.shape[:-1]
    rmax = BURLEY_RMAX * dd
    total = burley_radial_cdf(rmax, dd, which)
    fam = _accel.BURLEY1 if which == 1 else _accel.BURLEY2
    r = _accel.invert(fam, u[..., 0].ravel() * total, 0.0, rmax, (dd,),
                      cdf=lambda x, i: burley_radial_cdf(x, dd[i], which),
                      pdf=lambda x, i: burley_radial_density(x, dd[i], which))
    phi = TWO_PI * u[..., 1].ravel()
    return np.stack([r * np.cos(phi), r * np.sin(phi)], axis=-1).reshape(shape + (2,))


def _burley_pdf(x, d, which):
    x = np.asarray(x, float)
    r = np.linalg.norm(x, axis=-1)
    d = np.asarray(d, float)
    rmax = BURLEY_RMAX * d
    total = burley_radial_cdf(rmax, d, which)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = burley_radial_density(r, d, which) / (TWO_PI * r) / total
    return np.where((r <= rmax) & (r > 0.0), p, 0.0)


class BurleyLobe(LobeSampler):
    """``which=1``: the profile itself (``p1``); ``which=2``: its shape derivative."""

    space = "radial"

    def __init__(self, d, which: int, sign: int):
        super().__init__(sign)
        self.d = np.asarray(d, float)
        self.which = which
        self.name = f"Burley:d:{'forward' if which == 1 else 'shape'}"

    def sample(self, u, wo=None):
        return _burley_sample(u, self.d, self.which)

    def pdf(self, x, wo=None):
        return _burley_pdf(x, self.d, self.which)

    def mass(self, wo=None):
        return burley_radial_cdf(BURLEY_RMAX * self.d, self.d, self.which) / self.d


# ---------------------------------------------------------------------------
# Mixture lobes


def _theta_phi_o(wo):
    wo = np.asarray(wo, float)
    co = np.clip(wo[..., 2], -1.0, 1.0)
    return np.arccos(co), np.arctan2(wo[..., 1], wo[..., 0])


def oren_nayar_t2(theta_o):
    so, co = np.sin(theta_o), np.cos(theta_o)
    a21 = 0.5 * so * (theta_o - so * co)
    a22 = np.tan(theta_o) * (1.0 - so ** 3) / 3.0
    return a21, a22


class OrenNayarBLobe(LobeSampler):
    """The ``B(sigma)`` term of Oren-Nayar (positive derivative weight)."""

    space = "wi"

    def __init__(self, sigma, rho, sign: int = 1):
        super().__init__(sign)
        self.sigma = np.asarray(sigma, float)
        self.rho = np.asarray(rho, float)
        self.name = "OrenNayar:B"

    @staticmethod
    def _weights(theta_o):
        a21, a22 = oren_nayar_t2(theta_o)
        t2 = a21 + a22
        return np.where(t2 > 0.0, a21 / np.where(t2 > 0.0, t2, 1.0), 0.0)

    def theta_pdf(self, ti, to):
        w = self._weights(to)
        so, co = np.sin(to), np.cos(to)
        d1 = 0.5 * (to - so * co)
        d2 = 1.0 - so ** 3
        with np.errstate(divide="ignore", invalid="ignore"):
            p1 = w * np.sin(ti) / d1
            p2 = (1.0 - w) * 3.0 * np.sin(ti) * np.cos(ti) / d2
        return np.where(ti < to, np.nan_to_num(p1), np.nan_to_num(p2))

    def theta_cdf(self, ti, to):
        w = self._weights(to)
        so, co = np.sin(to), np.cos(to)
        with np.errstate(divide="ignore", invalid="ignore"):
            c1 = w * (ti - np.sin(ti) * np.cos(ti)) / (to - so * co)
            c2 = w + (1.0 - w) * (np.sin(ti) ** 3 - so ** 3) / (1.0 - so ** 3)
        return np.where(ti < to, c1, c2)

    def pdf(self, x, wo=None):
        x = np.asarray(x, float)
        to, po = _theta_phi_o(wo)
        ti = np.arccos(np.clip(x[..., 2], -1.0, 1.0))
        pi_ = np.arctan2(x[..., 1], x[..., 0])
        p = self.theta_pdf(ti, to) * 0.5 * np.maximum(0.0, np.cos(po - pi_))
        return np.where(x[..., 2] > 0.0, p, 0.0)

    def sample(self, u, wo=None):
        u = np.asarray(u, float)
        shape = u.shape[:-1]
        to, po = _theta_phi_o(wo)
        to = np.broadcast_to(to, shape).ravel()
        po = np.broadcast_to(po, shape).ravel()
        w = self._weights(to)
        v = u[..., 0].ravel()
        first = v < w
        # branch 1: (t - sin t cos t) proportional, inverted numerically on [0, theta_o]
        v1 = np.where(first, v / np.where(w > 0, w, 1.0), 0.0)
        target = v1 * (to - np.sin(to) * np.cos(to))
        t1 = _accel.invert(_accel.ON_BRANCH, target, 0.0, to,
                           cdf=lambda t: t - np.sin(t) * np.cos(t),
                           pdf=lambda t: 2.0 * np.sin(t) ** 2)
        # branch 2: sin^3 linear in the uniform
        v2 = np.where(first, 0.0, (v - w) / np.where(w < 1, 1.0 - w, 1.0))
        so3 = np.sin(to) ** 3
        t2 = np.arcsin(np.clip(np.cbrt(so3 + v2 * (1.0 - so3)), 0.0, 1.0))
        ti = np.where(first, t1, t2)
        uu = u[..., 1].ravel()
        dphi = np.where(uu < 0.5, -np.arcsin(np.clip(2.0 * uu, 0.0, 1.0)),
                        np.arcsin(np.clip(2.0 * uu - 1.0, 0.0, 1.0)))
        phi = po + dphi
        return _polar(np.cos(ti), phi).reshape(shape + (3,))

    def mass(self, wo=None):
        to, _ = _theta_phi_o(wo)
        a21, a22 = oren_nayar_t2(to)
        _, dB = _b.oren_nayar_ab_grad(self.sigma)
        return np.abs(dB) * self.rho * INV_PI * 2.0 * (a21 + a22)


class CosineLobe(LobeSampler):
    """Cosine-weighted hemisphere lobe with target ``scale * cos / pi``."""

    space = "wi"

    def __init__(self, sign: int, scale=1.0, exact: bool = True, name: str = "cosine"):
        super().__init__(sign)
        self.scale = scale
        self.exact = exact
        self.name = name

    def sample(self, u, wo=None):
        return cosine_sample_hemisphere(u)

    def pdf(self, x, wo=None):
        return np.maximum(np.asarray(x)[..., 2], 0.0) * INV_PI

    def mass(self, wo=None):
        return np.abs(self.scale)


class HalfGaussianThetaLobe(LobeSampler):
    """Half vectors whose polar angle follows the microcylinder Gaussian
    truncated to ``[0, pi/2]``; azimuth uniform."""

    space = "wh"
    exact = False

    def __init__(self, gamma_v, sign: int = -1):
        super().__init__(sign)
        self.gamma_v = np.asarray(gamma_v, float)
        self.name = "Microcylinder:gaussian"

    def _z(self, gv):
        return special.erf(0.5 * np.pi / (np.sqrt(2.0) * gv))

    def pdf(self, x, wo=None):
        x = np.asarray(x, float)
        c = np.clip(x[..., 2], -1.0, 1.0)
        th = np.arccos(c)
        gv = self.gamma_v
        p_theta = 2.0 * _b.microcylinder_gaussian(th, gv) / self._z(gv)
        s = np.sin(th)
        with np.errstate(divide="ignore", invalid="ignore"):
            p = p_theta / (TWO_PI * s)
        return np.where((c > 0.0) & (s > 0.0), p, 0.0)

    def sample(self, u, wo=None):
        u = np.asarray(u, float)
        (gv,) = _bcast(u, self.gamma_v)
        gv = gv.reshape(u.shape[:-1])
        th = np.sqrt(2.0) * gv * special.erfinv(u[..., 0] * self._z(gv))
        return _polar(np.cos(th), TWO_PI * u[..., 1])

    def mass(self, wo=None):
        return 1.0


class GaussianHalfLobe(LobeSampler):
    """Half of ``d/dmu`` of a normal density on the real line."""

    space = "line"

    def __init__(self, mu: float, sigma: float, sign: int):
        super().__init__(sign)
        self.mu = float(mu)
        self.sigma = float(sigma)
        self.name = f"gaussian{'+' if sign > 0 else '-'}"

    def shape(self, x):
        """``(x - mu) exp(-z^2 / 2)`` shared by the term and the pdf."""
        z = (np.asarray(x, float) - self.mu) / self.sigma
        return (np.asarray(x, float) - self.mu) * np.exp(-0.5 * z * z)

    def pdf(self, x, wo=None):
        t = self.shape(x)
        return np.maximum(self.sign * t, 0.0) / self.sigma ** 2

    def sample(self, u, wo=None):
        u = np.asarray(u, float)
        r = self.sigma * np.sqrt(-2.0 * np.log1p(-u[..., 0]))
        return self.mu + self.sign * r

    def mass(self, wo=None):
        return 1.0 / (np.sqrt(TWO_PI) * self.sigma)
