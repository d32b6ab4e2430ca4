"""Directions, spherical coordinates, random streams and quadrature oracles.

Directions are stored as ``(..., 3)`` float arrays in the local shading frame
(normal = +z, tangent = +x).  Every function is vectorised over the leading
axes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

INV_PI = 1.0 / np.pi
TWO_PI = 2.0 * np.pi


# ---------------------------------------------------------------------------
# Directions


@dataclass(frozen=True)
class Direction:
    """A single unit vector.  Bulk code passes plain ``(..., 3)`` arrays."""

    x: float
    y: float
    z: float

    def __post_init__(self):
        n = np.sqrt(self.x * self.x + self.y * self.y + self.z * self.z)
        if abs(n - 1.0) > 1e-6:
            raise ValueError(f"direction is not unit length (norm={n})")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    @classmethod
    def from_array(cls, v) -> "Direction":
        v = np.asarray(v, dtype=float)
        return cls(float(v[0]), float(v[1]), float(v[2]))


@dataclass(frozen=True)
class SphericalCoord:
    theta: float
    phi: float

    def __post_init__(self):
        if not (0.0 <= self.theta <= np.pi):
            raise ValueError(f"theta out of range: {self.theta}")
        if not (0.0 <= self.phi < TWO_PI):
            raise ValueError(f"phi out of range: {self.phi}")


def spherical_to_dir(theta, phi) -> np.ndarray:
    """Map polar/azimuth angles to unit vectors, shape ``broadcast + (3,)``."""
    if isinstance(theta, SphericalCoord):
        theta, phi = theta.theta, theta.phi
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    st = np.sin(theta)
    return np.stack(np.broadcast_arrays(st * np.cos(phi), st * np.sin(phi), np.cos(theta)), axis=-1)


def dir_to_spherical(d) -> Tuple[np.ndarray, np.ndarray]:
    """Inverse of :func:`spherical_to_dir`; phi is wrapped into ``[0, 2pi)``."""
    d = np.asarray(d, dtype=float)
    theta = np.arctan2(np.hypot(d[..., 0], d[..., 1]), d[..., 2])
    phi = np.arctan2(d[..., 1], d[..., 0])
    phi = np.where(phi < 0.0, phi + TWO_PI, phi)
    phi = np.where(phi >= TWO_PI, 0.0, phi)
    return theta, phi


def normalize(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def dot(a, b) -> np.ndarray:
    return np.sum(np.asarray(a) * np.asarray(b), axis=-1)


def reflect(wo, wh) -> np.ndarray:
    """Mirror ``wo`` about ``wh``: ``2 (wo.wh) wh - wo``."""
    return 2.0 * dot(wo, wh)[..., None] * wh - wo


def half_vector_unchecked(wi, wo) -> np.ndarray:
    """Half vector without the degeneracy check; degenerate rows become +z."""
    s = np.asarray(wi, dtype=float) + np.asarray(wo, dtype=float)
    n = np.linalg.norm(s, axis=-1, keepdims=True)
    bad = n < 1e-12
    out = s / np.where(bad, 1.0, n)
    return np.where(bad, np.array([0.0, 0.0, 1.0]), out)


def half_vector(wi, wo) -> np.ndarray:
    s = np.asarray(wi, dtype=float) + np.asarray(wo, dtype=float)
    n = np.linalg.norm(s, axis=-1, keepdims=True)
    if np.any(n < 1e-12):
        raise ValueError("undefined half vector")
    return s / n


def half_vector_jacobian(wo, wh) -> np.ndarray:
    """Density factor ``1 / (4 wo.wh)`` taking a wh-space pdf to wi-space."""
    c = dot(wo, wh)
    if np.any(c <= 0.0):
        raise ValueError("back-facing half vector")
    return 0.25 / c


def frame_from_axis(n) -> Tuple[np.ndarray, np.ndarray]:
    """Two tangents completing an orthonormal frame around unit ``n``.

    Branchless construction of Duff et al. (2017).
    """
    n = np.asarray(n, dtype=float)
    sign = np.where(n[..., 2] >= 0.0, 1.0, -1.0)
    a = -1.0 / (sign + n[..., 2])
    b = n[..., 0] * n[..., 1] * a
    t = np.stack([1.0 + sign * n[..., 0] ** 2 * a, sign * b, -sign * n[..., 0]], axis=-1)
    s = np.stack([b, sign + n[..., 1] ** 2 * a, -n[..., 1]], axis=-1)
    return t, s


def to_frame(v, t, s, n) -> np.ndarray:
    return np.stack([dot(v, t), dot(v, s), dot(v, n)], axis=-1)


def from_frame(v, t, s, n) -> np.ndarray:
    v = np.asarray(v)
    return v[..., 0:1] * t + v[..., 1:2] * s + v[..., 2:3] * n


# ---------------------------------------------------------------------------
# Random streams


class RandomStream:
    """Counter-based uniform stream on the Philox-4x64 bijection.

    The state is the pair ``(seed, counter)``; ``counter`` counts consumed
    64-bit words so a stream can be rewound or forked deterministically.
    """

    def __init__(self, seed: int, counter: int = 0):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.counter = int(counter)
        if self.counter < 0:
            raise ValueError("counter must be non-negative")
        self._bitgen = np.random.Philox(key=self.seed)
        self._sync()

    @classmethod
    def from_keys(cls, *keys: int) -> "RandomStream":
        """Derive a stream from a tuple of integers (e.g. seed, run, tile)."""
        ss = np.random.SeedSequence([int(k) & 0xFFFFFFFFFFFFFFFF for k in keys])
        return cls(int(ss.generate_state(1, dtype=np.uint64)[0]))

    def _sync(self):
        # Philox blocks hold four words; advance to the block then discard.
        block, rem = divmod(self.counter, 4)
        self._bitgen.state = {
            "bit_generator": "Philox",
            "state": {"counter": np.array([block & (2**64 - 1), block >> 64, 0, 0], dtype=np.uint64),
                      "key": np.array([self.seed, 0], dtype=np.uint64)},
            "buffer": np.zeros(4, dtype=np.uint64),
            "buffer_pos": 4,
            "has_uint32": 0,
            "uinteger": 0,
        }
        if rem:
            self._bitgen.random_raw(rem)

    def uniform(self, *shape: int) -> np.ndarray:
        """Doubles in ``[0, 1)`` with 53 random bits each."""
        m = int(np.prod(shape)) if shape else 1
        raw = self._bitgen.random_raw(m)
        self.counter += m
        out = (raw >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)
        return out.reshape(shape) if shape else out[0]

    def fork(self) -> "RandomStream":
        """An independent copy positioned at the current counter."""
        return RandomStream(self.seed, self.counter)

    def __repr__(self):
        return f"RandomStream(seed={self.seed}, counter={self.counter})"


def as_stream(rng) -> RandomStream:
    if isinstance(rng, RandomStream):
        return rng
    if rng is None:
        return RandomStream(0)
    return RandomStream(int(rng))


# ---------------------------------------------------------------------------
# Quadrature


DOMAINS = ("hemisphere", "sphere", "radial-line", "interval")


@dataclass(frozen=True)
class QuadratureSpec:
    """Midpoint quadrature grid.

    ``resolution`` is ``(n_theta, n_phi)`` for spherical domains and ``(n,)``
    for 1-D ones.  ``bounds`` gives the 1-D integration range.  With
    ``graded=True`` the polar (or 1-D) nodes cluster towards both ends of the
    range through ``x = (1 - cos(pi s)) / 2``, which resolves NDF peaks at the
    pole.
    """

    domain: str
    resolution: Tuple[int, ...]
    bounds: Optional[Tuple[float, float]] = None
    graded: bool = False
    refine: bool = True

    def __post_init__(self):
        if self.domain not in DOMAINS:
            raise ValueError(f"unknown quadrature domain {self.domain!r}")
        res = tuple(int(r) for r in np.atleast_1d(self.resolution))
        object.__setattr__(self, "resolution", res)
        want = 2 if self.domain in ("hemisphere", "sphere") else 1
        if len(res) != want:
            raise ValueError(f"{self.domain} needs {want} resolution entries")
        if min(res) < 8:
            raise ValueError("resolution must be at least 8 per dimension")
        if self.domain in ("radial-line", "interval") and self.bounds is None:
            raise ValueError(f"{self.domain} quadrature needs bounds")

    def doubled(self) -> "QuadratureSpec":
        return QuadratureSpec(self.domain, tuple(2 * r for r in self.resolution),
                              self.bounds, self.graded, False)


def _nodes_1d(n: int, lo: float, hi: float, graded: bool):
    s = (np.arange(n) + 0.5) / n
    if not graded:
        return lo + (hi - lo) * s, np.full(n, (hi - lo) / n)
    x = lo + (hi - lo) * 0.5 * (1.0 - np.cos(np.pi * s))
    w = (hi - lo) * 0.5 * np.pi * np.sin(np.pi * s) / n
    return x, w


def quadrature_points(spec: QuadratureSpec):
    """Nodes and weights; spherical nodes are returned as unit vectors."""
    if spec.domain in ("hemisphere", "sphere"):
        nt, npf = spec.resolution
        tmax = 0.5 * np.pi if spec.domain == "hemisphere" else np.pi
        th, wt = _nodes_1d(nt, 0.0, tmax, spec.graded)
        ph, wp = _nodes_1d(npf, 0.0, TWO_PI, False)
        T, P = np.meshgrid(th, ph, indexing="ij")
        W = np.outer(wt * np.sin(th), wp)
        return spherical_to_dir(T, P).reshape(-1, 3), W.ravel(), (T.ravel(), P.ravel())
    lo, hi = spec.bounds
    x, w = _nodes_1d(spec.resolution[0], lo, hi, spec.graded)
    if spec.domain == "radial-line":
        # plane integral of a radially symmetric field: 2 pi r dr
        return x, w * TWO_PI * x, (x,)
    return x, w, (x,)


def _integrate_once(f, spec: QuadratureSpec) -> float:
    pts, w, coords = quadrature_points(spec)
    vals = np.asarray(f(pts), dtype=float)
    vals = np.broadcast_to(vals, w.shape)
    bad = ~np.isfinite(vals)
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        where = ", ".join(f"{c[i]:.6g}" for c in coords)
        raise ValueError(f"non-finite integrand value {vals[i]} at ({where})")
    return float(np.sum(vals * w))


def quadrature_integrate(f: Callable, spec: QuadratureSpec) -> float:
    """Integrate ``f`` over the domain of ``spec``.

    ``f`` receives all nodes at once: unit vectors ``(N, 3)`` on spherical
    domains, a 1-D array otherwise.  When ``spec.refine`` is set and the
    result moves by more than 1e-3 (relative) at twice the resolution, the
    finer estimate is returned.
    """
    v = _integrate_once(f, spec)
    if not spec.refine:
        return v
    v2 = _integrate_once(f, spec.doubled())
    if abs(v2 - v) > 1e-3 * max(abs(v2), 1e-12):
        v = _integrate_once(f, spec.doubled().doubled())
        return v
    return v2


# ---------------------------------------------------------------------------
# Chi-square goodness of fit


@dataclass
class ChiSquareResult:
    statistic: float
    p_value: float
    passed: bool
    dof: int
    n_cells: int = 0
    details: dict = field(default_factory=dict)

    # mirrors the mapping-style result {statistic, p_value, pass}
    def __getitem__(self, key):
        return {"statistic": self.statistic, "p_value": self.p_value, "pass": self.passed}[key]


def _cell_edges(n: int, lo: float, hi: float, graded: bool):
    s = np.arange(n + 1) / n
    if graded:
        return lo + (hi - lo) * 0.5 * (1.0 - np.cos(np.pi * s))
    return lo + (hi - lo) * s


def _cell_expectation_1d(pdf, edges, order=16):
    x, w = np.polynomial.legendre.leggauss(order)
    a, b = edges[:-1, None], edges[1:, None]
    pts = 0.5 * (b - a) * x[None, :] + 0.5 * (a + b)
    vals = np.asarray(pdf(pts.ravel()), dtype=float).reshape(pts.shape)
    return np.sum(vals * w[None, :], axis=1) * 0.5 * (b[:, 0] - a[:, 0])


def chi_square_test(sampler, spec: QuadratureSpec, n_samples: int, rng=None,
                    wo=None, alpha: float = 0.01) -> ChiSquareResult:
    """Pearson test of a sampler against its own pdf on the grid of ``spec``.

    ``sampler`` needs ``sample(u, wo)`` returning points and ``pdf(x, wo)``.
    Spherical domains take unit vectors; ``interval`` takes scalars and
    ``radial-line`` takes 2-D plane points binned by radius.  A graded ``spec``
    clusters the polar bin edges towards the poles.
    """
    rng = as_stream(rng)
    n_cells = int(np.prod(spec.resolution))
    if n_samples < 10 * n_cells:
        raise ValueError("n_samples must be at least 10x the cell count")
    u = rng.uniform(n_samples, 2)
    wo_b = None if wo is None else np.broadcast_to(np.asarray(wo, float), (n_samples, 3))
    x = np.asarray(sampler.sample(u, wo_b))

    if spec.domain in ("hemisphere", "sphere"):
        nt, npf = spec.resolution
        tmax = 0.5 * np.pi if spec.domain == "hemisphere" else np.pi
        ok = np.all(np.isfinite(x), axis=-1)
        if not np.all(ok):
            i = int(np.flatnonzero(~ok)[0])
            raise ValueError(f"sampler produced a non-finite sample at index {i}: {x[i]}")
        th, ph = dir_to_spherical(x)
        out = th > tmax + 1e-12
        if np.any(out):
            i = int(np.flatnonzero(out)[0])
            raise ValueError(f"sample outside domain at theta={th[i]:.6g}, phi={ph[i]:.6g}")
        te = _cell_edges(nt, 0.0, tmax, spec.graded)
        it = np.clip(np.searchsorted(te, th, side="right") - 1, 0, nt - 1)
        ip = np.minimum((ph / TWO_PI * npf).astype(int), npf - 1)
        observed = np.bincount(it * npf + ip, minlength=n_cells).astype(float)

        # composite Gauss-Legendre per cell: peaked pdfs stay resolved
        gx, gw = np.polynomial.legendre.leggauss(8)
        sub = 8
        tsub = (te[:-1, None] + (te[1:, None] - te[:-1, None]) * np.arange(sub + 1) / sub)
        ta, tb = tsub[:, :-1, None], tsub[:, 1:, None]
        tq = (0.5 * (tb - ta) * gx + 0.5 * (ta + tb)).reshape(nt, -1)
        wt = (0.5 * (tb - ta) * gw).reshape(nt, -1)
        pe = np.linspace(0.0, TWO_PI, npf + 1)
        pq = (0.5 * (pe[1:, None] - pe[:-1, None]) * gx + 0.5 * (pe[1:, None] + pe[:-1, None]))
        wp = 0.5 * (pe[1] - pe[0]) * gw
        expected = np.empty((nt, npf))
        wo_a = None if wo is None else np.asarray(wo, float)
        for i in range(nt):
            T, P = np.broadcast_arrays(tq[i][None, :, None], pq[:, None, :])
            dirs = spherical_to_dir(T, P).reshape(-1, 3)
            wo_q = None if wo_a is None else np.broadcast_to(wo_a, dirs.shape)
            pv = np.asarray(sampler.pdf(dirs, wo_q), dtype=float).reshape(T.shape)
            wgt = wt[i][None, :, None] * wp[None, None, :] * np.sin(T)
            expected[i] = np.sum(pv * wgt, axis=(1, 2))
        expected = expected.ravel() * n_samples
    else:
        lo, hi = spec.bounds
        n = spec.resolution[0]
        if spec.domain == "radial-line":
            r = np.linalg.norm(x.reshape(n_samples, -1), axis=-1)

            def dens(rr):
                pts = np.stack([rr, np.zeros_like(rr)], axis=-1)
                return sampler.pdf(pts, None) * TWO_PI * rr
        else:
            r = x.reshape(n_samples)

            def dens(rr):
                return sampler.pdf(rr, None)
        bad = ~np.isfinite(r) | (r < lo) | (r > hi)
        if np.any(bad):
            i = int(np.flatnonzero(bad)[0])
            raise ValueError(f"sample outside domain at x={r[i]:.6g}")
        edges = np.linspace(lo, hi, n + 1)
        idx = np.minimum(((r - lo) / (hi - lo) * n).astype(int), n - 1)
        observed = np.bincount(idx, minlength=n).astype(float)
        expected = _cell_expectation_1d(dens, edges) * n_samples

    # pool low-expectation cells into one
    low = expected < 5.0
    obs = np.append(observed[~low], observed[low].sum())
    exp = np.append(expected[~low], expected[low].sum())
    if exp[-1] < 5.0:
        # fold a tiny pooled cell into the last regular one
        if len(obs) > 1:
            obs[-2] += obs[-1]
            exp[-2] += exp[-1]
        obs, exp = obs[:-1], exp[:-1]
    # expected mass not covered by the grid still counts for the statistic
    keep = exp > 0
    obs, exp = obs[keep], exp[keep]
    stat = float(np.sum((obs - exp) ** 2 / exp))
    dof = max(len(obs) - 1, 1)
    p = float(stats.chi2.sf(stat, dof))
    return ChiSquareResult(stat, p, p > alpha, dof, len(obs),
                           {"expected_total": float(expected.sum()), "n_samples": n_samples})


class UniformHemisphereSampler:
    """Reference sampler used by tests and the chi2 command."""

    def sample(self, u, wo=None):
        z = u[..., 0]
        r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
        phi = TWO_PI * u[..., 1]
        return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=-1)

    def pdf(self, x, wo=None):
        return np.where(np.asarray(x)[..., 2] >= 0.0, 0.5 * INV_PI, 0.0)


class CosineHemisphereSampler:
    def sample(self, u, wo=None):
        return cosine_sample_hemisphere(u)

    def pdf(self, x, wo=None):
        return np.maximum(np.asarray(x)[..., 2], 0.0) * INV_PI


def cosine_sample_hemisphere(u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    r = np.sqrt(u[..., 0])
    phi = TWO_PI * u[..., 1]
    z = np.sqrt(np.maximum(0.0, 1.0 - u[..., 0]))
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=-1)
