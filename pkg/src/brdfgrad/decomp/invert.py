"""Vectorised numerical inversion of monotone CDFs."""

from __future__ import annotations

import inspect

import numpy as np


class NonMonotoneCDF(ValueError):
    pass


def invert_cdf(cdf, u, a, b, pdf=None, tol: float = 1e-10, bracket: float = 1e-6,
               max_newton: int = 30):
    """Solve ``cdf(x) = u`` for ``x`` in ``[a, b]`` elementwise.

    Bisection shrinks the bracket to ``bracket`` width, then Newton steps use
    ``pdf`` as the derivative.  A Newton step that leaves the bracket, or a
    derivative below 1e-12, falls back to a bisection step.  Without ``pdf``
    the routine bisects to machine resolution.

    ``cdf`` and ``pdf`` are called with arrays of the same shape as ``u``
    (after broadcasting with ``a`` and ``b``) plus an index array so callers
    can slice their own per-element parameters: ``cdf(x, idx)``.  One-argument
    callables are accepted as well.
    """
    cdf = _with_index(cdf)
    if pdf is not None:
        pdf = _with_index(pdf)
    u, a, b = np.broadcast_arrays(np.asarray(u, float), np.asarray(a, float), np.asarray(b, float))
    shape = u.shape
    u = u.ravel().copy()
    lo = a.ravel().copy()
    hi = b.ravel().copy()
    idx = np.arange(u.size)
    if u.size == 0:
        return u.reshape(shape)

    flo = np.asarray(cdf(lo, idx), float)
    fhi = np.asarray(cdf(hi, idx), float)
    if np.any(flo > fhi + 1e-12):
        i = int(np.flatnonzero(flo > fhi + 1e-12)[0])
        raise NonMonotoneCDF(f"cdf decreasing on [{lo[i]}, {hi[i]}]")
    u = np.clip(u, flo, fhi)

    width_goal = bracket * np.maximum(1.0, np.abs(hi - lo))
    n_bisect = int(np.ceil(np.log2(max(np.max((hi - lo) / width_goal), 1.0)))) + 1
    for _ in range(n_bisect):
        mid = 0.5 * (lo + hi)
        fm = np.asarray(cdf(mid, idx), float)
        bad = (fm < flo - 1e-12) | (fm > fhi + 1e-12)
        if np.any(bad):
            i = int(np.flatnonzero(bad)[0])
            raise NonMonotoneCDF(f"cdf not monotone near x={mid[i]}")
        left = fm < u
        lo = np.where(left, mid, lo)
        flo = np.where(left, fm, flo)
        hi = np.where(left, hi, mid)
        fhi = np.where(left, fhi, fm)

    x = 0.5 * (lo + hi)
    if pdf is None:
        for _ in range(60):
            fm = np.asarray(cdf(x, idx), float)
            left = fm < u
            lo = np.where(left, x, lo)
            hi = np.where(left, hi, x)
            xn = 0.5 * (lo + hi)
            if np.all(xn == x):
                break
            x = xn
        return x.reshape(shape)

    active = np.ones(u.size, dtype=bool)
    for _ in range(max_newton):
        ia = np.flatnonzero(active)
        if ia.size == 0:
            break
        xa = x[ia]
        f = np.asarray(cdf(xa, idx[ia]), float) - u[ia]
        done = np.abs(f) < tol
        # keep the bracket tight so the fallback stays safe
        pos = f > 0
        hi[ia] = np.where(pos, xa, hi[ia])
        lo[ia] = np.where(pos, lo[ia], xa)
        d = np.asarray(pdf(xa, idx[ia]), float)
        ok = d > 1e-12
        step = np.where(ok, f / np.where(ok, d, 1.0), 0.0)
        xn = xa - step
        inside = ok & (xn > lo[ia]) & (xn < hi[ia])
        xn = np.where(inside, xn, 0.5 * (lo[ia] + hi[ia]))
        stalled = xn == xa
        x[ia] = np.where(done, xa, xn)
        active[ia] = ~(done | stalled)
    return x.reshape(shape)


def _with_index(fn):
    if isinstance(fn, np.ufunc):
        return lambda x, idx: fn(x)
    try:
        n = len([p for p in inspect.signature(fn).parameters.values()
                 if p.default is inspect.Parameter.empty
                 and p.kind in (p.POSITIONAL_ONLY, p.POSITIONAL_OR_KEYWORD)])
    except (TypeError, ValueError):
        n = 2
    if n >= 2:
        return fn
    return lambda x, idx: fn(x)
