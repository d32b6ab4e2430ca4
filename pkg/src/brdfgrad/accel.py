"""Backend selection for the compiled kernels.

The Cython extensions are optional.  When they are missing, or when the
``BRDFGRAD_PURE`` environment variable is set, the numpy implementations are
used instead; both produce the same numbers to within the inversion
tolerance.
"""

from __future__ import annotations

import contextlib
import os

from .decomp.invert import invert_cdf

HALF_ANGLE, HG, ABC_B, ABC_C, BURLEY1, BURLEY2, ON_BRANCH = range(7)

try:
    from . import _kernels
except ImportError:  # pragma: no cover - depends on the build
    _kernels = None

try:
    from . import _bvh
except ImportError:  # pragma: no cover - depends on the build
    _bvh = None

_state = {"compiled": _kernels is not None and not os.environ.get("BRDFGRAD_PURE")}


def compiled_available() -> bool:
    return _kernels is not None


def backend() -> str:
    return "compiled" if _state["compiled"] else "python"


@contextlib.contextmanager
def use_backend(name: str):
    """Temporarily switch between ``"compiled"`` and ``"python"``."""
    if name not in ("compiled", "python"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "compiled" and _kernels is None:
        raise RuntimeError("compiled kernels are not built")
    old = _state["compiled"]
    _state["compiled"] = name == "compiled"
    try:
        yield
    finally:
        _state["compiled"] = old


def invert(family: int, u, lo, hi, params=(0.0, 0.0, 0.0), cdf=None, pdf=None):
    """Invert a closed-form CDF family.

    ``cdf``/``pdf`` are the numpy fallbacks with the ``fn(x, idx)`` calling
    convention of :func:`invert_cdf`; ``params`` must already be flat arrays
    matching ``u`` (or scalars).
    """
    if _state["compiled"]:
        p = tuple(params) + (0.0,) * (3 - len(params))
        return _kernels.invert(family, u, lo, hi, *p)
    return invert_cdf(cdf, u, lo, hi, pdf=pdf)


def bvh_module():
    return _bvh if _state["compiled"] else None


__all__ = ["backend", "compiled_available", "use_backend", "invert", "bvh_module",
           "HALF_ANGLE", "HG", "ABC_B", "ABC_C", "BURLEY1", "BURLEY2", "ON_BRANCH"]
