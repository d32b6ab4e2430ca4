"""Low-variance Monte Carlo estimators for derivatives of BRDFs with respect
to their material parameters."""

from . import accel, brdf, core, dbrdf, decomp, estimators, invrend, render, validation
from .brdf import BrdfModel, ConfigError, Kind, model
from .dbrdf import eval_derivative, finite_difference
from .decomp import Decomposition, LobePair, build, registry
from .estimators import EstimatorConfig, EstimatorKind, estimate

__version__ = "0.1.0"

__all__ = [
    "accel", "brdf", "core", "dbrdf", "decomp", "estimators", "invrend", "render", "validation",
    "BrdfModel", "ConfigError", "Kind", "model", "eval_derivative", "finite_difference",
    "Decomposition", "LobePair", "build", "registry", "EstimatorConfig", "EstimatorKind",
    "estimate", "__version__",
]
