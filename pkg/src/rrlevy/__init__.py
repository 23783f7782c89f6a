"""Refracted-reflected spectrally negative Levy processes.

Scale functions, fluctuation identities, Monte Carlo simulation and
cross-checks for the hyperexponential jump family.
"""

from .errors import ConfigError, DomainError, NumericalError, RootFindingError
from .identities import IdentityContext, Infinite
from .model import ModelSpec, classify, load_model, model_hash, net_drift, phi, psi, psi_Y, varphi
from .scale import ScaleEvaluator
from .simulator import SimConfig, run_ensemble

__all__ = [
    "ConfigError",
    "DomainError",
    "IdentityContext",
    "Infinite",
    "ModelSpec",
    "NumericalError",
    "RootFindingError",
    "ScaleEvaluator",
    "SimConfig",
    "classify",
    "load_model",
    "model_hash",
    "net_drift",
    "phi",
    "psi",
    "psi_Y",
    "run_ensemble",
    "varphi",
]

__version__ = "0.1.0"
