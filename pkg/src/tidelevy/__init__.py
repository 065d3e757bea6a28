"""Stochastic shallow-water tide model with Wiener and compound Poisson forcing."""

__version__ = "0.1.0"

from .grid import ContractError, DimensionError, DomainSpec  # noqa: E402
from .noise import JumpSpec, NoiseModel, WienerSpec, default_noise, path_rng  # noqa: E402
from .operators import ModelParams  # noqa: E402
from .stepper import DivergenceError, SimConfig, simulate, simulate_ensemble  # noqa: E402

__all__ = [
    "__version__",
    "ContractError",
    "DimensionError",
    "DivergenceError",
    "DomainSpec",
    "JumpSpec",
    "ModelParams",
    "NoiseModel",
    "SimConfig",
    "WienerSpec",
    "default_noise",
    "path_rng",
    "simulate",
    "simulate_ensemble",
]
