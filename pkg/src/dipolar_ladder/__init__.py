"""Tensor-network simulations of coupled magnetic and electric dipolar spin chains."""

from .model import (
    CapacityError,
    ParameterError,
    SystemParams,
    build_bond_gates,
    build_hamiltonian_mpo,
    load_params,
    params_from_dict,
)
from .mps import MPS, product_state, random_mps
from .dmrg import DmrgConfig, GroundStateResult, classify_phase, find_ground_state
from .tebd import QuenchSpec, TimeSeries, run_global_quench, run_local_quench
from .analysis import FitResult, VelocityEstimate, fit_damped_cosine, parameter_trend, track_light_cone

__version__ = "0.1.0"
CODE_VERSION = f"dipolar_ladder {__version__}"

__all__ = [
    "CapacityError",
    "ParameterError",
    "SystemParams",
    "build_bond_gates",
    "build_hamiltonian_mpo",
    "load_params",
    "params_from_dict",
    "MPS",
    "product_state",
    "random_mps",
    "DmrgConfig",
    "GroundStateResult",
    "classify_phase",
    "find_ground_state",
    "QuenchSpec",
    "TimeSeries",
    "run_global_quench",
    "run_local_quench",
    "FitResult",
    "VelocityEstimate",
    "fit_damped_cosine",
    "parameter_trend",
    "track_light_cone",
    "CODE_VERSION",
]
