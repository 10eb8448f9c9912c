"""Tensor-based channel estimation for RIS-assisted MIMO links with element imperfections."""

from .estimators import (
    ALGORITHMS,
    Estimate,
    Factors,
    IdentifiabilityError,
    als_no_imperfection_baseline,
    check_identifiability,
    clairvoyant_ls,
    hosvd_sti,
    remove_scaling_ambiguity,
    tals_lti,
    tals_sti,
)
from .harness import ExperimentSpec, get_preset, nmse, run_monte_carlo
from .system_model import SystemConfig

__version__ = "0.1.0"

__all__ = [
    "ALGORITHMS",
    "Estimate",
    "Factors",
    "IdentifiabilityError",
    "SystemConfig",
    "ExperimentSpec",
    "als_no_imperfection_baseline",
    "check_identifiability",
    "clairvoyant_ls",
    "get_preset",
    "hosvd_sti",
    "nmse",
    "remove_scaling_ambiguity",
    "run_monte_carlo",
    "tals_lti",
    "tals_sti",
]
