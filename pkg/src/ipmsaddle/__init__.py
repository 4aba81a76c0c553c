"""Iterative proximal minimization for index-k saddle points."""
from .auxiliary import AuxParams, PenaltyForm, eval_w, eval_w_tilde, grad_w_tilde
from .landscape import GinzburgLandau1D, MetricKind, ToyPotential2D
from .solver import IpmConfig, IterationTrace, estimate_convergence_order, run_ipm, verify_nash_residuals
from .spectral import SpectralInfo, lowest_k_modes

__all__ = [
    "AuxParams",
    "GinzburgLandau1D",
    "IpmConfig",
    "IterationTrace",
    "MetricKind",
    "PenaltyForm",
    "SpectralInfo",
    "ToyPotential2D",
    "estimate_convergence_order",
    "eval_w",
    "eval_w_tilde",
    "grad_w_tilde",
    "lowest_k_modes",
    "run_ipm",
    "verify_nash_residuals",
]
