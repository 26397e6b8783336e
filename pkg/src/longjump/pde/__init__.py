"""Coefficients and finite-difference solver for the limiting parabolic equation."""

from .coefficients import (
    DomainError,
    G_eval,
    HW_det_closed,
    HW_eval,
    HW_sym,
    HW_trace_closed,
    W_eval,
    in_triangle,
    lobachevsky_integral,
    max_eigenvalue,
    monotonicity_gap,
    mu_eval,
    sigma_eval,
    sigma_grad,
    sigma_hess,
)
from .solver import (
    CFLViolation,
    Grid,
    SlopeEscape,
    Trajectory,
    AdmissibleSet,
    face_slopes,
    rhs_divergence,
    rhs_quasilinear,
    solve,
    write_trajectory,
)

__all__ = [
    "CFLViolation", "DomainError", "G_eval", "Grid", "HW_det_closed", "HW_eval", "HW_sym",
    "HW_trace_closed", "SlopeEscape", "Trajectory", "W_eval", "AdmissibleSet", "face_slopes",
    "in_triangle", "lobachevsky_integral", "max_eigenvalue", "monotonicity_gap", "mu_eval",
    "rhs_divergence", "rhs_quasilinear", "sigma_eval", "sigma_grad", "sigma_hess", "solve",
    "write_trajectory",
]
