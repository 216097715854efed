"""Differentiable matrix square root and inverse square root."""

from .backward import (
    Diverged,
    GradOutput,
    LyapunovProblem,
    SignIterate,
    bartels_stewart,
    finite_diff_check,
    invsqrt_grad,
    invsqrt_grad_to_lyapunov,
    kron_closed_form,
    lyapunov_solve_sign,
    matrix_sign_ns,
    ns_backward,
    ns_pre_post_grad,
    ns_sqrt_grad,
)
from .forward import (
    Method,
    NonPositiveEigenvalue,
    SqrtOutput,
    exact_invsqrt_eig,
    exact_sqrt_eig,
    mae,
    matrix_invsqrt,
    matrix_sqrt,
    mpa_invsqrt,
    mpa_sqrt,
    mtp_sqrt,
    ns_invsqrt_coupled,
    ns_invsqrt_single,
    ns_sqrt_coupled,
)
from .matcore import (
    EigenDecomposition,
    MatrixBatch,
    NonConvergence,
    OpCounter,
    SingularMatrix,
    counting,
    eig_sym,
    fro_norm,
    matmul,
    random_spd,
    solve_linear,
)
from .pade import PadeCoefficients, PoleDetected, solve_pade_coefficients, verify_no_poles
from .whitening import WhitenConfig, cov_pool_sqrt, covariance, zca_whiten

__all__ = [name for name in dir() if not name.startswith("_")]
