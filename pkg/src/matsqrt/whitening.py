"""ZCA whitening and covariance square-root pooling on ``C x S`` features."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .backward import GradOutput, invsqrt_grad_to_lyapunov, lyapunov_solve_sign
from .forward import Method, matrix_invsqrt, matrix_sqrt
from .matcore import matmul, max_abs, solve_linear, symmetric


@dataclass(frozen=True)
class WhitenConfig:
    eps: float = 1e-5
    method: Method = Method.EXACT
    degree_or_iters: int | None = None
    lya_iters: int = 8
    lya_tol: float = 1e-7

    def __post_init__(self) -> None:
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        object.__setattr__(self, "method", Method(self.method))


def _features(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 2:
        raise ValueError(f"features must be C x S with C >= 1 and S >= 2, got shape {x.shape}")
    return x


def centered(x) -> np.ndarray:
    x = _features(x)
    return x - x.mean(axis=1, keepdims=True)


def covariance(x, eps: float) -> np.ndarray:
    """``(X - mu)(X - mu)^T + eps I``, deliberately without a ``1/S`` factor."""
    xc = centered(x)
    return symmetric(xc @ xc.T + eps * np.eye(xc.shape[0]))


def whitening_matrix(x, cfg: WhitenConfig = WhitenConfig()) -> np.ndarray:
    """``A^{-1/2}`` of the regularized covariance."""
    a = covariance(x, cfg.eps)
    if cfg.method in (Method.MPA, Method.NS_SINGLE):
        return matrix_invsqrt(a, cfg.method, cfg.degree_or_iters).sqrt
    root = matrix_sqrt(a, cfg.method, cfg.degree_or_iters).sqrt
    return symmetric(solve_linear(root, np.eye(a.shape[0])))


def zca_whiten(x, cfg: WhitenConfig = WhitenConfig()) -> np.ndarray:
    """``A^{-1/2} X``.

    MPA and single-variable NS produce the inverse root directly; the other
    methods solve ``A^{1/2} X_w = X`` instead of forming an inverse.
    """
    x = _features(x)
    a = covariance(x, cfg.eps)
    if cfg.method in (Method.MPA, Method.NS_SINGLE):
        return matmul(matrix_invsqrt(a, cfg.method, cfg.degree_or_iters).sqrt, x)
    root = matrix_sqrt(a, cfg.method, cfg.degree_or_iters).sqrt
    return solve_linear(root, x)


def whiteness(x_w) -> float:
    """``max |cov(X_w) - I|`` with no regularizer."""
    x_w = _features(x_w)
    return max_abs(covariance(x_w, 0.0) - np.eye(x_w.shape[0]))


def cov_pool_sqrt(x, cfg: WhitenConfig = WhitenConfig()) -> np.ndarray:
    """Square root of the uncentered second moment ``X X^T + eps I``."""
    x = _features(x)
    a = symmetric(x @ x.T + cfg.eps * np.eye(x.shape[0]))
    return matrix_sqrt(a, cfg.method, cfg.degree_or_iters).sqrt


def zca_whiten_grad(x, grad_out, cfg: WhitenConfig = WhitenConfig()) -> tuple[np.ndarray, GradOutput]:
    """Gradient of ``<G, zca_whiten(X)>`` with respect to ``X``.

    The inverse-root step goes through the Lyapunov sign solver. Returns
    ``(dl/dX, solver output)``.
    """
    x = _features(x)
    grad_out = np.asarray(grad_out, dtype=np.float64)
    if grad_out.shape != x.shape:
        raise ValueError(f"gradient shape {grad_out.shape} does not match features {x.shape}")
    w = whitening_matrix(x, cfg)
    g_w = symmetric(grad_out @ x.T)
    problem = invsqrt_grad_to_lyapunov(w, matmul(w, w), g_w, cfg.lya_tol, cfg.lya_iters)
    sol = lyapunov_solve_sign(problem)
    g_a = symmetric(sol.grad)
    # A = Xc Xc^T + eps I, Xc = X (I - 11^T / S)
    g_xc = 2.0 * g_a @ centered(x)
    g_x = w @ grad_out + g_xc - g_xc.mean(axis=1, keepdims=True)
    return g_x, sol
