"""Backward passes: gradients of the matrix square root and its inverse.

The main route treats ``dl/dA`` as the solution ``X`` of the Lyapunov
equation ``B X + X B = C`` with ``B = A^{1/2}`` and ``C = dl/dA^{1/2}``,
and solves it with a coupled Newton-Schulz sign iteration. Exact solvers
(eigenbasis and Kronecker) and the reverse sweep of the Newton-Schulz
forward pass serve as baselines and oracles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .forward import NonPositiveEigenvalue, ns_sqrt_coupled
from .matcore import (
    eig_sym,
    fro_norm,
    matmul,
    record,
    solve_linear,
    symmetric,
    trace_product,
)

DIVERGENCE_LIMIT = 1e3
KRON_MAX_DIM = 16


class Diverged(ArithmeticError):
    pass


@dataclass
class LyapunovProblem:
    b: np.ndarray
    c: np.ndarray
    tolerance: float = 1e-7
    max_iters: int = 8

    def __post_init__(self) -> None:
        self.b = symmetric(self.b)
        self.c = np.asarray(self.c, dtype=np.float64)
        if self.b.ndim != 2 or self.b.shape != self.c.shape:
            raise ValueError(f"B and C must be square with equal shape, got {self.b.shape} and {self.c.shape}")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.tolerance < 0:
            raise ValueError("tolerance must be >= 0")


@dataclass
class SignIterate:
    b_k: np.ndarray
    c_k: np.ndarray
    iter_index: int
    residual: float

    @property
    def x(self) -> np.ndarray:
        return 0.5 * self.c_k


@dataclass
class GradOutput:
    grad: np.ndarray
    iters_used: int
    residual_b: float
    residual_c_vs_oracle: float | None = None
    residual_history: list[float] = field(default_factory=list)
    iterates: list[SignIterate] | None = field(default=None, repr=False)


def lyapunov_solve_sign(p: LyapunovProblem, keep_iterates: bool = False) -> GradOutput:
    """Solve ``B X + X B = C`` for SPD ``B`` by the coupled sign iteration.

    Stops after ``max_iters`` steps or once ``||B_k - I||_F < tolerance``.
    Each step costs six products.
    """
    scale = fro_norm(p.b)
    if scale == 0.0 or not math.isfinite(scale):
        raise Diverged(f"cannot normalize B with ||B||_F = {scale}")
    eye = np.eye(p.b.shape[0])
    b = p.b / scale
    c = p.c / scale
    history: list[float] = []
    iterates = [SignIterate(b, c, 0, fro_norm(b - eye))] if keep_iterates else None
    k = 0
    while k < p.max_iters:
        b2 = matmul(b, b)
        b3 = matmul(b, b2)
        b2c = matmul(b2, c)
        bc = matmul(b, c)
        bcb = matmul(bc, b)
        cb2 = matmul(c, b2)
        c = 0.5 * (-b2c + bcb + 3.0 * c - cb2)
        b = 0.5 * (3.0 * b - b3)
        k += 1
        res = fro_norm(b - eye)
        history.append(res)
        if keep_iterates:
            iterates.append(SignIterate(b, c, k, res))
        if not math.isfinite(res) or res > DIVERGENCE_LIMIT:
            raise Diverged(f"||B_k - I||_F = {res:.3e} at iteration {k}; is B positive definite?")
        if res < p.tolerance:
            break
    return GradOutput(0.5 * c, k, history[-1], residual_history=history, iterates=iterates)


def lyapunov_block(b, c) -> np.ndarray:
    """``[[B, C], [0, -B]]``, whose sign is ``[[I, 2X], [0, -I]]``."""
    b = np.asarray(b, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    n = b.shape[0]
    h = np.zeros((2 * n, 2 * n))
    h[:n, :n] = b
    h[:n, n:] = c
    h[n:, n:] = -b
    return h


def matrix_sign_ns(h, iters: int = 40, scale: float | None = None, tol: float = 1e-14) -> np.ndarray:
    """Newton-Schulz sign iteration ``H <- H (3I - H^2) / 2``.

    ``H`` is divided by ``scale`` first (``||H||_F`` by default). Stops
    early once ``||H_k^2 - I||_F <= tol``.
    """
    h = np.asarray(h, dtype=np.float64)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {h.shape}")
    scale = fro_norm(h) if scale is None else float(scale)
    if scale <= 0.0:
        raise ValueError("scale must be positive")
    eye = np.eye(h.shape[0])
    h = h / scale
    for _ in range(iters):
        h2 = matmul(h, h)
        res = fro_norm(h2 - eye)
        if not math.isfinite(res) or res > DIVERGENCE_LIMIT:
            raise Diverged(f"||H_k^2 - I||_F = {res:.3e}")
        if res <= tol:
            break
        h = 0.5 * matmul(h, 3.0 * eye - h2)
    return h


def bartels_stewart(b, c) -> np.ndarray:
    """Exact solve in the eigenbasis of ``B``: ``X = U (C^_ij / (l_i + l_j)) U^T``."""
    b = symmetric(b)
    c = np.asarray(c, dtype=np.float64)
    dec = eig_sym(b)
    lam = dec.eigenvalues
    denom = lam[:, None] + lam[None, :]
    if np.min(denom) <= 1e-14:
        raise NonPositiveEigenvalue(f"eigenvalue sum {np.min(denom):.3e} <= 1e-14")
    u = dec.eigenvectors
    c_hat = matmul(matmul(u.T, c), u)
    return matmul(matmul(u, c_hat / denom), u.T)


def kron_closed_form(b, c) -> np.ndarray:
    """Dense ``(B (x) I + I (x) B) vec X = vec C`` solve, for ``n <= 16`` only."""
    b = np.asarray(b, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    n = b.shape[0]
    if n > KRON_MAX_DIM:
        raise ValueError(f"Kronecker system needs n <= {KRON_MAX_DIM}, got n={n}")
    eye = np.eye(n)
    # row-major vec: vec(B X) = (B (x) I) vec X, vec(X B) = (I (x) B^T) vec X
    k = np.kron(b, eye) + np.kron(eye, b.T)
    return solve_linear(k, c.reshape(n * n, 1)).reshape(n, n)


def ns_backward(trace, grad_y, grad_z=None) -> tuple[np.ndarray, np.ndarray]:
    """Reverse sweep through the coupled iteration, 10 products per step.

    ``trace`` is ``[(Y_0, Z_0), ..., (Y_K, Z_K)]``; the gradients are with
    respect to the normalized ``Y_K`` and ``Z_K``.
    """
    if not trace or len(trace) < 2:
        raise ValueError("ns_backward needs the saved (Y_k, Z_k) trace; run the forward pass with keep_trace=True")
    g_y = np.asarray(grad_y, dtype=np.float64)
    g_z = np.zeros_like(g_y) if grad_z is None else np.asarray(grad_z, dtype=np.float64)
    eye = np.eye(g_y.shape[0])
    for y, z in reversed(trace[:-1]):
        zy = matmul(z, y)
        yz = matmul(y, z)
        new_y = 0.5 * (
            matmul(g_y, 3.0 * eye - zy.T) - matmul(yz.T, g_y) - matmul(matmul(z.T, g_z), z.T)
        )
        new_z = 0.5 * (
            3.0 * g_z - matmul(zy.T, g_z) - matmul(matmul(y.T, g_y), y.T) - matmul(g_z, yz.T)
        )
        g_y, g_z = new_y, new_z
    return g_y, g_z


def ns_pre_post_grad(a, trace, grad_y0, grad_yk, y_k) -> np.ndarray:
    """Chain the normalization ``Y_0 = A/s`` and compensation ``sqrt(s) Y_K``.

    ``grad_yk`` is the gradient of the compensated output, ``y_k`` the
    normalized final iterate and ``grad_y0`` the result of
    :func:`ns_backward`.
    """
    del trace  # kept for signature symmetry with ns_backward
    a = np.asarray(a, dtype=np.float64)
    s = fro_norm(a)
    post = trace_product(grad_yk, y_k) / (2.0 * s**1.5) * a
    pre = -trace_product(grad_y0, a) / s**3 * a + np.asarray(grad_y0) / s
    # the two trace-weighted updates of A are booked as one product each,
    # giving the 4 matmul-equivalents of the published tally
    record(trace_products=2)
    return pre + post


def ns_sqrt_grad(a, grad_sqrt, iters: int = 5) -> GradOutput:
    """Full gradient of ``A -> NS sqrt(A)`` against upstream ``grad_sqrt``."""
    out = ns_sqrt_coupled(a, iters, keep_trace=True)
    s = out.norm
    grad_sqrt = np.asarray(grad_sqrt, dtype=np.float64)
    g_y0, _ = ns_backward(out.ns_trace, math.sqrt(s) * grad_sqrt)
    y_k = out.ns_trace[-1][0]
    grad = ns_pre_post_grad(a, out.ns_trace, g_y0, grad_sqrt, y_k)
    return GradOutput(grad, iters, 0.0)


def lyapunov_sqrt_grad(sqrt_a, grad_sqrt, iters: int = 8, tol: float = 1e-7) -> GradOutput:
    return lyapunov_solve_sign(LyapunovProblem(sqrt_a, grad_sqrt, tol, iters))


def invsqrt_grad_to_lyapunov(a_invsqrt, a_inv, grad_invsqrt, tolerance: float = 1e-7, max_iters: int = 8) -> LyapunovProblem:
    """Rewrite ``dl/dA^{-1/2}`` as ``B X + X B = C`` with ``B = A^{-1/2}``."""
    a_inv = np.asarray(a_inv, dtype=np.float64)
    c = -matmul(matmul(a_inv, grad_invsqrt), a_inv)
    return LyapunovProblem(a_invsqrt, c, tolerance, max_iters)


def invsqrt_grad(a_invsqrt, grad_invsqrt, iters: int = 8, tol: float = 1e-7) -> GradOutput:
    a_invsqrt = symmetric(a_invsqrt)
    a_inv = matmul(a_invsqrt, a_invsqrt)
    return lyapunov_solve_sign(invsqrt_grad_to_lyapunov(a_invsqrt, a_inv, grad_invsqrt, tol, iters))


def symmetric_basis(n: int):
    """Yield ``(i, j, E_ij)`` with ``E_ij = (e_i e_j^T + e_j e_i^T) / 2``, ``i <= j``."""
    for i in range(n):
        for j in range(i, n):
            e = np.zeros((n, n))
            e[i, j] += 0.5
            e[j, i] += 0.5
            yield i, j, e


def finite_diff_check(
    loss_probe,
    a,
    f: Callable[[np.ndarray], np.ndarray],
    grad,
    eps: float = 1e-5,
) -> float:
    """Max deviation of central differences of ``<G, f(A)>`` from ``grad``.

    Only symmetric directions are probed, so ``grad`` is compared through
    its symmetric part. The deviation is relative to ``max |grad|``.
    """
    if not 1e-7 <= eps <= 1e-3:
        raise ValueError("eps must lie in [1e-7, 1e-3]")
    a = np.asarray(a, dtype=np.float64)
    g_probe = np.asarray(loss_probe, dtype=np.float64)
    expected = symmetric(grad)
    fd = np.zeros_like(a)
    for i, j, e in symmetric_basis(a.shape[0]):
        lp = float(np.sum(g_probe * f(a + eps * e)))
        lm = float(np.sum(g_probe * f(a - eps * e)))
        fd[i, j] = fd[j, i] = (lp - lm) / (2.0 * eps)
    scale = max(float(np.max(np.abs(expected))), 1e-300)
    return float(np.max(np.abs(fd - expected))) / scale
