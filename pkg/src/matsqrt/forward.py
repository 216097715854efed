"""Forward passes for the matrix square root and inverse square root.

All iterative and polynomial methods pre-normalize ``A`` by ``||A||_F``
and post-compensate the result by ``sqrt(||A||_F)``. Dense products go
through :func:`matsqrt.matcore.matmul` so operation counts are tracked.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .matcore import (
    SingularMatrix,
    eig_sym,
    fro_norm,
    matmul,
    solve_linear,
    symmetric,
)
from .pade import PoleDetected, solve_pade_coefficients, taylor_coefficients


class Method(str, enum.Enum):
    MTP = "MTP"
    MPA = "MPA"
    NS_COUPLED = "NS_COUPLED"
    NS_SINGLE = "NS_SINGLE"
    EXACT = "EXACT"


class NonPositiveEigenvalue(ValueError):
    pass


@dataclass
class SqrtOutput:
    """Result of a forward pass.

    ``sqrt`` holds ``A^{1/2}`` or ``A^{-1/2}`` depending on ``inverse``.
    ``ns_trace`` is the list of normalized ``(Y_k, Z_k)`` iterates,
    ``k = 0..iters``, kept only when requested from the NS methods.
    """

    sqrt: np.ndarray
    norm: float
    method: Method
    degree_or_iters: int
    inverse: bool = False
    ns_trace: list[tuple[np.ndarray, np.ndarray]] | None = field(default=None, repr=False)

    @property
    def matrix(self) -> np.ndarray:
        return self.sqrt


def _normalized(a):
    a = symmetric(a)
    if a.ndim != 2:
        raise ValueError(f"expected a single square matrix, got shape {a.shape}")
    norm = fro_norm(a)
    if norm == 0.0:
        raise ValueError("zero matrix has no usable normalization")
    return a, norm


def _z_powers(z: np.ndarray, k: int) -> list[np.ndarray]:
    # [Z, Z^2, ..., Z^k] with k-1 products
    powers = [z]
    for _ in range(k - 1):
        powers.append(matmul(powers[-1], z))
    return powers


def mtp_sqrt(a, k_degree: int = 11) -> SqrtOutput:
    """Truncated binomial series of degree ``K`` (``K - 1`` products)."""
    if k_degree < 1:
        raise ValueError("K must be >= 1")
    a, norm = _normalized(a)
    n = a.shape[0]
    z = np.eye(n) - a / norm
    coeffs = taylor_coefficients(k_degree)
    out = np.eye(n)
    for c, zk in zip(coeffs, _z_powers(z, k_degree)):
        out -= c * zk
    return SqrtOutput(symmetric(math.sqrt(norm) * out), norm, Method.MTP, k_degree)


def mpa_degrees(k_degree: int) -> tuple[int, int]:
    """Diagonal degrees ``M = N = (K - 1) / 2`` matching a series of degree ``K``."""
    if k_degree < 3 or k_degree % 2 == 0:
        raise ValueError(f"MPA needs an odd series degree K >= 3, got {k_degree}")
    m = (k_degree - 1) // 2
    return m, m


def _pade_polys(a, m: int, n: int):
    a, norm = _normalized(a)
    coeffs = solve_pade_coefficients(m, n)
    dim = a.shape[0]
    z = np.eye(dim) - a / norm
    powers = _z_powers(z, max(m, n)) if max(m, n) else []
    p_m = np.eye(dim) - sum((c * zk for c, zk in zip(coeffs.p, powers)), np.zeros((dim, dim)))
    q_n = np.eye(dim) - sum((c * zk for c, zk in zip(coeffs.q, powers)), np.zeros((dim, dim)))
    return a, norm, p_m, q_n


def _pole_error(a, exc):
    w = eig_sym(a).eigenvalues
    return PoleDetected(f"singular Pade factor ({exc}); spectrum range [{w[-1]:.3e}, {w[0]:.3e}]")


def mpa_sqrt(a, m: int = 5, n: int | None = None) -> SqrtOutput:
    """Padé approximant ``sqrt(||A||_F) Q_N^{-1} P_M`` via one LU solve.

    ``Q_N`` and ``P_M`` share the powers of ``Z = I - A/||A||_F``, so the
    cost is ``max(M, N) - 1`` products plus one solve.
    """
    n = m if n is None else n
    a, norm, p_m, q_n = _pade_polys(a, m, n)
    try:
        out = solve_linear(q_n, math.sqrt(norm) * p_m)
    except SingularMatrix as exc:
        raise _pole_error(a, exc) from exc
    return SqrtOutput(symmetric(out), norm, Method.MPA, m + n + 1)


def mpa_invsqrt(a, m: int = 5, n: int | None = None) -> SqrtOutput:
    """``P_M^{-1} Q_N / sqrt(||A||_F)`` from the same polynomials."""
    n = m if n is None else n
    a, norm, p_m, q_n = _pade_polys(a, m, n)
    out = solve_linear(p_m, q_n) / math.sqrt(norm)
    return SqrtOutput(symmetric(out), norm, Method.MPA, m + n + 1, inverse=True)


def _ns_coupled(a, iters: int, keep_trace: bool):
    if iters < 1:
        raise ValueError("iters must be >= 1")
    a, norm = _normalized(a)
    eye = np.eye(a.shape[0])
    y = a / norm
    z = eye.copy()
    trace = [(y, z)] if keep_trace else None
    for _ in range(iters):
        t = 0.5 * (3.0 * eye - matmul(z, y))
        y = matmul(y, t)
        z = matmul(t, z)
        if keep_trace:
            trace.append((y, z))
    return y, z, norm, trace


def ns_sqrt_coupled(a, iters: int = 5, keep_trace: bool = False) -> SqrtOutput:
    """Coupled Newton-Schulz iteration, 3 products per step."""
    y, _, norm, trace = _ns_coupled(a, iters, keep_trace)
    return SqrtOutput(math.sqrt(norm) * y, norm, Method.NS_COUPLED, iters, ns_trace=trace)


def ns_invsqrt_coupled(a, iters: int = 5, keep_trace: bool = False) -> SqrtOutput:
    _, z, norm, trace = _ns_coupled(a, iters, keep_trace)
    return SqrtOutput(z / math.sqrt(norm), norm, Method.NS_COUPLED, iters, inverse=True, ns_trace=trace)


def ns_invsqrt_single(a, iters: int = 5) -> SqrtOutput:
    """Single-variable form ``Z <- (3 Z - Z^3 A) / 2`` on the normalized input."""
    if iters < 1:
        raise ValueError("iters must be >= 1")
    a, norm = _normalized(a)
    an = a / norm
    z = np.eye(a.shape[0])
    for _ in range(iters):
        z2 = matmul(z, z)
        z3 = matmul(z2, z)
        z = 0.5 * (3.0 * z - matmul(z3, an))
    return SqrtOutput(z / math.sqrt(norm), norm, Method.NS_SINGLE, iters, inverse=True)


def exact_sqrt_eig(a) -> SqrtOutput:
    """``U diag(sqrt(lambda)) U^T``; tiny negative rounding is clipped to 0."""
    a = symmetric(a)
    dec = eig_sym(a)
    out = dec.apply(lambda w: np.sqrt(np.clip(w, 0.0, None)))
    return SqrtOutput(out, fro_norm(a), Method.EXACT, 0)


def exact_invsqrt_eig(a) -> SqrtOutput:
    a = symmetric(a)
    dec = eig_sym(a)
    lo = float(np.min(dec.eigenvalues))
    if lo <= 1e-12:
        raise NonPositiveEigenvalue(f"minimum eigenvalue {lo:.3e} <= 1e-12")
    out = dec.apply(lambda w: 1.0 / np.sqrt(w))
    return SqrtOutput(out, fro_norm(a), Method.EXACT, 0, inverse=True)


def mae(approx, exact) -> float:
    """Mean absolute entrywise error (over the whole batch if stacked)."""
    approx = np.asarray(approx, dtype=np.float64)
    exact = np.asarray(exact, dtype=np.float64)
    if approx.shape != exact.shape:
        raise ValueError(f"shape mismatch: {approx.shape} vs {exact.shape}")
    return float(np.mean(np.abs(approx - exact)))


def sqrt_residual(a, s) -> float:
    """``||S S - A||_F``."""
    s = np.asarray(s, dtype=np.float64)
    return fro_norm(s @ s - np.asarray(a, dtype=np.float64))


_SQRT = {
    Method.MTP: lambda a, p: mtp_sqrt(a, p or 11),
    Method.MPA: lambda a, p: mpa_sqrt(a, *mpa_degrees(p or 11)),
    Method.NS_COUPLED: lambda a, p: ns_sqrt_coupled(a, p or 5),
    Method.EXACT: lambda a, p: exact_sqrt_eig(a),
}

_INVSQRT = {
    Method.MPA: lambda a, p: mpa_invsqrt(a, *mpa_degrees(p or 11)),
    Method.NS_COUPLED: lambda a, p: ns_invsqrt_coupled(a, p or 5),
    Method.NS_SINGLE: lambda a, p: ns_invsqrt_single(a, p or 5),
    Method.EXACT: lambda a, p: exact_invsqrt_eig(a),
}


def matrix_sqrt(a, method: Method | str = Method.MPA, param: int | None = None) -> SqrtOutput:
    """Dispatch by method tag. ``param`` is K for MTP/MPA, iterations for NS."""
    method = Method(method)
    if method not in _SQRT:
        raise ValueError(f"{method.value} does not compute a square root")
    return _SQRT[method](a, param)


def matrix_invsqrt(a, method: Method | str = Method.MPA, param: int | None = None) -> SqrtOutput:
    method = Method(method)
    if method not in _INVSQRT:
        raise ValueError(f"{method.value} does not compute an inverse square root")
    return _INVSQRT[method](a, param)
