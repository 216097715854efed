"""Series and Padé coefficients for ``(1 - z)^(1/2)``.

The Taylor expansion is ``1 - sum_k |binom(1/2, k)| z^k``. A ``[M, N]``
approximant ``(1 - sum p_m z^m) / (1 - sum q_n z^n)`` is fixed by
matching that expansion through degree ``M + N``.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np

from .matcore import solve_linear, uncounted


class PoleDetected(ArithmeticError):
    """The denominator polynomial reaches zero on the normalized spectrum."""


def frac_binomial_abs(k: int) -> float:
    """``|binom(1/2, k)|`` via the falling factorial ``(1/2)_k / k!``."""
    if k < 1:
        raise ValueError("k must be >= 1")
    falling = 1.0
    for i in range(k):
        falling *= 0.5 - i
    return abs(falling) / math.factorial(k)


def taylor_coefficients(k_max: int) -> np.ndarray:
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    return np.array([frac_binomial_abs(k) for k in range(1, k_max + 1)])


def taylor_eval(z, degree: int):
    """Truncated series ``1 - sum_{k<=degree} |binom(1/2,k)| z^k``."""
    c = taylor_coefficients(degree)
    z = np.asarray(z, dtype=np.float64)
    powers = z[..., None] ** np.arange(1, degree + 1)
    return 1.0 - powers @ c


@dataclass(frozen=True)
class PadeCoefficients:
    m_degree: int
    n_degree: int
    p: tuple[float, ...]
    q: tuple[float, ...]

    @property
    def is_diagonal(self) -> bool:
        return self.m_degree == self.n_degree

    def numerator(self, z):
        z = np.asarray(z, dtype=np.float64)
        return 1.0 - sum(pm * z ** (i + 1) for i, pm in enumerate(self.p))

    def denominator(self, z):
        z = np.asarray(z, dtype=np.float64)
        return 1.0 - sum(qn * z ** (i + 1) for i, qn in enumerate(self.q))

    def __call__(self, z):
        return self.numerator(z) / self.denominator(z)

    def series(self, degree: int) -> np.ndarray:
        """Taylor coefficients ``[c_0 .. c_degree]`` of the rational function."""
        num = np.zeros(degree + 1)
        den = np.zeros(degree + 1)
        num[0] = den[0] = 1.0
        for i, pm in enumerate(self.p[:degree]):
            num[i + 1] = -pm
        for i, qn in enumerate(self.q[:degree]):
            den[i + 1] = -qn
        # long division: out_j = num_j - sum_{i>=1} den_i out_{j-i}
        out = np.zeros(degree + 1)
        for j in range(degree + 1):
            out[j] = num[j] - sum(den[i] * out[j - i] for i in range(1, j + 1))
        return out

    def matching_residual(self) -> float:
        """Max deviation from the target series over degrees ``1..M+N``."""
        d = self.m_degree + self.n_degree
        target = np.concatenate([[1.0], -taylor_coefficients(d)])
        return float(np.max(np.abs(self.series(d) - target)))


def _solve(m: int, n: int, refine: int = 4) -> PadeCoefficients:
    # s_j: series coefficients of (1 - z)^(1/2), s_0 = 1, s_j = -|binom(1/2, j)|.
    # They are dyadic rationals, hence exact in float64.
    s = np.concatenate([[1.0], -taylor_coefficients(m + n)])
    q = np.zeros(0, dtype=np.longdouble)
    if n:
        # degrees m+1..m+n of (1 - sum q z^n) * series must vanish:
        # sum_i q_i s_{j-i} = s_j
        lhs = np.zeros((n, n))
        for r, j in enumerate(range(m + 1, m + n + 1)):
            for i in range(1, n + 1):
                if j - i >= 0:
                    lhs[r, i - 1] = s[j - i]
        rhs = s[m + 1 : m + n + 1]
        q = solve_linear(lhs, rhs.reshape(n, 1))[:, 0].astype(np.longdouble)
        # the Toeplitz system is ill-conditioned (~1e7 at n = 6); refine
        # against an extended-precision residual
        lhs_ld = lhs.astype(np.longdouble)
        for _ in range(refine):
            resid = rhs.astype(np.longdouble) - lhs_ld @ q
            q = q + solve_linear(lhs, resid.astype(np.float64).reshape(n, 1))[:, 0]
    den = np.concatenate([[1.0], -q]).astype(np.longdouble)
    # numerator is lower triangular in the known quantities
    p = [-sum(den[i] * s[j - i] for i in range(min(n, j) + 1)) for j in range(1, m + 1)]
    return PadeCoefficients(m, n, tuple(float(x) for x in p), tuple(float(x) for x in q))


@functools.lru_cache(maxsize=None)
def solve_pade_coefficients(m: int, n: int) -> PadeCoefficients:
    """``[m, n]`` Padé coefficients, computed once per degree pair."""
    if m < 0 or n < 0 or m + n < 1:
        raise ValueError("need m >= 0, n >= 0 and m + n >= 1")
    with uncounted():
        return _solve(m, n)


def verify_no_poles(c: PadeCoefficients, step: float = 1e-4) -> float:
    """Minimum of ``f(x) = 1 - sum q_n x^n`` over ``[0, 1]``.

    ``x = 1 - lambda_i / ||A||_F`` covers the spectrum of every SPD input,
    and ``det(Q_N)`` is the product of ``f`` over it, so a positive minimum
    rules out poles. Raises :class:`PoleDetected` otherwise.
    """
    if not c.is_diagonal:
        raise ValueError("pole scan expects diagonal coefficients")
    grid = np.append(np.arange(0.0, 1.0, step), 1.0)
    f = c.denominator(grid)
    k = int(np.argmin(f))
    if f[k] <= 0.0:
        raise PoleDetected(f"denominator reaches {f[k]:.3e} at x={grid[k]:.4f}")
    return float(f[k])
