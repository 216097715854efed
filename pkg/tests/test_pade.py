import math
import threading
from fractions import Fraction

import numpy as np
import pytest

from matsqrt.pade import (
    PadeCoefficients,
    PoleDetected,
    frac_binomial_abs,
    solve_pade_coefficients,
    taylor_coefficients,
    taylor_eval,
    verify_no_poles,
)


def exact_binomial_abs(k: int) -> Fraction:
    num = Fraction(1)
    for i in range(k):
        num *= Fraction(1, 2) - i
    return abs(num) / math.factorial(k)


def exact_pade(m: int, n: int) -> tuple[list[Fraction], list[Fraction]]:
    """Rational-arithmetic series matching, solved by Gauss-Jordan elimination."""
    s = [Fraction(1)] + [-exact_binomial_abs(k) for k in range(1, m + n + 1)]
    rows = []
    for j in range(m + 1, m + n + 1):
        rows.append([s[j - i] if j - i >= 0 else Fraction(0) for i in range(1, n + 1)] + [s[j]])
    for col in range(n):
        piv = next(r for r in range(col, n) if rows[r][col] != 0)
        rows[col], rows[piv] = rows[piv], rows[col]
        rows[col] = [v / rows[col][col] for v in rows[col]]
        for r in range(n):
            if r != col and rows[r][col] != 0:
                f = rows[r][col]
                rows[r] = [a - f * b for a, b in zip(rows[r], rows[col])]
    q = [rows[i][n] for i in range(n)]
    den = [Fraction(1)] + [-x for x in q]
    p = [-sum(den[i] * s[j - i] for i in range(min(n, j) + 1)) for j in range(1, m + 1)]
    return p, q


class TestBinomial:
    def test_first(self):
        assert frac_binomial_abs(1) == 0.5
        assert frac_binomial_abs(2) == 0.125

    @pytest.mark.parametrize("k", range(1, 16))
    def test_exact_oracle(self, k):
        assert abs(frac_binomial_abs(k) - float(exact_binomial_abs(k))) <= 1e-15

    def test_rejects_zero(self):
        with pytest.raises(ValueError):
            frac_binomial_abs(0)

    def test_taylor_list(self):
        assert list(taylor_coefficients(2)) == [0.5, 0.125]
        c = taylor_coefficients(30)
        assert np.all(c > 0) and np.all(np.diff(c) < 0)

    def test_partial_sum_at_one(self):
        total = float(np.sum(taylor_coefficients(40)))
        assert total <= 1.0
        assert 1.0 - total < 0.1

    def test_degree_11_at_half(self):
        brute = 1.0 - sum(float(exact_binomial_abs(k)) * 0.5**k for k in range(1, 12))
        assert taylor_eval(0.5, 11) == pytest.approx(brute, abs=1e-15)
        assert abs(taylor_eval(0.5, 11) - math.sqrt(0.5)) == pytest.approx(abs(brute - math.sqrt(0.5)), abs=1e-15)


class TestSolve:
    def test_three(self):
        c = solve_pade_coefficients(3, 3)
        assert c.p == (1.75, -0.875, 0.109375)
        assert c.q == (1.25, -0.375, 0.015625)

    def test_one_zero(self):
        c = solve_pade_coefficients(1, 0)
        assert c.p == (0.5,) and c.q == ()

    def test_five_vs_published(self):
        q = solve_pade_coefficients(5, 5).q
        published = [2.25, -1.75, 0.54675, -0.05859375, 0.0009765625]
        assert max(abs(a - b) for a, b in zip(q, published)) <= 2e-3
        assert abs(q[3] - published[3]) <= 1e-12 and abs(q[4] - published[4]) <= 1e-12

    @pytest.mark.parametrize("m,n", [(m, m) for m in range(1, 9)] + [(2, 1), (1, 2), (4, 2), (0, 3), (3, 0)])
    def test_exact_rational_oracle(self, m, n):
        p, q = exact_pade(m, n)
        c = solve_pade_coefficients(m, n)
        tol = 1e-12 if max(m, n) <= 6 else 1e-9
        assert np.max(np.abs(np.array(c.p + c.q) - np.array([float(x) for x in p + q])), initial=0.0) <= tol

    @pytest.mark.parametrize("k", range(1, 9))
    def test_matching_residual(self, k):
        assert solve_pade_coefficients(k, k).matching_residual() <= 1e-10

    def test_cached(self):
        assert solve_pade_coefficients(4, 4) is solve_pade_coefficients(4, 4)

    def test_concurrent_first_access(self):
        solve_pade_coefficients.cache_clear()
        results = []
        threads = [threading.Thread(target=lambda: results.append(solve_pade_coefficients(6, 6))) for _ in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert all(r == results[0] for r in results)

    @pytest.mark.parametrize("m,n", [(-1, 2), (0, 0), (2, -1)])
    def test_rejects(self, m, n):
        with pytest.raises(ValueError):
            solve_pade_coefficients(m, n)

    @pytest.mark.parametrize("z", [0.1, 0.5, 0.9])
    def test_scalar_pade_beats_taylor(self, z):
        exact = math.sqrt(1 - z)
        assert abs(solve_pade_coefficients(5, 5)(z) - exact) < abs(taylor_eval(z, 11) - exact)


class TestPoles:
    @pytest.mark.parametrize(
        "k,expected,tol", [(3, 0.109375, 1e-6), (4, 0.03515625, 1e-6), (5, 0.0108672, 1e-3), (6, 0.003173828125, 1e-6)]
    )
    def test_minima(self, k, expected, tol):
        assert verify_no_poles(solve_pade_coefficients(k, k)) == pytest.approx(expected, abs=tol)

    @pytest.mark.parametrize("k", range(3, 7))
    def test_positive_and_decreasing(self, k):
        x = np.linspace(0, 1, 2001)
        f = solve_pade_coefficients(k, k).denominator(x)
        assert np.all(f > 0) and np.all(np.diff(f) < 0)

    def test_pole_detected(self):
        bad = PadeCoefficients(2, 2, (0.0, 0.0), (2.0, 0.0))
        with pytest.raises(PoleDetected):
            verify_no_poles(bad)

    def test_rejects_non_diagonal(self):
        with pytest.raises(ValueError):
            verify_no_poles(solve_pade_coefficients(2, 1))
