import math
import threading

import numpy as np
import pytest
from hypothesis import given, strategies as st

from matsqrt.matcore import (
    MatrixBatch,
    NonConvergence,
    OpCounter,
    SingularMatrix,
    counting,
    eig_sym,
    format_matrix,
    fro_norm,
    matmul,
    parse_matrix,
    random_spd,
    read_matrix,
    solve_linear,
    symmetric,
    trace_product,
    uncounted,
    write_matrix,
)


def naive_matmul(a, b):
    n, k = a.shape
    out = np.zeros((n, b.shape[1]))
    for i in range(n):
        for j in range(b.shape[1]):
            out[i, j] = sum(a[i, t] * b[t, j] for t in range(k))
    return out


class TestMatmul:
    def test_identity(self, spd):
        a = spd(5)
        assert np.array_equal(matmul(np.eye(5), a), a)

    def test_diagonal(self):
        assert np.array_equal(matmul(np.diag([2.0, 3.0]), np.diag([4.0, 5.0])), np.diag([8.0, 15.0]))

    def test_against_triple_loop(self):
        rng = np.random.default_rng(1)
        a, b = rng.standard_normal((2, 8, 8))
        assert np.max(np.abs(matmul(a, b) - naive_matmul(a, b))) <= 1e-12

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            matmul(np.eye(3), np.eye(4))

    def test_counts_one(self):
        with counting() as c:
            matmul(np.eye(3), np.eye(3))
        assert (c.matmuls, c.solves) == (1, 0)

    @given(st.integers(0, 2**32), st.integers(1, 12))
    def test_associative(self, seed, n):
        a, b, c = np.random.default_rng(seed).standard_normal((3, n, n))
        left = matmul(matmul(a, b), c)
        right = matmul(a, matmul(b, c))
        assert np.max(np.abs(left - right)) <= 1e-10 * max(1.0, np.max(np.abs(left)))


class TestSolve:
    def test_identity(self, sym):
        c = sym(4, 2)
        assert np.allclose(solve_linear(np.eye(4), c), c, rtol=0, atol=1e-15)

    def test_diagonal(self):
        d = np.diag([2.0, 4.0])
        assert np.allclose(solve_linear(d, d), np.eye(2), rtol=0, atol=1e-15)

    def test_residual_16(self):
        rng = np.random.default_rng(3)
        q = rng.standard_normal((16, 16)) + 16 * np.eye(16)
        rhs = rng.standard_normal((16, 16))
        s = solve_linear(q, rhs)
        assert np.max(np.abs(q @ s - rhs)) <= 1e-9 * max(1.0, fro_norm(rhs))

    def test_singular(self):
        with pytest.raises(SingularMatrix):
            solve_linear(np.array([[1.0, 2.0], [2.0, 4.0]]), np.eye(2))

    def test_counts_one_solve(self):
        with counting() as c:
            solve_linear(np.eye(3), np.eye(3))
        assert (c.matmuls, c.solves) == (0, 1)

    @given(st.integers(0, 2**32), st.floats(1.0, 1e6))
    def test_recovers_solution(self, seed, cond):
        rng = np.random.default_rng(seed)
        u, _ = np.linalg.qr(rng.standard_normal((10, 10)))
        q = u @ np.diag(np.geomspace(1.0, cond, 10)) @ u.T
        x = rng.standard_normal((10, 3))
        got = solve_linear(q, q @ x)
        assert np.max(np.abs(got - x)) <= 1e-9 * np.max(np.abs(x)) * max(1.0, cond / 1e3)


class TestEig:
    def test_diagonal(self):
        dec = eig_sym(np.diag([1.0, 3.0]))
        assert np.allclose(dec.eigenvalues, [3.0, 1.0])
        assert np.allclose(np.abs(dec.eigenvectors), [[0.0, 1.0], [1.0, 0.0]])

    def test_identity(self):
        assert np.allclose(eig_sym(np.eye(4)).eigenvalues, 1.0)

    def test_reconstruct_12(self, spd):
        a = spd(12, 5, factor=1)
        dec = eig_sym(a)
        assert np.max(np.abs(dec.reconstruct() - a)) <= 1e-8
        assert np.max(np.abs(dec.eigenvectors @ dec.eigenvectors.T - np.eye(12))) <= 1e-10

    @pytest.mark.parametrize("a", [[[2.0, 1.0], [1.0, 3.0]], [[4.0, 1.0, 0.5], [1.0, 3.0, -1.0], [0.5, -1.0, 2.0]]])
    def test_characteristic_polynomial(self, a):
        a = np.array(a)
        roots = np.sort(np.roots(np.poly(a)).real)[::-1]
        assert np.max(np.abs(eig_sym(a).eigenvalues - roots)) <= 1e-10

    def test_two_by_two_closed_form(self):
        a, b, d = 2.0, 0.7, -1.0
        disc = math.sqrt(((a - d) / 2) ** 2 + b * b)
        lam = eig_sym(np.array([[a, b], [b, d]])).eigenvalues
        assert np.allclose(lam, [(a + d) / 2 + disc, (a + d) / 2 - disc], rtol=0, atol=1e-12)

    def test_batch(self, spd):
        stack = np.stack([spd(6, s) for s in range(3)])
        dec = eig_sym(stack)
        assert np.max(np.abs(dec.reconstruct() - stack)) <= 1e-10

    def test_sweep_budget(self, spd):
        with pytest.raises(NonConvergence):
            eig_sym(spd(16, 1), max_sweeps=1)

    @given(st.integers(0, 2**32), st.integers(1, 20))
    def test_invariants(self, seed, n):
        g = np.random.default_rng(seed).standard_normal((n, n))
        a = symmetric(g)
        dec = eig_sym(a)
        assert np.all(np.diff(dec.eigenvalues) <= 0)
        assert np.max(np.abs(dec.eigenvectors @ dec.eigenvectors.T - np.eye(n))) <= 1e-10
        assert np.max(np.abs(dec.reconstruct() - a)) <= 1e-8 * max(1.0, fro_norm(a))


class TestGeneration:
    def test_fro_norm_identity(self):
        assert fro_norm(np.eye(3)) == pytest.approx(math.sqrt(3), abs=1e-15)

    def test_deterministic(self):
        assert np.array_equal(random_spd(4, seed=7, eps=1e-3), random_spd(4, seed=7, eps=1e-3))

    def test_min_eigenvalue(self):
        assert eig_sym(random_spd(16, seed=1, eps=1e-3)).eigenvalues[-1] >= 1e-3

    def test_formula(self):
        g = np.random.default_rng(9).standard_normal((5, 5))
        assert np.allclose(random_spd(5, 9, eps=0.5), g @ g.T / 5 + 0.5 * np.eye(5), rtol=0, atol=1e-14)

    def test_symmetric_average(self):
        m = np.array([[1.0, 2.0], [0.0, 1.0]])
        assert np.array_equal(symmetric(m), [[1.0, 1.0], [1.0, 1.0]])

    def test_rejects_bad_args(self):
        with pytest.raises(ValueError):
            random_spd(0, 1)
        with pytest.raises(ValueError):
            random_spd(3, 1, eps=-1.0)

    def test_batch(self):
        b = MatrixBatch.random(4, 3, seed=2)
        assert (b.count, b.dim, len(b)) == (4, 3, 4)
        assert np.array_equal(b.items, MatrixBatch.random(4, 3, seed=2).items)
        with pytest.raises(ValueError):
            MatrixBatch(np.zeros((0, 3, 3)))


class TestCounter:
    def test_nested_and_trace(self):
        outer = OpCounter()
        with counting(outer):
            with counting() as inner:
                matmul(np.eye(2), np.eye(2))
                trace_product(np.eye(2), np.eye(2))
        assert inner.as_dict() == outer.as_dict() == {"matmuls": 1, "solves": 0, "trace_products": 1, "matmul_equivalents": 2}

    def test_uncounted(self):
        with counting() as c, uncounted():
            matmul(np.eye(2), np.eye(2))
        assert c.matmuls == 0

    def test_threads_isolated_and_merge(self):
        total = OpCounter()
        per_thread = []

        def work():
            with counting() as c:
                for _ in range(50):
                    matmul(np.eye(2), np.eye(2))
            per_thread.append(c.matmuls)
            total.merge(c)

        threads = [threading.Thread(target=work) for _ in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert per_thread == [50] * 8
        assert total.matmuls == 400

    def test_reproducible(self, spd):
        from matsqrt.forward import mpa_sqrt

        counts = []
        for _ in range(2):
            with counting() as c:
                mpa_sqrt(spd(8), 5, 5)
            counts.append(c.as_dict())
        assert counts[0] == counts[1]


class TestTextFormat:
    def test_round_trip(self, tmp_path, spd):
        a = spd(4)
        path = tmp_path / "a.txt"
        write_matrix(path, a)
        assert np.array_equal(read_matrix(path), a)
        assert format_matrix(a).splitlines()[0] == "4"

    @pytest.mark.parametrize("text", ["", "2\n1 2\n", "2\n1 2\n3\n", "x\n"])
    def test_rejects_malformed(self, text):
        with pytest.raises(ValueError):
            parse_matrix(text)
