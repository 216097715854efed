"""Dense symmetric linear-algebra substrate.

Matrices are plain ``float64`` numpy arrays. Symmetric inputs are
symmetrized on entry with ``(M + M^T) / 2``. Every dense product and
linear solve issued through :func:`matmul` and :func:`solve_linear` is
tallied on the active :class:`OpCounter` (see :func:`counting`), which is
how the operation-count tables are reproduced.
"""

from __future__ import annotations

import contextlib
import contextvars
import threading
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, NamedTuple, Sequence

import numba
import numpy as np
import scipy.linalg as sla


class SingularMatrix(np.linalg.LinAlgError):
    """Raised when LU factorization meets a pivot below the threshold."""


class NonConvergence(RuntimeError):
    """Raised when the Jacobi eigensolver exhausts its sweep budget."""


PIVOT_TOL = 1e-14


# ---------------------------------------------------------------------------
# operation counting
# ---------------------------------------------------------------------------


@dataclass
class OpCounter:
    """Tally of dense n x n operations.

    ``trace_products`` are traces of matrix products evaluated as
    elementwise sums; by convention each one costs one matmul.
    """

    matmuls: int = 0
    solves: int = 0
    trace_products: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def add(self, matmuls: int = 0, solves: int = 0, trace_products: int = 0) -> None:
        with self._lock:
            self.matmuls += matmuls
            self.solves += solves
            self.trace_products += trace_products

    def merge(self, other: "OpCounter") -> None:
        self.add(other.matmuls, other.solves, other.trace_products)

    @property
    def matmul_equivalents(self) -> int:
        return self.matmuls + self.trace_products

    def reset(self) -> None:
        with self._lock:
            self.matmuls = self.solves = self.trace_products = 0

    def as_dict(self) -> dict:
        return {
            "matmuls": self.matmuls,
            "solves": self.solves,
            "trace_products": self.trace_products,
            "matmul_equivalents": self.matmul_equivalents,
        }


_ACTIVE: contextvars.ContextVar[tuple[OpCounter, ...]] = contextvars.ContextVar(
    "matsqrt_op_counters", default=()
)


@contextlib.contextmanager
def counting(counter: OpCounter | None = None) -> Iterator[OpCounter]:
    """Count operations issued inside the ``with`` block.

    Nested regions are all credited, so an outer counter sees the totals
    of the inner ones. The stack lives in a context variable, which keeps
    threads from seeing each other's counters.
    """
    counter = OpCounter() if counter is None else counter
    token = _ACTIVE.set(_ACTIVE.get() + (counter,))
    try:
        yield counter
    finally:
        _ACTIVE.reset(token)


@contextlib.contextmanager
def uncounted() -> Iterator[None]:
    """Hide operations from every active counter (one-off precomputation)."""
    token = _ACTIVE.set(())
    try:
        yield
    finally:
        _ACTIVE.reset(token)


def record(matmuls: int = 0, solves: int = 0, trace_products: int = 0) -> None:
    for c in _ACTIVE.get():
        c.add(matmuls, solves, trace_products)


# ---------------------------------------------------------------------------
# basic constructors
# ---------------------------------------------------------------------------


def symmetric(a) -> np.ndarray:
    """Return ``(a + a^T) / 2`` as a float64 array (works on stacks too)."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise ValueError(f"expected square matrix, got shape {a.shape}")
    if a.shape[-1] < 1:
        raise ValueError("matrix dimension must be at least 1")
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def as_square(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected square matrix, got shape {a.shape}")
    return a


def fro_norm(a) -> float:
    return float(np.sqrt(np.sum(np.square(a))))


def max_abs(a) -> float:
    return float(np.max(np.abs(a)))


def random_spd(
    n: int,
    seed: int,
    eps: float = 1e-3,
    samples: int | None = None,
) -> np.ndarray:
    """Seeded random SPD matrix ``G G^T / m + eps I``.

    ``G`` is ``n x m`` with i.i.d. standard normal entries, ``m = samples``
    (default ``n``). Larger ``samples`` gives the better conditioned
    sample-covariance matrices that feature statistics produce.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if eps < 0:
        raise ValueError("eps must be non-negative")
    m = n if samples is None else int(samples)
    if m < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((n, m))
    return symmetric(g @ g.T / m + eps * np.eye(n))


def random_symmetric(n: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((n, n))
    return symmetric(g)


@dataclass(frozen=True)
class MatrixBatch:
    """A stack of same-sized symmetric matrices."""

    items: np.ndarray

    def __post_init__(self):
        items = symmetric(self.items)
        if items.ndim != 3 or items.shape[0] < 1:
            raise ValueError(f"expected (count, n, n) stack, got {items.shape}")
        object.__setattr__(self, "items", items)

    @classmethod
    def from_list(cls, mats: Sequence[np.ndarray]) -> "MatrixBatch":
        return cls(np.stack([np.asarray(m, dtype=np.float64) for m in mats]))

    @classmethod
    def random(cls, count: int, n: int, seed: int, eps: float = 1e-3, samples: int | None = None):
        seeds = np.random.SeedSequence(seed).generate_state(count, dtype=np.uint64)
        return cls(np.stack([random_spd(n, int(s), eps, samples) for s in seeds]))

    @property
    def count(self) -> int:
        return self.items.shape[0]

    @property
    def dim(self) -> int:
        return self.items.shape[1]

    def __len__(self) -> int:
        return self.count

    def __iter__(self):
        return iter(self.items)

    def __getitem__(self, i):
        return self.items[i]


# ---------------------------------------------------------------------------
# instrumented products and solves
# ---------------------------------------------------------------------------


def matmul(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"dimension mismatch: {a.shape} @ {b.shape}")
    record(matmuls=1)
    return a @ b


def trace_product(g, y) -> float:
    """``tr(g^T y)`` as an elementwise sum, counted as one matmul-equivalent."""
    g = np.asarray(g, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if g.shape != y.shape:
        raise ValueError(f"shape mismatch: {g.shape} vs {y.shape}")
    record(trace_products=1)
    return float(np.sum(g * y))


def lu_factor(q) -> tuple[np.ndarray, np.ndarray]:
    q = as_square(q)
    if not np.all(np.isfinite(q)):
        raise SingularMatrix("matrix has non-finite entries")
    with warnings.catch_warnings():
        # singular pivots are reported below as SingularMatrix
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(q, check_finite=False)
    pivots = np.abs(np.diag(lu))
    if pivots.min() <= PIVOT_TOL:
        k = int(np.argmin(pivots))
        raise SingularMatrix(f"pivot {k} has magnitude {pivots[k]:.3e} <= {PIVOT_TOL:g}")
    return lu, piv


def solve_linear(q, rhs) -> np.ndarray:
    """Solve ``q @ S = rhs`` by partially pivoted LU."""
    q = as_square(q)
    rhs = np.asarray(rhs, dtype=np.float64)
    if rhs.shape[0] != q.shape[0]:
        raise ValueError(f"dimension mismatch: {q.shape} vs rhs {rhs.shape}")
    lu, piv = lu_factor(q)
    record(solves=1)
    return sla.lu_solve((lu, piv), rhs, check_finite=False)


# ---------------------------------------------------------------------------
# cyclic Jacobi eigendecomposition
# ---------------------------------------------------------------------------


class EigenDecomposition(NamedTuple):
    eigenvalues: np.ndarray  # descending
    eigenvectors: np.ndarray  # columns

    def reconstruct(self) -> np.ndarray:
        return self.apply(lambda w: w)

    def apply(self, fn) -> np.ndarray:
        """``U diag(fn(lambda)) U^T`` (stack-aware)."""
        u = self.eigenvectors
        return symmetric((u * fn(self.eigenvalues)[..., None, :]) @ np.swapaxes(u, -1, -2))


@numba.njit(cache=True)
def _jacobi_kernel(a, max_sweeps, tol):
    # row-cyclic sweeps; a is overwritten with its diagonal form
    n = a.shape[0]
    v = np.eye(n)
    target = tol * np.sqrt(np.sum(a * a))
    for sweep in range(max_sweeps + 1):
        off = 0.0
        for i in range(n):
            for j in range(n):
                if i != j:
                    off += a[i, j] * a[i, j]
        if np.sqrt(off) <= target:
            return v, True, np.sqrt(off)
        if sweep == max_sweeps:
            return v, False, np.sqrt(off)
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if theta == 0.0:
                    t = 1.0
                else:
                    t = 1.0 / (abs(theta) + np.sqrt(theta * theta + 1.0))
                    if theta < 0.0:
                        t = -t
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                for k in range(n):
                    akp = a[k, p]
                    akq = a[k, q]
                    a[k, p] = c * akp - s * akq
                    a[k, q] = s * akp + c * akq
                for k in range(n):
                    apk = a[p, k]
                    aqk = a[q, k]
                    a[p, k] = c * apk - s * aqk
                    a[q, k] = s * apk + c * aqk
                a[p, q] = 0.0
                a[q, p] = 0.0
                for k in range(n):
                    vkp = v[k, p]
                    vkq = v[k, q]
                    v[k, p] = c * vkp - s * vkq
                    v[k, q] = s * vkp + c * vkq
    return v, False, 0.0


def _eig_one(a: np.ndarray, max_sweeps: int, tol: float):
    work = np.ascontiguousarray(a, dtype=np.float64).copy()
    v, ok, off = _jacobi_kernel(work, max_sweeps, tol)
    if not ok:
        raise NonConvergence(
            f"off-diagonal mass {off:.3e} above {tol:g} * ||a||_F after {max_sweeps} sweeps"
        )
    w = np.diag(work).copy()
    order = np.argsort(-w, kind="stable")
    return w[order], v[:, order]


def eig_sym(a, max_sweeps: int = 100, tol: float = 1e-12) -> EigenDecomposition:
    """Symmetric eigendecomposition by cyclic Jacobi rotations.

    Sweeps visit the pairs ``(p, q)``, ``p < q``, in row order, so results
    are deterministic. Converges when the off-diagonal Frobenius mass falls
    below ``tol * ||a||_F``; raises :class:`NonConvergence` otherwise.
    A ``(count, n, n)`` stack returns stacked eigenvalues/eigenvectors.
    """
    a = symmetric(a)
    if a.ndim == 2:
        return EigenDecomposition(*_eig_one(a, max_sweeps, tol))
    flat = a.reshape(-1, *a.shape[-2:])
    parts = [_eig_one(m, max_sweeps, tol) for m in flat]
    w = np.stack([p[0] for p in parts]).reshape(a.shape[:-1])
    v = np.stack([p[1] for p in parts]).reshape(a.shape)
    return EigenDecomposition(w, v)


# ---------------------------------------------------------------------------
# text format
# ---------------------------------------------------------------------------


def format_matrix(a) -> str:
    a = as_square(a)
    lines = [str(a.shape[0])]
    lines += [" ".join(repr(float(x)) for x in row) for row in a]
    return "\n".join(lines) + "\n"


def parse_matrix(text: str) -> np.ndarray:
    """Parse ``n`` followed by ``n`` rows of ``n`` decimal values."""
    rows = [ln.split() for ln in text.strip().splitlines() if ln.strip()]
    if not rows or len(rows[0]) != 1:
        raise ValueError("first line must hold the dimension n")
    n = int(rows[0][0])
    if n < 1:
        raise ValueError("n must be >= 1")
    body = rows[1:]
    if len(body) != n or any(len(r) != n for r in body):
        raise ValueError(f"expected {n} rows of {n} values")
    return np.array([[float(x) for x in r] for r in body], dtype=np.float64)


def read_matrix(path) -> np.ndarray:
    return parse_matrix(Path(path).read_text())


def write_matrix(path, a) -> None:
    Path(path).write_text(format_matrix(a))
