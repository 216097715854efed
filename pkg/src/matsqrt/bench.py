"""Benchmark driver: accuracy, wall time and operation counts per grid cell."""

from __future__ import annotations

import csv
import dataclasses
import itertools
import json
import logging
import math
import statistics
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .backward import LyapunovProblem, bartels_stewart, lyapunov_solve_sign, ns_backward, ns_pre_post_grad
from .forward import Method, exact_sqrt_eig, matrix_sqrt, mpa_degrees, ns_sqrt_coupled
from .matcore import MatrixBatch, OpCounter, counting, random_symmetric
from .pade import solve_pade_coefficients

log = logging.getLogger(__name__)

CSV_FIELDS = ("method", "n", "batch", "param", "mae", "wall_fwd_ns", "wall_bwd_ns", "matmuls", "solves", "residual_b")
SQRT_METHODS = (Method.MTP, Method.MPA, Method.NS_COUPLED, Method.EXACT)


@dataclass
class BenchConfig:
    methods: list[Method] = field(default_factory=lambda: list(SQRT_METHODS))
    dims: list[int] = field(default_factory=lambda: [64])
    batch_sizes: list[int] = field(default_factory=lambda: [1])
    degrees: list[int] = field(default_factory=lambda: [11])
    iters: list[int] = field(default_factory=lambda: [5])
    trials: int = 1000
    seed: int = 0
    eps: float = 1e-3
    samples_factor: int | None = 4
    lya_iters: int = 8
    output: str | None = None

    def __post_init__(self) -> None:
        self.methods = [Method(m) for m in self.methods]
        for m in self.methods:
            if m not in SQRT_METHODS:
                raise ValueError(f"method {m.value} cannot be benchmarked; choose from {[x.value for x in SQRT_METHODS]}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.dims or any(not 2 <= n <= 1024 for n in self.dims):
            raise ValueError("dims must be non-empty and lie in [2, 1024]")
        if not self.batch_sizes or any(b < 1 for b in self.batch_sizes):
            raise ValueError("batch sizes must be >= 1")
        if any(k < 1 for k in self.degrees) or any(k < 1 for k in self.iters):
            raise ValueError("degrees and iteration counts must be >= 1")
        if Method.MPA in self.methods:
            for k in self.degrees:
                mpa_degrees(k)
        if self.samples_factor is not None and self.samples_factor < 1:
            raise ValueError("samples_factor must be >= 1")

    @classmethod
    def from_dict(cls, data: dict) -> "BenchConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_file(cls, path) -> "BenchConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def cells(self):
        for method, n, batch in itertools.product(self.methods, self.dims, self.batch_sizes):
            if method == Method.EXACT:
                params = [0]
            elif method == Method.NS_COUPLED:
                params = self.iters
            else:
                params = self.degrees
            for param in params:
                yield method, n, batch, param


@dataclass
class BenchRecord:
    method: str
    n: int
    batch: int
    param: int
    mae: float
    wall_fwd_ns: int
    wall_bwd_ns: int
    matmuls: int
    solves: int
    residual_b: float

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


def _backward(method: Method, a, out, grad, lya_iters: int):
    """Paired backward pass; returns ``||B_k - I||_F`` or 0 when not applicable."""
    if method == Method.NS_COUPLED:
        g_y0, _ = ns_backward(out.ns_trace, math.sqrt(out.norm) * grad)
        ns_pre_post_grad(a, out.ns_trace, g_y0, grad, out.ns_trace[-1][0])
        return 0.0
    if method == Method.EXACT:
        bartels_stewart(out.sqrt, grad)
        return 0.0
    return lyapunov_solve_sign(LyapunovProblem(out.sqrt, grad, 1e-7, lya_iters)).residual_b


def _forward(method: Method, a, param: int):
    if method == Method.NS_COUPLED:
        return ns_sqrt_coupled(a, param, keep_trace=True)
    return matrix_sqrt(a, method, param or None)


def run_bench(cfg: BenchConfig, failures: list | None = None) -> list[BenchRecord]:
    """Run every grid cell in a fixed order.

    Each cell draws ``trials`` seeded SPD matrices (shared across methods
    of the same ``n``), runs them in batches of ``batch``, and records the
    mean MAE against the eigendecomposition, the median per-batch wall
    time of forward and backward, and per-matrix operation counts.
    A failing cell is logged, appended to ``failures`` and skipped.
    """
    records: list[BenchRecord] = []
    inputs: dict[int, tuple[MatrixBatch, np.ndarray, np.ndarray]] = {}
    for k in cfg.degrees:
        if Method.MPA in cfg.methods:
            solve_pade_coefficients(*mpa_degrees(k))
    for method, n, batch, param in cfg.cells():
        if n not in inputs:
            samples = None if cfg.samples_factor is None else cfg.samples_factor * n
            mats = MatrixBatch.random(cfg.trials, n, seed=cfg.seed + n, eps=cfg.eps, samples=samples)
            exact = np.stack([exact_sqrt_eig(a).sqrt for a in mats])
            grad = random_symmetric(n, seed=cfg.seed + 7919 * n)
            inputs[n] = (mats, exact, grad)
        mats, exact, grad = inputs[n]
        try:
            records.append(_run_cell(cfg, method, n, batch, param, mats, exact, grad))
        except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
            log.warning("cell %s n=%d batch=%d param=%d failed: %s", method.value, n, batch, param, exc)
            if failures is not None:
                failures.append({"method": method.value, "n": n, "batch": batch, "param": param, "error": str(exc)})
    return records


def _run_cell(cfg, method, n, batch, param, mats, exact, grad) -> BenchRecord:
    counter = OpCounter()
    errors = []
    residuals = []
    fwd_times: list[int] = []
    bwd_times: list[int] = []
    with threadpool_limits(limits=1), counting(counter):
        for start in range(0, len(mats), batch):
            chunk = mats.items[start : start + batch]
            t0 = time.perf_counter_ns()
            outs = [_forward(method, a, param) for a in chunk]
            t1 = time.perf_counter_ns()
            residuals.extend(_backward(method, a, o, grad, cfg.lya_iters) for a, o in zip(chunk, outs))
            t2 = time.perf_counter_ns()
            fwd_times.append(t1 - t0)
            bwd_times.append(t2 - t1)
            errors.extend(float(np.mean(np.abs(o.sqrt - e))) for o, e in zip(outs, exact[start : start + batch]))
    count = len(mats)
    return BenchRecord(
        method=method.value,
        n=n,
        batch=batch,
        param=param,
        mae=float(np.mean(errors)),
        wall_fwd_ns=int(statistics.median(fwd_times)),
        wall_bwd_ns=int(statistics.median(bwd_times)),
        matmuls=counter.matmul_equivalents // count,
        solves=counter.solves // count,
        residual_b=float(np.mean(residuals)),
    )


def emit_csv(records, path) -> None:
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
            writer.writeheader()
            for r in records:
                writer.writerow(r.as_dict())
    except OSError as exc:
        raise OSError(f"cannot write CSV to {path}: {exc}") from exc


def emit_json(records, path) -> None:
    try:
        Path(path).write_text(json.dumps([r.as_dict() for r in records], indent=2) + "\n", encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write JSON to {path}: {exc}") from exc


def load_json(path) -> list[BenchRecord]:
    return [BenchRecord(**row) for row in json.loads(Path(path).read_text(encoding="utf-8"))]
