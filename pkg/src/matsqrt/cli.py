"""``matsqrt`` command-line entry point.

Exit codes: 0 success, 1 invalid input or configuration, 2 a selfcheck
criterion failed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import backward as bw
from . import bench, criteria
from .forward import Method, exact_invsqrt_eig, exact_sqrt_eig, mae, matrix_invsqrt, matrix_sqrt
from .matcore import OpCounter, counting, fro_norm, random_spd, random_symmetric, read_matrix, write_matrix
from .pade import PadeCoefficients, solve_pade_coefficients, verify_no_poles
from .whitening import WhitenConfig, whiteness, zca_whiten

EXIT_OK, EXIT_INVALID, EXIT_CRITERION = 0, 1, 2

METHOD_ALIASES = {"NS": Method.NS_COUPLED, "NS_COUPLED": Method.NS_COUPLED, "NS_SINGLE": Method.NS_SINGLE}


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 is reserved for criterion failures
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _method(text: str) -> Method:
    key = text.upper()
    if key in METHOD_ALIASES:
        return METHOD_ALIASES[key]
    try:
        return Method(key)
    except ValueError:
        raise argparse.ArgumentTypeError(f"unknown method {text!r}") from None


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _emit(payload: dict, args) -> None:
    """Print ``payload`` as JSON, or its scalar fields as ``key,value`` CSV."""
    if args.format == "json":
        text = json.dumps(payload, indent=2) + "\n"
    else:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["key", "value"])
        for k, v in payload.items():
            if not isinstance(v, (list, dict)):
                writer.writerow([k, v])
        text = buf.getvalue()
    sys.stdout.write(text)


def _input_matrix(args) -> np.ndarray:
    if args.input:
        return read_matrix(args.input)
    return random_spd(args.n, args.seed, eps=args.eps, samples=args.samples)


def cmd_coeffs(args) -> int:
    c = solve_pade_coefficients(args.m, args.m if args.n is None else args.n)
    payload = {"m": c.m_degree, "n": c.n_degree, "p": list(c.p), "q": list(c.q), "matching_residual": c.matching_residual()}
    if c.is_diagonal and c.n_degree:
        payload["pole_scan_min"] = verify_no_poles(c)
    _emit(payload, args)
    return EXIT_OK


def cmd_sqrt(args) -> int:
    a = _input_matrix(args)
    counter = OpCounter()
    with counting(counter):
        if args.inverse:
            out = matrix_invsqrt(a, args.method, args.param)
        else:
            out = matrix_sqrt(a, args.method, args.param)
    exact = (exact_invsqrt_eig(a) if args.inverse else exact_sqrt_eig(a)).sqrt
    s = out.sqrt
    residual = fro_norm(s @ s @ a - np.eye(len(a))) if args.inverse else fro_norm(s @ s - a)
    payload = {
        "method": out.method.value,
        "param": out.degree_or_iters,
        "inverse": args.inverse,
        "n": int(a.shape[0]),
        "mae": mae(s, exact),
        "residual": residual,
        **counter.as_dict(),
    }
    if args.out:
        write_matrix(args.out, s)
        payload["matrix_path"] = str(args.out)
    else:
        payload["matrix"] = s.tolist()
    _emit(payload, args)
    return EXIT_OK


def cmd_grad(args) -> int:
    a = _input_matrix(args)
    g = random_symmetric(len(a), args.seed + 1)
    root = exact_sqrt_eig(a).sqrt
    counter = OpCounter()
    iters_used, residual_b = 0, 0.0
    with counting(counter):
        if args.solver == "lya":
            out = bw.lyapunov_solve_sign(bw.LyapunovProblem(root, g, args.tau, args.iters or 8))
            grad, iters_used, residual_b = out.grad, out.iters_used, out.residual_b
        elif args.solver == "ns":
            out = bw.ns_sqrt_grad(a, g, args.iters or 5)
            grad, iters_used = out.grad, out.iters_used
        elif args.solver == "bs":
            grad = bw.bartels_stewart(root, g)
        else:
            grad = bw.kron_closed_form(root, g)
    oracle = bw.bartels_stewart(root, g)
    payload = {
        "solver": args.solver,
        "n": int(a.shape[0]),
        "iters_used": iters_used,
        "residual_b": residual_b,
        "residual_c_vs_oracle": fro_norm(grad - oracle),
        "lyapunov_residual": fro_norm(root @ grad + grad @ root - g) if args.solver != "ns" else None,
        **counter.as_dict(),
    }
    if args.out:
        write_matrix(args.out, grad)
        payload["matrix_path"] = str(args.out)
    else:
        payload["grad"] = grad.tolist()
    _emit(payload, args)
    return EXIT_OK


def _read_features(path) -> np.ndarray:
    rows = [[float(v) for v in row] for row in csv.reader(Path(path).read_text(encoding="utf-8").splitlines()) if row]
    return np.array(rows, dtype=np.float64)


def cmd_whiten(args) -> int:
    if args.input:
        x = _read_features(args.input)
    else:
        x = np.random.default_rng(args.seed).standard_normal((args.channels, args.samples))
    cfg = WhitenConfig(eps=args.eps, method=args.method, degree_or_iters=args.param)
    x_w = zca_whiten(x, cfg)
    payload = {"method": cfg.method.value, "channels": int(x.shape[0]), "samples": int(x.shape[1]), "cov_deviation": whiteness(x_w)}
    if args.out:
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            csv.writer(fh).writerows(x_w.tolist())
        payload["features_path"] = str(args.out)
    else:
        payload["whitened"] = x_w.tolist()
    _emit(payload, args)
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = bench.BenchConfig.from_file(args.config) if args.config else bench.BenchConfig()
    overrides = {
        k: v
        for k, v in {
            "methods": args.methods,
            "dims": args.dims,
            "batch_sizes": args.batch_sizes,
            "degrees": args.degrees,
            "iters": args.iters,
            "trials": args.trials,
            "seed": args.seed,
            "output": args.out,
        }.items()
        if v is not None
    }
    cfg = replace(cfg, **overrides)
    failures: list = []
    records = bench.run_bench(cfg, failures)
    if cfg.output:
        (bench.emit_csv if args.format == "csv" else bench.emit_json)(records, cfg.output)
    elif args.format == "csv":
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=bench.CSV_FIELDS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(r.as_dict() for r in records)
        sys.stdout.write(buf.getvalue())
    else:
        sys.stdout.write(json.dumps([r.as_dict() for r in records], indent=2) + "\n")
    for f in failures:
        print(f"cell failed: {f}", file=sys.stderr)
    return EXIT_OK


def _faulty_pade(m: int, n: int) -> PadeCoefficients:
    c = solve_pade_coefficients(m, n)
    return PadeCoefficients(c.m_degree, c.n_degree, (c.p[0] + 1e-3,) + c.p[1:], c.q)


def cmd_selfcheck(args) -> int:
    hooks = criteria.Hooks(
        pade=_faulty_pade if args.inject_pade_fault else solve_pade_coefficients,
        lya_iter_cap=args.lya_iter_cap,
    )
    results = criteria.run_all(args.trials, hooks)
    for r in results:
        print(r.line())
    failed = [r.number for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed" + (f"; failed: {failed}" if failed else ""))
    if args.out:
        Path(args.out).write_text(
            json.dumps([{"number": r.number, "name": r.name, "passed": r.passed, "measured": r.measured, "expected": r.expected} for r in results], indent=2)
            + "\n",
            encoding="utf-8",
        )
    return EXIT_CRITERION if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=_u64, default=None, help="RNG seed (unsigned 64-bit)")
    common.add_argument("--out", type=Path, default=None, help="output path")
    common.add_argument("--format", choices=("csv", "json"), default=None)

    def matrix_source(p):
        p.add_argument("--input", type=Path, help="matrix text file: n, then n rows")
        p.add_argument("--n", type=int, default=64, help="size of the random SPD input")
        p.add_argument("--eps", type=float, default=1e-3, help="diagonal shift of the random SPD input")
        p.add_argument("--samples", type=int, default=None, help="Gaussian samples per random SPD draw (default n)")

    parser = _Parser(prog="matsqrt", description="Differentiable matrix square roots: forward, backward, benchmarks.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("coeffs", parents=[common], help="Pade coefficients and pole-scan minimum")
    p.add_argument("--m", type=int, default=5)
    p.add_argument("--n", type=int, default=None, help="denominator degree (default m)")
    p.set_defaults(func=cmd_coeffs)

    p = sub.add_parser("sqrt", parents=[common], help="square root or inverse square root of one matrix")
    p.add_argument("--method", type=_method, default=Method.MPA, help="MTP, MPA, NS, NS_SINGLE or EXACT")
    p.add_argument("--param", type=int, default=None, help="series degree K (MTP/MPA) or iterations (NS)")
    p.add_argument("--inverse", action="store_true")
    matrix_source(p)
    p.set_defaults(func=cmd_sqrt)

    p = sub.add_parser("grad", parents=[common], help="gradient of the square root for a random upstream gradient")
    p.add_argument("--solver", choices=("lya", "ns", "bs", "kron"), default="lya")
    p.add_argument("--iters", type=int, default=None, help="iterations (lya default 8, ns default 5)")
    p.add_argument("--tau", type=float, default=1e-7)
    matrix_source(p)
    p.set_defaults(func=cmd_grad)

    p = sub.add_parser("whiten", parents=[common], help="ZCA-whiten a C x S feature matrix")
    p.add_argument("--input", type=Path, help="CSV with one channel per row")
    p.add_argument("--channels", type=int, default=8)
    p.add_argument("--samples", type=int, default=256)
    p.add_argument("--method", type=_method, default=Method.EXACT)
    p.add_argument("--param", type=int, default=None)
    p.add_argument("--eps", type=float, default=1e-5)
    p.set_defaults(func=cmd_whiten)

    p = sub.add_parser("bench", parents=[common], help="accuracy / speed / operation-count grid")
    p.add_argument("--config", type=Path, help="JSON file with BenchConfig fields")
    p.add_argument("--methods", type=lambda s: [_method(v) for v in s.split(",") if v], default=None)
    p.add_argument("--dims", type=_int_list, default=None)
    p.add_argument("--batch-sizes", type=_int_list, default=None)
    p.add_argument("--degrees", type=_int_list, default=None)
    p.add_argument("--iters", type=_int_list, default=None)
    p.add_argument("--trials", type=int, default=None)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("selfcheck", parents=[common], help="run the acceptance criteria at reduced size")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--inject-pade-fault", action="store_true", help=argparse.SUPPRESS)
    p.add_argument("--lya-iter-cap", type=int, default=None, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_selfcheck)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.format is None:
        args.format = "csv" if args.command == "bench" else "json"
    if args.seed is None and args.command != "bench":
        args.seed = 0
    try:
        return args.func(args)
    except (ValueError, ArithmeticError, np.linalg.LinAlgError, OSError) as exc:
        print(f"matsqrt {args.command}: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    raise SystemExit(main())
