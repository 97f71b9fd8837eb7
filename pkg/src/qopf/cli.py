"""Command-line frontend: ``qopf solve``, ``qopf analyze`` and ``qopf decompose``.

Exit codes: 0 success, 1 usage or data error, 2 solver did not converge (the
report is still written). Progress goes to stderr; stdout carries only the
summary, table or expansion.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__
from .caseio import CaseError, builtin_case, load_case_file, write_report
from .ipm import BackendError, DivergenceError, IpmConfig, LinearBackend, initial_state, ipm_solve
from .noise import NoiseSpec
from .optimize import OptimizerConfig
from .pauli import EncodingError, decompose, format_decomposition, is_hermitian, pad_to_power_of_two
from .powermodel import ModelError, build_opf, condition_number, kkt_assemble, power_flow_matrix
from .vqsolver import SolverConfig

OPTIMIZERS = {"adam": "adam", "qn": "quasi-newton", "dfo": "derivative-free"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 is reserved for non-convergence here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _nonneg_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text}")
    return value


def _nonneg_float(text: str) -> float:
    value = float(text)
    if not np.isfinite(value) or value < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative number, got {text}")
    return value


def _positive_float(text: str) -> float:
    value = float(text)
    if not np.isfinite(value) or value <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return value


def _add_case_flags(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group()
    src.add_argument("--case", default=None, help="bundled case name (case3, case5, case118, case300)")
    src.add_argument("--case-file", default=None, help="path to a MATPOWER .m case file")
    p.add_argument("--formulation", choices=("dc", "ac"), default="dc", help="OPF formulation (default dc)")


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--backend", choices=("classical", "vqls", "cvqls"), default="classical",
                   help="Newton-direction solver (default classical)")
    p.add_argument("--optimizer", choices=tuple(OPTIMIZERS), default="adam",
                   help="inner optimizer for variational backends (default adam)")
    p.add_argument("--ansatz-depth", type=_nonneg_int, default=1, help="ansatz layer count (default 1)")
    p.add_argument("--seed", type=int, default=0, help="seed for every random stream (default 0)")
    p.add_argument("--noise-matrix-sigma", type=_nonneg_float, default=0.0,
                   help="relative std of symmetric noise on each KKT matrix")
    p.add_argument("--noise-rhs-sigma", type=_nonneg_float, default=0.0,
                   help="relative std of noise on each right-hand side")
    p.add_argument("--shots", type=_positive_int, default=None,
                   help="sample circuit probabilities with this many shots")
    p.add_argument("--max-ipm-iters", type=_positive_int, default=200, help="outer iteration cap")
    p.add_argument("--eps-ipm", type=_positive_float, default=1e-6, help="outer convergence tolerance")
    p.add_argument("--eps-inner", type=_positive_float, default=1e-4, help="inner cost tolerance")
    p.add_argument("--max-inner-iters", type=_positive_int, default=2000, help="inner iteration cap")
    p.add_argument("--mu-window", type=_positive_int, default=3, help="objective history window of the mu controller")
    p.add_argument("--mu-eps-conv", type=_positive_float, default=1e-3, help="relative-difference freeze threshold")
    p.add_argument("--no-mu-control", action="store_true", help="disable the mu controller")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qopf", description="Interior-point OPF with classical or variational Newton solves.")
    parser.add_argument("--version", action="version", version=f"qopf {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    solve = sub.add_parser("solve", help="solve an OPF case and write a run report")
    _add_case_flags(solve)
    _add_run_flags(solve)
    solve.add_argument("--out", default=None, help="report path (default: no file)")
    solve.add_argument("--format", choices=("json", "csv"), default="json", help="report format (default json)")
    solve.add_argument("--record-timing", action="store_true",
                       help="include wall-clock timing in the report (breaks byte-identical output)")
    solve.add_argument("--quiet", action="store_true", help="suppress per-iteration progress on stderr")

    analyze = sub.add_parser("analyze", help="report matrix sizes, conditioning and encoding resources")
    _add_case_flags(analyze)
    analyze.add_argument("--max-ipm-iters", type=_positive_int, default=200, help="outer iteration cap")
    analyze.add_argument("--eps-ipm", type=_positive_float, default=1e-6, help="outer convergence tolerance")
    analyze.add_argument("--identity-matrix", type=_positive_int, default=None, metavar="DIM",
                         help="debug: analyze a DIM x DIM identity instead of a case")
    analyze.add_argument("--out", default=None, help="also write the table as JSON to this path")

    dec = sub.add_parser("decompose", help="print the Pauli expansion of a matrix file")
    dec.add_argument("--matrix-file", required=True,
                     help="text file: first line the dimension, then one row of reals per line")
    dec.add_argument("--digits", type=_positive_int, default=4, help="significant decimals (default 4)")
    return parser


def _load_case(args):
    if args.case_file is not None:
        return load_case_file(args.case_file)
    if args.case is None:
        raise UsageError("one of --case or --case-file is required")
    return builtin_case(args.case)


def _backend(args) -> LinearBackend:
    noise = None
    if args.noise_matrix_sigma > 0 or args.noise_rhs_sigma > 0 or args.shots is not None:
        noise = NoiseSpec(seed=args.seed, matrix_rel_sigma=args.noise_matrix_sigma,
                          rhs_rel_sigma=args.noise_rhs_sigma, shots=args.shots)
    solver = None
    if args.backend != "classical":
        solver = SolverConfig(
            eps_cvqls=args.eps_inner,
            k_cvqls_max=args.max_inner_iters,
            depth=args.ansatz_depth,
            optimizer=OptimizerConfig(kind=OPTIMIZERS[args.optimizer]),
            noise=noise if args.shots is not None else None,
        )
    return LinearBackend(kind=args.backend, solver=solver, noise=noise)


def run_solve(args) -> int:
    case = _load_case(args)
    problem = build_opf(case, args.formulation)
    config = IpmConfig(
        eps_ipm=args.eps_ipm,
        k_max=args.max_ipm_iters,
        use_controller=not args.no_mu_control,
        window=args.mu_window,
        eps_conv=args.mu_eps_conv,
        record_timing=args.record_timing,
    )

    def progress(rec):
        inner = "" if rec.inner_cost is None else f"  inner {rec.inner_iters} it cost {rec.inner_cost:.3e}"
        print(f"[{rec.k:3d}] f {rec.objective:.6f}  mu {rec.mu:.3e}  kappa {rec.kappa:.3e}  "
              f"res {rec.residual:.3e}{inner}", file=sys.stderr)

    try:
        _, report = ipm_solve(problem, _backend(args), config, seed=args.seed,
                              progress=None if args.quiet else progress)
    except (DivergenceError, BackendError) as exc:
        report = exc.report
        print(f"qopf: {exc}", file=sys.stderr)
    if args.out is not None:
        write_report(report, args.format, args.out)
    kappas = [r.kappa for r in report.iterations if np.isfinite(r.kappa)]
    max_kappa = f"{max(kappas):.3e}" if kappas else "n/a"
    final = "n/a" if report.final_objective is None else f"{report.final_objective:.6f}"
    print(f"{report.case} {report.formulation} {report.backend}: objective {final}  "
          f"iterations {len(report.iterations)}  max kappa {max_kappa}  {report.message}")
    return 0 if report.converged else 2


def _analyze_matrix(M: np.ndarray) -> dict:
    padded, _, _ = pad_to_power_of_two(M, np.zeros(M.shape[0]))
    dec = decompose(padded)
    return {
        "size": int(M.shape[0]),
        "padded_size": int(padded.shape[0]),
        "qubits": dec.n,
        "terms_raw": dec.raw_count,
        "terms": len(dec),
        "gate_estimate": dec.controlled_gate_estimate(),
    }


def run_analyze(args) -> int:
    rows: List[dict] = []
    if args.identity_matrix is not None:
        row = {"name": f"identity{args.identity_matrix}", "matrix": "identity"}
        eye = np.eye(args.identity_matrix)
        row.update(_analyze_matrix(eye))
        row["kappa_min"] = row["kappa_max"] = condition_number(eye)
        rows.append(row)
    else:
        case = _load_case(args)
        pf = power_flow_matrix(case, args.formulation)
        row = {"name": case.name, "matrix": f"{args.formulation}pf"}
        row.update(_analyze_matrix(pf))
        row["kappa_min"] = row["kappa_max"] = condition_number(pf)
        rows.append(row)

        problem = build_opf(case, args.formulation)
        _, report = ipm_solve(problem, config=IpmConfig(eps_ipm=args.eps_ipm, k_max=args.max_ipm_iters))
        start = initial_state(problem)
        first = kkt_assemble(problem, start.x, start.lam, start.mu, nu=start.nu)
        row = {"name": case.name, "matrix": f"{args.formulation}opf"}
        row.update(_analyze_matrix(first.M))
        # the report holds kappa of the matrix solved at every iteration, the first included
        kappas = [r.kappa for r in report.iterations]
        row["kappa_min"] = float(min(kappas))
        row["kappa_max"] = float(max(kappas))
        rows.append(row)

    cols = ("name", "matrix", "size", "padded_size", "qubits", "terms_raw", "terms", "gate_estimate",
            "kappa_min", "kappa_max")
    print("  ".join(f"{c:>13}" for c in cols))
    for row in rows:
        cells = [f"{row[c]:>13.3e}" if c.startswith("kappa") else f"{row[c]!s:>13}" for c in cols]
        print("  ".join(cells))
    if args.out is not None:
        Path(args.out).write_text(json.dumps(rows, indent=2, sort_keys=True) + "\n")
    return 0


def read_matrix_file(path) -> np.ndarray:
    """Parse the dense text format: a dimension line, then ``dim`` rows of ``dim`` reals."""
    lines = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines or len(lines[0]) != 1:
        raise ValueError("first line must hold the matrix dimension")
    dim = int(lines[0][0])
    rows = lines[1:]
    if dim < 1 or len(rows) != dim or any(len(r) != dim for r in rows):
        raise ValueError(f"expected {dim} rows of {dim} values")
    return np.array([[float(v) for v in r] for r in rows])


def run_decompose(args) -> int:
    M = read_matrix_file(args.matrix_file)
    if not is_hermitian(M):
        raise EncodingError("matrix is not Hermitian")
    padded, _, _ = pad_to_power_of_two(M, np.zeros(M.shape[0]))
    print(format_decomposition(decompose(padded), digits=args.digits))
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"solve": run_solve, "analyze": run_analyze, "decompose": run_decompose}
    try:
        return handlers[args.command](args)
    except (UsageError, CaseError, ModelError, EncodingError, ValueError, OSError) as exc:
        print(f"qopf: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
