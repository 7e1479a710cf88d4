"""Command-line entry point: ``rgnhr {decompose,condition,benchmark,compress}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .benchmark import ExperimentSpec, run_experiment
from .conditioning import condition_number
from .cpd import CpdPoint
from .io import load_cpd, load_tensor, load_tucker, save_cpd, save_tucker
from .solver import SolverConfig, solve
from .tensor import st_hosvd, tucker_compress_then_expand_factors

VARIANTS = {"hr": "hot-restarts", "reg": "tikhonov-reg"}


def _int_list(text: str) -> list:
    return [int(v) for v in text.split(",") if v]


def _cmd_decompose(args) -> int:
    tucker = None
    if args.tucker:
        tucker = load_tucker(args.tensor)
        B = tucker.core
    else:
        B = load_tensor(args.tensor)
    config = SolverConfig(tau_f=args.tau_f, tau_df=args.tau_df, tau_dx=args.tau_dx,
                          k_max=args.k_max, r_max=args.r_max,
                          variant=VARIANTS[args.variant], rng_seed=args.seed, gate=args.gate)
    report = solve(B, args.rank, config)
    point = report.final_point
    if tucker is not None:
        # lift the CPD of the core back through the orthonormal Tucker factors
        point = CpdPoint.from_factors(
            tucker_compress_then_expand_factors(point.factors(), tucker.factors))
    if args.trace:
        Path(args.trace).write_text(report.trace_csv())
    if args.out:
        save_cpd(args.out, point)
    summary = {
        "status": report.status,
        "iterations": len(report.iterations),
        "restarts": report.restarts,
        "f": report.f,
        "kappa": report.final_kappa if np.isfinite(report.final_kappa) else "inf",
        "wall_time": report.wall_time,
    }
    print(json.dumps(summary))
    return 0


def _cmd_condition(args) -> int:
    rep = condition_number(load_cpd(args.cpd), method=args.method)
    kappa = rep.kappa if np.isfinite(rep.kappa) else "inf"
    print(json.dumps({"kappa": kappa, "sigma_n": rep.sigma_min, "method": rep.method}))
    return 0


def _cmd_benchmark(args) -> int:
    spec = ExperimentSpec(
        model=args.model, shape=tuple(_int_list(args.shape)) if args.shape else None,
        rank=args.rank, c=args.c, s=args.s, e=args.e, num_starts=args.starts,
        solvers=tuple(s for s in args.solvers.split(",") if s), seed=args.seed,
        k_max=args.k_max, r_max=args.r_max, workers=args.workers)
    result = run_experiment(spec, keep_traces=bool(args.traces))
    text = result.to_json()
    if args.out:
        out = Path(args.out)
        out.write_text(text)
        out.with_suffix(".csv").write_text(result.table_csv())
    else:
        print(text)
    if args.traces:
        folder = Path(args.traces)
        folder.mkdir(parents=True, exist_ok=True)
        for a in result.attempts:
            (folder / f"{a.solver}_{a.index:03d}.csv").write_text(a.trace)
    print(result.table_csv(), end="", file=sys.stderr)
    return 0


def _cmd_compress(args) -> int:
    T = load_tensor(args.tensor)
    ranks = _int_list(args.ranks)
    if len(ranks) == 1:
        ranks = ranks * T.ndim
    tucker = st_hosvd(T, ranks)
    side = save_tucker(args.out, tucker)
    err = float(np.linalg.norm(T - tucker.expand()))
    print(json.dumps({"core": str(args.out), "factors": str(side), "ranks": list(tucker.ranks),
                      "relative_error": err / max(float(np.linalg.norm(T)), np.finfo(float).tiny)}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rgnhr", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    d = sub.add_parser("decompose", help="approximate a tensor by a rank-r CPD")
    d.add_argument("--tensor", required=True, help=".dten or text tensor file")
    d.add_argument("--rank", type=int, required=True)
    d.add_argument("--variant", choices=sorted(VARIANTS), default="hr")
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--tau-f", type=float, default=0.0)
    d.add_argument("--tau-df", type=float, default=1e-10)
    d.add_argument("--tau-dx", type=float, default=1e-12)
    d.add_argument("--k-max", type=int, default=1500)
    d.add_argument("--r-max", type=int, default=500)
    d.add_argument("--gate", choices=("cholesky", "spectral"), default="cholesky")
    d.add_argument("--tucker", action="store_true",
                   help="treat --tensor as a compressed core with a .factors.json sidecar")
    d.add_argument("--trace", help="write the iteration trace as CSV")
    d.add_argument("--out", help="write the CPD as JSON")
    d.set_defaults(func=_cmd_decompose)

    c = sub.add_parser("condition", help="condition number of a stored CPD")
    c.add_argument("cpd", help="CPD JSON file")
    c.add_argument("--method", choices=("svd-explicit", "eig-of-H"), default="svd-explicit")
    c.set_defaults(func=_cmd_condition)

    b = sub.add_parser("benchmark", help="compare solver variants on a synthetic model")
    b.add_argument("--model", type=str.upper, choices=("F", "G"), default="F")
    b.add_argument("--c", type=float, default=0.0)
    b.add_argument("--s", type=float, default=1.0)
    b.add_argument("--rank", type=int, default=5)
    b.add_argument("--e", type=float, default=5.0)
    b.add_argument("--starts", type=int, default=None)
    b.add_argument("--solvers", default="hr,reg")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--shape", help="comma separated, e.g. 15,15,15")
    b.add_argument("--k-max", type=int, default=1500)
    b.add_argument("--r-max", type=int, default=500)
    b.add_argument("--workers", type=int, default=1)
    b.add_argument("--traces", help="directory for per-attempt trace CSVs")
    b.add_argument("--out", help="report JSON; the table goes next to it as .csv")
    b.set_defaults(func=_cmd_benchmark)

    t = sub.add_parser("compress", help="orthogonal Tucker compression by ST-HOSVD")
    t.add_argument("--tensor", required=True)
    t.add_argument("--ranks", required=True, help="r or r1,r2,...")
    t.add_argument("--out", required=True, help="core .dten; factors go to <stem>.factors.json")
    t.set_defaults(func=_cmd_compress)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"rgnhr: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
