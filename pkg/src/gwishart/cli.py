"""Command-line entry point: ``gwishart {sample,mode,drj,exact,validate}``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
import time

import numpy as np

from . import __version__
from .drj import DrjConfig, exact_graph_posterior, run_drj
from .graph import Graph, GraphError, read_graph
from .io import InputFileError, RunReport, compute_scatter, load_dataset, read_matrix, upper_triangle_rows
from .linalg import NotPositiveDefiniteError
from .samplers import (
    CompletionError,
    CompletionSettings,
    GWishartParams,
    RunningMoments,
    gwishart_mode,
    iter_block_gibbs,
    iter_direct,
    rng_stream,
)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_NUMERIC = 4

log = logging.getLogger("gwishart")


class UsageError(Exception):
    pass


def _bool(text: str) -> bool:
    if text.lower() in ("true", "1", "yes"):
        return True
    if text.lower() in ("false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected true or false, got {text!r}")


def _emit(report: RunReport, out: str | None) -> None:
    if out:
        report.write(out)
    else:
        print(report.to_json())


def _params(delta: float, dmat: str | None, p: int) -> GWishartParams:
    """Prior parameters, with D read from `dmat` (identity when None).

    A bad delta is a usage error; a D file of the wrong size or one that is
    not symmetric positive definite is an input-file error.
    """
    if not delta > 0:
        raise UsageError(f"--delta must be positive, got {delta}")
    if dmat is None:
        return GWishartParams(delta, np.eye(p))
    d = read_matrix(dmat)
    if d.shape != (p, p):
        raise InputFileError(f"{dmat}: D is {d.shape[0]}x{d.shape[1]} but the problem has p = {p}")
    try:
        return GWishartParams(delta, d)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise InputFileError(f"{dmat}: {exc}") from None


def cmd_sample(args) -> int:
    if args.iters < 1 or args.chains < 1 or args.burnin < 0:
        raise UsageError("--iters and --chains must be positive and --burnin non-negative")
    g = read_graph(args.graph)
    params = _params(args.delta, args.dmat, g.p)
    rng = rng_stream(args.seed)
    t0 = time.perf_counter()
    if args.method == "direct":
        stream = iter_direct(g, params, args.iters, rng, CompletionSettings(args.engine))
    else:
        stream = iter_block_gibbs(g, params, args.iters, rng, burnin=args.burnin, chains=args.chains)
    mom = RunningMoments()
    sink = open(args.samples, "w", newline="") if args.samples else None
    try:
        writer = csv.writer(sink) if sink else None
        for stack in stream:
            mom.update(stack)
            if writer:
                writer.writerows(upper_triangle_rows(stack).tolist())
    finally:
        if sink:
            sink.close()
    report = RunReport(
        "sample",
        {"graph": args.graph, "dmat": args.dmat, "delta": args.delta, "iters": args.iters,
         "method": args.method, "engine": args.engine, "burnin": args.burnin,
         "chains": args.chains, "seed": args.seed},
        {"n": mom.n, "mean_k": mom.mean, "var_k": mom.var},
        {"seconds": time.perf_counter() - t0},
    )
    _emit(report, args.out)
    return EXIT_OK


def cmd_mode(args) -> int:
    g = read_graph(args.graph)
    params = _params(args.delta, args.dmat, g.p)
    if not params.delta > 2:
        raise UsageError("mode requires --delta > 2")
    t0 = time.perf_counter()
    k = gwishart_mode(g, params, CompletionSettings(tol=args.tol))
    report = RunReport(
        "mode",
        {"graph": args.graph, "dmat": args.dmat, "delta": args.delta, "tol": args.tol},
        {"mode_k": k},
        {"seconds": time.perf_counter() - t0},
    )
    _emit(report, args.out)
    return EXIT_OK


def _graph_key(g: Graph) -> str:
    return ";".join(f"{i}-{j}" for i, j in g.sorted_edges()) or "empty"


def cmd_drj(args) -> int:
    data = load_dataset(args.data)
    sc = compute_scatter(data, args.center)
    prior = _params(args.delta, args.dmat, data.p)
    if args.burnin >= args.iters:
        raise UsageError("--burnin must be smaller than --iters")
    cfg = DrjConfig(iters=args.iters, burnin=args.burnin, sigma_g=args.sigma_g, seed=args.seed,
                    alpha_variant=args.alpha_variant, chains=args.chains)
    t0 = time.perf_counter()
    summ = run_drj(sc.u, sc.n, prior, cfg=cfg)
    outputs = {
        "edge_prob": summ.edge_prob,
        "accept_rate": summ.accept_rate,
        "mean_k": summ.mean_k,
        "n_recorded": summ.n_recorded,
        "per_chain_accept": summ.per_chain_accept,
    }
    if summ.graph_freq is not None:
        outputs["graph_freq"] = {_graph_key(g): f for g, f in sorted(summ.graph_freq.items(), key=lambda t: -t[1])}
    report = RunReport(
        "drj",
        {"data": args.data, "variable_names": data.variable_names, "n": sc.n, "centered": sc.centered,
         "delta": args.delta, "dmat": args.dmat,
         "sigma_g": args.sigma_g, "iters": args.iters, "burnin": args.burnin, "chains": args.chains,
         "alpha_variant": args.alpha_variant, "seed": args.seed},
        outputs,
        {"seconds": time.perf_counter() - t0},
    )
    _emit(report, args.out)
    return EXIT_OK


def cmd_exact(args) -> int:
    data = load_dataset(args.data)
    if data.p > 3:
        raise UsageError(f"exact enumeration supports at most 3 variables, the data have {data.p}")
    if data.p < 2:
        raise UsageError("exact enumeration needs at least 2 variables")
    sc = compute_scatter(data, args.center)
    prior = _params(args.delta, args.dmat, data.p)
    post = exact_graph_posterior(sc.u, sc.n, prior)
    edge_prob = np.eye(data.p)
    for g, pr in post.items():
        edge_prob += pr * g.adjacency
    report = RunReport(
        "exact",
        {"data": args.data, "n": sc.n, "centered": sc.centered, "delta": args.delta,
         "dmat": args.dmat},
        {"graph_prob": {_graph_key(g): pr for g, pr in post.items()}, "edge_prob": edge_prob},
    )
    _emit(report, args.out)
    return EXIT_OK


def cmd_validate(args) -> int:
    from .validation import run_all

    results = run_all(quick=args.quick)
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gwishart", description="G-Wishart sampling and graph search.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="draw from W_G(delta, D) and summarise")
    p.add_argument("--graph", required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--dmat", required=True)
    p.add_argument("--iters", type=int, required=True)
    p.add_argument("--method", choices=("direct", "block-gibbs"), default="direct")
    p.add_argument("--burnin", type=int, default=0, help="burn-in sweeps per block Gibbs chain")
    p.add_argument("--chains", type=int, default=1, help="independent block Gibbs chains")
    p.add_argument("--engine", choices=("node-wise", "clique-ips"), default="node-wise")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out")
    p.add_argument("--samples", help="CSV file for raw draws (upper triangles, row-major)")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("mode", help="mode of W_G(delta, D)")
    p.add_argument("--graph", required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--dmat", required=True)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--out")
    p.set_defaults(func=cmd_mode)

    p = sub.add_parser("drj", help="double reversible jump graph search")
    p.add_argument("--data", required=True)
    p.add_argument("--delta", type=float, required=True)
    grp = p.add_mutually_exclusive_group()
    grp.add_argument("--dmat")
    grp.add_argument("--dmat-identity", action="store_true")
    p.add_argument("--sigma-g", type=float, default=1.0)
    p.add_argument("--iters", type=int, default=10_000, help="iterations per chain, burn-in included")
    p.add_argument("--burnin", type=int, default=1_000)
    p.add_argument("--chains", type=int, default=1)
    p.add_argument("--alpha-variant", choices=("derived", "as-printed"), default="derived")
    p.add_argument("--center", type=_bool, default=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out")
    p.set_defaults(func=cmd_drj)

    p = sub.add_parser("exact", help="exact graph posterior by enumeration (p <= 3)")
    p.add_argument("--data", required=True)
    p.add_argument("--delta", type=float, required=True)
    grp = p.add_mutually_exclusive_group()
    grp.add_argument("--dmat")
    grp.add_argument("--dmat-identity", action="store_true")
    p.add_argument("--center", type=_bool, default=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_exact)

    p = sub.add_parser("validate", help="rerun the validation suite")
    p.add_argument("--quick", action="store_true", help="a tenth of the iterations, threefold tolerances")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"gwishart: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InputFileError, GraphError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"gwishart: bad input: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (CompletionError, NotPositiveDefiniteError) as exc:
        print(f"gwishart: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"gwishart: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
