"""``coarsenkit`` command line: coarsen, generate, cluster.

Every failure inside the library exits with status 1 and a one-line JSON
object ``{"error": ..., "message": ...}`` on stderr; bad arguments exit with
status 2 and the same JSON shape.
"""
from __future__ import annotations

import argparse
import contextlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import datagen, io
from .fgc import fgc_solve
from .fgcr import fgcr_solve
from .gc import gc_solve, two_stage_solve
from .graph import GraphError
from .metrics import evaluate, misclassified, spectrum
from .solver import SolverConfig, SolverError

logger = logging.getLogger("coarsenkit")

ALGOS = ("fgc", "gc", "two-stage", "fgcr")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _open_ratio(text):
    value = float(text)
    if not 0 < value < 1:
        raise argparse.ArgumentTypeError(f"must lie strictly between 0 and 1, got {text}")
    return value


def _reduction_ratio(text):
    value = float(text)
    if not 0 < value <= 1:
        raise argparse.ArgumentTypeError(f"must lie in (0, 1], got {text}")
    return value


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return value


def _add_solver_flags(sp, gamma, alpha, lam):
    sp.add_argument("--gamma", type=float, default=gamma, help="log-det weight")
    sp.add_argument("--alpha", type=float, default=alpha, help="feature-fit weight")
    sp.add_argument("--lambda", dest="lam", type=float, default=lam, help="row-sum penalty weight")
    sp.add_argument("--outer", type=_positive_int, default=10)
    sp.add_argument("--inner", type=_positive_int, default=100)
    sp.add_argument("--tol", type=float, default=1e-6)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--step", choices=("analytic", "backtrack", "inv-k"), default="backtrack")
    sp.add_argument("--projection", choices=("euclidean", "rowscaled"), default="euclidean")


def build_parser():
    parser = _Parser(prog="coarsenkit", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    co = sub.add_parser("coarsen", help="coarsen a graph and write the metric report")
    co.add_argument("--algo", choices=ALGOS, default="fgc")
    co.add_argument("--edges", required=True, type=Path)
    co.add_argument("--features", type=Path)
    co.add_argument("--ratio", type=_open_ratio, required=True)
    co.add_argument("--reduction-ratio", type=_reduction_ratio)
    co.add_argument("--m", type=_positive_int, default=100, help="eigenvalues compared by REE")
    co.add_argument("--out", required=True, type=Path)
    _add_solver_flags(co, gamma=1000.0, alpha=500.0, lam=500.0)

    ge = sub.add_parser("generate", help="write a synthetic dataset")
    ge.add_argument("--model", choices=datagen.MODELS, required=True)
    ge.add_argument("--p", type=_positive_int, required=True)
    ge.add_argument("--prob", type=float)
    ge.add_argument("--m-attach", type=int)
    ge.add_argument("--kring", type=int)
    ge.add_argument("--rewire", type=float)
    ge.add_argument("--radius", type=float)
    ge.add_argument("--weight-range", type=float, nargs=2, default=(1.0, 10.0),
                    metavar=("LO", "HI"))
    ge.add_argument("--gmrf-dim", type=_positive_int)
    ge.add_argument("--perturb", type=float)
    ge.add_argument("--seed", type=int, default=0)
    ge.add_argument("--out", required=True, type=Path)

    cl = sub.add_parser("cluster", help="partition nodes into classes with FGC")
    src = cl.add_mutually_exclusive_group(required=True)
    src.add_argument("--edges", type=Path)
    src.add_argument("--karate", action="store_true", help="use Zachary's karate club")
    cl.add_argument("--features", type=Path)
    cl.add_argument("--labels", type=Path, help="ground truth, one integer per node per line")
    cl.add_argument("--classes", type=_positive_int, required=True)
    cl.add_argument("--gmrf-dim", type=_positive_int)
    cl.add_argument("--out", required=True, type=Path)
    _add_solver_flags(cl, gamma=None, alpha=500.0, lam=500.0)
    return parser


def _config(args, **extra):
    return SolverConfig(gamma=args.gamma, alpha=args.alpha, lam=args.lam,
                        outer_iters=args.outer, inner_iters=args.inner, tol=args.tol,
                        seed=args.seed, step_rule=args.step, projection=args.projection,
                        **extra)


def cmd_coarsen(args):
    graph = io.load_graph(args.edges, args.features)
    if args.algo in ("fgc", "two-stage", "fgcr") and graph.features is None:
        raise GraphError(f"--algo {args.algo} needs --features")
    if args.algo == "fgcr" and args.reduction_ratio is None:
        raise GraphError("--algo fgcr needs --reduction-ratio")
    if args.algo == "gc" and graph.features is not None:
        logger.warning("gc ignores node features while solving; they are used for metrics only")
    config = _config(args, ratio=args.ratio, reduction_ratio=args.reduction_ratio)

    extra = {}
    if args.algo == "fgc":
        res = fgc_solve(graph, config)
        coarse, trace = res.coarsened, res.trace
        extra["kkt_residuals"] = list(res.kkt_residuals)
    elif args.algo == "fgcr":
        res = fgcr_solve(graph, config)
        coarse, trace = res.coarsened, res.trace
        extra["kkt_residuals"] = list(res.kkt_residuals)
        extra["d"] = coarse.info["d"]
    elif args.algo == "gc":
        res = gc_solve(graph, config)
        coarse, trace = res.coarsened, res.trace
        extra["kkt_residuals"] = [res.kkt_residual]
    else:
        coarse = two_stage_solve(graph, config)
        trace = coarse.info["trace"]

    report = evaluate(graph, coarse, m=args.m)
    extra.update(
        algo=args.algo, p=graph.p, n=graph.n, k=coarse.k,
        k_requested=coarse.info["k_requested"],
        dropped_columns=coarse.info["dropped_columns"],
        zero_rows=coarse.info["zero_rows"],
        converged=trace.converged, outer_iterations=trace.n_outer,
        config=config.to_dict(), seed=config.seed,
    )
    io.write_report(args.out, report, coarse.loading,
                    spectrum(graph.laplacian, report.m_used),
                    spectrum(coarse.laplacian_c, report.m_used),
                    trace.objective, extra)
    print(json.dumps({"out": str(args.out), "k": coarse.k, "ree": report.ree,
                      "he": report.he, "log_re": report.log_re}))
    return 0


def cmd_generate(args):
    model = datagen.GraphModel(args.model, args.p, prob=args.prob, m_attach=args.m_attach,
                               k_ring=args.kring, rewire_prob=args.rewire, radius=args.radius)
    graph = datagen.generate_graph(model, tuple(args.weight_range), seed=args.seed)
    if args.gmrf_dim:
        # features come from the clean graph; any perturbation only touches structure
        x = datagen.sample_gmrf_features(graph.laplacian, args.gmrf_dim, seed=args.seed + 1)
        graph = graph.with_features(x)
    m_clean = graph.n_edges
    if args.perturb:
        graph = datagen.perturb_edges(graph, args.perturb, seed=args.seed + 2)
    edge_path, feature_path = io.write_graph(graph, args.out)
    print(json.dumps({"edges": str(edge_path),
                      "features": None if feature_path is None else str(feature_path),
                      "p": graph.p, "m": graph.n_edges, "m_clean": m_clean}))
    return 0


def _read_labels(path, p):
    labels = np.loadtxt(path, dtype=int, ndmin=1, comments="#")
    if labels.shape != (p,):
        raise GraphError(f"{path}: expected {p} labels, got {labels.size}")
    return labels


def cmd_cluster(args):
    truth = None
    if args.karate:
        graph, truth = datagen.karate_club()
    else:
        graph = io.load_graph(args.edges, args.features)
    if args.labels:
        truth = _read_labels(args.labels, graph.p)
    if args.classes >= graph.p:
        raise GraphError(f"--classes {args.classes} must be below the node count {graph.p}")
    if graph.features is None:
        if not args.gmrf_dim:
            raise GraphError("graph has no features: pass --features or --gmrf-dim")
        graph = graph.with_features(
            datagen.sample_gmrf_features(graph.laplacian, args.gmrf_dim, seed=args.seed))

    if args.classes == 1:
        assignment = np.zeros(graph.p, dtype=int)
    else:
        gamma = args.gamma if args.gamma is not None else graph.n / 2.0
        config = SolverConfig(gamma=gamma, alpha=args.alpha, lam=args.lam, k=args.classes,
                              outer_iters=args.outer, inner_iters=args.inner, tol=args.tol,
                              seed=args.seed, step_rule=args.step, projection=args.projection)
        assignment = fgc_solve(graph, config).coarsened.loading.assignment

    args.out.mkdir(parents=True, exist_ok=True)
    io.write_columns_csv(args.out / "assignment.csv", ("node", "supernode"),
                         range(graph.p), [int(a) for a in assignment])
    summary = {"p": graph.p, "classes": args.classes,
               "found": int(np.unique(assignment).size), "seed": args.seed}
    if truth is not None:
        summary["misclassified"] = misclassified(assignment, truth)
    io.dump_json(summary, args.out / "cluster.json")
    print(json.dumps(summary))
    return 0


COMMANDS = {"coarsen": cmd_coarsen, "generate": cmd_generate, "cluster": cmd_cluster}


def _thread_limit():
    value = os.environ.get("COARSENKIT_THREADS")
    if not value:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=int(value))


def _fail(kind, message, code):
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")
    return code


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        return _fail("usage", str(exc), 2)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with _thread_limit():
            return COMMANDS[args.command](args)
    except (GraphError, SolverError, ValueError) as exc:
        return _fail(type(exc).__name__, str(exc), 1)
    except OSError as exc:
        return _fail("OSError", str(exc), 1)


if __name__ == "__main__":
    sys.exit(main())
