"""Featureless coarsening and the two-stage (coarsen, then smooth) pipeline."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .graph import CoarsenedGraph, coarsen_features, coarsen_laplacian
from .solver import (
    CBlock, CState, Problem, SolverConfig, SolverTrace, check_kkt_gc, check_size,
    ensure_features, grad_c_gc, init_loading, relative_change, round_relaxed, run_c_updates,
)


@dataclass
class GcResult:
    coarsened: CoarsenedGraph
    trace: SolverTrace
    kkt_residual: float
    initial_kkt_residual: float
    c_relaxed: np.ndarray

    def __iter__(self):
        # allows ``coarse, trace = gc_solve(...)``
        return iter((self.coarsened, self.trace))


def gc_solve(graph, config: SolverConfig, c0=None) -> GcResult:
    """Projected-gradient minimization over ``C`` alone; features are ignored."""
    graph.require_connected()
    k = check_size(graph, config)
    prob = Problem(graph.laplacian, k, config.gamma, config.lam)
    rng = np.random.default_rng(config.seed)
    c = init_loading(graph.p, k, rng) if c0 is None else np.array(c0, dtype=float)
    block = CBlock.gc(prob)
    trace = SolverTrace()
    state = CState(c, block.value(c))
    trace.log("init", state.value)
    kkt0 = check_kkt_gc(c, prob, 0.0)
    for outer in range(config.outer_iters):
        f_prev = state.value
        run_c_updates(block, state, config.inner_iters, config.step_rule,
                      config.projection, trace, rng)
        trace.n_outer = outer + 1
        if relative_change(f_prev, state.value) < config.tol:
            trace.converged = True
            break
    c = state.c
    kkt = check_kkt_gc(c, prob, 0.0)
    rounded, zero_rows = round_relaxed(c, grad_c_gc(c, prob))
    theta_c = coarsen_laplacian(graph.laplacian, rounded.loading)
    trace.finish()
    info = {"algo": "gc", "k_requested": k,
            "dropped_columns": rounded.dropped_columns.tolist(),
            "zero_rows": zero_rows.tolist(), "config": config.to_dict()}
    coarse = CoarsenedGraph(theta_c, rounded.loading, info=info)
    return GcResult(coarse, trace, kkt.c_residual, kkt0.c_residual, c)


def smooth_features(theta_c, x_tilde):
    """``(theta_c + I)^-1 X~``: the minimizer of ``|Xc - X~|^2 + tr(Xc.T theta_c Xc)``."""
    theta_c = np.asarray(theta_c, dtype=float)
    a = theta_c + np.eye(theta_c.shape[0])
    return scipy.linalg.solve(a, np.asarray(x_tilde, dtype=float), assume_a="pos")


def two_stage_solve(graph, config: SolverConfig) -> CoarsenedGraph:
    """Coarsen without features, average features per supernode, then smooth them."""
    ensure_features(graph, "two_stage_solve")
    result = gc_solve(graph, config)
    coarse = result.coarsened
    x_tilde = coarsen_features(graph.features, coarse.loading)
    x_c = smooth_features(coarse.laplacian_c, x_tilde)
    info = dict(coarse.info, algo="two-stage", trace=result.trace)
    return CoarsenedGraph(coarse.laplacian_c, coarse.loading, features_c=x_c, info=info)
