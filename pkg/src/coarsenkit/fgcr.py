"""Coarsening with a low-rank coarse feature model ``X~ = W @ H``.

``W`` (``k x d``) are the reduced supernode features and ``H`` (``d x n``)
maps them back to the original feature space. Blocks are updated
cyclically: ``C`` by projected gradient, ``W`` and ``H`` by unconstrained
gradient steps, each with a backtracked step length.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .fgc import closed_form_xtilde
from .graph import CoarsenedGraph, coarsen_laplacian
from .solver import (
    CBlock, CState, Problem, SolverConfig, SolverError, SolverTrace, backtrack,
    check_kkt_fgcr, check_size, ensure_features, grad_c_fgcr, init_loading,
    objective_fgcr, relative_change, round_relaxed, run_c_updates,
)


@dataclass
class FgcrResult:
    coarsened: CoarsenedGraph
    trace: SolverTrace
    kkt_residuals: tuple
    initial_kkt_residuals: tuple
    c_relaxed: np.ndarray
    w_relaxed: np.ndarray
    h_relaxed: np.ndarray


def reduced_dim(n, reduction_ratio):
    d = int(round(reduction_ratio * n))
    if d < 1:
        raise SolverError(f"reduction ratio {reduction_ratio} leaves no feature dimensions (n={n})")
    return d


def factor_init(x_tilde, d):
    """Balanced rank-``d`` truncated SVD factors of ``x_tilde``."""
    u, s, vt = np.linalg.svd(x_tilde, full_matrices=False)
    d_eff = min(d, s.size)
    root = np.sqrt(s[:d_eff])
    w = np.zeros((x_tilde.shape[0], d))
    h = np.zeros((d, x_tilde.shape[1]))
    w[:, :d_eff] = u[:, :d_eff] * root
    h[:d_eff] = root[:, None] * vt[:d_eff]
    return w, h


class _WBlock:
    """``tr(W.T Tc W) + (alpha/2)|C W H - X|^2`` as a function of ``W``."""

    def __init__(self, prob, c, h):
        self.alpha = prob.alpha
        self.tc = c.T @ (prob.theta @ c)
        self.ctc = c.T @ c
        self.hht = h @ h.T
        self.cross = c.T @ prob.x @ h.T
        self.const = float(np.sum(prob.x ** 2))

    def value(self, w):
        fit = (np.sum((self.ctc @ w) * (w @ self.hht)) - 2.0 * np.sum(w * self.cross) + self.const)
        return float(np.sum(w * (self.tc @ w)) + 0.5 * self.alpha * fit)

    def grad(self, w):
        return 2.0 * self.tc @ w + self.alpha * (self.ctc @ w @ self.hht - self.cross)


class _HBlock:
    """``(alpha/2)|C W H - X|^2`` as a function of ``H`` (plus a constant)."""

    def __init__(self, prob, c, w, offset):
        cw = c @ w
        self.alpha = prob.alpha
        self.gram = cw.T @ cw
        self.cross = cw.T @ prob.x
        self.const = float(np.sum(prob.x ** 2))
        self.offset = offset

    def value(self, h):
        fit = np.sum(h * (self.gram @ h)) - 2.0 * np.sum(h * self.cross) + self.const
        return float(self.offset + 0.5 * self.alpha * fit)

    def grad(self, h):
        return self.alpha * (self.gram @ h - self.cross)


def _smooth_offset(prob, c, w):
    ev_block = CBlock(prob)
    return ev_block.value(c) + float(np.sum(w * ((c.T @ (prob.theta @ c)) @ w)))


def _gradient_steps(block, z, n_steps, L, trace, label, offset=0.0):
    for _ in range(n_steps):
        fz = block.value(z)
        g = block.grad(z)
        gnorm = float(np.linalg.norm(g))
        if gnorm == 0.0:
            break
        step = backtrack(block.value, z, fz, g, max(L / 2.0, 1e-12))
        z, L = step.x, step.L
        trace.log(label, offset + step.value, gnorm, L)
    return z, L


def solve_w_exact(tc, ctc, hht, cross, alpha):
    """Minimize ``tr(W.T Tc W) + (alpha/2)|C W H - X|^2`` over ``W``.

    Stationarity ``2 Tc W + alpha CtC W HHt = alpha cross`` decouples after
    whitening by ``CtC`` and diagonalizing both sides.
    """
    a_vals, a_vecs = scipy.linalg.eigh(ctc)
    if a_vals[0] <= 0:
        raise SolverError("C.T C is singular: empty supernode")
    a_isqrt = (a_vecs / np.sqrt(a_vals)) @ a_vecs.T
    lam, u = scipy.linalg.eigh(a_isqrt @ tc @ a_isqrt)
    sig, q = scipy.linalg.eigh(hht)
    rhs = u.T @ a_isqrt @ (alpha * cross) @ q
    y = rhs / (2.0 * lam[:, None] + alpha * sig[None, :])
    return a_isqrt @ u @ y @ q.T


def fgcr_solve(graph, config: SolverConfig, c0=None) -> FgcrResult:
    """Cyclic ``C -> W -> H`` majorize-minimize updates, then rounding.

    ``d = round(reduction_ratio * n)``. ``W`` and ``H`` start from the
    balanced truncated SVD of the closed-form ``X~`` at the initial ``C``.
    After rounding, ``W`` is re-solved exactly for the binary ``C`` with ``H``
    held fixed; ``features_c`` holds ``W @ H``.
    """
    ensure_features(graph, "fgcr_solve")
    graph.require_connected()
    if config.reduction_ratio is None:
        raise SolverError("fgcr_solve needs reduction_ratio")
    k = check_size(graph, config)
    d = reduced_dim(graph.n, config.reduction_ratio)
    prob = Problem(graph.laplacian, k, config.gamma, config.lam, config.alpha, graph.features)
    rng = np.random.default_rng(config.seed)
    c = init_loading(graph.p, k, rng) if c0 is None else np.array(c0, dtype=float)
    w, h = factor_init(closed_form_xtilde(c, prob), d)

    trace = SolverTrace()
    f = objective_fgcr(c, w, h, prob)
    trace.log("init", f)
    kkt0 = check_kkt_fgcr(c, w, h, prob, 0.0)
    state = CState(c, f)
    lw = lh = 1.0
    for outer in range(config.outer_iters):
        f_prev = f
        block = CBlock.fgcr(prob, w, h)
        state.value = block.value(state.c)
        run_c_updates(block, state, config.inner_iters, config.step_rule,
                      config.projection, trace, rng)
        c = state.c
        base = CBlock(prob).value(c)
        w, lw = _gradient_steps(_WBlock(prob, c, h), w, config.inner_iters, lw, trace, "W", base)
        h, lh = _gradient_steps(_HBlock(prob, c, w, _smooth_offset(prob, c, w)), h,
                                config.inner_iters, lh, trace, "H")
        f = objective_fgcr(c, w, h, prob)
        trace.n_outer = outer + 1
        if relative_change(f_prev, f) < config.tol:
            trace.converged = True
            break
    kkt = check_kkt_fgcr(c, w, h, prob, 0.0)

    rounded, zero_rows = round_relaxed(c, grad_c_fgcr(c, w, h, prob))
    loading = rounded.loading
    cb = loading.entries
    theta_c = coarsen_laplacian(graph.laplacian, loading)
    w_kept = w[np.setdiff1d(np.arange(k), rounded.dropped_columns)]
    wb = _WBlock(Problem(graph.laplacian, loading.k, config.gamma, config.lam,
                         config.alpha, graph.features), cb, h)
    w_final = solve_w_exact(wb.tc, wb.ctc, wb.hht, wb.cross, config.alpha)
    if wb.value(w_final) > wb.value(w_kept):
        w_final = w_kept
    trace.finish()
    info = {"algo": "fgcr", "k_requested": k, "d": d,
            "dropped_columns": rounded.dropped_columns.tolist(),
            "zero_rows": zero_rows.tolist(), "config": config.to_dict()}
    coarse = CoarsenedGraph(theta_c, loading, features_c=w_final @ h,
                            reduced_features=w_final, transform=h, info=info)
    return FgcrResult(coarse, trace, (kkt.c_residual, kkt.x_residual),
                      (kkt0.c_residual, kkt0.x_residual), c, w, h)
