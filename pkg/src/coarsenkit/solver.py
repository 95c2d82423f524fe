"""Block majorization-minimization machinery shared by the coarsening solvers.

Every solver minimizes, over a relaxed loading matrix ``C`` (nonnegative,
row 2-norms <= 1) and optional feature blocks, an objective of the form

    -gamma * logdet(C.T theta C + J) + smoothness + (alpha/2) * fit
        + (lambda/2) * sum_i (sum_j C_ij)^2

with ``J = ones((k, k)) / k``. Each block step minimizes the quadratic
upper bound ``f(Y) + <grad, Z - Y> + (L/2)|Z - Y|^2`` over the block's
feasible set, which for ``C`` is a projected gradient step.
"""
from __future__ import annotations

import enum
import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .graph import GraphError, round_loading

logger = logging.getLogger(__name__)

MAX_DOUBLINGS = 60


class SolverError(RuntimeError):
    pass


class StepRule(enum.Enum):
    ANALYTIC = "analytic"
    BACKTRACK = "backtrack"
    INV_K = "inv-k"


class Projection(enum.Enum):
    EUCLIDEAN = "euclidean"
    ROWSCALED = "rowscaled"


@dataclass(frozen=True)
class SolverConfig:
    gamma: float = 1.0
    alpha: float = 1.0
    lam: float = 1.0
    ratio: float = 0.5
    reduction_ratio: float | None = None
    outer_iters: int = 10
    inner_iters: int = 100
    step_rule: StepRule = StepRule.BACKTRACK
    projection: Projection = Projection.EUCLIDEAN
    tol: float = 1e-6
    seed: int = 0
    k: int | None = None

    def __post_init__(self):
        for name in ("gamma", "alpha", "lam", "tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.ratio < 1:
            raise ValueError(f"ratio must lie in (0, 1), got {self.ratio}")
        if self.reduction_ratio is not None and not 0 < self.reduction_ratio <= 1:
            raise ValueError(f"reduction_ratio must lie in (0, 1], got {self.reduction_ratio}")
        if self.k is not None and self.k < 1:
            raise ValueError("k must be positive")
        if self.outer_iters < 1 or self.inner_iters < 1:
            raise ValueError("iteration counts must be at least 1")
        object.__setattr__(self, "step_rule", StepRule(self.step_rule))
        object.__setattr__(self, "projection", Projection(self.projection))

    def n_supernodes(self, p):
        """``k``: the explicit override if set, else ``max(2, round(ratio * p))``."""
        if self.k is not None:
            return self.k
        return max(2, int(round(self.ratio * p)))

    def to_dict(self):
        return {
            "gamma": self.gamma, "alpha": self.alpha, "lambda": self.lam,
            "ratio": self.ratio, "reduction_ratio": self.reduction_ratio,
            "outer_iters": self.outer_iters, "inner_iters": self.inner_iters,
            "step_rule": self.step_rule.value, "projection": self.projection.value,
            "tol": self.tol, "seed": self.seed, "k": self.k,
        }


@dataclass
class SolverTrace:
    """Objective after every block update plus bookkeeping per step."""

    objective: list = field(default_factory=list)
    grad_norm: list = field(default_factory=list)
    block: list = field(default_factory=list)
    step_l: list = field(default_factory=list)
    epsilon_track: list = field(default_factory=list)
    wall_time: float = 0.0
    converged: bool = False
    n_outer: int = 0
    notes: list = field(default_factory=list)
    _t0: float = field(default_factory=time.perf_counter, repr=False)

    def log(self, block, value, grad_norm=float("nan"), step_l=float("nan")):
        self.objective.append(float(value))
        self.grad_norm.append(float(grad_norm))
        self.block.append(block)
        self.step_l.append(float(step_l))

    def finish(self):
        self.wall_time = time.perf_counter() - self._t0

    def is_monotone(self, slack=1e-8):
        obj = np.asarray(self.objective)
        return bool(np.all(np.diff(obj) <= slack))


@dataclass(frozen=True)
class Problem:
    """Fixed data of one coarsening problem."""

    theta: sp.csr_matrix
    k: int
    gamma: float
    lam: float
    alpha: float = 0.0
    x: np.ndarray | None = None

    @classmethod
    def from_graph(cls, graph, config, use_features=True):
        x = graph.features if use_features else None
        return cls(graph.laplacian, config.n_supernodes(graph.p), config.gamma,
                   config.lam, config.alpha, x)

    @property
    def p(self):
        return self.theta.shape[0]

    @property
    def J(self):
        return np.full((self.k, self.k), 1.0 / self.k)


# -- projections -------------------------------------------------------------

def project_nonneg_rowscaled(a, return_zero_rows=False):
    """Row-normalize then clip: ``max(a_ij / |a_i|_2, 0)``.

    Rows that are identically zero stay zero; their indices are returned when
    ``return_zero_rows`` is set.
    """
    a = np.asarray(a, dtype=float)
    norms = np.linalg.norm(a, axis=1)
    zero = norms == 0
    safe = np.where(zero, 1.0, norms)
    out = np.maximum(a / safe[:, None], 0.0)
    if return_zero_rows:
        return out, np.flatnonzero(zero)
    return out


def project_loading_set(a):
    """Euclidean projection onto ``{C >= 0, |row_i|_2 <= 1}``.

    The set is a product of per-row (orthant ∩ unit ball) sets; on each row
    clipping negatives and then shrinking to the unit ball is exact.
    """
    c = np.maximum(np.asarray(a, dtype=float), 0.0)
    norms = np.linalg.norm(c, axis=1)
    scale = np.where(norms > 1.0, 1.0 / np.where(norms > 0, norms, 1.0), 1.0)
    return c * scale[:, None]


def projector(kind):
    return project_loading_set if Projection(kind) is Projection.EUCLIDEAN else project_nonneg_rowscaled


def init_loading(p, k, rng):
    c = rng.uniform(0.0, 1.0, size=(p, k))
    return project_nonneg_rowscaled(c)


# -- objective pieces --------------------------------------------------------

class Infeasible(Exception):
    """``C.T theta C + J`` is not positive definite."""


def _logdet_factor(theta_c, k):
    m = theta_c + 1.0 / k
    try:
        factor = scipy.linalg.cho_factor(m, lower=True, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise Infeasible("C.T theta C + J is not positive definite") from exc
    diag = np.diag(factor[0])
    if not np.all(np.isfinite(diag)) or np.any(diag <= 0):
        raise Infeasible("C.T theta C + J is not positive definite")
    return factor, 2.0 * np.sum(np.log(diag))


class _Eval:
    """Shared products for one ``C`` so value and gradient reuse them."""

    def __init__(self, prob, c):
        self.c = c
        self.tc_ = prob.theta @ c                      # theta C, p x k
        tcc = c.T @ self.tc_
        self.theta_c = 0.5 * (tcc + tcc.T)
        self.factor, self.logdet = _logdet_factor(self.theta_c, prob.k)
        self.rowsum = c.sum(axis=1)

    def logdet_grad(self):
        # theta C (C.T theta C + J)^-1
        return scipy.linalg.cho_solve(self.factor, self.tc_.T, check_finite=False).T


def _base_value(prob, ev):
    return -prob.gamma * ev.logdet + 0.5 * prob.lam * np.sum(ev.rowsum ** 2)


def _base_grad(prob, ev):
    return -2.0 * prob.gamma * ev.logdet_grad() + prob.lam * ev.rowsum[:, None]


def safe_value(fn, *args):
    try:
        return fn(*args)
    except Infeasible:
        return np.inf


def objective_gc(c, prob):
    """Featureless objective; raises :class:`Infeasible` off the log-det domain."""
    return _base_value(prob, _Eval(prob, c))


def grad_c_gc(c, prob):
    return _base_grad(prob, _Eval(prob, c))


def _fit_terms(prob, c, xt):
    x = prob.x
    return 0.5 * prob.alpha * np.sum((c @ xt - x) ** 2)


def objective_fgc(c, x_tilde, prob):
    ev = _Eval(prob, c)
    smooth = np.sum(x_tilde * (ev.theta_c @ x_tilde))
    return _base_value(prob, ev) + smooth + _fit_terms(prob, c, x_tilde)


def grad_c_fgc(c, x_tilde, prob):
    """Gradient of the featured objective in ``C``."""
    ev = _Eval(prob, c)
    xxt = x_tilde @ x_tilde.T
    resid = c @ x_tilde - prob.x
    return (_base_grad(prob, ev) + prob.alpha * resid @ x_tilde.T
            + 2.0 * ev.tc_ @ xxt)


def grad_xtilde_fgc(x_tilde, c, prob):
    theta_c = c.T @ (prob.theta @ c)
    return 2.0 * theta_c @ x_tilde + prob.alpha * c.T @ (c @ x_tilde - prob.x)


def objective_fgcr(c, w, h, prob):
    ev = _Eval(prob, c)
    smooth = np.sum(w * (ev.theta_c @ w))
    return _base_value(prob, ev) + smooth + _fit_terms(prob, c, w @ h)


def grad_c_fgcr(c, w, h, prob):
    ev = _Eval(prob, c)
    resid = c @ (w @ h) - prob.x
    return (_base_grad(prob, ev) + prob.alpha * resid @ (w @ h).T
            + 2.0 * ev.tc_ @ (w @ w.T))


def grad_w_fgcr(w, c, h, prob):
    theta_c = c.T @ (prob.theta @ c)
    resid = c @ (w @ h) - prob.x
    return 2.0 * theta_c @ w + prob.alpha * c.T @ resid @ h.T


def grad_h_fgcr(h, c, w, prob):
    cw = c @ w
    return prob.alpha * cw.T @ (cw @ h - prob.x)


# -- fast per-block models ---------------------------------------------------

class CBlock:
    """Value/gradient of the ``C`` sub-problem with feature blocks frozen.

    With ``G = X~ X~.T`` (or ``W H H.T W.T`` for the reduced model) and
    ``R = X X~.T`` fixed, the fit term is
    ``(alpha/2)(<C.T C, G> - 2<C, R> + |X|^2)``, so each evaluation costs a
    few ``p x k x k`` products instead of ``p x k x n``.
    """

    def __init__(self, prob, smooth_gram=None, fit_gram=None, cross=None):
        self.prob = prob
        self.smooth_gram = smooth_gram
        self.fit_gram = fit_gram
        self.cross = cross
        self.x_sq = 0.0 if prob.x is None else float(np.sum(prob.x ** 2))

    @classmethod
    def gc(cls, prob):
        return cls(prob)

    @classmethod
    def fgc(cls, prob, x_tilde):
        g = x_tilde @ x_tilde.T
        return cls(prob, g, g, prob.x @ x_tilde.T)

    @classmethod
    def fgcr(cls, prob, w, h):
        xt = w @ h
        return cls(prob, w @ w.T, xt @ xt.T, prob.x @ xt.T)

    def value(self, c, ev=None):
        ev = ev or _Eval(self.prob, c)
        v = _base_value(self.prob, ev)
        if self.fit_gram is not None:
            v += np.sum(ev.theta_c * self.smooth_gram)
            ctc = c.T @ c
            v += 0.5 * self.prob.alpha * (np.sum(ctc * self.fit_gram)
                                          - 2.0 * np.sum(c * self.cross) + self.x_sq)
        return float(v)

    def grad(self, c, ev=None):
        ev = ev or _Eval(self.prob, c)
        g = _base_grad(self.prob, ev)
        if self.fit_gram is not None:
            g += 2.0 * ev.tc_ @ self.smooth_gram
            g += self.prob.alpha * (c @ self.fit_gram - self.cross)
        return g

    def value_and_grad(self, c):
        ev = _Eval(self.prob, c)
        return self.value(c, ev), self.grad(c, ev)

    def safe_value(self, c):
        try:
            return self.value(c)
        except Infeasible:
            return np.inf


# -- step lengths ------------------------------------------------------------

def majorizer(fx, g, x, y, L):
    """Quadratic upper model ``f(x) + <g, y-x> + (L/2)|y-x|^2``."""
    d = y - x
    return fx + np.sum(g * d) + 0.5 * L * np.sum(d * d)


@dataclass
class Step:
    x: np.ndarray
    value: float
    L: float
    n_trials: int


def backtrack(fun, x, fx, g, L0, project=None, max_doublings=MAX_DOUBLINGS):
    """Smallest ``L = L0 * 2^j`` whose majorizer dominates ``fun`` at the step.

    ``fun`` may return ``inf`` outside its domain; that counts as a failed
    trial.
    """
    project = project or (lambda z: z)
    L = L0
    for trial in range(max_doublings + 1):
        y = project(x - g / L)
        fy = fun(y)
        if np.isfinite(fy) and fy <= majorizer(fx, g, x, y, L) + 1e-12 * max(1.0, abs(fx)):
            return Step(y, fy, L, trial + 1)
        L *= 2.0
    raise SolverError(f"backtracking exceeded {max_doublings} doublings (L={L:.3g})")


def analytic_lipschitz_c(prob, c, smooth_gram=None, fit_gram=None, delta_floor=1e-8):
    """Upper estimate of the ``C``-gradient Lipschitz constant.

    The log-det curvature is controlled by the smallest eigenvalue of
    ``C.T theta C + J``, floored by ``delta / (k-1)^2`` with ``delta`` the
    smallest coarse edge weight above ``delta_floor`` in the current iterate.
    The per-term bounds are summed (a sum of smooth terms is smooth with the
    summed constant).
    """
    k, p = prob.k, prob.p
    theta_norm = float(scipy.sparse.linalg.norm(prob.theta))      # Frobenius >= spectral
    tc = c.T @ (prob.theta @ c)
    off = -(tc - np.diag(np.diag(tc)))
    weights = off[off > delta_floor]
    delta = float(weights.min()) if weights.size else delta_floor
    mu = min(1.0, delta / max(k - 1, 1) ** 2)
    tc_norm = theta_norm * np.sqrt(p)                            # |theta C|_2, rows of C in unit ball
    L1 = prob.gamma * (2.0 * theta_norm / mu + 4.0 * tc_norm ** 2 / mu ** 2)
    L4 = prob.lam * k
    L = L1 + L4
    if smooth_gram is not None:
        n = smooth_gram.shape[0]
        L += 2.0 * np.sqrt(p) * np.sqrt(n) * np.trace(smooth_gram) * theta_norm
    if fit_gram is not None:
        L += prob.alpha * float(np.linalg.eigvalsh(fit_gram)[-1])
    return float(L)


def step_length(rule, *, k=None, block=None, c=None, g=None, fc=None, L0=1.0,
                project=None):
    """Step constant ``L`` for a ``C`` update (step size ``1/L``).

    ``inv-k`` returns ``k``; ``analytic`` the summed Lipschitz estimate;
    ``backtrack`` doubles ``L0`` until the quadratic model majorizes the
    objective at the projected step.
    """
    rule = StepRule(rule)
    if rule is StepRule.INV_K:
        return float(k)
    if rule is StepRule.ANALYTIC:
        return analytic_lipschitz_c(block.prob, c, block.smooth_gram, block.fit_gram)
    return backtrack(block.safe_value, c, fc, g, L0, project).L


# -- stationarity ------------------------------------------------------------

@dataclass
class KKTReport:
    c_residual: float
    x_residual: float
    tol: float

    @property
    def ok(self):
        return self.c_residual < self.tol and self.x_residual < self.tol

    def __bool__(self):
        return self.ok


def projected_gradient_residual(c, g, step=1.0):
    """``|C - Proj(C - step * g)|_F / step``; zero exactly at KKT points."""
    return float(np.linalg.norm(c - project_loading_set(c - step * g)) / step)


def check_kkt_fgc(c, x_tilde, prob, tol):
    g = grad_c_fgc(c, x_tilde, prob)
    gx = grad_xtilde_fgc(x_tilde, c, prob)
    return KKTReport(projected_gradient_residual(c, g), float(np.linalg.norm(gx)), tol)


def check_kkt_gc(c, prob, tol):
    return KKTReport(projected_gradient_residual(c, grad_c_gc(c, prob)), 0.0, tol)


def check_kkt_fgcr(c, w, h, prob, tol):
    rc = projected_gradient_residual(c, grad_c_fgcr(c, w, h, prob))
    rw = np.linalg.norm(grad_w_fgcr(w, c, h, prob))
    rh = np.linalg.norm(grad_h_fgcr(h, c, w, prob))
    return KKTReport(rc, float(np.hypot(rw, rh)), tol)


# -- the C block loop --------------------------------------------------------

@dataclass
class CState:
    c: np.ndarray
    value: float
    L: float = 1.0
    restarted_rows: set = field(default_factory=set)


def run_c_updates(block, state, n_steps, rule, projection, trace, rng, label="C"):
    """``n_steps`` majorize-minimize updates of ``C`` with other blocks frozen."""
    project = projector(projection)
    prob = block.prob
    for _ in range(n_steps):
        fc, g = block.value_and_grad(state.c)
        if rule is StepRule.BACKTRACK:
            step = backtrack(block.safe_value, state.c, fc, g, max(state.L / 2.0, 1e-12), project)
            c_new, f_new, L = step.x, step.value, step.L
        else:
            L = step_length(rule, k=prob.k, block=block, c=state.c)
            c_new = project(state.c - g / L)
            f_new = block.safe_value(c_new)
        if projection is Projection.ROWSCALED:
            repaired = _repair_zero_rows(c_new, state, rng)
            if repaired is not c_new:
                c_new, f_new = repaired, block.safe_value(repaired)
        if not np.isfinite(f_new):
            raise SolverError("iterate left the log-det domain (C.T theta C + J singular)")
        state.c, state.value, state.L = c_new, f_new, L
        trace.log(label, f_new, float(np.linalg.norm(g)), L)
    return state


def _repair_zero_rows(c, state, rng):
    zero = np.flatnonzero(~np.any(c > 0, axis=1))
    if not zero.size:
        return c
    again = [i for i in zero if i in state.restarted_rows]
    if again:
        raise SolverError(f"node {again[0]} lost its supernode twice")
    c = c.copy()
    fresh = rng.uniform(0.0, 1.0, size=(zero.size, c.shape[1]))
    c[zero] = fresh / np.linalg.norm(fresh, axis=1, keepdims=True)
    state.restarted_rows.update(int(i) for i in zero)
    logger.warning("re-randomized %d empty loading row(s)", zero.size)
    return c


def round_relaxed(c, grad):
    """Round a relaxed iterate, placing all-zero rows by their gradient.

    A node whose row is zero joins the supernode with the smallest partial
    derivative, i.e. the entry whose increase costs the least.
    """
    c = np.array(c, dtype=float)
    zero = np.flatnonzero(~np.any(c > 0, axis=1))
    if zero.size:
        c[zero, np.argmin(grad[zero], axis=1)] = 1.0
    info = round_loading(c, return_info=True)
    return info, zero


def relative_change(old, new):
    return abs(old - new) / max(abs(old), 1e-12)


def ensure_features(graph, who):
    if graph.features is None:
        raise GraphError(f"{who} needs node features")


def check_size(graph, config):
    k = config.n_supernodes(graph.p)
    if k >= graph.p:
        raise GraphError(f"ratio {config.ratio} gives k={k} >= p={graph.p}")
    return k
