"""Graph containers and the coarsening / lifting algebra.

A graph is held through its combinatorial Laplacian ``theta`` (sparse CSR).
A coarsening is a node-to-supernode map given by a loading matrix ``C``
(``p x k``); the coarse Laplacian is ``C.T @ theta @ C`` and coarse features
are group means ``P @ X`` with ``P = (C.T C)^-1 C.T``.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

logger = logging.getLogger(__name__)

ROWSUM_TOL = 1e-9
RANK_TOL = 1e-9


class GraphError(ValueError):
    """Raised for malformed Laplacians, loading matrices or shape mismatches."""


def _readonly(a):
    a.flags.writeable = False
    return a


def _as_csr(theta):
    if sp.issparse(theta):
        return sp.csr_matrix(theta, dtype=float)
    return sp.csr_matrix(np.asarray(theta, dtype=float))


def laplacian_violations(theta, tol=ROWSUM_TOL):
    """List the Laplacian-set conditions ``theta`` breaks (empty if valid)."""
    t = _as_csr(theta)
    if t.shape[0] != t.shape[1]:
        return ["matrix is not square"]
    problems = []
    if (t != t.T).nnz:
        problems.append("not symmetric")
    off = t - sp.diags(t.diagonal())
    if off.nnz and off.data.max() > 0:
        problems.append("positive off-diagonal entry")
    diag = t.diagonal()
    scale = max(float(diag.max(initial=0.0)), 1.0)
    rowsum = np.abs(np.asarray(t.sum(axis=1)).ravel())
    if rowsum.size and rowsum.max() > tol * scale:
        problems.append(f"row sums not zero (max {rowsum.max():.3g})")
    return problems


def is_laplacian(theta, tol=ROWSUM_TOL):
    return not laplacian_violations(theta, tol)


def n_zero_eigenvalues(theta, rel_tol=RANK_TOL, scale=None):
    """Count eigenvalues below ``rel_tol * scale`` (dense eigensolver).

    ``scale`` defaults to the largest eigenvalue magnitude. Pass the scale
    of the matrix a Laplacian was derived from when it may be pure round-off,
    as a one-supernode coarsening is.
    """
    a = theta.toarray() if sp.issparse(theta) else np.asarray(theta, dtype=float)
    w = scipy.linalg.eigvalsh(a)
    if scale is None:
        scale = max(abs(w[-1]), abs(w[0]))
    if scale == 0:
        return a.shape[0]
    return int(np.sum(w < rel_tol * scale))


def is_connected(theta, method="graph"):
    """Connectivity of the graph behind ``theta``.

    ``method="graph"`` runs a components search on the sparsity pattern;
    ``method="spectral"`` checks that exactly one eigenvalue is numerically
    zero, which is the rank ``p - 1`` condition.
    """
    if method == "spectral":
        return n_zero_eigenvalues(theta) == 1
    t = _as_csr(theta)
    adj = t - sp.diags(t.diagonal())
    adj.eliminate_zeros()
    n_comp, _ = connected_components(adj, directed=False)
    return n_comp == 1


@dataclass(frozen=True)
class GraphData:
    """Original graph: Laplacian (sparse), optional ``p x n`` features."""

    laplacian: sp.csr_matrix
    features: np.ndarray | None = None
    name: str = "graph"
    coords: np.ndarray | None = None

    def __post_init__(self):
        theta = _as_csr(self.laplacian)
        theta.eliminate_zeros()
        problems = laplacian_violations(theta)
        if problems:
            raise GraphError(f"{self.name}: not a graph Laplacian: {'; '.join(problems)}")
        object.__setattr__(self, "laplacian", theta)
        if self.features is not None:
            x = np.array(self.features, dtype=float)
            if x.ndim == 1:
                x = x[:, None]
            if x.shape[0] != theta.shape[0]:
                raise GraphError(
                    f"{self.name}: feature rows {x.shape[0]} != node count {theta.shape[0]}")
            object.__setattr__(self, "features", _readonly(x))

    @property
    def p(self):
        return self.laplacian.shape[0]

    @property
    def n(self):
        return None if self.features is None else self.features.shape[1]

    @property
    def connected(self):
        return is_connected(self.laplacian)

    @property
    def weights(self):
        """Sparse adjacency ``W`` with ``W_ij = -theta_ij`` off the diagonal."""
        w = -(self.laplacian - sp.diags(self.laplacian.diagonal()))
        w.eliminate_zeros()
        return sp.csr_matrix(w)

    @property
    def n_edges(self):
        return sp.triu(self.weights, k=1).nnz

    def edges(self):
        """``(i, j, w)`` arrays over the upper triangle, ``i < j``."""
        u = sp.triu(self.weights, k=1).tocoo()
        order = np.lexsort((u.col, u.row))
        return u.row[order], u.col[order], u.data[order]

    def with_features(self, x):
        return GraphData(self.laplacian, x, self.name, self.coords)

    def require_connected(self):
        if not self.connected:
            raise GraphError(f"{self.name}: graph is not connected")


class LoadingForm(enum.Enum):
    RELAXED = "relaxed"
    BINARY = "binary"


@dataclass(frozen=True)
class LoadingMatrix:
    """Nonnegative ``p x k`` node-to-supernode map.

    The binary form has a single 1 per row and no empty column; the relaxed
    form only needs ``C >= 0`` and row 2-norms at most 1.
    """

    entries: np.ndarray
    form: LoadingForm = LoadingForm.BINARY

    def __post_init__(self):
        c = np.array(self.entries, dtype=float)
        if c.ndim != 2:
            raise GraphError("loading matrix must be 2-D")
        if np.any(c < 0):
            raise GraphError("loading matrix has negative entries")
        if self.form is LoadingForm.BINARY:
            nnz_row = np.count_nonzero(c, axis=1)
            if np.any(nnz_row != 1) or np.any((c != 0) & (c != 1)):
                raise GraphError("binary loading matrix needs exactly one 1 per row")
            if np.any(np.count_nonzero(c, axis=0) == 0):
                raise GraphError("binary loading matrix has an empty column")
        else:
            if np.any(np.linalg.norm(c, axis=1) > 1 + 1e-12):
                raise GraphError("relaxed loading matrix row norm exceeds 1")
        object.__setattr__(self, "entries", _readonly(c))

    @classmethod
    def from_assignment(cls, labels, k=None):
        """Binary loading matrix from a per-node supernode index."""
        labels = np.asarray(labels, dtype=int)
        k = int(labels.max()) + 1 if k is None else k
        c = np.zeros((labels.size, k))
        c[np.arange(labels.size), labels] = 1.0
        return cls(c, LoadingForm.BINARY)

    @property
    def p(self):
        return self.entries.shape[0]

    @property
    def k(self):
        return self.entries.shape[1]

    @property
    def assignment(self):
        return np.argmax(self.entries, axis=1)

    @property
    def sizes(self):
        """Nodes per supernode (diagonal of ``C.T C`` for binary form)."""
        return np.count_nonzero(self.entries, axis=0)

    def sparse(self):
        return sp.csr_matrix(self.entries)


@dataclass(frozen=True)
class CoarsenedGraph:
    laplacian_c: np.ndarray
    loading: LoadingMatrix
    features_c: np.ndarray | None = None
    reduced_features: np.ndarray | None = None
    transform: np.ndarray | None = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        k = self.loading.k
        if self.laplacian_c.shape != (k, k):
            raise GraphError("coarse Laplacian does not match loading matrix")
        if k >= self.loading.p:
            raise GraphError(f"coarsened graph needs k < p (k={k}, p={self.loading.p})")

    @property
    def k(self):
        return self.loading.k


def _check_binary(c):
    if not isinstance(c, LoadingMatrix):
        c = LoadingMatrix(c)
    if c.form is not LoadingForm.BINARY:
        raise GraphError("operation needs a binary loading matrix")
    return c


def laplacian_from_weights(weights):
    """Combinatorial Laplacian ``D - W`` from a symmetric weight matrix."""
    w = _as_csr(weights)
    if w.shape[0] != w.shape[1]:
        raise GraphError("weight matrix must be square")
    if (abs(w - w.T) > 0).nnz:
        raise GraphError("weight matrix is not symmetric")
    if w.nnz and w.data.min() < 0:
        raise GraphError("negative edge weight")
    if np.any(w.diagonal() != 0):
        raise GraphError("self loops are not supported")
    deg = np.asarray(w.sum(axis=1)).ravel()
    theta = sp.diags(deg) - w
    return sp.csr_matrix(theta)


def coarsen_laplacian(theta, c):
    """``C.T @ theta @ C`` as a dense ``k x k`` array."""
    c = _check_binary(c)
    theta = _as_csr(theta)
    if theta.shape[0] != c.p:
        raise GraphError(f"theta is {theta.shape}, loading matrix has {c.p} rows")
    cs = c.sparse()
    tc = (cs.T @ theta @ cs).toarray()
    return 0.5 * (tc + tc.T)


def coarsening_matrix(c):
    """``P = (C.T C)^-1 C.T``; row ``j`` averages the nodes of supernode ``j``."""
    c = _check_binary(c)
    d = c.entries.sum(axis=0)
    if np.any(d == 0):
        raise GraphError("empty supernode: C.T C is singular")
    return c.entries.T / d[:, None]


def coarsen_features(x, c):
    c = _check_binary(c)
    x = np.asarray(x, dtype=float)
    if x.shape[0] != c.p:
        raise GraphError(f"features have {x.shape[0]} rows, loading matrix has {c.p}")
    return coarsening_matrix(c) @ x


def lift_laplacian(theta_c, c):
    """Lifted Laplacian ``P.T @ theta_c @ P`` (dense ``p x p``)."""
    c = _check_binary(c)
    theta_c = np.asarray(theta_c, dtype=float)
    if theta_c.shape != (c.k, c.k):
        raise GraphError(f"theta_c is {theta_c.shape}, expected {(c.k, c.k)}")
    # P.T theta_c P expanded entrywise: theta_c[g_i, g_j] / (d_gi d_gj)
    g = c.assignment
    d = c.sizes.astype(float)
    scaled = theta_c / np.outer(d, d)
    return scaled[np.ix_(g, g)]


@dataclass(frozen=True)
class RoundingResult:
    loading: LoadingMatrix
    dropped_columns: np.ndarray

    @property
    def k_reduced(self):
        return self.dropped_columns.size


def round_loading(c_relaxed, return_info=False):
    """Snap a relaxed loading matrix to binary form.

    Each row's largest entry becomes 1 (ties go to the lowest column index)
    and the rest 0. Columns left empty are removed, shrinking ``k``.
    """
    c = np.asarray(c_relaxed.entries if isinstance(c_relaxed, LoadingMatrix) else c_relaxed,
                   dtype=float)
    if np.any(c < 0):
        raise GraphError("relaxed loading matrix has negative entries")
    zero_rows = np.flatnonzero(~np.any(c > 0, axis=1))
    if zero_rows.size:
        raise GraphError(f"{zero_rows.size} node(s) assigned to no supernode "
                         f"(first: {zero_rows[0]}); solver did not converge to a mapping")
    labels = np.argmax(c, axis=1)
    used = np.unique(labels)
    dropped = np.setdiff1d(np.arange(c.shape[1]), used)
    if dropped.size:
        logger.info("rounding dropped %d empty supernode(s)", dropped.size)
    remap = np.full(c.shape[1], -1)
    remap[used] = np.arange(used.size)
    out = LoadingMatrix.from_assignment(remap[labels], used.size)
    if return_info:
        return RoundingResult(out, dropped)
    return out
