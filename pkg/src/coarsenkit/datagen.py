"""Synthetic graphs, smooth (GMRF) node features and edge-addition attacks."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import networkx as nx
import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .graph import GraphData, GraphError, is_connected, laplacian_from_weights

logger = logging.getLogger(__name__)

MAX_RETRIES = 100
MODELS = ("er", "ba", "ws", "rgg")


@dataclass(frozen=True)
class GraphModel:
    """Random graph family and its parameters.

    ``er``: ``prob``; ``ba``: ``m_attach``; ``ws``: ``k_ring``, ``rewire_prob``;
    ``rgg``: ``radius`` (unit square).
    """

    kind: str
    p: int
    prob: float | None = None
    m_attach: int | None = None
    k_ring: int | None = None
    rewire_prob: float | None = None
    radius: float | None = None

    def __post_init__(self):
        if self.kind not in MODELS:
            raise GraphError(f"unknown graph model {self.kind!r}; choose from {MODELS}")
        if self.p < 2:
            raise GraphError("need at least 2 nodes")
        required = {"er": ("prob",), "ba": ("m_attach",), "ws": ("k_ring", "rewire_prob"),
                    "rgg": ("radius",)}[self.kind]
        missing = [name for name in required if getattr(self, name) is None]
        if missing:
            raise GraphError(f"model {self.kind} needs {', '.join(missing)}")
        if self.kind == "er" and not 0 < self.prob <= 1:
            raise GraphError("ER edge probability must lie in (0, 1]")
        if self.kind == "ba" and not 1 <= self.m_attach < self.p:
            raise GraphError("BA attachment count must satisfy 1 <= m < p")
        if self.kind == "ws":
            if not 2 <= self.k_ring < self.p:
                raise GraphError("WS ring degree must satisfy 2 <= k < p")
            if not 0 <= self.rewire_prob <= 1:
                raise GraphError("WS rewiring probability must lie in [0, 1]")
        if self.kind == "rgg" and not self.radius > 0:
            raise GraphError("RGG radius must be positive")

    def sample(self, seed):
        """One networkx draw (may be disconnected) and node coordinates if any."""
        if self.kind == "er":
            return nx.gnp_random_graph(self.p, self.prob, seed=seed), None
        if self.kind == "ba":
            return nx.barabasi_albert_graph(self.p, self.m_attach, seed=seed), None
        if self.kind == "ws":
            # the connected variant already retries internally
            g = nx.connected_watts_strogatz_graph(self.p, self.k_ring, self.rewire_prob,
                                                  tries=MAX_RETRIES, seed=seed)
            return g, None
        g = nx.random_geometric_graph(self.p, self.radius, seed=seed)
        coords = np.array([g.nodes[i]["pos"] for i in range(self.p)])
        return g, coords


def generate_graph(model: GraphModel, weight_range=(1.0, 10.0), seed=0) -> GraphData:
    """Connected weighted random graph; weights uniform on ``weight_range``."""
    lo, hi = weight_range
    if not 0 < lo <= hi:
        raise GraphError(f"weight range must satisfy 0 < lo <= hi, got {weight_range}")
    rng = np.random.default_rng(seed)
    for _ in range(MAX_RETRIES):
        try:
            g, coords = model.sample(int(rng.integers(2**31 - 1)))
        except nx.NetworkXError as exc:
            raise GraphError(str(exc)) from exc
        if g.number_of_edges() and nx.is_connected(g):
            break
    else:
        raise GraphError(f"no connected {model.kind} graph in {MAX_RETRIES} draws; "
                         "increase density")
    edges = np.array(sorted((min(u, v), max(u, v)) for u, v in g.edges()))
    w = rng.uniform(lo, hi, size=len(edges))
    adj = sp.coo_matrix((w, (edges[:, 0], edges[:, 1])), shape=(model.p, model.p))
    theta = laplacian_from_weights(adj + adj.T)
    return GraphData(theta, name=model.kind, coords=coords)


def sample_gmrf_features(theta, n, seed=0):
    """``n`` i.i.d. columns from ``N(0, pinv(theta))``.

    Uses the eigendecomposition ``theta = V diag(lam) V.T``: each column is
    ``V_+ diag(lam_+^-1/2) z`` over the nonzero eigenpairs, so samples have no
    component along the constant vector.
    """
    if not is_connected(theta):
        raise GraphError("GMRF sampling needs a connected graph")
    a = theta.toarray() if sp.issparse(theta) else np.asarray(theta, dtype=float)
    lam, v = scipy.linalg.eigh(a)
    # connected: exactly the smallest eigenvalue is zero
    lam, v = lam[1:], v[:, 1:]
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((lam.size, n))
    return v @ (z / np.sqrt(lam)[:, None])


def perturb_edges(graph: GraphData, rate, seed=0) -> GraphData:
    """Add ``round(rate * m)`` new unit-weight edges between random non-adjacent pairs.

    Rounding is half-up, so 10% of 5278 edges gives 528.
    """
    if not rate > 0:
        raise GraphError("perturbation rate must be positive")
    p = graph.p
    m = graph.n_edges
    n_add = int(np.floor(rate * m + 0.5))
    if n_add == 0:
        return graph
    rows, cols = np.triu_indices(p, k=1)
    ei, ej, _ = graph.edges()
    absent = np.setdiff1d(rows * p + cols, ei.astype(np.int64) * p + ej, assume_unique=True)
    if absent.size < n_add:
        raise GraphError(f"cannot add {n_add} edges: only {absent.size} non-edges remain")
    rng = np.random.default_rng(seed)
    pick = rng.choice(absent, size=n_add, replace=False)
    pick = np.sort(pick)
    extra = sp.coo_matrix((np.ones(n_add), (pick // p, pick % p)), shape=(p, p))
    theta = laplacian_from_weights(graph.weights + extra + extra.T)
    return GraphData(theta, graph.features, f"{graph.name}+perturbed", graph.coords)


def planted_partition(sizes, p_in, p_out, seed=0, weight_range=(1.0, 1.0)):
    """Connected stochastic block model graph and its block labels."""
    rng = np.random.default_rng(seed)
    for _ in range(MAX_RETRIES):
        g = nx.stochastic_block_model(list(sizes), [[p_in if i == j else p_out
                                                      for j in range(len(sizes))]
                                                     for i in range(len(sizes))],
                                      seed=int(rng.integers(2**31 - 1)))
        if nx.is_connected(g):
            break
    else:
        raise GraphError("no connected planted-partition graph found")
    edges = np.array(sorted((min(u, v), max(u, v)) for u, v in g.edges()))
    w = rng.uniform(*weight_range, size=len(edges))
    p = sum(sizes)
    adj = sp.coo_matrix((w, (edges[:, 0], edges[:, 1])), shape=(p, p))
    labels = np.repeat(np.arange(len(sizes)), sizes)
    return GraphData(laplacian_from_weights(adj + adj.T), name="planted"), labels


def karate_club():
    """Zachary's karate club (unweighted) and its two-faction labels."""
    g = nx.karate_club_graph()
    nodes = sorted(g.nodes())
    adj = nx.to_scipy_sparse_array(g, nodelist=nodes, weight=None, format="csr").astype(float)
    labels = np.array([0 if g.nodes[i]["club"] == "Mr. Hi" else 1 for i in nodes])
    return GraphData(laplacian_from_weights(adj), name="karate"), labels
