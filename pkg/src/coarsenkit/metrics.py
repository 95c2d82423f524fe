"""Quality measures for a coarsening: spectra, energies, lift errors."""
from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass

import numpy as np
import scipy.linalg
import scipy.optimize
import scipy.sparse as sp

from .graph import GraphError, coarsening_matrix, lift_laplacian


def _dense(a):
    return a.toarray() if sp.issparse(a) else np.asarray(a, dtype=float)


def spectrum(theta, m):
    """The ``m`` largest eigenvalues of a symmetric matrix, descending."""
    a = _dense(theta)
    size = a.shape[0]
    if m > size:
        raise GraphError(f"requested {m} eigenvalues from a {size}x{size} matrix")
    if m <= 0:
        return np.empty(0)
    w = scipy.linalg.eigvalsh(a, subset_by_index=[size - m, size - 1])
    return w[::-1].copy()


def relative_eigen_error(theta, theta_c, m):
    """Mean relative gap between the top-``m`` eigenvalues of both Laplacians."""
    k = np.shape(theta_c)[0]
    if m >= k:
        raise GraphError(f"m={m} but the coarse graph has only {k - 1} nonzero eigenvalues")
    lam = spectrum(theta, m)
    lam_c = spectrum(theta_c, m)
    return float(np.mean(np.abs(lam_c - lam) / lam))


def dirichlet_energy(theta, x):
    """``tr(X.T theta X)``."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if np.shape(theta)[0] != x.shape[0]:
        raise GraphError(f"theta is {np.shape(theta)}, features have {x.shape[0]} rows")
    return float(np.sum(x * (theta @ x)))


def hyperbolic_error(theta, theta_lift, x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    de = dirichlet_energy(theta, x)
    de_lift = dirichlet_energy(theta_lift, x)
    if de <= 0 or de_lift <= 0:
        raise GraphError("hyperbolic error undefined: zero Dirichlet energy (constant features?)")
    diff = np.asarray(theta @ x) - np.asarray(theta_lift @ x)
    arg = 1.0 + np.sum(diff ** 2) * np.sum(x ** 2) / (2.0 * de * de_lift)
    return float(np.arccosh(arg))


def reconstruction_error(theta, theta_lift):
    """``||theta - theta_lift||_F^2``."""
    a, b = _dense(theta), _dense(theta_lift)
    if a.shape != b.shape:
        raise GraphError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.sum((a - b) ** 2))


def epsilon_similarity(theta, x, theta_c, x_c):
    """Smallest eps with (1-eps)|X|_theta <= |X~|_theta_c <= (1+eps)|X|_theta."""
    norm = np.sqrt(max(dirichlet_energy(theta, x), 0.0))
    if norm == 0:
        raise GraphError("epsilon similarity undefined for zero-energy features")
    norm_c = np.sqrt(max(dirichlet_energy(theta_c, x_c), 0.0))
    return float(abs(norm - norm_c) / norm)


def fiedler_vector(theta):
    """Eigenvector of the smallest nonzero eigenvalue (connected graph)."""
    w, v = scipy.linalg.eigh(_dense(theta), subset_by_index=[0, 1])
    return v[:, 1]


@dataclass
class MetricReport:
    ree: float
    de_original: float
    de_coarsened: float
    he: float
    re: float
    epsilon: float | None
    m_used: int

    @property
    def log_re(self):
        return float(np.log(self.re)) if self.re > 0 else float("-inf")

    def to_dict(self):
        d = asdict(self)
        d["log_re"] = self.log_re
        return d


def evaluate(graph, coarse, m=100):
    """All metrics for an (original, coarsened) pair.

    ``m`` is clamped to ``k - 1``. Without node features the Fiedler vector
    stands in for ``X`` in the hyperbolic error and no energy/epsilon values
    are produced (they are reported as ``nan`` / ``None``).
    """
    theta = graph.laplacian
    theta_c = coarse.laplacian_c
    k = coarse.k
    m_used = min(m, k - 1)
    ree = relative_eigen_error(theta, theta_c, m_used)
    theta_lift = lift_laplacian(theta_c, coarse.loading)
    re = reconstruction_error(theta, theta_lift)
    x = graph.features
    if x is None:
        he = hyperbolic_error(theta, theta_lift, fiedler_vector(theta))
        return MetricReport(ree, float("nan"), float("nan"), he, re, None, m_used)
    he = hyperbolic_error(theta, theta_lift, x)
    x_c = coarse.features_c
    if x_c is None:
        x_c = coarsening_matrix(coarse.loading) @ x
    de = dirichlet_energy(theta, x)
    de_c = dirichlet_energy(theta_c, x_c)
    eps = epsilon_similarity(theta, x, theta_c, x_c)
    return MetricReport(ree, de, de_c, he, re, eps, m_used)


def misclassified(pred, truth, exhaustive_max=6):
    """Errors of ``pred`` against ``truth`` under the best relabelling of ``pred``.

    Every permutation is tried when there are at most ``exhaustive_max``
    classes; larger problems use an optimal assignment on the confusion
    matrix, which gives the same optimum.
    """
    pred = np.asarray(pred, dtype=int)
    truth = np.asarray(truth, dtype=int)
    if pred.shape != truth.shape:
        raise GraphError("prediction and label vectors differ in length")
    size = max(pred.max(), truth.max()) + 1
    confusion = np.zeros((size, size), dtype=int)
    np.add.at(confusion, (pred, truth), 1)
    if size <= exhaustive_max:
        best = max(confusion[np.arange(size), perm].sum()
                   for perm in itertools.permutations(range(size)))
    else:
        rows, cols = scipy.optimize.linear_sum_assignment(confusion, maximize=True)
        best = confusion[rows, cols].sum()
    return int(pred.size - best)
