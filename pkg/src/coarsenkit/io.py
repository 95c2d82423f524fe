"""Edge-list / CSV ingestion and the on-disk report layout.

Edge files hold one ``src dst weight`` triple per line (0-based node ids,
whitespace separated); ``#`` starts a comment. Feature files are plain CSV,
row ``i`` holding node ``i``'s features. Reports are a ``metrics.json`` plus
CSV arrays; every float is written with 17 significant digits so values
round-trip exactly.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .graph import GraphData, GraphError, laplacian_from_weights

FLOAT_FMT = "{:.17g}"


class FormatError(GraphError):
    pass


def _fmt(x):
    return FLOAT_FMT.format(float(x))


def read_edges(path):
    """Parse an edge file into ``(src, dst, weight)`` arrays."""
    src, dst, wts = [], [], []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 3:
                raise FormatError(f"{path}:{lineno}: expected 'src dst weight', got {raw.strip()!r}")
            try:
                i, j, w = int(parts[0]), int(parts[1]), float(parts[2])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
            if i < 0 or j < 0:
                raise FormatError(f"{path}:{lineno}: negative node id")
            if i == j:
                raise FormatError(f"{path}:{lineno}: self loop on node {i}")
            if not (w > 0 and math.isfinite(w)):
                raise FormatError(f"{path}:{lineno}: weight must be positive and finite, got {w}")
            src.append(i)
            dst.append(j)
            wts.append(w)
    if not src:
        raise FormatError(f"{path}: no edges")
    return np.array(src), np.array(dst), np.array(wts)


def edges_to_laplacian(src, dst, wts, p=None):
    """Symmetrize (duplicates and reversed pairs keep the largest weight)."""
    lo, hi = np.minimum(src, dst), np.maximum(src, dst)
    nodes = np.unique(np.concatenate([lo, hi]))
    p = int(nodes[-1]) + 1 if p is None else p
    if nodes.size != p:
        missing = np.setdiff1d(np.arange(p), nodes)
        raise FormatError(f"node ids must be dense 0..{p - 1}; missing {missing[:10].tolist()}")
    keys = lo.astype(np.int64) * p + hi
    order = np.lexsort((-wts, keys))
    keys, wts = keys[order], wts[order]
    first = np.ones(keys.size, dtype=bool)
    first[1:] = keys[1:] != keys[:-1]
    keys, wts = keys[first], wts[first]
    upper = sp.coo_matrix((wts, (keys // p, keys % p)), shape=(p, p))
    return laplacian_from_weights(upper + upper.T)


def read_features(path, p=None):
    x = np.loadtxt(path, delimiter=",", ndmin=2, comments="#")
    if p is not None and x.shape[0] != p:
        raise FormatError(f"{path}: {x.shape[0]} feature rows for {p} nodes")
    return x


def load_graph(edge_path, feature_path=None, name=None, require_connected=True) -> GraphData:
    src, dst, wts = read_edges(edge_path)
    theta = edges_to_laplacian(src, dst, wts)
    x = read_features(feature_path, theta.shape[0]) if feature_path else None
    graph = GraphData(theta, x, name or Path(edge_path).stem)
    if require_connected:
        graph.require_connected()
    return graph


def write_graph(graph: GraphData, out_dir, edges_name="edges.txt", features_name="features.csv"):
    """Write ``graph`` in the layout :func:`load_graph` reads; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    i, j, w = graph.edges()
    edge_path = out / edges_name
    with open(edge_path, "w") as fh:
        fh.write(f"# {graph.p} nodes, {i.size} edges: src dst weight\n")
        for a, b, c in zip(i, j, w):
            fh.write(f"{a} {b} {_fmt(c)}\n")
    feature_path = None
    if graph.features is not None:
        feature_path = out / features_name
        write_matrix_csv(feature_path, graph.features)
    return edge_path, feature_path


def write_matrix_csv(path, a, header=None):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if header:
            writer.writerow(header)
        for row in np.atleast_2d(a):
            writer.writerow([_fmt(v) for v in row])


def write_columns_csv(path, header, *columns):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in zip(*columns):
            writer.writerow([v if isinstance(v, (int, np.integer)) else _fmt(v) for v in row])


class _Float17:
    """JSON float rendering: 17 significant digits, non-finite as null."""

    @staticmethod
    def encode(obj):
        if isinstance(obj, dict):
            return "{" + ", ".join(f"{json.dumps(str(k))}: {_Float17.encode(v)}"
                                   for k, v in obj.items()) + "}"
        if isinstance(obj, (list, tuple, np.ndarray)):
            return "[" + ", ".join(_Float17.encode(v) for v in obj) + "]"
        if isinstance(obj, (bool, np.bool_)):
            return "true" if obj else "false"
        if isinstance(obj, (int, np.integer)):
            return str(int(obj))
        if isinstance(obj, (float, np.floating)):
            return _fmt(obj) if math.isfinite(obj) else "null"
        if obj is None:
            return "null"
        return json.dumps(str(obj))


def dump_json(obj, path):
    text = _Float17.encode(obj)
    json.loads(text)  # guard against producing invalid JSON
    Path(path).write_text(text + "\n")


def load_metrics(path):
    return json.loads(Path(path).read_text())


REPORT_FILES = ("metrics.json", "spectrum_original.csv", "spectrum_coarse.csv",
                "loss.csv", "ctc_heatmap.csv", "assignment.csv")


def write_report(out_dir, report, loading, spectrum_original, spectrum_coarse,
                 objective=(), extra=None):
    """Write the full report set; returns the list of files written.

    ``report`` is a :class:`MetricReport` (or a plain dict); ``extra`` is
    merged into ``metrics.json`` (config, seed, algorithm, ...).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    metrics = report.to_dict() if hasattr(report, "to_dict") else dict(report)
    metrics.update(extra or {})
    dump_json(metrics, out / "metrics.json")
    for name, values in (("spectrum_original.csv", spectrum_original),
                         ("spectrum_coarse.csv", spectrum_coarse)):
        values = np.asarray(values, dtype=float)
        write_columns_csv(out / name, ("index", "eigenvalue"), range(values.size), values)
    objective = np.asarray(objective, dtype=float)
    write_columns_csv(out / "loss.csv", ("iter", "objective"), range(objective.size), objective)
    c = loading.entries
    write_matrix_csv(out / "ctc_heatmap.csv", c.T @ c)
    write_columns_csv(out / "assignment.csv", ("node", "supernode"),
                      range(loading.p), [int(a) for a in loading.assignment])
    return [out / name for name in REPORT_FILES]
