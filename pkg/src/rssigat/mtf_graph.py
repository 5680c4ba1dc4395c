"""Time-series to graph transformation via Markov transition fields.

Three steps: quantile-bin the series, estimate the bin-to-bin transition
matrix from consecutive samples, then expand it to an N x N field whose
positive entries become weighted directed edges between time steps.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .trace import DEFAULT_SCHEMA, RssiTrace, TraceSchema, normalize

# Largest node count for which the dense N x N field is materialized; larger
# series go through streaming edge extraction (same edges, no dense matrix).
DENSE_NODE_CAP = 1024


class GraphError(Exception):
    pass


@dataclass(frozen=True)
class Quantizer:
    """Value-to-bin assignment derived from empirical quantiles.

    ``bin_edges`` are strictly increasing; a value's bin is the number of
    edges strictly below it. Edges that would delimit empty bins on the
    fitted series are collapsed, so ``n_bins`` can be smaller than requested.
    """

    bin_edges: np.ndarray
    n_bins: int

    def assign(self, values: np.ndarray) -> np.ndarray:
        return np.searchsorted(self.bin_edges, np.asarray(values, dtype=np.float64),
                               side="left").astype(np.int64)


def fit_quantizer(series: np.ndarray, n_bins: int) -> Quantizer:
    """Fit quantile bin edges at k/Q, k = 1..Q-1, on the given series.

    Quantiles use linear interpolation between order statistics:
    h = (k/Q) * (n-1), edge = sorted[floor(h)] + frac * (sorted[floor(h)+1]
    - sorted[floor(h)]). Duplicate edges and edges that separate no samples
    are dropped.
    """
    series = np.asarray(series, dtype=np.float64)
    if series.size == 0:
        raise GraphError("cannot fit a quantizer on an empty series")
    if n_bins < 1:
        raise GraphError("n_bins must be >= 1")
    srt = np.sort(series)
    n = srt.size
    ks = np.arange(1, n_bins)
    h = (ks / n_bins) * (n - 1)
    lo = np.floor(h).astype(np.intp)
    frac = h - lo
    hi = np.minimum(lo + 1, n - 1)
    edges = srt[lo] + frac * (srt[hi] - srt[lo])
    edges = np.unique(edges)
    # drop edges bounding bins no sample falls in
    raw = np.searchsorted(edges, series, side="left")
    occupied = np.unique(raw)
    edges = edges[occupied[1:] - 1] if occupied.size > 1 else edges[:0]
    return Quantizer(bin_edges=edges, n_bins=int(occupied.size))


def transition_matrix(bins: np.ndarray, n_bins: int) -> np.ndarray:
    """Row-stochastic matrix of consecutive-step bin transition frequencies.

    Rows without any observed outgoing transition get a self-transition of 1
    so every row still sums to one.
    """
    bins = np.asarray(bins, dtype=np.int64)
    if bins.size and bins.max() >= n_bins:
        raise GraphError("bin index out of range")
    counts = np.zeros((n_bins, n_bins), dtype=np.float64)
    if bins.size >= 2:
        np.add.at(counts, (bins[:-1], bins[1:]), 1.0)
    totals = counts.sum(axis=1)
    w = np.zeros_like(counts)
    nonzero = totals > 0
    w[nonzero] = counts[nonzero] / totals[nonzero, None]
    for i in np.flatnonzero(~nonzero):
        w[i, i] = 1.0
    return w


@dataclass
class TransitionField:
    """Bin transition matrix W plus its N x N expansion M over time steps."""

    W: np.ndarray
    M: np.ndarray
    bins: np.ndarray

    def validate(self) -> None:
        sums = self.W.sum(axis=1)
        if not np.all(np.abs(sums - 1.0) <= 1e-9):
            raise GraphError("transition matrix rows must sum to 1")
        if self.W.min() < 0 or self.W.max() > 1:
            raise GraphError("transition probabilities must lie in [0, 1]")


@dataclass
class TsGraph:
    """Directed weighted graph over the time steps of one series."""

    n_nodes: int
    node_features: np.ndarray
    edge_src: np.ndarray
    edge_dst: np.ndarray
    edge_weights: np.ndarray
    link_id: str | None = None

    @property
    def n_edges(self) -> int:
        return int(self.edge_src.size)

    def edges(self) -> list[tuple[int, int]]:
        return list(zip(self.edge_src.tolist(), self.edge_dst.tolist()))

    def validate(self) -> None:
        if not (self.edge_src.size == self.edge_dst.size == self.edge_weights.size):
            raise GraphError("edge arrays must have equal length")
        if self.node_features.shape != (self.n_nodes,):
            raise GraphError("need one feature per node")
        if self.edge_weights.size and self.edge_weights.min() <= 0:
            raise GraphError("edge weights must be positive")
        if self.edge_src.size:
            if self.edge_src.max() >= self.n_nodes or self.edge_dst.max() >= self.n_nodes:
                raise GraphError("edge endpoint out of range")
            pairs = self.edge_src.astype(np.int64) * self.n_nodes + self.edge_dst
            if np.unique(pairs).size != pairs.size:
                raise GraphError("duplicate directed edge")


def mtf(series: np.ndarray, n_bins: int) -> TransitionField:
    """Dense Markov transition field: M[a, b] = W[bin(a), bin(b)]."""
    series = np.asarray(series, dtype=np.float64)
    if series.size < 2:
        raise GraphError("series must have at least 2 samples")
    if series.size > DENSE_NODE_CAP:
        raise GraphError(
            f"dense field capped at {DENSE_NODE_CAP} nodes; use transform()")
    q = fit_quantizer(series, n_bins)
    bins = q.assign(series)
    w = transition_matrix(bins, q.n_bins)
    m = w[np.ix_(bins, bins)]
    return TransitionField(W=w, M=m, bins=bins)


def build_graph(field: TransitionField, features: np.ndarray) -> TsGraph:
    """One directed edge per positive field entry, weighted by that entry."""
    features = np.asarray(features, dtype=np.float64)
    n = field.M.shape[0]
    if features.shape != (n,):
        raise GraphError("feature length must match field size")
    src, dst = np.nonzero(field.M)
    return TsGraph(
        n_nodes=n,
        node_features=features,
        edge_src=src.astype(np.int64),
        edge_dst=dst.astype(np.int64),
        edge_weights=field.M[src, dst],
    )


def _stream_edges(w: np.ndarray, bins: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Edge extraction without the dense field, for long series."""
    n_bins = w.shape[0]
    members = [np.flatnonzero(bins == b) for b in range(n_bins)]
    srcs, dsts, wts = [], [], []
    for i in range(n_bins):
        for j in range(n_bins):
            if w[i, j] > 0:
                a, b = members[i], members[j]
                srcs.append(np.repeat(a, b.size))
                dsts.append(np.tile(b, a.size))
                wts.append(np.full(a.size * b.size, w[i, j]))
    src = np.concatenate(srcs) if srcs else np.zeros(0, dtype=np.int64)
    dst = np.concatenate(dsts) if dsts else np.zeros(0, dtype=np.int64)
    wt = np.concatenate(wts) if wts else np.zeros(0, dtype=np.float64)
    order = np.lexsort((dst, src))  # row-major, matching the dense path
    return src[order], dst[order], wt[order]


def transform(trace: RssiTrace, schema: TraceSchema = DEFAULT_SCHEMA,
              n_bins: int | None = None) -> TsGraph:
    """Full series-to-graph pipeline; bin count defaults to the series length."""
    features = normalize(trace, schema)
    n = features.size
    if n < 2:
        raise GraphError("trace must have at least 2 samples")
    if n_bins is None:
        n_bins = n
    if n <= DENSE_NODE_CAP:
        graph = build_graph(mtf(features, n_bins), features)
    else:
        q = fit_quantizer(features, n_bins)
        bins = q.assign(features)
        w = transition_matrix(bins, q.n_bins)
        src, dst, wt = _stream_edges(w, bins)
        graph = TsGraph(n_nodes=n, node_features=features,
                        edge_src=src, edge_dst=dst, edge_weights=wt)
    graph.link_id = trace.link_id
    return graph


def _transform_one(payload) -> TsGraph:
    trace, schema, n_bins = payload
    return transform(trace, schema, n_bins)


def transform_many(traces, schema: TraceSchema = DEFAULT_SCHEMA,
                   n_bins: int | None = None, workers: int = 1) -> list[TsGraph]:
    """Transform a batch of traces; order is preserved regardless of workers."""
    payloads = [(t, schema, n_bins) for t in traces]
    if workers > 1:
        import multiprocessing
        with multiprocessing.Pool(workers) as pool:
            return pool.map(_transform_one, payloads)
    return [_transform_one(p) for p in payloads]


# ---------------------------------------------------------------------------
# serialization: one JSON record per line, weights at 9 significant digits

def graph_to_record(graph: TsGraph) -> dict:
    return {
        "link_id": graph.link_id,
        "n_nodes": graph.n_nodes,
        "features": graph.node_features.tolist(),
        "edges": [[int(s), int(d), float(f"{w:.9g}")]
                  for s, d, w in zip(graph.edge_src, graph.edge_dst,
                                     graph.edge_weights)],
    }


def graph_from_record(rec: dict) -> TsGraph:
    edges = rec["edges"]
    src = np.array([e[0] for e in edges], dtype=np.int64)
    dst = np.array([e[1] for e in edges], dtype=np.int64)
    wts = np.array([e[2] for e in edges], dtype=np.float64)
    return TsGraph(
        n_nodes=int(rec["n_nodes"]),
        node_features=np.asarray(rec["features"], dtype=np.float64),
        edge_src=src, edge_dst=dst, edge_weights=wts,
        link_id=rec.get("link_id"),
    )


def write_graphs(path, graphs) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for g in graphs:
            fh.write(json.dumps(graph_to_record(g)) + "\n")


def read_graphs(path) -> list[TsGraph]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(graph_from_record(json.loads(line)))
    return out
