"""Independent reference implementations used as test oracles.

Everything here is deliberately written with explicit loops and dense
matrices, sharing no code with the package under test beyond the quantile
definition both sides document (linear interpolation between order
statistics).
"""
from __future__ import annotations

import math

import numpy as np


def mtf_oracle(samples, rssi_min: float, rssi_max: float, n_bins: int):
    """Brute-force series-to-graph pipeline: normalize, quantile-bin, count
    transitions, expand to the N x N field, list positive entries as edges.

    Returns (bins, n_effective_bins, W, M, edges) with plain Python floats.
    """
    feats = [(float(s) - rssi_min) / (rssi_max - rssi_min) for s in samples]
    n = len(feats)
    srt = sorted(feats)
    candidates = []
    for k in range(1, n_bins):
        h = (k / n_bins) * (n - 1)
        lo = math.floor(h)
        hi = min(lo + 1, n - 1)
        candidates.append(srt[lo] + (h - lo) * (srt[hi] - srt[lo]))
    edges: list[float] = []
    for e in candidates:
        if e not in edges:
            edges.append(e)

    def bin_of(value, cuts):
        return sum(1 for c in cuts if c < value)

    raw = [bin_of(v, edges) for v in feats]
    occupied = sorted(set(raw))
    cuts = [edges[o - 1] for o in occupied[1:]]
    bins = [bin_of(v, cuts) for v in feats]
    q = len(occupied)
    counts = [[0] * q for _ in range(q)]
    for t in range(n - 1):
        counts[bins[t]][bins[t + 1]] += 1
    w = [[0.0] * q for _ in range(q)]
    for i in range(q):
        total = sum(counts[i])
        if total == 0:
            w[i][i] = 1.0
        else:
            for j in range(q):
                w[i][j] = counts[i][j] / total
    m = [[w[bins[a]][bins[b]] for b in range(n)] for a in range(n)]
    graph_edges = []
    for a in range(n):
        for b in range(n):
            if m[a][b] > 0:
                graph_edges.append((a, b, m[a][b]))
    return bins, q, w, m, graph_edges


def finite_difference_grad(loss_fn, data: np.ndarray, step: float = 1e-3) -> np.ndarray:
    """Central finite differences of a scalar function, perturbing ``data``
    (a live tensor buffer) one element at a time."""
    grad = np.zeros_like(data)
    flat = data.ravel()
    grad_flat = grad.ravel()
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + step
        f_plus = loss_fn()
        flat[i] = original - step
        f_minus = loss_fn()
        flat[i] = original
        grad_flat[i] = (f_plus - f_minus) / (2 * step)
    return grad


def max_rel_err(a: np.ndarray, b: np.ndarray) -> float:
    """Elementwise error relative to max(|a|, |b|, 1)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1.0)
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0


def dense_gat_oracle(features: np.ndarray, n_nodes: int, edges, cfg,
                     weight: np.ndarray, att_src: np.ndarray,
                     att_dst: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Attention layer materializing the full destination-by-source matrix.

    ``edges`` is an iterable of (src, dst, weight); nodes without a self edge
    attend to themselves with weight 1.
    """
    f = cfg.out_dim_per_head
    head_outputs = []
    edge_list = list(edges)
    has_self = {a for a, b, _ in edge_list if a == b}
    for h in range(cfg.n_heads):
        wh = weight[:, h * f:(h + 1) * f]
        z = features @ wh
        logits = np.full((n_nodes, n_nodes), -np.inf)
        for a, b, w in edge_list:
            raw = att_src[h] @ z[a] + att_dst[h] @ z[b]
            raw = raw if raw > 0 else cfg.leaky_slope * raw
            logits[b, a] = raw + math.log(w)
        for b in range(n_nodes):
            if b not in has_self:
                raw = att_src[h] @ z[b] + att_dst[h] @ z[b]
                raw = raw if raw > 0 else cfg.leaky_slope * raw
                logits[b, b] = raw
        alpha = np.zeros_like(logits)
        for b in range(n_nodes):
            row = logits[b]
            mask = np.isfinite(row)
            shifted = np.exp(row[mask] - row[mask].max())
            alpha[b, mask] = shifted / shifted.sum()
        head_outputs.append(alpha @ z)
    if cfg.head_mode == "concat":
        out = np.concatenate(head_outputs, axis=1)
    else:
        out = np.mean(head_outputs, axis=0)
    return out + bias
