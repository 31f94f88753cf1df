"""Relay matrices over time and their stability statistics.

``cross_time_correlation`` (Pearson r of flattened matrices at consecutive
steps) and ``information_overlap`` (Jaccard index of k-means-binarized node
sets at consecutive steps) are this package's concrete stand-ins for the
correlation and overlap measures; neither has a canonical formal definition.
"""
from __future__ import annotations

import csv
from typing import Sequence

import numpy as np

from .infotheory import RelayMatrix, relay_matrix
from .recnet import TraceTensor, record_traces


def relay_over_time(params_or_trace, dataset=None, state: str = "hidden") -> list:
    """One relay matrix per step; ``X_out`` is the final answer throughout."""
    if isinstance(params_or_trace, TraceTensor):
        trace = params_or_trace
    else:
        trace = record_traces(params_or_trace, dataset)
    return [relay_matrix(trace, t, state=state) for t in range(trace.n_steps)]


def _values(m) -> np.ndarray:
    return np.asarray(m.values if isinstance(m, RelayMatrix) else m, dtype=float)


def kmeans2_binarize(matrix) -> np.ndarray:
    """Exact 1-D 2-means over all entries; the high cluster maps to 1.

    The optimum is a split of the sorted values, so every split between
    distinct neighbours is scored and the lowest within-cluster SSE wins
    (first one on ties).  All-equal input gives all zeros.
    """
    v = _values(matrix)
    flat = np.sort(v.ravel())
    if flat.size == 0 or flat[0] == flat[-1]:
        return np.zeros(v.shape, dtype=np.int64)
    n = flat.size
    csum = np.cumsum(flat)
    csq = np.cumsum(flat ** 2)
    left_n = np.arange(1, n)
    left_s, left_q = csum[:-1], csq[:-1]
    right_n = n - left_n
    right_s, right_q = csum[-1] - left_s, csq[-1] - left_q
    sse = (left_q - left_s ** 2 / left_n) + (right_q - right_s ** 2 / right_n)
    sse[flat[1:] == flat[:-1]] = np.inf
    split = int(np.argmin(sse)) + 1
    return (v >= flat[split]).astype(np.int64)


def _window(matrices: Sequence, window_start: int) -> list:
    times = [m.time if isinstance(m, RelayMatrix) else i for i, m in enumerate(matrices)]
    picked = [m for t, m in zip(times, matrices) if t >= window_start]
    if len(picked) < 2:
        raise ValueError(f"need at least 2 matrices from step {window_start} on, got {len(picked)}")
    return picked


def cross_time_correlation(matrices: Sequence, window_start: int) -> float:
    """Mean Pearson r between consecutive flattened matrices in the window.

    Pairs where either matrix is constant are skipped; NaN if all are.
    """
    picked = _window(matrices, window_start)
    rs = []
    for a, b in zip(picked, picked[1:]):
        x, y = _values(a).ravel(), _values(b).ravel()
        if np.ptp(x) == 0 or np.ptp(y) == 0:
            continue
        rs.append(float(np.corrcoef(x, y)[0, 1]))
    return float(np.mean(rs)) if rs else float("nan")


def jaccard(a: np.ndarray, b: np.ndarray) -> float:
    a, b = np.asarray(a, dtype=bool), np.asarray(b, dtype=bool)
    union = np.sum(a | b)
    if union == 0:
        return 1.0
    return float(np.sum(a & b) / union)


def information_overlap(matrices: Sequence, window_start: int, binarized: bool = False) -> float:
    """Mean per-concept Jaccard index of relaying node sets at consecutive steps."""
    picked = _window(matrices, window_start)
    bins = [_values(m).astype(np.int64) if binarized else kmeans2_binarize(m) for m in picked]
    scores = [jaccard(ra, rb) for a, b in zip(bins, bins[1:]) for ra, rb in zip(a, b)]
    return float(np.mean(scores))


def usage_histograms(binary: np.ndarray):
    """``(concepts_per_node, nodes_per_concept)`` as fractions.

    ``concepts_per_node[j]`` is the fraction of nodes relaying exactly ``j``
    concepts; ``nodes_per_concept[j]`` the fraction of concepts relayed by
    exactly ``j`` nodes.
    """
    binary = np.asarray(binary, dtype=np.int64)
    n_concepts, n_nodes = binary.shape
    per_node = np.bincount(binary.sum(axis=0), minlength=n_concepts + 1) / n_nodes
    per_concept = np.bincount(binary.sum(axis=1), minlength=n_nodes + 1) / n_concepts
    return per_node, per_concept


def write_long_csv(matrices: Sequence[RelayMatrix], path, concept_names=None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "concept", "node", "bits", "binary"])
        for m in matrices:
            b = kmeans2_binarize(m)
            for c, row in enumerate(m.values):
                name = concept_names[c] if concept_names else c
                for node, bits in enumerate(row):
                    w.writerow([m.time, name, node, repr(float(bits)), int(b[c, node])])


def write_summary_csv(rows, path) -> None:
    """``rows``: iterable of dicts with keys arch, task, regime, replicate, r, overlap."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["arch", "task", "regime", "replicate", "r", "overlap"])
        for row in rows:
            w.writerow([row["arch"], row["task"], row["regime"], row["replicate"],
                        repr(float(row["r"])), repr(float(row["overlap"]))])
