"""PCA of hidden states and cluster-quality scores under node removal.

Davies-Bouldin keeps its usual orientation here: lower means better
separated clusters.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

MAX_REMOVED = 10
SCORE_NAMES = ("silhouette", "davies_bouldin", "calinski_harabasz")


class DegenerateData(ValueError):
    pass


@dataclass
class Projection:
    projected: np.ndarray            # E x 2
    components: np.ndarray           # k x 2
    explained_variance: np.ndarray   # 2


def pca2(points) -> Projection:
    """Project mean-centred points on the two leading covariance eigenvectors.

    Each component is signed so its largest-magnitude entry is positive.
    """
    x = np.asarray(points, dtype=float)
    if x.ndim != 2 or x.shape[1] < 2:
        raise ValueError("pca2 needs at least two columns")
    if x.shape[0] < 3:
        raise ValueError("pca2 needs at least three points")
    xc = x - x.mean(axis=0)
    cov = xc.T @ xc / (x.shape[0] - 1)
    if np.trace(cov) <= 0:
        raise DegenerateData("points have zero total variance")
    evals, evecs = np.linalg.eigh(cov)
    top = np.argsort(evals)[::-1][:2]
    comps = evecs[:, top]
    pivot = np.argmax(np.abs(comps), axis=0)
    comps = comps * np.sign(comps[pivot, [0, 1]])
    return Projection(xc @ comps, comps, np.clip(evals[top], 0.0, None))


def _check_labels(labels, n):
    labels = np.asarray(labels)
    if labels.shape != (n,):
        raise ValueError("need one label per point")
    classes = np.unique(labels)
    if classes.size < 2:
        raise ValueError("cluster scores need at least two distinct labels")
    return labels, classes


def silhouette(points, labels) -> float:
    """Mean silhouette (Euclidean).  Identical points are grouped with their
    multiplicity first, which is exact and keeps repeated states cheap."""
    x = np.asarray(points, dtype=float)
    labels, classes = _check_labels(labels, len(x))
    codes = np.searchsorted(classes, labels)
    uniq, weight = np.unique(np.column_stack([x, codes]), axis=0, return_counts=True)
    ux, ucode = uniq[:, :-1], uniq[:, -1].astype(np.int64)
    d = np.sqrt(((ux[:, None, :] - ux[None, :, :]) ** 2).sum(-1))
    member = (ucode[:, None] == np.arange(len(classes))[None, :]) * weight[:, None]
    sums = d @ member                                     # U x K
    sizes = member.sum(axis=0)
    rows = np.arange(len(ux))
    own_size = sizes[ucode]
    a = sums[rows, ucode] / np.maximum(own_size - 1, 1)
    other = sums / sizes
    other[rows, ucode] = np.inf
    b = other.min(axis=1)
    denom = np.maximum(a, b)
    s = np.where(denom > 0, (b - a) / np.where(denom > 0, denom, 1.0), 0.0)
    s[own_size == 1] = 0.0
    return float(np.sum(s * weight) / len(x))


def davies_bouldin(points, labels) -> float:
    x = np.asarray(points, dtype=float)
    labels, classes = _check_labels(labels, len(x))
    cents = np.array([x[labels == c].mean(axis=0) for c in classes])
    spread = np.array([np.linalg.norm(x[labels == c] - cent, axis=1).mean()
                       for c, cent in zip(classes, cents)])
    dist = np.linalg.norm(cents[:, None] - cents[None, :], axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = (spread[:, None] + spread[None, :]) / dist
    ratio[~np.isfinite(ratio)] = 0.0
    np.fill_diagonal(ratio, 0.0)
    return float(ratio.max(axis=1).mean())


def calinski_harabasz(points, labels) -> float:
    """Between/within dispersion ratio; ``inf`` when every cluster is a point."""
    x = np.asarray(points, dtype=float)
    labels, classes = _check_labels(labels, len(x))
    k, n = len(classes), len(x)
    mean = x.mean(axis=0)
    between = within = 0.0
    for c in classes:
        xc = x[labels == c]
        cent = xc.mean(axis=0)
        between += len(xc) * np.sum((cent - mean) ** 2)
        within += np.sum((xc - cent) ** 2)
    if within == 0:
        return float("inf")
    return float(between * (n - k) / (within * (k - 1)))


def cluster_scores(points2d, labels):
    """``(silhouette, davies_bouldin, calinski_harabasz)`` for a labelled point set."""
    return (silhouette(points2d, labels), davies_bouldin(points2d, labels),
            calinski_harabasz(points2d, labels))


def _order_of(ordering) -> np.ndarray:
    return np.asarray(getattr(ordering, "removal_order", ordering), dtype=np.int64)


def removal_curve(points, labels, ordering, max_removed: int = MAX_REMOVED) -> np.ndarray:
    """Scores after dropping the first ``m`` nodes of ``ordering``, m = 0..max_removed.

    Returns a (max_removed + 1) x 3 table; rows whose surviving columns have
    no variance are NaN.
    """
    x = np.asarray(points, dtype=float)
    order = _order_of(ordering)
    table = np.full((max_removed + 1, 3), np.nan)
    for m in range(max_removed + 1):
        keep = np.setdiff1d(np.arange(x.shape[1]), order[:m])
        try:
            proj = pca2(x[:, keep])
        except DegenerateData:
            continue
        table[m] = cluster_scores(proj.projected, labels)
    return table


def random_removal_baseline(points, labels, n_samples: int = 50, seed: int = 0,
                            max_removed: int = MAX_REMOVED) -> np.ndarray:
    """Mean removal curve over ``n_samples`` uniformly random node orders."""
    x = np.asarray(points, dtype=float)
    rng = np.random.default_rng(seed)
    tables = [removal_curve(x, labels, rng.permutation(x.shape[1]), max_removed)
              for _ in range(n_samples)]
    with np.errstate(invalid="ignore"):
        return np.nanmean(np.array(tables), axis=0)


def state_labels(labels: np.ndarray) -> np.ndarray:
    """Index 0..7 of each episode's (a, b, c) label combination."""
    bits = (np.asarray(labels) > 0).astype(np.int64)
    return bits[:, 0] * 4 + bits[:, 1] * 2 + bits[:, 2]


def shuffled_silhouette(points2d, labels, n_permutations: int = 100, seed: int = 0) -> float:
    """Mean silhouette under random relabelling (a no-structure baseline)."""
    rng = np.random.default_rng(seed)
    labels = np.asarray(labels)
    return float(np.mean([silhouette(points2d, rng.permutation(labels))
                          for _ in range(n_permutations)]))


def write_scores_csv(rows, path) -> None:
    """``rows``: iterable of (concept, order_kind, table)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["concept", "removed", "order_kind", *SCORE_NAMES])
        for concept, kind, table in rows:
            for m, scores in enumerate(table):
                w.writerow([concept, m, kind, *(repr(float(s)) for s in scores)])


def write_points_csv(projected: np.ndarray, states: np.ndarray, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["episode_id", "pc1", "pc2", "state_label"])
        for e, (p, s) in enumerate(zip(projected, states)):
            w.writerow([e, repr(float(p[0])), repr(float(p[1])), int(s)])
