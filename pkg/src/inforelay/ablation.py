"""Node knockouts: zero hidden (and LSTM cell) nodes at one step, measure accuracy."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .recnet import HIDDEN, Knockout, NetworkParams, _as_batch, concept_correct, run


def forward_with_knockout(params: NetworkParams, episode_inputs, knockout_set,
                          knockout_time: int, persistent: bool = False) -> np.ndarray:
    x = np.asarray(episode_inputs, dtype=float)
    ko = Knockout(tuple(knockout_set), int(knockout_time), persistent)
    return run(params, x[None], knockout=ko)[2][0]


@dataclass
class _Distinct:
    """Distinct episodes of a batch with multiplicities (many are repeats)."""

    inputs: np.ndarray
    lengths: np.ndarray
    labels: np.ndarray
    counts: np.ndarray
    total: int


def _distinct(dataset) -> _Distinct:
    if isinstance(dataset, _Distinct):
        return dataset
    batch = _as_batch(dataset)
    flat = np.column_stack([batch.inputs.reshape(len(batch), -1), batch.lengths, batch.labels])
    _, first, counts = np.unique(flat, axis=0, return_index=True, return_counts=True)
    return _Distinct(batch.inputs[first], batch.lengths[first], batch.labels[first], counts,
                     len(batch))


def knockout_accuracy(params: NetworkParams, dataset, nodes, knockout_time: int,
                      persistent: bool = False) -> np.ndarray:
    """Per-concept accuracy with ``nodes`` knocked out."""
    data = _distinct(dataset)
    ko = Knockout(tuple(nodes), int(knockout_time), persistent)
    out = run(params, data.inputs, data.lengths, knockout=ko)[2]
    return (concept_correct(out, data.labels) * data.counts[:, None]).sum(axis=0) / data.total


@dataclass
class KnockoutSweep:
    """``accuracy[c, k, j]``: accuracy on concept ``j`` after knocking out the
    ``k`` most-relaying nodes for concept ``c`` (k = 0 is the intact network)."""

    accuracy: np.ndarray
    knockout_time: int

    def drop(self, concept: int, k: int) -> np.ndarray:
        """Accuracy loss on every concept for ``concept``'s top-``k`` knockout."""
        return self.accuracy[concept, 0] - self.accuracy[concept, k]


def knockout_sweep(params: NetworkParams, dataset, orderings: Sequence, knockout_time: int,
                   persistent: bool = False) -> KnockoutSweep:
    batch = _distinct(dataset)
    acc = np.empty((len(orderings), HIDDEN + 1, 3))
    for c, ordering in enumerate(orderings):
        for k in range(HIDDEN + 1):
            acc[c, k] = knockout_accuracy(params, batch, ordering.top(k), knockout_time, persistent)
    return KnockoutSweep(acc, int(knockout_time))


def random_knockout_baseline(params: NetworkParams, dataset, k: int, n_samples: int,
                             knockout_time: int, seed: int, persistent: bool = False) -> np.ndarray:
    """Mean per-concept accuracy over ``n_samples`` uniformly random ``k``-subsets."""
    if not 0 <= k <= HIDDEN:
        raise ValueError(f"k must be in 0..{HIDDEN}, got {k}")
    batch = _distinct(dataset)
    rng = np.random.default_rng(seed)
    total = np.zeros(3)
    for _ in range(n_samples):
        nodes = rng.choice(HIDDEN, size=k, replace=False)
        total += knockout_accuracy(params, batch, nodes, knockout_time, persistent)
    return total / n_samples


def random_baseline_curve(params, dataset, n_samples: int, knockout_time: int, seed: int,
                          persistent: bool = False) -> np.ndarray:
    """(13, 3) table of random-knockout accuracies for k = 0..12."""
    batch = _distinct(dataset)
    return np.array([random_knockout_baseline(params, batch, k, n_samples, knockout_time,
                                              seed + k, persistent)
                     for k in range(HIDDEN + 1)])


def write_sweep_csv(sweep: KnockoutSweep, path, baseline: Optional[np.ndarray] = None,
                    concept_names=None) -> None:
    """One row per (concept, set size).  ``baseline`` is the random-knockout
    accuracy of that concept at the same set size."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["concept", "set_size", "acc_a", "acc_b", "acc_c", "baseline"])
        for c in range(sweep.accuracy.shape[0]):
            name = concept_names[c] if concept_names else c
            for k in range(sweep.accuracy.shape[1]):
                base = repr(float(baseline[k, c])) if baseline is not None else ""
                w.writerow([name, k, *(repr(float(a)) for a in sweep.accuracy[c, k]), base])
