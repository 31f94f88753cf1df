"""Plug-in information measures and the relay-information node ordering.

A :class:`DiscreteTrace` holds samples of discrete variables in columns.  For
relay analysis the layout is fixed: column 0 is the concept label (``X_in``),
column 1 the network's answer for that concept (``X_out``) and columns
``2..`` the binarized hidden nodes.

The relayed information of a node set ``Y_R`` (complement ``Y_0``) is the
conditioned co-information

    I(X_in; X_out; Y_R | Y_0) = I(X_in; X_out | Y_0) - I(X_in; X_out | Y_R, Y_0)

which is signed; it is clamped at zero only when building a
:class:`RelayMatrix`.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

XIN, XOUT = 0, 1
_TIE_TOL = 1e-12
_BINCOUNT_LIMIT = 1 << 22


@dataclass
class DiscreteTrace:
    symbols: np.ndarray   # E x V non-negative ints
    arity: np.ndarray     # V

    def __post_init__(self):
        self.symbols = np.asarray(self.symbols, dtype=np.int64)
        if self.symbols.ndim != 2 or self.symbols.shape[0] == 0:
            raise ValueError("symbols must be a non-empty E x V matrix")
        if self.arity is None:
            self.arity = self.symbols.max(axis=0) + 1
        self.arity = np.asarray(self.arity, dtype=np.int64)
        if self.arity.shape != (self.symbols.shape[1],):
            raise ValueError("need one arity per variable")
        if np.any(self.symbols < 0) or np.any(self.symbols >= self.arity):
            raise ValueError("every symbol must lie in 0..arity-1")

    @classmethod
    def from_columns(cls, *columns, arity=None) -> "DiscreteTrace":
        return cls(np.column_stack(columns), arity)

    @property
    def n_samples(self) -> int:
        return self.symbols.shape[0]

    @property
    def n_nodes(self) -> int:
        return self.symbols.shape[1] - 2

    def node_columns(self, nodes: Iterable[int]) -> list:
        return [2 + int(n) for n in nodes]


def _joint_codes(trace: DiscreteTrace, cols: Sequence[int]):
    """Mixed-radix code per sample, or None when the table is too large."""
    radix = 1
    code = np.zeros(trace.n_samples, dtype=np.int64)
    for c in cols:
        code += trace.symbols[:, c] * radix
        radix *= int(trace.arity[c])
        if radix > _BINCOUNT_LIMIT:
            return None, radix
    return code, radix


def _counts(trace: DiscreteTrace, cols: Sequence[int]) -> np.ndarray:
    code, radix = _joint_codes(trace, cols)
    if code is not None:
        counts = np.bincount(code, minlength=radix)
        return counts[counts > 0]
    _, counts = np.unique(trace.symbols[:, list(cols)], axis=0, return_counts=True)
    return counts


def entropy(trace: DiscreteTrace, vars: Iterable[int]) -> float:
    """Plug-in joint Shannon entropy (bits) of the given columns."""
    cols = sorted(set(int(v) for v in vars))
    if not cols:
        return 0.0
    p = _counts(trace, cols) / trace.n_samples
    return float(-np.sum(p * np.log2(p)))


def conditional_mi(trace: DiscreteTrace, A, B, C=()) -> float:
    """I(A; B | C) = H(A,C) + H(B,C) - H(A,B,C) - H(C), in bits."""
    A, B, C = set(A), set(B), set(C)
    return (entropy(trace, A | C) + entropy(trace, B | C)
            - entropy(trace, A | B | C) - entropy(trace, C))


def _check_partition(trace: DiscreteTrace, relay, rest):
    relay, rest = set(int(n) for n in relay), set(int(n) for n in rest)
    if relay & rest:
        raise ValueError(f"relay and non-relay sets overlap: {sorted(relay & rest)}")
    if relay | rest != set(range(trace.n_nodes)):
        raise ValueError("relay and non-relay sets must cover every node exactly once")
    return relay, rest


def relay_information(trace: DiscreteTrace, relay, rest) -> float:
    """Signed relayed information of node set ``relay`` given the nodes ``rest``."""
    relay, rest = _check_partition(trace, relay, rest)
    y0 = trace.node_columns(rest)
    yall = trace.node_columns(range(trace.n_nodes))
    return (conditional_mi(trace, {XIN}, {XOUT}, y0)
            - conditional_mi(trace, {XIN}, {XOUT}, yall))


@dataclass
class NodeOrdering:
    """Greedy removal sequence.

    ``removal_order[0]`` relays least; the last entry is the node left
    standing.  ``residual_info[i]`` is the relayed information of the set that
    still contains ``removal_order[i]``, just before it goes.  ``per_node_loss``
    is indexed by node id; the survivor's loss is its own residual, so the
    losses sum to the full-set value.
    """

    removal_order: np.ndarray
    residual_info: np.ndarray
    per_node_loss: np.ndarray

    @property
    def full_info(self) -> float:
        return float(self.residual_info[0])

    def top(self, k: int) -> tuple:
        """The ``k`` most-relaying nodes."""
        if k <= 0:
            return ()
        return tuple(int(n) for n in self.removal_order[-k:])

    def is_monotone(self, tol: float = 1e-9) -> bool:
        return bool(np.all(np.diff(self.residual_info) <= tol))


def greedy_ordering(trace: DiscreteTrace) -> NodeOrdering:
    """Repeatedly drop the node whose removal keeps the most relayed information.

    Ties go to the lowest node index.
    """
    n = trace.n_nodes
    if n < 1:
        raise ValueError("trace has no nodes")
    yall = trace.node_columns(range(n))
    floor = conditional_mi(trace, {XIN}, {XOUT}, yall)
    remaining = list(range(n))
    removed: list = []
    current = conditional_mi(trace, {XIN}, {XOUT}, ()) - floor
    order, residuals = [], []
    loss = np.zeros(n)
    while len(remaining) > 1:
        residuals.append(current)
        values = [conditional_mi(trace, {XIN}, {XOUT}, trace.node_columns(removed + [c])) - floor
                  for c in remaining]
        best = max(values)
        pick = next(c for c, v in zip(remaining, values) if v >= best - _TIE_TOL)
        value = values[remaining.index(pick)]
        loss[pick] = current - value
        current = value
        order.append(pick)
        remaining.remove(pick)
        removed.append(pick)
    last = remaining[0]
    order.append(last)
    residuals.append(current)
    loss[last] = current
    return NodeOrdering(np.array(order), np.array(residuals), loss)


def binarize_median(values: np.ndarray) -> np.ndarray:
    """1 where a value is at or above the column median; constant columns -> 0."""
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        return binarize_median(values[:, None])[:, 0]
    med = np.median(values, axis=0)
    out = (values >= med).astype(np.int64)
    out[:, np.ptp(values, axis=0) == 0] = 0
    return out


def discretize(trace, time: int, concept: int, labels: Optional[np.ndarray] = None,
               state: str = "hidden") -> DiscreteTrace:
    """Binary variables for one concept at one step of a recorded trace.

    ``X_out`` is always the sign of the final output for ``concept``.
    """
    states = trace.states(state)
    if not 0 <= time < states.shape[1]:
        raise ValueError(f"time {time} outside 0..{states.shape[1] - 1}")
    labels = trace.labels if labels is None else np.asarray(labels)
    x_in = (labels[:, concept] > 0).astype(np.int64)
    x_out = (trace.outputs[:, concept] > 0).astype(np.int64)
    nodes = binarize_median(states[:, time, :])
    return DiscreteTrace(np.column_stack([x_in, x_out, nodes]), np.full(2 + nodes.shape[1], 2))


@dataclass
class RelayMatrix:
    values: np.ndarray   # concepts x nodes, bits, >= 0
    time: int
    orderings: Optional[list] = None

    def row_totals(self) -> np.ndarray:
        return self.values.sum(axis=1)


def relay_matrix(trace, time: int, labels: Optional[np.ndarray] = None,
                 state: str = "hidden") -> RelayMatrix:
    """Per-concept greedy losses, clamped at zero, as a concepts x nodes matrix."""
    n_concepts = trace.outputs.shape[1]
    rows, orderings = [], []
    for c in range(n_concepts):
        ordering = greedy_ordering(discretize(trace, time, c, labels, state))
        orderings.append(ordering)
        rows.append(np.clip(ordering.per_node_loss, 0.0, None))
    return RelayMatrix(np.array(rows), int(time), orderings)


def write_relay_matrix_csv(matrices, path, concept_names=None) -> None:
    if isinstance(matrices, RelayMatrix):
        matrices = [matrices]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["concept", "node", "bits", "time"])
        for m in matrices:
            for c, row in enumerate(m.values):
                name = concept_names[c] if concept_names else c
                for node, bits in enumerate(row):
                    w.writerow([name, node, repr(float(bits)), m.time])


def write_ordering_csv(ordering: NodeOrdering, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rank", "node", "residual_bits", "loss_bits"])
        for rank, (node, res) in enumerate(zip(ordering.removal_order, ordering.residual_info)):
            w.writerow([rank, int(node), repr(float(res)), repr(float(ordering.per_node_loss[node]))])


def analysis_time(content_length: int, n_steps: int) -> int:
    """First step after the last content input (clipped to the final step)."""
    return min(int(content_length), int(n_steps) - 1)
