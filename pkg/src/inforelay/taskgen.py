"""Synthetic time-series classification tasks.

Two tasks, each with three binary concepts labelled in {-1, +1}:

* ``memory``: three input channels; channel ``i`` carries a single pulse of
  value ``label_i`` at its injection time, zeros elsewhere.
* ``block``: a 16-pixel circular 1-D camera watches a block move for 10
  frames.  Concepts are direction (-1 left, +1 right), size (-1 -> 2 px,
  +1 -> 4 px) and brightness (-1 -> 0.4, +1 -> 1.0).

Every episode ends with ``delay`` all-zero input rows before the answer is due.
"""
from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

MEMORY_CHANNELS = 3
MEMORY_INJECTION_TIMES = (4, 7, 10)

CAMERA_WIDTH = 16
BLOCK_FRAMES = 10
BLOCK_SIZES = {-1: 2, +1: 4}
BLOCK_VALUES = {-1: 0.4, +1: 1.0}

TASKS = ("memory", "block")
CONCEPT_NAMES = {
    "memory": ("A", "B", "C"),
    "block": ("direction", "size", "brightness"),
}


class ConceptLabels(NamedTuple):
    a: int
    b: int
    c: int

    def check(self) -> "ConceptLabels":
        for v in self:
            if v not in (-1, 1):
                raise ValueError(f"concept labels must be -1 or +1, got {tuple(self)}")
        return self


ALL_LABELS = tuple(ConceptLabels(*c) for c in itertools.product((-1, 1), repeat=3))


@dataclass(frozen=True)
class DelayRegime:
    """How many zero rows follow the content of each episode.

    ``kind`` is ``"fixed"`` (k in 1..5), ``"random"`` (uniform over
    ``low..high``) or ``"eval"`` (k in 0..9, evaluation only).
    """

    kind: str
    k: int = 0
    low: int = 1
    high: int = 5

    def __post_init__(self):
        if self.kind == "fixed":
            if not 1 <= self.k <= 5:
                raise ValueError(f"fixed delay must be in 1..5, got {self.k}")
        elif self.kind == "eval":
            if not 0 <= self.k <= 9:
                raise ValueError(f"evaluation delay must be in 0..9, got {self.k}")
        elif self.kind == "random":
            if not 0 <= self.low <= self.high:
                raise ValueError("random delay needs 0 <= low <= high")
        else:
            raise ValueError(f"unknown delay regime {self.kind!r}")

    @classmethod
    def fixed(cls, k: int) -> "DelayRegime":
        return cls("fixed", k=k)

    @classmethod
    def uniform_random(cls, low: int = 1, high: int = 5) -> "DelayRegime":
        return cls("random", low=low, high=high)

    @classmethod
    def fixed_eval(cls, k: int) -> "DelayRegime":
        return cls("eval", k=k)

    @classmethod
    def parse(cls, text: str) -> "DelayRegime":
        """Parse ``"fixed3"``, ``"random"``, ``"random1-5"`` or ``"eval7"``."""
        text = text.strip().lower()
        if text.startswith("fixed"):
            return cls.fixed(int(text[5:]))
        if text.startswith("eval"):
            return cls.fixed_eval(int(text[4:]))
        if text.startswith("random"):
            rest = text[6:]
            if not rest:
                return cls.uniform_random()
            lo, hi = rest.split("-")
            return cls.uniform_random(int(lo), int(hi))
        raise ValueError(f"cannot parse delay regime {text!r}")

    @property
    def name(self) -> str:
        if self.kind == "random":
            return f"random{self.low}-{self.high}"
        return f"{self.kind}{self.k}"

    @property
    def max_delay(self) -> int:
        return self.high if self.kind == "random" else self.k

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "random":
            return rng.integers(self.low, self.high + 1, size=n)
        return np.full(n, self.k, dtype=np.int64)


@dataclass
class Episode:
    inputs: np.ndarray
    labels: ConceptLabels
    delay: int
    injection_times: tuple = field(default_factory=tuple)

    @property
    def length(self) -> int:
        return self.inputs.shape[0]

    @property
    def content_length(self) -> int:
        return self.inputs.shape[0] - self.delay


def input_width(task: str) -> int:
    if task == "memory":
        return MEMORY_CHANNELS
    if task == "block":
        return CAMERA_WIDTH
    raise ValueError(f"unknown task {task!r}")


def content_length(task: str) -> int:
    if task == "memory":
        return MEMORY_INJECTION_TIMES[-1]
    if task == "block":
        return BLOCK_FRAMES
    raise ValueError(f"unknown task {task!r}")


def injection_steps(task: str) -> tuple:
    """0-based step at which each concept first becomes observable."""
    if task == "memory":
        return tuple(t - 1 for t in MEMORY_INJECTION_TIMES)
    # direction needs two frames; size and brightness are visible in frame 0
    return (1, 0, 0)


def generate_memory_episode(labels, delay: int, injection_times=MEMORY_INJECTION_TIMES,
                            rng_seed: int | None = None) -> Episode:
    """Memory-task episode.  ``rng_seed`` is accepted for a uniform signature; the
    encoding is deterministic."""
    labels = ConceptLabels(*labels).check()
    times = tuple(int(t) for t in injection_times)
    if len(times) != 3:
        raise ValueError("need exactly three injection times")
    if times[0] < 1 or any(b <= a for a, b in zip(times, times[1:])):
        raise ValueError(f"injection times must be strictly increasing and >= 1, got {times}")
    if delay < 0:
        raise ValueError("delay must be >= 0")
    x = np.zeros((times[2] + delay, MEMORY_CHANNELS))
    for i, (t, v) in enumerate(zip(times, labels)):
        x[t - 1, i] = v
    return Episode(x, labels, int(delay), times)


def generate_block_episode(labels, delay: int, rng_seed: int | None = None,
                           start: int | None = None) -> Episode:
    """Block-task episode.  The seed only picks the starting pixel; ``start``
    overrides it."""
    labels = ConceptLabels(*labels).check()
    if delay < 0:
        raise ValueError("delay must be >= 0")
    if start is None:
        start = int(np.random.default_rng(rng_seed).integers(CAMERA_WIDTH))
    direction, size, value = labels.a, BLOCK_SIZES[labels.b], BLOCK_VALUES[labels.c]
    x = np.zeros((BLOCK_FRAMES + delay, CAMERA_WIDTH))
    for f in range(BLOCK_FRAMES):
        left = start + direction * f
        x[f, (left + np.arange(size)) % CAMERA_WIDTH] = value
    return Episode(x, labels, int(delay))


def _balanced_labels(n_episodes: int, rng: np.random.Generator) -> list:
    if n_episodes <= 0 or n_episodes % 8:
        raise ValueError(f"n_episodes must be a positive multiple of 8, got {n_episodes}")
    labels = list(ALL_LABELS) * (n_episodes // 8)
    order = rng.permutation(n_episodes)
    return [labels[i] for i in order]


def generate_dataset(task: str, n_episodes: int, regime: DelayRegime, rng_seed: int) -> list:
    """Class-balanced list of episodes; deterministic in ``rng_seed``."""
    input_width(task)
    rng = np.random.default_rng(rng_seed)
    labels = _balanced_labels(n_episodes, rng)
    delays = regime.sample(rng, n_episodes)
    if task == "memory":
        return [generate_memory_episode(lab, int(d)) for lab, d in zip(labels, delays)]
    starts = rng.integers(CAMERA_WIDTH, size=n_episodes)
    return [generate_block_episode(lab, int(d), start=int(s))
            for lab, d, s in zip(labels, delays, starts)]


@dataclass
class Batch:
    """Padded array view of a dataset.

    ``inputs`` is E x T_max x D, zero-padded; since every episode ends in zero
    rows, episode ``e`` is exactly ``inputs[e, :lengths[e]]``.
    """

    inputs: np.ndarray
    lengths: np.ndarray
    labels: np.ndarray
    delays: np.ndarray

    def __len__(self):
        return len(self.lengths)

    @property
    def content_lengths(self) -> np.ndarray:
        return self.lengths - self.delays

    def with_delays(self, delays: np.ndarray) -> "Batch":
        """Same content with different tail lengths (the padding is all zeros)."""
        delays = np.asarray(delays, dtype=np.int64)
        lengths = self.content_lengths + delays
        t_max = int(lengths.max())
        x = self.inputs
        if t_max > x.shape[1]:
            x = np.concatenate([x, np.zeros((x.shape[0], t_max - x.shape[1], x.shape[2]))], axis=1)
        else:
            x = x[:, :t_max]
        return Batch(x, lengths, self.labels, delays)

    def subset(self, idx) -> "Batch":
        lengths = self.lengths[idx]
        t_max = int(lengths.max())
        return Batch(self.inputs[idx, :t_max], lengths, self.labels[idx], self.delays[idx])


def to_batch(episodes: Sequence[Episode]) -> Batch:
    if not episodes:
        raise ValueError("empty dataset")
    lengths = np.array([ep.length for ep in episodes], dtype=np.int64)
    d = episodes[0].inputs.shape[1]
    x = np.zeros((len(episodes), int(lengths.max()), d))
    for e, ep in enumerate(episodes):
        if ep.inputs.shape[1] != d:
            raise ValueError("episodes have different input widths")
        x[e, :ep.length] = ep.inputs
    labels = np.array([tuple(ep.labels) for ep in episodes], dtype=np.int64)
    delays = np.array([ep.delay for ep in episodes], dtype=np.int64)
    return Batch(x, lengths, labels, delays)


def write_dataset_csv(episodes: Sequence[Episode], path) -> None:
    d = episodes[0].inputs.shape[1]
    header = ["episode_id", "t"] + [f"ch{i}" for i in range(d)] + ["label_a", "label_b", "label_c", "delay"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for e, ep in enumerate(episodes):
            for t in range(ep.length):
                w.writerow([e, t, *(repr(float(v)) for v in ep.inputs[t]), *ep.labels, ep.delay])


def read_dataset_csv(path) -> list:
    rows: dict = {}
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.DictReader(fh)
        chans = [c for c in r.fieldnames if c.startswith("ch")]
        for row in r:
            rows.setdefault(int(row["episode_id"]), []).append(row)
    episodes = []
    for e in sorted(rows):
        rs = sorted(rows[e], key=lambda row: int(row["t"]))
        x = np.array([[float(row[c]) for c in chans] for row in rs])
        first = rs[0]
        labels = ConceptLabels(int(first["label_a"]), int(first["label_b"]), int(first["label_c"]))
        times = MEMORY_INJECTION_TIMES if len(chans) == MEMORY_CHANNELS else ()
        episodes.append(Episode(x, labels, int(first["delay"]), times))
    return episodes
