"""Small recurrent classifiers (RNN, GRU, LSTM) trained with BPTT and Adam.

All networks have 12 recurrent nodes and a tanh readout to 3 outputs, read
once at the last step of each episode.  Weights use the row-vector
convention ``x @ W``; gate blocks are concatenated along the last axis:

* RNN:  ``[h]``
* GRU:  ``[r, z, n]`` with ``n = tanh(x Wn + r * (h Un) + bn)`` and
  ``h' = (1 - z) * n + z * h``
* LSTM: ``[i, f, o, g]`` with ``c' = f * c + i * g`` and ``h' = o * tanh(c')``
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import taskgen
from .taskgen import Batch, DelayRegime

log = logging.getLogger(__name__)

HIDDEN = 12
OUTPUTS = 3
ARCHS = ("RNN", "GRU", "LSTM")
GATES = {"RNN": 1, "GRU": 3, "LSTM": 4}
PARAM_NAMES = ("Wx", "Wh", "b", "Wo", "bo")


class TrainingFailed(RuntimeError):
    def __init__(self, message, report, params=None):
        super().__init__(message)
        self.report = report
        self.params = params


@dataclass
class NetworkParams:
    arch: str
    Wx: np.ndarray  # D x (G*H)
    Wh: np.ndarray  # H x (G*H)
    b: np.ndarray   # G*H
    Wo: np.ndarray  # H x 3
    bo: np.ndarray  # 3

    def __post_init__(self):
        if self.arch not in GATES:
            raise ValueError(f"unknown architecture {self.arch!r}")
        gh = GATES[self.arch] * HIDDEN
        if (self.Wh.shape != (HIDDEN, gh) or self.Wx.shape[1] != gh or self.b.shape != (gh,)
                or self.Wo.shape != (HIDDEN, OUTPUTS) or self.bo.shape != (OUTPUTS,)):
            raise ValueError(f"parameter shapes do not match a {self.arch} with {HIDDEN} nodes")

    @property
    def input_width(self) -> int:
        return self.Wx.shape[0]

    def arrays(self) -> dict:
        return {k: getattr(self, k) for k in PARAM_NAMES}

    def replace(self, **arrays) -> "NetworkParams":
        d = self.arrays()
        d.update(arrays)
        return NetworkParams(self.arch, **d)

    def copy(self) -> "NetworkParams":
        return NetworkParams(self.arch, **{k: v.copy() for k, v in self.arrays().items()})

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.arrays().values())


def init_params(arch: str, input_width: int, rng: np.random.Generator) -> NetworkParams:
    """Uniform in +-1/sqrt(fan_in) per layer (recurrent fan-in is the hidden width)."""
    gh = GATES[arch] * HIDDEN
    k = 1.0 / math.sqrt(HIDDEN)
    return NetworkParams(
        arch,
        Wx=rng.uniform(-k, k, (input_width, gh)),
        Wh=rng.uniform(-k, k, (HIDDEN, gh)),
        b=rng.uniform(-k, k, gh),
        Wo=rng.uniform(-k, k, (HIDDEN, OUTPUTS)),
        bo=rng.uniform(-k, k, OUTPUTS),
    )


def zero_params(arch: str, input_width: int) -> NetworkParams:
    gh = GATES[arch] * HIDDEN
    return NetworkParams(arch, np.zeros((input_width, gh)), np.zeros((HIDDEN, gh)),
                         np.zeros(gh), np.zeros((HIDDEN, OUTPUTS)), np.zeros(OUTPUTS))


def _sigmoid(a):
    return 0.5 * (1.0 + np.tanh(0.5 * a))


@dataclass
class Knockout:
    """Zero ``nodes`` of the hidden (and cell) state right after step ``time``.

    With ``persistent`` the nodes are held at zero for every later step too.
    """

    nodes: tuple
    time: int
    persistent: bool = False

    def __post_init__(self):
        nodes = tuple(sorted({int(n) for n in self.nodes}))
        if any(n < 0 or n >= HIDDEN for n in nodes):
            raise ValueError(f"knockout node indices must be in 0..{HIDDEN - 1}, got {nodes}")
        self.nodes = nodes

    def active(self, t: int) -> bool:
        return bool(self.nodes) and (t == self.time or (self.persistent and t > self.time))


def run(params: NetworkParams, inputs: np.ndarray, lengths: Optional[np.ndarray] = None,
        knockout: Optional[Knockout] = None, keep_cache: bool = False):
    """Batched forward pass.

    Returns ``(hidden, cell, outputs, cache)``: hidden and cell are B x T x H
    (cell is None unless LSTM), outputs is B x 3 read at ``lengths - 1``.
    """
    x = np.asarray(inputs, dtype=float)
    if x.ndim != 3 or x.shape[2] != params.input_width:
        raise ValueError(f"expected B x T x {params.input_width} inputs, got shape {x.shape}")
    B, T, _ = x.shape
    if lengths is None:
        lengths = np.full(B, T, dtype=np.int64)
    lengths = np.asarray(lengths, dtype=np.int64)
    if np.any(lengths < 1) or np.any(lengths > T):
        raise ValueError("episode lengths out of range")
    if knockout is not None and not 0 <= knockout.time < T:
        raise ValueError(f"knockout time {knockout.time} outside 0..{T - 1}")
    H = HIDDEN
    ax_all = x @ params.Wx + params.b  # B x T x GH
    hidden = np.empty((B, T, H))
    cell = np.empty((B, T, H)) if params.arch == "LSTM" else None
    gates = [] if keep_cache else None
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    Wh = params.Wh
    for t in range(T):
        ax = ax_all[:, t]
        if params.arch == "RNN":
            h = np.tanh(ax + h @ Wh)
            g = None
        elif params.arch == "GRU":
            ah = h @ Wh
            rz = _sigmoid(ax[:, :2 * H] + ah[:, :2 * H])
            r, z = rz[:, :H], rz[:, H:]
            n = np.tanh(ax[:, 2 * H:] + r * ah[:, 2 * H:])
            g = (r, z, n, ah[:, 2 * H:])
            h = (1.0 - z) * n + z * h
        else:
            a = ax + h @ Wh
            ifo = _sigmoid(a[:, :3 * H])
            i, f, o = ifo[:, :H], ifo[:, H:2 * H], ifo[:, 2 * H:]
            gg = np.tanh(a[:, 3 * H:])
            c = f * c + i * gg
            tc = np.tanh(c)
            h = o * tc
            g = (i, f, gg, o, tc)
        if knockout is not None and knockout.active(t):
            h = h.copy()
            h[:, knockout.nodes] = 0.0
            if params.arch == "LSTM":
                c = c.copy()
                c[:, knockout.nodes] = 0.0
        hidden[:, t] = h
        if cell is not None:
            cell[:, t] = c
        if keep_cache:
            gates.append(g)
    last = hidden[np.arange(B), lengths - 1]
    outputs = np.tanh(last @ params.Wo + params.bo)
    cache = (x, lengths, hidden, cell, gates) if keep_cache else None
    return hidden, cell, outputs, cache


def forward(params: NetworkParams, episode_inputs: np.ndarray):
    """Single episode: ``(hidden T x 12, cell T x 12 or None, output 3-vector)``."""
    x = np.asarray(episode_inputs, dtype=float)
    if x.ndim != 2:
        raise ValueError("episode inputs must be a T x D matrix")
    hidden, cell, out, _ = run(params, x[None])
    return hidden[0], None if cell is None else cell[0], out[0]


def loss_and_gradients(params: NetworkParams, inputs: np.ndarray, lengths: np.ndarray,
                       targets: np.ndarray):
    """Mean squared error over episodes and outputs, with exact BPTT gradients."""
    hidden, cell, y, cache = run(params, inputs, lengths, keep_cache=True)
    x, lengths, hidden, cell, gates = cache
    B, T, _ = x.shape
    H = HIDDEN
    targets = np.asarray(targets, dtype=float)
    diff = y - targets
    loss = float(np.mean(diff ** 2))
    dpre = (2.0 / diff.size) * diff * (1.0 - y ** 2)
    rows = np.arange(B)
    last = hidden[rows, lengths - 1]
    grads = {
        "Wo": last.T @ dpre,
        "bo": dpre.sum(axis=0),
    }
    dlast = dpre @ params.Wo.T
    inject = np.zeros((T, B, H))
    inject[lengths - 1, rows] = dlast

    Wh = params.Wh
    dWh = np.zeros_like(Wh)
    da_all = np.empty((B, T, Wh.shape[1]))
    dh = np.zeros((B, H))
    dc = np.zeros((B, H))
    zeros = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        dh = dh + inject[t]
        h_prev = hidden[:, t - 1] if t > 0 else zeros
        if params.arch == "RNN":
            h = hidden[:, t]
            da = dh * (1.0 - h ** 2)
            dah = da
            dh = da @ Wh.T
        elif params.arch == "GRU":
            r, z, n, ahn = gates[t]
            dn = dh * (1.0 - z)
            dz = dh * (h_prev - n)
            dan = dn * (1.0 - n ** 2)
            dr = dan * ahn
            dar = dr * r * (1.0 - r)
            daz = dz * z * (1.0 - z)
            da = np.concatenate([dar, daz, dan], axis=1)
            dah = np.concatenate([dar, daz, dan * r], axis=1)
            dh = dh * z + dah @ Wh.T
        else:
            i, f, gg, o, tc = gates[t]
            c_prev = cell[:, t - 1] if t > 0 else zeros
            do = dh * tc
            dc = dc + dh * o * (1.0 - tc ** 2)
            da = np.concatenate([
                dc * gg * i * (1.0 - i),
                dc * c_prev * f * (1.0 - f),
                do * o * (1.0 - o),
                dc * i * (1.0 - gg ** 2),
            ], axis=1)
            dah = da
            dc = dc * f
            dh = da @ Wh.T
        da_all[:, t] = da
        dWh += h_prev.T @ dah
    grads["Wx"] = np.einsum("btd,btg->dg", x, da_all)
    grads["b"] = da_all.sum(axis=(0, 1))
    grads["Wh"] = dWh
    return loss, grads


def bptt_gradients(params: NetworkParams, episodes, targets=None) -> dict:
    """Gradient of the final-step MSE w.r.t. every parameter array.

    ``episodes`` is a Batch or a sequence of Episodes; ``targets`` default to
    the episodes' labels.
    """
    batch = episodes if isinstance(episodes, Batch) else taskgen.to_batch(episodes)
    if targets is None:
        targets = batch.labels
    return loss_and_gradients(params, batch.inputs, batch.lengths, targets)[1]


@dataclass
class AdamState:
    m: dict
    v: dict
    step: int = 0

    @classmethod
    def zeros_like(cls, params: NetworkParams) -> "AdamState":
        arrays = params.arrays()
        return cls({k: np.zeros_like(a) for k, a in arrays.items()},
                   {k: np.zeros_like(a) for k, a in arrays.items()})


def adam_step(params: NetworkParams, grads: dict, state: AdamState, lr=1e-3, beta1=0.9,
              beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update; returns new ``(params, state)``."""
    step = state.step + 1
    new, m, v = {}, {}, {}
    for k, p in params.arrays().items():
        g = grads[k]
        m[k] = beta1 * state.m[k] + (1.0 - beta1) * g
        v[k] = beta2 * state.v[k] + (1.0 - beta2) * g * g
        mhat = m[k] / (1.0 - beta1 ** step)
        vhat = v[k] / (1.0 - beta2 ** step)
        new[k] = p - lr * mhat / (np.sqrt(vhat) + eps)
    return params.replace(**new), AdamState(m, v, step)


def _as_batch(dataset) -> Batch:
    if isinstance(dataset, Batch):
        return dataset
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    return taskgen.to_batch(dataset)


def concept_correct(outputs: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Per-episode, per-concept correctness; an output of exactly 0 is wrong."""
    return np.sign(outputs) == np.asarray(labels)


def evaluate_accuracy(params: NetworkParams, dataset, knockout: Optional[Knockout] = None):
    """``(overall, per_concept)`` accuracy of sign(output) against the labels."""
    batch = _as_batch(dataset)
    if len(batch) == 0:
        raise ValueError("empty dataset")
    out = run(params, batch.inputs, batch.lengths, knockout=knockout)[2]
    per = concept_correct(out, batch.labels).mean(axis=0)
    return float(per.mean()), per


@dataclass
class TraceTensor:
    hidden: np.ndarray            # E x T x 12
    cell: Optional[np.ndarray]    # E x T x 12, LSTM only
    outputs: np.ndarray           # E x 3
    labels: np.ndarray            # E x 3, in {-1, +1}

    @property
    def n_steps(self) -> int:
        return self.hidden.shape[1]

    def states(self, kind: str = "hidden") -> np.ndarray:
        if kind == "cell":
            if self.cell is None:
                raise ValueError("only LSTM traces carry cell states")
            return self.cell
        return self.hidden


def record_traces(params: NetworkParams, dataset) -> TraceTensor:
    batch = _as_batch(dataset)
    if np.any(batch.lengths != batch.lengths[0]):
        raise ValueError("all episodes in a trace must share the same length")
    hidden, cell, out, _ = run(params, batch.inputs, batch.lengths)
    return TraceTensor(hidden, cell, out, batch.labels.copy())


@dataclass
class TrainConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 64
    n_train: int = 800
    n_eval: int = 400
    max_epochs: int = 2000
    max_restarts: int = 5
    target_accuracy: float = 0.98

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})


@dataclass
class TrainReport:
    final_accuracy: float
    epochs_used: int
    restarts: int
    loss_curve: list = field(default_factory=list)
    initial_loss: float = float("nan")
    epochs_per_attempt: list = field(default_factory=list)


def train(arch: str, task: str, regime: DelayRegime, rng_seed: int,
          config: Optional[TrainConfig] = None, progress=None):
    """Train until the held-out accuracy reaches the target.

    A fresh network is drawn whenever ``max_epochs`` pass without success, up to
    ``max_restarts`` times; then :class:`TrainingFailed` is raised carrying the
    best attempt's report.
    """
    config = config or TrainConfig()
    if arch not in GATES:
        raise ValueError(f"unknown architecture {arch!r}")
    ss = np.random.SeedSequence(rng_seed)
    data_seed, eval_seed, run_seed = (int(s.generate_state(1)[0]) for s in ss.spawn(3))
    rng = np.random.default_rng(run_seed)
    train_batch = taskgen.to_batch(taskgen.generate_dataset(task, config.n_train, regime, data_seed))
    eval_batch = taskgen.to_batch(taskgen.generate_dataset(task, config.n_eval, regime, eval_seed))
    d = taskgen.input_width(task)
    n = len(train_batch)
    targets = train_batch.labels.astype(float)

    best = None
    attempts = []
    for attempt in range(config.max_restarts + 1):
        params = init_params(arch, d, rng)
        state = AdamState.zeros_like(params)
        init_loss, _ = loss_and_gradients(params, train_batch.inputs, train_batch.lengths, targets)
        curve = []
        acc = 0.0
        for epoch in range(1, config.max_epochs + 1):
            data = train_batch
            if regime.kind == "random":
                data = train_batch.with_delays(regime.sample(rng, n))
            order = rng.permutation(n)
            total = 0.0
            for s in range(0, n, config.batch_size):
                idx = order[s:s + config.batch_size]
                mb = data.subset(idx)
                loss, grads = loss_and_gradients(params, mb.inputs, mb.lengths, targets[idx])
                params, state = adam_step(params, grads, state, config.lr, config.beta1,
                                          config.beta2, config.eps)
                total += loss * len(idx)
            curve.append(total / n)
            acc = evaluate_accuracy(params, eval_batch)[0]
            if progress is not None:
                progress(attempt, epoch, curve[-1], acc)
            if acc >= config.target_accuracy:
                break
        attempts.append(epoch)
        report = TrainReport(acc, epoch, attempt, curve, init_loss, list(attempts))
        if acc >= config.target_accuracy:
            log.info("%s/%s/%s seed=%s: accuracy %.3f after %d epochs, %d restarts",
                     arch, task, regime.name, rng_seed, acc, epoch, attempt)
            return params, report
        log.info("%s/%s/%s seed=%s: attempt %d stalled at %.3f", arch, task, regime.name,
                 rng_seed, attempt, acc)
        if best is None or acc > best[1].final_accuracy:
            best = (params, report)
    best[1].epochs_per_attempt = list(attempts)
    raise TrainingFailed(f"{arch}/{task}/{regime.name}: no network reached "
                         f"{config.target_accuracy} within {config.max_restarts} restarts",
                         best[1], best[0])


def _encode_array(a: np.ndarray) -> dict:
    return {"shape": list(a.shape), "data": [float(v) for v in a.ravel()]}


def _decode_array(d: dict) -> np.ndarray:
    return np.array(d["data"], dtype=float).reshape(d["shape"])


def save_checkpoint(path, params: NetworkParams, config: Optional[TrainConfig] = None,
                    seed: Optional[int] = None, **meta) -> None:
    doc = {
        "format": "inforelay-checkpoint/1",
        "arch": params.arch,
        "input_width": params.input_width,
        "hidden": HIDDEN,
        "outputs": OUTPUTS,
        "params": {k: _encode_array(v) for k, v in params.arrays().items()},
        "config": asdict(config) if config is not None else None,
        "seed": seed,
        "meta": meta,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_checkpoint(path):
    """Returns ``(params, config, seed, meta)``."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    params = NetworkParams(doc["arch"], **{k: _decode_array(doc["params"][k]) for k in PARAM_NAMES})
    config = TrainConfig.from_dict(doc["config"]) if doc.get("config") else None
    return params, config, doc.get("seed"), doc.get("meta", {})
