"""Replicate sweeps: train, analyse, and write every result table to disk.

Each (task, arch, regime, replicate) cell gets its own subdirectory and a
seed derived from a stable hash of its coordinates, so any subset of cells
can be rerun and reproduce the same bytes.  ``manifest.json`` records every
file with its SHA-256; cells already listed there are skipped on rerun.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import ablation, infotheory, latent, recnet, taskgen, temporal
from .recnet import NetworkParams, TrainConfig
from .taskgen import DelayRegime

log = logging.getLogger(__name__)

EVAL_DELAYS = tuple(range(10))
MANIFEST = "manifest.json"


@dataclass
class AnalysisConfig:
    n_episodes: int = 800
    n_eval: int = 400
    knockout_samples: int = 50
    removal_samples: int = 50
    persistent_knockout: bool = False
    state: str = "hidden"


@dataclass
class ExperimentConfig:
    tasks: list = field(default_factory=lambda: ["memory"])
    archs: list = field(default_factory=lambda: list(recnet.ARCHS))
    regimes: list = field(default_factory=lambda: ["random1-5"])
    replicates: int = 1
    base_seed: int = 0
    train: TrainConfig = field(default_factory=TrainConfig)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    output_dir: str = "runs"
    workers: int = 1

    def __post_init__(self):
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        for t in self.tasks:
            taskgen.input_width(t)
        for a in self.archs:
            if a not in recnet.GATES:
                raise ValueError(f"unknown architecture {a!r}")
        self.regimes = [DelayRegime.parse(r).name if isinstance(r, str) else r.name
                        for r in self.regimes]
        if isinstance(self.train, dict):
            self.train = TrainConfig.from_dict(self.train)
        if isinstance(self.analysis, dict):
            self.analysis = AnalysisConfig(**self.analysis)

    @classmethod
    def from_file(cls, path, **overrides) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
        d.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)

    def cells(self):
        for task in self.tasks:
            for arch in self.archs:
                for regime in self.regimes:
                    for rep in range(self.replicates):
                        yield Cell(task, arch, regime, rep)


@dataclass(frozen=True)
class Cell:
    task: str
    arch: str
    regime: str
    replicate: int

    @property
    def key(self) -> str:
        return f"{self.task}/{self.arch}/{self.regime}/rep{self.replicate:02d}"

    def seed(self, base_seed: int) -> int:
        digest = hashlib.sha256(f"{base_seed}|{self.key}".encode()).digest()
        return int.from_bytes(digest[:8], "little") >> 1


def analysis_delay(regime: DelayRegime) -> int:
    """Delay of the analysis set: the trained delay, or the longest random one."""
    return regime.max_delay


def sub_seed(seed: int, name: str) -> int:
    digest = hashlib.sha256(f"{seed}|{name}".encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


@dataclass
class NetworkAnalysis:
    trace: recnet.TraceTensor
    batch: taskgen.Batch
    analysis_time: int
    window_start: int
    relay: infotheory.RelayMatrix
    knockout: ablation.KnockoutSweep
    knockout_baseline: np.ndarray
    over_time: list
    r: float
    overlap: float
    concepts_per_node: np.ndarray
    nodes_per_concept: np.ndarray
    projection: latent.Projection
    removal_targeted: list
    removal_random: list


def delay_accuracy(params: NetworkParams, task: str, seed: int, n_eval: int = 400,
                   delays=EVAL_DELAYS) -> np.ndarray:
    """Rows ``(delay, overall, acc_a, acc_b, acc_c)`` for every evaluation delay."""
    rows = []
    for d in delays:
        data = taskgen.generate_dataset(task, n_eval, DelayRegime.fixed_eval(d),
                                        sub_seed(seed, f"eval{d}"))
        overall, per = recnet.evaluate_accuracy(params, data)
        rows.append([d, overall, *per])
    return np.array(rows)


def analyze_network(params: NetworkParams, task: str, regime: DelayRegime, seed: int,
                    config: Optional[AnalysisConfig] = None) -> NetworkAnalysis:
    config = config or AnalysisConfig()
    delay = analysis_delay(regime)
    data = taskgen.generate_dataset(task, config.n_episodes, DelayRegime.fixed_eval(delay),
                                    sub_seed(seed, "analysis"))
    batch = taskgen.to_batch(data)
    trace = recnet.record_traces(params, batch)
    content = taskgen.content_length(task)
    t_a = infotheory.analysis_time(content, trace.n_steps)
    window_start = content - 1

    over_time = temporal.relay_over_time(trace, state=config.state)
    relay = over_time[t_a]
    sweep = ablation.knockout_sweep(params, batch, relay.orderings, t_a, config.persistent_knockout)
    baseline = ablation.random_baseline_curve(params, batch, config.knockout_samples, t_a,
                                              sub_seed(seed, "knockout"),
                                              config.persistent_knockout)
    if trace.n_steps - window_start >= 2:
        r = temporal.cross_time_correlation(over_time, window_start)
        overlap = temporal.information_overlap(over_time, window_start)
    else:
        r = overlap = float("nan")
    per_node, per_concept = temporal.usage_histograms(temporal.kmeans2_binarize(relay))

    points = trace.states(config.state)[:, t_a, :]
    try:
        projection = latent.pca2(points)
    except latent.DegenerateData:
        projection = latent.Projection(np.zeros((len(points), 2)), np.zeros((points.shape[1], 2)),
                                       np.zeros(2))
    targeted, random_ = [], []
    for c, ordering in enumerate(relay.orderings):
        labels = trace.labels[:, c]
        targeted.append(latent.removal_curve(points, labels, ordering))
        random_.append(latent.random_removal_baseline(points, labels, config.removal_samples,
                                                      sub_seed(seed, f"removal{c}")))
    return NetworkAnalysis(trace, batch, t_a, window_start, relay, sweep, baseline, over_time,
                           r, overlap, per_node, per_concept, projection, targeted, random_)


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_rows(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def write_analysis(out: Path, task: str, analysis: NetworkAnalysis) -> list:
    """Write every per-network table into ``out``; returns the file names."""
    names = taskgen.CONCEPT_NAMES[task]
    files = []

    def emit(name):
        files.append(name)
        return out / name

    infotheory.write_relay_matrix_csv(analysis.relay, emit("relay_matrix.csv"), names)
    for c, ordering in enumerate(analysis.relay.orderings):
        infotheory.write_ordering_csv(ordering, emit(f"ordering_{names[c]}.csv"))
    ablation.write_sweep_csv(analysis.knockout, emit("knockout.csv"), analysis.knockout_baseline,
                             names)
    temporal.write_long_csv(analysis.over_time, emit("relay_over_time.csv"), names)
    latent.write_points_csv(analysis.projection.projected,
                            latent.state_labels(analysis.trace.labels), emit("pca_points.csv"))
    rows = []
    for c, name in enumerate(names):
        rows.append((name, "targeted", analysis.removal_targeted[c]))
        rows.append((name, "random", analysis.removal_random[c]))
    latent.write_scores_csv(rows, emit("pca_scores.csv"))
    _write_rows(emit("usage.csv"), ["histogram", "bin", "fraction"],
                [("concepts_per_node", j, float(f)) for j, f in enumerate(analysis.concepts_per_node)]
                + [("nodes_per_concept", j, float(f)) for j, f in enumerate(analysis.nodes_per_concept)])
    return files


def run_cell(cell: Cell, config: ExperimentConfig) -> dict:
    """Train and analyse one cell; returns its manifest entry."""
    out = Path(config.output_dir) / cell.key
    out.mkdir(parents=True, exist_ok=True)
    seed = cell.seed(config.base_seed)
    regime = DelayRegime.parse(cell.regime)
    entry = {"task": cell.task, "arch": cell.arch, "regime": cell.regime,
             "replicate": cell.replicate, "seed": seed, "files": {}}
    try:
        params, report = recnet.train(cell.arch, cell.task, regime, seed, config.train)
        entry["status"] = "ok"
    except recnet.TrainingFailed as exc:
        params, report = exc.params, exc.report
        entry["status"] = "failed"
    files = []
    recnet.save_checkpoint(out / "checkpoint.json", params, config.train, seed, task=cell.task,
                           regime=cell.regime, status=entry["status"])
    files.append("checkpoint.json")
    entry["train"] = {"final_accuracy": report.final_accuracy, "epochs_used": report.epochs_used,
                      "restarts": report.restarts}
    _write_rows(out / "loss_curve.csv", ["epoch", "loss"],
                [(i + 1, float(v)) for i, v in enumerate(report.loss_curve)])
    files.append("loss_curve.csv")
    acc = delay_accuracy(params, cell.task, seed, config.analysis.n_eval)
    _write_rows(out / "delay_accuracy.csv", ["delay", "overall", "acc_a", "acc_b", "acc_c"],
                [(int(r[0]), *map(float, r[1:])) for r in acc])
    files.append("delay_accuracy.csv")
    if entry["status"] == "ok":
        analysis = analyze_network(params, cell.task, regime, seed, config.analysis)
        files += write_analysis(out, cell.task, analysis)
        entry["metrics"] = {
            "r": analysis.r, "overlap": analysis.overlap, "analysis_time": analysis.analysis_time,
            "concepts_per_node": analysis.concepts_per_node.tolist(),
            "nodes_per_concept": analysis.nodes_per_concept.tolist(),
        }
    entry["files"] = {name: {"path": f"{cell.key}/{name}", "sha256": _sha256(out / name)}
                      for name in files}
    return entry


def _load_manifest(path: Path) -> dict:
    if path.exists():
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    return {"cells": {}}


def _write_manifest(path: Path, manifest: dict) -> None:
    tmp = path.with_suffix(".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def _cell_complete(root: Path, entry: dict) -> bool:
    return all((root / f["path"]).exists() and _sha256(root / f["path"]) == f["sha256"]
               for f in entry.get("files", {}).values()) and bool(entry.get("files"))


def _run_cell_job(args):
    cell, config = args
    return cell, run_cell(cell, config)


def run_experiment(config: ExperimentConfig) -> dict:
    """Run every missing cell and return the manifest."""
    root = Path(config.output_dir)
    root.mkdir(parents=True, exist_ok=True)
    if not os.access(root, os.W_OK):
        raise PermissionError(f"output directory {root} is not writable")
    mpath = root / MANIFEST
    manifest = _load_manifest(mpath)
    manifest["config"] = config.to_dict()
    todo = [c for c in config.cells()
            if not (c.key in manifest["cells"] and _cell_complete(root, manifest["cells"][c.key]))]
    log.info("%d cells to run, %d already complete", len(todo),
             sum(1 for _ in config.cells()) - len(todo))
    jobs = [(c, config) for c in todo]
    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(config.workers) as pool:
            for cell, entry in pool.map(_run_cell_job, jobs):
                manifest["cells"][cell.key] = entry
                _write_manifest(mpath, manifest)
    else:
        for job in jobs:
            cell, entry = _run_cell_job(job)
            manifest["cells"][cell.key] = entry
            _write_manifest(mpath, manifest)
    _write_manifest(mpath, manifest)
    return manifest


def load_manifest(path) -> dict:
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST
    return _load_manifest(path)


def standard_error(values) -> float:
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return 0.0
    return float(v.std(ddof=1) / np.sqrt(v.size))


@dataclass
class Summary:
    delay_accuracy: list      # (task, arch, regime, delay, mean, se, n)
    temporal: list            # (task, arch, regime, mean_r, mean_overlap, n)
    usage: list               # (task, arch, histogram, bin, mean_fraction)
    replicates: list          # (arch, task, regime, replicate, r, overlap)


def _read_delay_table(path: Path) -> np.ndarray:
    with open(path, encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return np.array([[float(r["delay"]), float(r["overall"])] for r in rows])


def _nanmean(values) -> float:
    v = np.asarray(values, dtype=float)
    v = v[~np.isnan(v)]
    return float(v.mean()) if v.size else float("nan")


def summarize(manifest: dict, root=None) -> Summary:
    """Aggregate across replicates: delay accuracy mean/SE, r and overlap, usage."""
    cells = manifest.get("cells", {})
    if not cells:
        raise ValueError("manifest lists no cells")
    root = Path(root if root is not None else manifest.get("config", {}).get("output_dir", "."))
    groups: dict = {}
    for key in sorted(cells):
        e = cells[key]
        groups.setdefault((e["task"], e["arch"], e["regime"]), []).append(e)

    delay_rows, temporal_rows, reps = [], [], []
    usage: dict = {}
    for (task, arch, regime), entries in sorted(groups.items()):
        tables = []
        for e in entries:
            f = e["files"].get("delay_accuracy.csv")
            if f is not None:
                tables.append(_read_delay_table(root / f["path"]))
        if tables:
            stack = np.array(tables)
            for i, d in enumerate(stack[0, :, 0]):
                vals = stack[:, i, 1]
                delay_rows.append((task, arch, regime, int(d), float(vals.mean()),
                                   standard_error(vals), len(vals)))
        ok = [e for e in entries if "metrics" in e]
        if ok:
            rs = [e["metrics"]["r"] for e in ok]
            ovs = [e["metrics"]["overlap"] for e in ok]
            temporal_rows.append((task, arch, regime, _nanmean(rs), _nanmean(ovs), len(ok)))
            for e in ok:
                reps.append((arch, task, regime, e["replicate"], e["metrics"]["r"],
                             e["metrics"]["overlap"]))
                for hist in ("concepts_per_node", "nodes_per_concept"):
                    usage.setdefault((task, arch, hist), []).append(e["metrics"][hist])
    usage_rows = []
    for (task, arch, hist), vals in sorted(usage.items()):
        mean = np.mean(np.array(vals), axis=0)
        usage_rows += [(task, arch, hist, j, float(v)) for j, v in enumerate(mean)]
    return Summary(delay_rows, temporal_rows, usage_rows, reps)


def write_summary(summary: Summary, out) -> list:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    _write_rows(out / "summary_delay_accuracy.csv",
                ["task", "arch", "regime", "delay", "mean", "se", "n"], summary.delay_accuracy)
    _write_rows(out / "summary_temporal.csv",
                ["task", "arch", "regime", "mean_r", "mean_overlap", "n"], summary.temporal)
    _write_rows(out / "summary_usage.csv", ["task", "arch", "histogram", "bin", "mean_fraction"],
                summary.usage)
    temporal.write_summary_csv(
        [dict(zip(("arch", "task", "regime", "replicate", "r", "overlap"), row))
         for row in summary.replicates], out / "replicate_temporal.csv")
    return ["summary_delay_accuracy.csv", "summary_temporal.csv", "summary_usage.csv",
            "replicate_temporal.csv"]
