"""Command line entry point: ``inforelay {gen,train,analyze,sweep,summarize}``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import experiment, recnet, taskgen
from .recnet import TrainConfig
from .taskgen import DelayRegime

log = logging.getLogger("inforelay")


def _train_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("training")
    g.add_argument("--lr", type=float)
    g.add_argument("--batch-size", type=int)
    g.add_argument("--n-train", type=int)
    g.add_argument("--n-eval", type=int)
    g.add_argument("--max-epochs", type=int)
    g.add_argument("--max-restarts", type=int)
    g.add_argument("--target-accuracy", type=float)


def _train_config(args, base: TrainConfig | None = None) -> TrainConfig:
    d = vars(base or TrainConfig()).copy()
    for k in ("lr", "batch_size", "n_train", "n_eval", "max_epochs", "max_restarts",
              "target_accuracy"):
        v = getattr(args, k, None)
        if v is not None:
            d[k] = v
    return TrainConfig(**d)


def cmd_gen(args) -> int:
    data = taskgen.generate_dataset(args.task, args.n_episodes, DelayRegime.parse(args.regime),
                                    args.seed)
    taskgen.write_dataset_csv(data, args.out)
    print(f"wrote {len(data)} episodes to {args.out}")
    return 0


def cmd_train(args) -> int:
    config = _train_config(args)
    regime = DelayRegime.parse(args.regime)
    status = 0
    try:
        params, report = recnet.train(args.arch, args.task, regime, args.seed, config)
        state = "ok"
    except recnet.TrainingFailed as exc:
        params, report, state, status = exc.params, exc.report, "failed", 1
    recnet.save_checkpoint(args.out, params, config, args.seed, task=args.task,
                           regime=regime.name, status=state,
                           final_accuracy=report.final_accuracy,
                           epochs_used=report.epochs_used, restarts=report.restarts)
    print(f"{state}: accuracy {report.final_accuracy:.4f} after {report.epochs_used} epochs "
          f"({report.restarts} restarts) -> {args.out}")
    return status


def cmd_analyze(args) -> int:
    params, _, seed, meta = recnet.load_checkpoint(args.checkpoint)
    task = args.task or meta.get("task")
    regime = DelayRegime.parse(args.regime or meta.get("regime", "random1-5"))
    seed = args.seed if args.seed is not None else (seed or 0)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    analysis = experiment.analyze_network(params, task, regime, seed)
    files = experiment.write_analysis(out, task, analysis)
    acc = experiment.delay_accuracy(params, task, seed)
    experiment._write_rows(out / "delay_accuracy.csv", ["delay", "overall", "acc_a", "acc_b", "acc_c"],
                           [(int(r[0]), *map(float, r[1:])) for r in acc])
    print(f"analysis time {analysis.analysis_time}; r={analysis.r:.4f} overlap={analysis.overlap:.4f}")
    for name in files + ["delay_accuracy.csv"]:
        print(out / name)
    return 0


def cmd_sweep(args) -> int:
    overrides = {
        "tasks": args.tasks, "archs": args.archs, "regimes": args.regimes,
        "replicates": args.replicates, "base_seed": args.base_seed,
        "output_dir": args.out, "workers": args.workers,
    }
    if args.config:
        config = experiment.ExperimentConfig.from_file(args.config, **overrides)
    else:
        config = experiment.ExperimentConfig(**{k: v for k, v in overrides.items() if v is not None})
    config.train = _train_config(args, config.train)
    manifest = experiment.run_experiment(config)
    keys = [c.key for c in config.cells()]
    failed = [k for k in keys if manifest["cells"][k]["status"] != "ok"]
    print(f"{len(keys) - len(failed)}/{len(keys)} cells succeeded; manifest in "
          f"{Path(config.output_dir) / experiment.MANIFEST}")
    for k in failed:
        print(f"failed: {k}")
    return 1 if failed else 0


def cmd_summarize(args) -> int:
    path = Path(args.manifest)
    manifest = experiment.load_manifest(path)
    root = path if path.is_dir() else path.parent
    summary = experiment.summarize(manifest, root)
    for name in experiment.write_summary(summary, args.out or root):
        print(Path(args.out or root) / name)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="inforelay", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a dataset CSV")
    p.add_argument("--task", choices=taskgen.TASKS, required=True)
    p.add_argument("--n-episodes", type=int, default=800)
    p.add_argument("--regime", default="random1-5")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train one network and write a checkpoint")
    p.add_argument("--arch", choices=recnet.ARCHS, required=True)
    p.add_argument("--task", choices=taskgen.TASKS, required=True)
    p.add_argument("--regime", default="random1-5")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    _train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("analyze", help="relay, knockout, temporal and PCA tables for a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--task", choices=taskgen.TASKS)
    p.add_argument("--regime")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("sweep", help="run a replicate sweep")
    p.add_argument("--config", help="JSON experiment config; flags override it")
    p.add_argument("--tasks", nargs="+", choices=taskgen.TASKS)
    p.add_argument("--archs", nargs="+", choices=recnet.ARCHS)
    p.add_argument("--regimes", nargs="+")
    p.add_argument("--replicates", type=int)
    p.add_argument("--base-seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--out")
    _train_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("summarize", help="aggregate a sweep's manifest")
    p.add_argument("--manifest", required=True, help="manifest.json or its directory")
    p.add_argument("--out")
    p.set_defaults(func=cmd_summarize)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, PermissionError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
