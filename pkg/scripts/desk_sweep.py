"""Desk-scale replicate sweep used by the acceptance suite.

memory task: random delays plus every fixed delay 1..5; block task: random
delays only.  Five replicates per cell, three architectures.  Completed cells
are skipped, so rerunning only fills gaps.

    python3 scripts/desk_sweep.py [--out .acceptance_runs] [--workers N]
"""
from __future__ import annotations

import argparse
import logging
import sys
import time

from inforelay.experiment import ExperimentConfig, run_experiment, summarize, write_summary

DEFAULT_OUT = ".acceptance_runs"
REPLICATES = 5
GROUPS = (
    ("memory", ["random1-5", "fixed1", "fixed2", "fixed3", "fixed4", "fixed5"]),
    ("block", ["random1-5"]),
)


def configs(out: str = DEFAULT_OUT, workers: int = 1, replicates: int = REPLICATES,
            base_seed: int = 0):
    return [ExperimentConfig(tasks=[task], regimes=list(regimes), replicates=replicates,
                             base_seed=base_seed, output_dir=out, workers=workers)
            for task, regimes in GROUPS]


def run(out: str = DEFAULT_OUT, workers: int = 1, replicates: int = REPLICATES) -> dict:
    manifest = None
    for config in configs(out, workers, replicates):
        manifest = run_experiment(config)
    return manifest


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=DEFAULT_OUT)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--replicates", type=int, default=REPLICATES)
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    t0 = time.time()
    manifest = run(args.out, args.workers, args.replicates)
    write_summary(summarize(manifest, args.out), args.out)
    cells = manifest["cells"].values()
    failed = sum(e["status"] != "ok" for e in cells)
    print(f"{len(manifest['cells'])} cells, {failed} failed, {time.time() - t0:.0f} s")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
