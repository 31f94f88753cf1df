"""Compare greedy node ordering against exhaustive 2-node subsets.

Draws random 5-node discrete traces, runs the greedy ordering until two nodes
remain and compares their relayed information with the best of all 10 pairs.

    python scripts/greedy_oracle.py --instances 100 --seed 0
"""
import argparse
import itertools

import numpy as np

from inforelay.infotheory import DiscreteTrace, greedy_ordering, relay_information

N_NODES = 5


def random_trace(rng: np.random.Generator, n_samples: int = 256) -> DiscreteTrace:
    """X_in is a fair bit; each node is a noisy copy of it, an XOR with an
    earlier node, or pure noise; X_out is a noisy readout of a node majority."""
    x_in = rng.integers(0, 2, n_samples)
    nodes = []
    for i in range(N_NODES):
        kind = rng.integers(3)
        noise = (rng.random(n_samples) < rng.uniform(0.0, 0.4)).astype(int)
        if kind == 0 or not nodes:
            nodes.append(x_in ^ noise)
        elif kind == 1:
            nodes.append(x_in ^ nodes[rng.integers(len(nodes))] ^ noise)
        else:
            nodes.append(rng.integers(0, 2, n_samples))
    nodes = np.array(nodes).T
    voters = rng.choice(N_NODES, size=3, replace=False)
    x_out = (nodes[:, voters].sum(axis=1) >= 2).astype(int)
    x_out ^= (rng.random(n_samples) < 0.05).astype(int)
    return DiscreteTrace(np.column_stack([x_in, x_out, nodes]), np.full(N_NODES + 2, 2))


def greedy_pair_vs_best(trace: DiscreteTrace):
    ordering = greedy_ordering(trace)
    pair = set(ordering.removal_order[-2:].tolist())
    everything = set(range(N_NODES))
    greedy = relay_information(trace, pair, everything - pair)
    best = max(relay_information(trace, set(p), everything - set(p))
               for p in itertools.combinations(range(N_NODES), 2))
    return greedy, best


def run(instances: int, seed: int):
    rng = np.random.default_rng(seed)
    return np.array([greedy_pair_vs_best(random_trace(rng)) for _ in range(instances)])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--instances", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    res = run(args.instances, args.seed)
    greedy, best = res[:, 0], res[:, 1]
    ratio = greedy.sum() / best.sum()
    print(f"instances           {args.instances}")
    print(f"greedy == best      {np.mean(np.isclose(greedy, best)):.3f}")
    print(f"sum ratio           {ratio:.4f}")
    print(f"min per-instance    {np.nanmin(greedy / np.where(best > 1e-9, best, np.nan)):.4f}")
    print(f"mean best I_R       {best.mean():.4f} bits")


if __name__ == "__main__":
    main()
