#!/usr/bin/env python3
"""Sweep the exact-embedding construction over tree shapes and report the
worst CNN-vs-oracle deviation per configuration as CSV on stdout.

    python scripts/embedding_sweep.py --levels 1 2 3 --trials 50 --seed 1
"""

import argparse
import sys
import time

from hmaxconv.dense import init_dense
from hmaxconv.embedding import build_cnn_from_hierarchy, embedding_deviation, plan_embedding
from hmaxconv.hierarchy import HierTree
from hmaxconv.images import Image
from hmaxconv.rng import RngState


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--levels", type=int, nargs="+", default=[1, 2, 3])
    parser.add_argument("--net-layers", type=int, nargs="+", default=[1, 2])
    parser.add_argument("--net-widths", type=int, nargs="+", default=[2, 4, 6])
    parser.add_argument("--trials", type=int, default=25)
    parser.add_argument("--seed", type=int, default=1)
    args = parser.parse_args()

    rng = RngState(args.seed)
    print("level,net_layers,net_width,layers,channels,max_deviation,seconds")
    for level in args.levels:
        for depth in args.net_layers:
            for width in args.net_widths:
                sub = rng.derive(level * 10_000 + depth * 100 + width)
                nodes = {
                    (k, s): init_dense(4, [width] * depth, sub)
                    for k in range(1, level + 1)
                    for s in range(1, 4 ** (level - k) + 1)
                }
                tree = HierTree(level=level, nodes=nodes)
                plan = plan_embedding(level, depth, width)
                started = time.time()
                net, _ = build_cnn_from_hierarchy(tree, plan)
                side = 2**level
                images = [
                    Image(sub.derive(t).uniform_array(0, 1, (
                        side + (3 if t % 2 else 0),
                        side + (3 if t % 3 else 0),
                    )))
                    for t in range(args.trials)
                ]
                dev = embedding_deviation(net, tree, images)
                print(
                    f"{level},{depth},{width},{plan.total_layers},"
                    f"{plan.channels_per_layer},{dev:.3e},"
                    f"{time.time() - started:.1f}"
                )
    return 0


if __name__ == "__main__":
    sys.exit(main())
