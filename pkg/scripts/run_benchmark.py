#!/usr/bin/env python3
"""Run the full synthetic-image benchmark: generate data, model-select,
train, and report median/IQR misclassification risks per task and sample
size.

Example (full replication takes hours; trim --seeds/--grid to scale down):

    python scripts/run_benchmark.py --tasks 1 2 --n-values 1000 2000 \
        --test-n 100000 --seeds 25 --grid full --out results/
"""

import argparse
import sys
from pathlib import Path

from hmaxconv.cli import main as cli_main


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--tasks", type=int, nargs="+", default=[1, 2])
    parser.add_argument("--n-values", type=int, nargs="+", default=[1000, 2000])
    parser.add_argument("--test-n", type=int, default=100_000)
    parser.add_argument("--seeds", type=int, default=25,
                        help="number of independent dataset repetitions")
    parser.add_argument("--grid", choices=("desk", "full"), default="full")
    parser.add_argument("--epochs", type=int, default=200)
    parser.add_argument("--lr", type=float, default=1e-3)
    parser.add_argument("--workers", type=int, default=2)
    parser.add_argument("--out", default="benchmark_results")
    args = parser.parse_args()

    out = Path(args.out)
    for task in args.tasks:
        for n in args.n_values:
            for rep in range(args.seeds):
                seed = 1000 * task + rep
                run_dir = out / f"task{task}_n{n}_rep{rep}"
                code = cli_main([
                    "generate", "--task", str(task), "--n", str(n),
                    "--test-n", str(args.test_n), "--seed", str(seed),
                    "--out", str(run_dir),
                ])
                if code != 0:
                    return code
                code = cli_main([
                    "train",
                    "--train", str(run_dir / "train.csv"),
                    "--test", str(run_dir / "test.csv"),
                    "--grid", args.grid,
                    "--seed", str(seed),
                    "--epochs", str(args.epochs),
                    "--lr", str(args.lr),
                    "--workers", str(args.workers),
                    "--out", str(run_dir),
                ])
                if code != 0:
                    return code
    print(f"done; per-run results under {out}/")
    return 0


if __name__ == "__main__":
    sys.exit(main())
