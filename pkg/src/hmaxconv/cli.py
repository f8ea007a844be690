"""Batch experiment runner: generate / train / embed-demo / bounds.

All outputs are plain files (CSV, JSON, text).  Every artifact embeds the
tool version, the full configuration, and the seed; re-running a command
with the same arguments reproduces its outputs byte for byte (pass
--deterministic to train to blank the wall-time column).  Exit codes:
0 success, 2 usage error, 1 runtime failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, bounds
from .dense import init_dense
from .embedding import build_cnn_from_hierarchy, embedding_deviation, plan_embedding
from .hierarchy import HierTree
from .images import Image, load_dataset, save_dataset
from .rng import RngState
from .synthdata import TaskConfig, gen_task1, gen_task2
from .training import (
    TrainConfig,
    desk_grid,
    empirical_risk,
    full_grid,
    majority_baseline,
    model_select,
)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


# -- generate -----------------------------------------------------------------


def _cmd_generate(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    base = RngState(args.seed)
    datasets = {}
    for name, count, stream in (("train", args.n, 1), ("test", args.test_n, 2)):
        cfg = TaskConfig(task=args.task, n=count, seed=args.seed,
                         d1=args.d1, d2=args.d2)
        rng = base.derive(stream)
        ds = gen_task1(cfg, rng) if args.task == 1 else gen_task2(cfg, rng)
        save_dataset(ds, out / f"{name}.csv")
        datasets[name] = ds
    manifest = {
        "tool": "hmaxconv",
        "version": __version__,
        "command": "generate",
        "config": {
            "task": args.task,
            "n": args.n,
            "test_n": args.test_n,
            "seed": args.seed,
            "d1": args.d1,
            "d2": args.d2,
        },
        "label_frequency": {
            name: ds.label_frequency() for name, ds in datasets.items()
        },
        "files": {
            name: {
                "path": f"{name}.csv",
                "sha256": _sha256(out / f"{name}.csv"),
            }
            for name in datasets
        },
    }
    _write_json(out / "manifest.json", manifest)
    print(f"wrote {out}/train.csv ({args.n}), {out}/test.csv ({args.test_n}), manifest.json")
    return 0


# -- train --------------------------------------------------------------------


def _sibling_task(train_path: Path) -> int:
    manifest = train_path.parent / "manifest.json"
    if manifest.exists():
        try:
            return int(json.loads(manifest.read_text())["config"]["task"])
        except (KeyError, ValueError, json.JSONDecodeError):
            pass
    return 0


def _fmt(x) -> str:
    if x is None or x == "":
        return ""
    if isinstance(x, float):
        return f"{x:.6f}"
    return str(x)


def _cmd_train(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    train_ds = load_dataset(args.train)
    test_ds = load_dataset(args.test)
    task = args.task if args.task is not None else _sibling_task(Path(args.train))
    grid = desk_grid() if args.grid == "desk" else full_grid()
    n = len(train_ds)

    config = {
        "train": str(args.train),
        "test": str(args.test),
        "task": task,
        "grid": args.grid,
        "seeds": list(args.seed),
        "epochs": args.epochs,
        "batch_size": args.batch_size,
        "learning_rate": args.lr,
        "workers": args.workers,
        "deterministic": args.deterministic,
    }

    rows = []
    winner_risks = []
    for seed in args.seed:
        cfg = TrainConfig(
            learning_rate=args.lr,
            epochs=args.epochs,
            batch_size=args.batch_size,
            seed=seed,
            workers=args.workers,
        )
        started = time.perf_counter()
        est = model_select(train_ds, cfg, grid)
        elapsed = None if args.deterministic else time.perf_counter() - started
        test_risk = empirical_risk(est, test_ds)
        winner_risks.append(test_risk)
        for entry in est.selection:
            rows.append({
                "kind": "grid",
                "task": task, "n": n, "seed": seed,
                "grid_index": entry["grid_index"],
                "point": entry["point"],
                "params": entry["params"],
                "val_risk": entry["val_risk"],
                "epsilon_N": "",
                "wall_time_s": "",
            })
        winner = next(e for e in est.selection if e["winner"])
        rows.append({
            "kind": "winner",
            "task": task, "n": n, "seed": seed,
            "grid_index": winner["grid_index"],
            "point": winner["point"],
            "params": winner["params"],
            "val_risk": winner["val_risk"],
            "epsilon_N": test_risk,
            "wall_time_s": "" if elapsed is None else f"{elapsed:.2f}",
        })

    baseline = majority_baseline(train_ds)
    rows.append({
        "kind": "baseline",
        "task": task, "n": n, "seed": "",
        "grid_index": "", "point": f"constant={baseline.label}", "params": 0,
        "val_risk": "",
        "epsilon_N": empirical_risk(baseline, test_ds),
        "wall_time_s": "",
    })

    med = float(np.median(winner_risks))
    iqr = float(np.percentile(winner_risks, 75) - np.percentile(winner_risks, 25))
    for kind, value in (("summary_median", med), ("summary_iqr", iqr)):
        rows.append({
            "kind": kind, "task": task, "n": n, "seed": "",
            "grid_index": "", "point": "epsilon_N_over_seeds", "params": "",
            "val_risk": "", "epsilon_N": value, "wall_time_s": "",
        })

    rows.sort(key=lambda r: (
        {"grid": 0, "winner": 1, "baseline": 2,
         "summary_median": 3, "summary_iqr": 4}[r["kind"]],
        r["seed"] if r["seed"] != "" else -1,
        r["grid_index"] if r["grid_index"] != "" else -1,
    ))
    columns = ["kind", "task", "n", "seed", "grid_index", "point", "params",
               "val_risk", "epsilon_N", "wall_time_s"]
    lines = [
        f"# tool=hmaxconv version={__version__}",
        "# config=" + json.dumps(config, sort_keys=True),
        ",".join(columns),
    ]
    for row in rows:
        lines.append(",".join(_fmt(row[c]) for c in columns))
    (out / "results.csv").write_text("\n".join(lines) + "\n")
    print(f"wrote {out}/results.csv; median epsilon_N over seeds: {med:.4f}")
    return 0


# -- embed-demo ---------------------------------------------------------------


def _cmd_embed_demo(args) -> int:
    rng = RngState(args.seed)
    plan = plan_embedding(args.level, args.net_layers, args.net_width)
    nodes = {
        (k, s): init_dense(4, [args.net_width] * args.net_layers, rng)
        for k in range(1, args.level + 1)
        for s in range(1, 4 ** (args.level - k) + 1)
    }
    tree = HierTree(level=args.level, nodes=nodes)
    net, _ = build_cnn_from_hierarchy(tree, plan)
    side = 2**args.level
    images = []
    for t in range(args.trials):
        child = rng.derive(t)
        d1 = side + (0 if t % 2 == 0 else 3)
        d2 = side + (0 if t % 3 == 0 else 3)
        images.append(Image(child.uniform_array(0.0, 1.0, (d1, d2))))
    dtype = np.longdouble if args.high_precision else np.float64
    worst = max(
        embedding_deviation(net, tree, [img], dtype=dtype) for img in images
    )
    report = [
        f"tool=hmaxconv version={__version__}",
        f"seed={args.seed}",
        f"level={args.level} net_layers={args.net_layers} net_width={args.net_width}",
        f"plan: layers={plan.total_layers} channels={plan.channels_per_layer} "
        f"pair_channels={plan.pair_channels}",
        f"plan: filter_sizes={','.join(str(m) for m in plan.filter_sizes)}",
        f"trials={args.trials} high_precision={args.high_precision}",
        f"max_abs_deviation={float(worst):.3e}",
    ]
    text = "\n".join(report) + "\n"
    sys.stdout.write(text)
    if args.out:
        Path(args.out).write_text(text)
    return 0


# -- bounds -------------------------------------------------------------------


def _ints(text: str) -> list[int]:
    return [int(tok) for tok in text.split(",") if tok.strip()]


def _cmd_bounds(args) -> int:
    if args.rate:
        if args.n_list is None:
            raise SystemExit(2)
        lines = ["n,rate" + (",l2_rate" if args.squared else "")]
        for n in _ints(args.n_list):
            row = [str(n), f"{bounds.convergence_rate(n, args.p1, args.p2, args.d_star):.8e}"]
            if args.squared:
                row.append(
                    f"{bounds.convergence_rate(n, args.p1, args.p2, args.d_star, squared=True):.8e}"
                )
            lines.append(",".join(row))
        text = "\n".join(lines) + "\n"
    elif args.schedule:
        sched = bounds.architecture_schedule(
            args.n, args.p1, args.p2, args.d_star, args.level, args.c1, args.c2
        )
        lines = [
            f"repeats={sched.repeats}",
            f"conv_layers={sched.conv_layers}",
            f"dense_layers={sched.dense_layers}",
            f"order={sched.order}",
            f"conv_channels={sched.conv_channels[0]}",
            f"dense_width={sched.dense_widths[0]}",
            "filter_sizes=" + ",".join(str(m) for m in sched.filter_sizes),
        ]
        text = "\n".join(lines) + "\n"
    else:
        channels = _ints(args.conv_channels)
        filters = _ints(args.filters)
        widths = _ints(args.dense_widths)
        report = bounds.weight_count(
            args.t, len(channels), channels, filters, len(widths), widths
        )
        k_max = max(channels + [args.t] + widths)
        m_max = max(filters)
        vc = bounds.vc_bound(
            args.t, len(channels), len(widths), k_max, m_max, args.d1, args.d2
        )
        cover = bounds.covering_bound(vc, args.c4, args.n, args.eps)
        if args.csv:
            lines = ["quantity,value"]
            for r, w in enumerate(report.weight_counts, start=1):
                lines.append(f"W_{r},{w}")
            lines.append(f"total_weights,{report.total_weights}")
            lines.append(f"vc_bound,{vc:.8e}")
            lines.append(f"log_covering_bound,{cover:.8e}")
        else:
            lines = [
                f"weight counts: {' '.join(str(w) for w in report.weight_counts)}",
                f"total weights W = {report.total_weights}",
                f"VC bound        = {vc:.6e}",
                f"log N1 bound    = {cover:.6e}  (c4={args.c4}, n={args.n}, eps={args.eps})",
            ]
        text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.out:
        Path(args.out).write_text(text)
    return 0


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hmaxconv",
        description="Synthetic shape benchmarks, CNN training, exact "
        "hierarchy embeddings, and capacity bound reports.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write train/test dataset CSVs")
    p.add_argument("--task", type=int, choices=(1, 2), required=True)
    p.add_argument("--n", type=int, required=True, help="training examples")
    p.add_argument("--test-n", type=int, required=True, help="test examples")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--d1", type=int, default=32)
    p.add_argument("--d2", type=int, default=32)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("train", help="model-select, train, and evaluate")
    p.add_argument("--train", required=True, help="training dataset CSV")
    p.add_argument("--test", required=True, help="test dataset CSV")
    p.add_argument("--task", type=int, default=None, help="task label for the report")
    p.add_argument("--grid", choices=("desk", "full"), default="desk")
    p.add_argument("--seed", type=int, nargs="+", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--deterministic", action="store_true",
                   help="blank wall-time columns for byte-identical reruns")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("embed-demo", help="build a CNN from a random "
                       "hierarchy and report the deviation")
    p.add_argument("--level", type=int, required=True)
    p.add_argument("--net-layers", type=int, default=1)
    p.add_argument("--net-width", type=int, default=4)
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--high-precision", action="store_true")
    p.add_argument("--out", default=None, help="also write the report here")
    p.set_defaults(func=_cmd_embed_demo)

    p = sub.add_parser("bounds", help="complexity/rate reports")
    p.add_argument("--t", type=int, default=1)
    p.add_argument("--conv-channels", default=None, help="e.g. 2,2")
    p.add_argument("--filters", default=None, help="e.g. 2,4")
    p.add_argument("--dense-widths", default=None, help="e.g. 5")
    p.add_argument("--d1", type=int, default=32)
    p.add_argument("--d2", type=int, default=32)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--eps", type=float, default=0.01)
    p.add_argument("--c4", type=float, default=1.0)
    p.add_argument("--csv", action="store_true")
    p.add_argument("--rate", action="store_true", help="rate sweep mode")
    p.add_argument("--squared", action="store_true",
                   help="also report the squared-error rate in rate mode")
    p.add_argument("--schedule", action="store_true", help="schedule mode")
    p.add_argument("--n-list", default=None, help="e.g. 100,1000,10000")
    p.add_argument("--p1", type=float, default=1.0)
    p.add_argument("--p2", type=float, default=1.0)
    p.add_argument("--d-star", type=int, default=1)
    p.add_argument("--level", type=int, default=2)
    p.add_argument("--c1", type=float, default=1.0)
    p.add_argument("--c2", type=int, default=1)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_bounds)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "embed-demo":
        if args.net_width < 1 or args.net_layers < 1 or args.level < 1 or args.trials < 1:
            parser.error("level, net-layers, net-width, trials must be >= 1")
    if args.command == "bounds" and not (args.rate or args.schedule):
        if not (args.conv_channels and args.filters and args.dense_widths):
            parser.error(
                "bounds needs --conv-channels, --filters, --dense-widths "
                "(or --rate / --schedule mode)"
            )
    if args.command == "bounds" and args.rate and not args.n_list:
        parser.error("--rate needs --n-list")
    try:
        return args.func(args)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
