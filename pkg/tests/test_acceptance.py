"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with `pytest tests/test_acceptance.py -v -s`.  The learning-signal
criterion trains real models and dominates the runtime (tens of minutes on
two cores); everything else finishes in a few minutes.
"""

import math
import time

import numpy as np

from hmaxconv import bounds
from hmaxconv.cli import main as cli_main
from hmaxconv.conv import (
    composite_forward,
    composite_grad,
    conv_layers_forward,
    init_composite,
    init_conv,
)
from hmaxconv.dense import dense_forward, dense_grad, init_dense
from hmaxconv.embedding import build_cnn_from_hierarchy, embedding_deviation, plan_embedding
from hmaxconv.hierarchy import (
    HierTree,
    HierarchyModel,
    clamped_affine_node,
    eval_model,
    model_deviation_bound,
    node_sup_deviation,
)
from hmaxconv.images import Image
from hmaxconv.rng import RngState
from hmaxconv.synthdata import TaskConfig, generate_dataset
from hmaxconv.training import (
    TrainConfig,
    desk_grid,
    empirical_risk,
    majority_baseline,
    model_select,
)


def two_sided_binomial_pvalue(k: int, n: int, p: float) -> float:
    """Normal-approximation p-value with continuity correction; ample at
    n = 10^4."""
    mean = n * p
    sd = math.sqrt(n * p * (1 - p))
    z = (abs(k - mean) - 0.5) / sd
    return math.erfc(max(z, 0.0) / math.sqrt(2.0))


# -- criterion 1: exact embedding ---------------------------------------------


def test_criterion_1_embedding_exactness():
    started = time.time()
    rng = RngState(20_250_101)
    levels = [1] * 7 + [2] * 7 + [3] * 6
    worst = 0.0
    for cfg_idx, level in enumerate(levels):
        sub = rng.derive(cfg_idx)
        net_layers = 1 + sub.below(2)
        width = 2 + sub.below(5)
        nodes = {}
        for k in range(1, level + 1):
            for s in range(1, 4 ** (level - k) + 1):
                node = init_dense(4, [width] * net_layers, sub)
                for b in node.hidden_biases:
                    b[:] = sub.uniform_array(-0.3, 0.3, b.shape)
                node.out_bias = sub.uniform(-0.2, 0.2)
                nodes[(k, s)] = node
        tree = HierTree(level=level, nodes=nodes)
        plan = plan_embedding(level, net_layers, width)
        net, _ = build_cnn_from_hierarchy(tree, plan)
        side = 2**level
        images = [
            Image(sub.derive(t).uniform_array(0, 1, (
                side + (3 if t % 2 else 0),
                side + (3 if t % 3 else 0),
            )))
            for t in range(100)
        ]
        worst = max(worst, embedding_deviation(net, tree, images))
    elapsed = time.time() - started
    assert worst <= 1e-9, f"worst deviation {worst}"
    assert elapsed <= 120.0, f"embedding check took {elapsed:.0f}s"
    print(f"\n[criterion 1] PASS embedding exactness: max deviation "
          f"{worst:.2e} over 20 configs x 100 images ({elapsed:.0f}s)")


# -- criterion 2: gradients ---------------------------------------------------


def _max_rel_err(pairs, evaluate, h=1e-6):
    worst = 0.0
    for arr, garr in pairs:
        for idx in np.ndindex(arr.shape):
            orig = arr[idx]
            arr[idx] = orig + h
            fp = evaluate()
            arr[idx] = orig - h
            fm = evaluate()
            arr[idx] = orig
            fd = (fp - fm) / (2 * h)
            worst = max(worst, abs(fd - garr[idx]) / max(1.0, abs(fd)))
    return worst


def test_criterion_2_gradient_correctness():
    started = time.time()
    rng = RngState(20_250_102)
    worst = 0.0
    instances = 0
    for trial in range(100):
        sub = rng.derive(trial)
        t = 1 + sub.below(4)
        widths = [1 + sub.below(8) for _ in range(1 + sub.below(3))]
        net = init_dense(t, widths, sub)
        for b in net.hidden_biases:
            b[:] = sub.uniform_array(-0.3, 0.3, b.shape)
        x = sub.uniform_array(-1, 1, (t,))
        g = dense_grad(net, x)
        pairs = list(
            zip(
                net.hidden_weights + net.hidden_biases + [net.out_weights],
                g.hidden_weights + g.hidden_biases + [g.out_weights],
            )
        )
        worst = max(worst, _max_rel_err(pairs, lambda: dense_forward(net, x)))
        instances += 1
    for trial in range(60):
        sub = rng.derive(10_000 + trial)
        order = 1 + sub.below(2)
        net = init_composite(
            order,
            [1 + sub.below(3), 1 + sub.below(3)],
            [2, 2],
            [2 + sub.below(2)],
            sub,
        )
        for conv in net.conv_nets:
            for b in conv.biases:
                b[:] = sub.uniform_array(-0.2, 0.2, b.shape)
        for b in net.head.hidden_biases:
            b[:] = sub.uniform_array(-0.3, 0.3, b.shape)
        img = Image(sub.uniform_array(0, 1, (6, 6)))
        g = composite_grad(net, img)
        pairs = []
        for conv, cg in zip(net.conv_nets, g.conv_nets):
            pairs += list(
                zip(
                    conv.filters + conv.biases + [conv.out_weights],
                    cg.filters + cg.biases + [cg.out_weights],
                )
            )
        pairs += list(
            zip(
                net.head.hidden_weights + net.head.hidden_biases + [net.head.out_weights],
                g.head.hidden_weights + g.head.hidden_biases + [g.head.out_weights],
            )
        )
        worst = max(worst, _max_rel_err(pairs, lambda: composite_forward(net, img)))
        instances += 1
    elapsed = time.time() - started
    assert instances >= 150
    assert worst <= 1e-5, f"worst relative gradient error {worst}"
    assert elapsed <= 60.0, f"gradient check took {elapsed:.0f}s"
    print(f"\n[criterion 2] PASS gradients vs central differences: "
          f"{instances} instances, worst rel err {worst:.2e} ({elapsed:.0f}s)")


# -- criterion 3: zero padding ------------------------------------------------


def _padded_oracle(net, img):
    d1, d2 = img.d1, img.d2
    stack = [np.asarray(img.pixels).reshape(d1, d2, 1)]
    for r in range(net.layers):
        m = net.filter_sizes[r]
        kin, kout = stack[-1].shape[2], net.channels[r]
        padded = np.zeros((d1 + m - 1, d2 + m - 1, kin))
        padded[:d1, :d2, :] = stack[-1]
        out = np.empty((d1, d2, kout))
        for i in range(d1):
            for j in range(d2):
                acc = net.biases[r].copy()
                for t1 in range(m):
                    for t2 in range(m):
                        acc = acc + np.einsum(
                            "i,io->o",
                            padded[i + t1, j + t2, :],
                            net.filters[r][t1, t2],
                            optimize=False,
                        )
                out[i, j] = np.maximum(acc, 0.0)
        stack.append(out)
    return stack


def test_criterion_3_zero_padding_semantics():
    net_fx = init_conv([1], [2], RngState(0))
    net_fx.filters[0][:] = 1.0
    net_fx.biases[0][:] = 0.0
    o1 = conv_layers_forward(net_fx, Image(np.ones((3, 3))))[1][:, :, 0]
    assert (o1[0, 0], o1[2, 0], o1[2, 2]) == (4.0, 2.0, 1.0)

    rng = RngState(20_250_103)
    for trial in range(50):
        sub = rng.derive(trial)
        L = 1 + sub.below(3)
        channels = [1 + sub.below(4) for _ in range(L)]
        d1, d2 = 3 + sub.below(4), 3 + sub.below(4)
        sizes = [1 + sub.below(min(d1, d2)) for _ in range(L)]
        net = init_conv(channels, sizes, sub)
        for b in net.biases:
            b[:] = sub.uniform_array(-0.2, 0.2, b.shape)
        img = Image(sub.uniform_array(0, 1, (d1, d2)))
        ref = conv_layers_forward(net, img)
        oracle = _padded_oracle(net, img)
        for a, b in zip(ref, oracle):
            assert np.array_equal(a, b), "activation stacks differ"
    print("\n[criterion 3] PASS zero-padding semantics: 50 random nets "
          "match the padded-array oracle exactly; 4/2/1 fixture reproduced")


# -- criterion 4: generator calculus ------------------------------------------


def test_criterion_4_generator_label_calculus():
    for task in (1, 2):
        ds = generate_dataset(TaskConfig(task=task, n=10_000, seed=20_250_104))
        freq = ds.label_frequency()
        assert 0.48 <= freq <= 0.52, f"task {task} frequency {freq}"
        pval = two_sided_binomial_pvalue(sum(ds.labels), len(ds), 0.5)
        assert pval >= 0.001, f"task {task} binomial p-value {pval}"
        print(f"\n[criterion 4] task {task}: label frequency {freq:.4f}, "
              f"binomial p-value {pval:.3f}")
    print("[criterion 4] PASS generator calculus at n=10^4 per task")


# -- criterion 5: learning signal ---------------------------------------------


def test_criterion_5_learning_signal():
    started = time.time()
    seeds = (101, 102, 103)
    epochs_for = {500: 60, 1000: 70, 2000: 35}
    risks = {n: [] for n in epochs_for}
    baseline_risks = []
    for seed in seeds:
        pool = generate_dataset(TaskConfig(task=1, n=2000, seed=seed))
        test = generate_dataset(TaskConfig(task=1, n=2000, seed=seed + 5000))
        for n, epochs in epochs_for.items():
            subset = pool.subset(range(n))
            cfg = TrainConfig(
                epochs=epochs, learning_rate=1e-2, seed=seed, workers=2
            )
            est = model_select(subset, cfg, desk_grid())
            risk = empirical_risk(est, test)
            risks[n].append(risk)
            winner_val = next(e for e in est.selection if e["winner"])["val_risk"]
            if n == 1000:
                assert winner_val < 0.45, (
                    f"validation risk {winner_val} shows no learning signal"
                )
            print(f"\n[criterion 5] seed {seed} n={n}: winner "
                  f"{est.grid_point.label()} val={winner_val:.3f} "
                  f"epsilon_N={risk:.3f} ({time.time() - started:.0f}s elapsed)")
        baseline_risks.append(empirical_risk(majority_baseline(pool), test))
    med = {n: float(np.median(r)) for n, r in risks.items()}
    elapsed = time.time() - started
    print(f"[criterion 5] medians: n=500 {med[500]:.3f}, n=1000 "
          f"{med[1000]:.3f}, n=2000 {med[2000]:.3f}; baseline "
          f"{np.median(baseline_risks):.3f}; total {elapsed:.0f}s")
    assert med[1000] <= 0.20, f"median risk at n=1000 is {med[1000]}"
    assert med[2000] <= med[500], "risk did not improve with more data"
    assert np.median(baseline_risks) >= 0.45
    assert elapsed <= 1800.0, f"learning criterion took {elapsed:.0f}s"
    print("[criterion 5] PASS learning signal at desk scale")


# -- criterion 6: weight counts -----------------------------------------------


def test_criterion_6_weight_count_oracle():
    fixture = bounds.weight_count(1, 1, [2], [2], 1, [3])
    assert fixture.total_weights == 22
    rng = RngState(20_250_106)
    for trial in range(50):
        sub = rng.derive(trial)
        order = 1 + sub.below(3)
        L1 = 1 + sub.below(4)
        channels = [1 + sub.below(6) for _ in range(L1)]
        sizes = [1 + sub.below(4) for _ in range(L1)]
        widths = [1 + sub.below(8) for _ in range(1 + sub.below(3))]
        net = init_composite(order, channels, sizes, widths, sub)
        report = bounds.weight_count(order, L1, channels, sizes, len(widths), widths)
        assert report.total_weights == net.num_params()
    print("\n[criterion 6] PASS weight counts equal parameter enumeration "
          "on 50 random shapes; W=22 fixture reproduced")


# -- criterion 7: theory calculators ------------------------------------------


def test_criterion_7_theory_calculators():
    rng = RngState(20_250_107)
    for trial in range(10):
        sub = rng.derive(trial)
        t = 1 + sub.below(3)
        L1, L2 = 1 + sub.below(4), 1 + sub.below(3)
        k_max, m_max = 2 + sub.below(7), 2 + sub.below(4)
        d1, d2 = 8 + sub.below(56), 8 + sub.below(56)
        got = bounds.vc_bound(t, L1, L2, k_max, m_max, d1, d2)
        depth = L1 + L2 + 2
        want = (
            16 * t * depth * depth * k_max * k_max * m_max * m_max
            * math.log(2 * math.e * t * depth * k_max * d1 * d2) / math.log(2)
        )
        assert abs(got - want) <= 1e-9 * abs(want)

        c4 = 0.5 + sub.uniform(0, 2)
        n = 100 + sub.below(100_000)
        eps = sub.uniform(1e-4, 0.9)
        if c4 * math.log(n) < 2:
            continue
        got = bounds.covering_bound(want, c4, n, eps)
        ref = math.log(3) + 2 * want * math.log(6 * math.e * c4 * math.log(n) / eps)
        assert abs(got - ref) <= 1e-9 * abs(ref)

    premise_count = 0
    for trial in range(100_000):
        sub = rng.derive(1_000_000 + trial)
        R = 16.0 + sub.uniform(0, 1e5)
        L = sub.uniform(0, 40)
        w = L + sub.uniform(0, 400)
        m = w + sub.uniform(0, 1e5)
        res = bounds.growth_bound_check(R, m, w, L)
        if res.premise_holds:
            premise_count += 1
            assert res.conclusion_holds, f"counterexample at {(R, m, w, L)}"

    for trial in range(100_000):
        sub = rng.derive(2_000_000 + trial)
        dim = 1 + sub.below(8)
        xs = [sub.uniform(1e-3, 1e3) for _ in range(dim)]
        ws = [sub.uniform(1e-3, 1e3) for _ in range(dim)]
        assert bounds.weighted_am_gm_check(xs, ws).holds, (xs, ws)
    print(f"\n[criterion 7] PASS theory calculators: 10 closed-form "
          f"fixtures at 1e-9, no counterexamples in 10^5-sample sweeps "
          f"({premise_count} premise hits)")


# -- criterion 8: hierarchy deviation bound -----------------------------------


def _shifted_model_pair(rng, level, order):
    node_shift = rng.uniform(0.0, 0.15)
    outer_shift = rng.uniform(0.0, 0.15)
    keys = [(k, s) for k in range(1, level + 1) for s in range(1, 4 ** (level - k) + 1)]
    coeffs = {
        (a, key): rng.uniform_array(-0.4, 0.4, (4,))
        for a in range(order)
        for key in keys
    }

    def trees(shift):
        return tuple(
            HierTree(
                level=level,
                nodes={k: clamped_affine_node(coeffs[(a, k)], 0.1, shift) for k in keys},
            )
            for a in range(order)
        )

    def outer(*args):
        return min(1.0, max(0.0, sum(args) / len(args)))

    def outer_b(*args):
        return outer(*args) + outer_shift

    return (
        HierarchyModel(trees=trees(0.0), outer=outer),
        HierarchyModel(trees=trees(node_shift), outer=outer_b),
    )


def test_criterion_8_deviation_bound_property():
    rng = RngState(20_250_108)
    violations = 0
    for trial in range(20):
        sub = rng.derive(trial)
        level = 1 + sub.below(2)
        order = 1 + sub.below(2)
        model_a, model_b = _shifted_model_pair(sub, level, order)
        node_dev = max(
            node_sup_deviation(
                model_a.trees[a].nodes[key],
                model_b.trees[a].nodes[key],
                4,
                points_per_axis=5,
            )
            for a in range(order)
            for key in model_a.trees[a].nodes
        )
        outer_dev = node_sup_deviation(
            model_a.outer, model_b.outer, order, points_per_axis=5
        )
        bound = model_deviation_bound(order, level, 1.0, node_dev, outer_dev)
        side = 2**level
        for t in range(5):
            img = Image(sub.uniform_array(0, 1, (side + 2, side + 3)))
            diff = abs(eval_model(model_a, img) - eval_model(model_b, img))
            if diff > bound + 1e-12:
                violations += 1
    assert violations == 0
    print("\n[criterion 8] PASS deviation bound: 20 random model pairs, "
          "zero violations with grid-estimated deviations")


# -- criterion 9: CLI determinism ---------------------------------------------


def test_criterion_9_cli_determinism(tmp_path):
    data = tmp_path / "data"
    assert cli_main([
        "generate", "--task", "1", "--n", "120", "--test-n", "20",
        "--seed", "33", "--out", str(data),
    ]) == 0

    def generate_again(out):
        return cli_main([
            "generate", "--task", "1", "--n", "120", "--test-n", "20",
            "--seed", "33", "--out", str(out),
        ])

    def train(out):
        return cli_main([
            "train", "--train", str(data / "train.csv"),
            "--test", str(data / "test.csv"), "--grid", "desk",
            "--seed", "7", "--epochs", "2", "--out", str(out),
            "--deterministic",
        ])

    def embed(out):
        out.mkdir(exist_ok=True)
        return cli_main([
            "embed-demo", "--level", "2", "--net-layers", "1",
            "--net-width", "2", "--trials", "4", "--seed", "9",
            "--out", str(out / "report.txt"),
        ])

    def bounds_report(out):
        out.mkdir(exist_ok=True)
        return cli_main([
            "bounds", "--t", "2", "--conv-channels", "3,3",
            "--filters", "2,4", "--dense-widths", "5", "--csv",
            "--out", str(out / "bounds.csv"),
        ])

    commands = {
        "generate": (generate_again, ("train.csv", "test.csv", "manifest.json")),
        "train": (train, ("results.csv",)),
        "embed-demo": (embed, ("report.txt",)),
        "bounds": (bounds_report, ("bounds.csv",)),
    }
    for name, (runner, files) in commands.items():
        out_a, out_b = tmp_path / f"{name}_a", tmp_path / f"{name}_b"
        assert runner(out_a) == 0
        assert runner(out_b) == 0
        for fname in files:
            assert (out_a / fname).read_bytes() == (out_b / fname).read_bytes(), (
                f"{name}: {fname} differs between identical runs"
            )
    print("\n[criterion 9] PASS CLI determinism: generate/train/embed-demo/"
          "bounds reproduce byte-identical outputs")
