import json

import pytest

from hmaxconv.cli import main
from hmaxconv.images import load_dataset


def run(argv):
    return main(argv)


def test_generate_writes_dataset_and_manifest(tmp_path, capsys):
    out = tmp_path / "data"
    code = run([
        "generate", "--task", "1", "--n", "12", "--test-n", "6",
        "--seed", "5", "--out", str(out),
    ])
    assert code == 0
    train = load_dataset(out / "train.csv")
    test = load_dataset(out / "test.csv")
    assert len(train) == 12 and len(test) == 6
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["version"]
    assert manifest["config"]["seed"] == 5
    assert set(manifest["label_frequency"]) == {"train", "test"}
    assert set(manifest["files"]) == {"train", "test"}


def test_generate_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert run([
            "generate", "--task", "2", "--n", "8", "--test-n", "4",
            "--seed", "9", "--out", str(out),
        ]) == 0
    for name in ("train.csv", "test.csv", "manifest.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_generate_rejects_unknown_task(tmp_path):
    with pytest.raises(SystemExit) as exc:
        run(["generate", "--task", "3", "--n", "4", "--test-n", "2",
             "--seed", "0", "--out", str(tmp_path)])
    assert exc.value.code == 2


def test_bounds_weight_fixture(capsys):
    assert run([
        "bounds", "--t", "1", "--conv-channels", "2", "--filters", "2",
        "--dense-widths", "3", "--csv",
    ]) == 0
    lines = capsys.readouterr().out.splitlines()
    table = dict(line.split(",") for line in lines[1:])
    assert table["total_weights"] == "22"
    assert table["W_1"] == "10"


def test_bounds_rate_sweep_monotone(capsys):
    assert run([
        "bounds", "--rate", "--n-list", "100,1000,10000,100000",
        "--p1", "2", "--p2", "1", "--d-star", "1",
    ]) == 0
    lines = capsys.readouterr().out.splitlines()[1:]
    rates = [float(line.split(",")[1]) for line in lines]
    assert rates == sorted(rates, reverse=True)


def test_bounds_schedule_mode(capsys):
    assert run([
        "bounds", "--schedule", "--n", "2", "--p1", "1", "--p2", "1",
        "--d-star", "1", "--level", "2", "--c1", "1", "--c2", "5",
    ]) == 0
    out = capsys.readouterr().out
    assert "repeats=2" in out
    assert "conv_channels=17" in out


def test_bounds_requires_shape_or_mode():
    with pytest.raises(SystemExit) as exc:
        run(["bounds"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        run(["bounds", "--rate"])
    assert exc.value.code == 2


def test_embed_demo_reports_tiny_deviation(tmp_path, capsys):
    report = tmp_path / "report.txt"
    assert run([
        "embed-demo", "--level", "1", "--net-layers", "1", "--net-width", "3",
        "--trials", "5", "--seed", "3", "--out", str(report),
    ]) == 0
    text = report.read_text()
    assert "level=1" in text
    deviation = float(text.strip().splitlines()[-1].split("=")[1])
    assert deviation <= 1e-9


def test_embed_demo_rejects_zero_width():
    with pytest.raises(SystemExit) as exc:
        run(["embed-demo", "--level", "1", "--net-width", "0", "--seed", "1"])
    assert exc.value.code == 2


def test_embed_demo_deterministic(tmp_path):
    outs = []
    for name in ("r1.txt", "r2.txt"):
        path = tmp_path / name
        assert run([
            "embed-demo", "--level", "2", "--net-layers", "1",
            "--net-width", "2", "--trials", "3", "--seed", "12",
            "--out", str(path),
        ]) == 0
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]


def test_train_end_to_end_and_deterministic(tmp_path):
    data = tmp_path / "data"
    assert run([
        "generate", "--task", "1", "--n", "120", "--test-n", "30",
        "--seed", "21", "--out", str(data),
    ]) == 0
    results = []
    for name in ("runA", "runB"):
        out = tmp_path / name
        assert run([
            "train", "--train", str(data / "train.csv"),
            "--test", str(data / "test.csv"),
            "--grid", "desk", "--seed", "1", "2",
            "--epochs", "2", "--out", str(out), "--deterministic",
        ]) == 0
        results.append((out / "results.csv").read_bytes())
    assert results[0] == results[1]

    lines = results[0].decode().splitlines()
    assert lines[0].startswith("# tool=hmaxconv")
    header = lines[2].split(",")
    assert "epsilon_N" in header
    kinds = [line.split(",")[0] for line in lines[3:]]
    assert "winner" in kinds
    assert "baseline" in kinds
    assert "summary_median" in kinds
    # task column filled from the sibling manifest
    winner = next(line for line in lines[3:] if line.startswith("winner"))
    assert winner.split(",")[1] == "1"


def test_train_missing_file_is_runtime_error(tmp_path, capsys):
    code = run([
        "train", "--train", str(tmp_path / "nope.csv"),
        "--test", str(tmp_path / "nope.csv"),
        "--seed", "1", "--out", str(tmp_path / "out"),
    ])
    assert code == 1
    assert "error" in capsys.readouterr().err
