import csv

import numpy as np
import pytest

from robust_amn.amn import Weights
from robust_amn.bench import synthetic_benchmark
from robust_amn.cli import EXIT_FAILED, EXIT_INPUT, EXIT_OK, main
from robust_amn.graph import AttackPlan, load_dataset, load_labeling, save_dataset


@pytest.fixture
def data(tmp_path):
    g, y = synthetic_benchmark(nodes=30, dim=3, degree=2, seed=0)
    path = tmp_path / "data.txt"
    save_dataset(g, y, path)
    return path


def test_train_attack_eval_chain(data, tmp_path, capsys):
    w, plan, lab = tmp_path / "w.txt", tmp_path / "plan.txt", tmp_path / "lab.txt"
    assert main(["train", "--data", str(data), "--budget-frac", "0.1", "--out", str(w)]) == EXIT_OK
    assert Weights.load(w).K == 2
    assert main(["attack", "--data", str(data), "--weights", str(w), "--budget-frac", "0.1",
                 "--trials", "10", "--seed", "3", "--out", str(plan)]) == EXIT_OK
    p = AttackPlan.from_text(plan.read_text())
    n_edges = load_dataset(data)[0].n_edges
    assert p.n_additions == 0 and p.n_deletions <= int(0.1 * n_edges)
    assert main(["eval", "--data", str(data), "--weights", str(w), "--plan", str(plan), "--out", str(lab)]) == EXIT_OK
    assert "accuracy=" in capsys.readouterr().out
    assert load_labeling(lab, 2).n == 30


def test_attack_modes(data, tmp_path):
    w = tmp_path / "w.txt"
    main(["train", "--data", str(data), "--out", str(w)])
    for mode in ("rs", "rsad"):
        out = tmp_path / f"{mode}.txt"
        assert main(["attack", "--data", str(data), "--mode", mode, "--budget-frac", "0.1", "--out", str(out)]) == 0
        p = AttackPlan.from_text(out.read_text())
        assert (p.n_additions > 0) == (mode == "rsad")
    out = tmp_path / "ad.txt"
    assert main(["attack", "--data", str(data), "--weights", str(w), "--variant", "AD", "--budget-frac", "0.05",
                 "--trials", "5", "--out", str(out)]) == EXIT_OK
    # 30 nodes is far beyond enumeration
    assert main(["attack", "--data", str(data), "--weights", str(w), "--mode", "exact", "--budget-frac", "0.1",
                 "--out", str(tmp_path / "x.txt")]) == EXIT_INPUT


def test_lp_dumps(data, tmp_path):
    w = tmp_path / "w.txt"
    assert main(["train", "--data", str(data), "--out", str(w), "--lp-dump", str(tmp_path / "t.lp")]) == 0
    assert main(["eval", "--data", str(data), "--weights", str(w), "--lp-dump", str(tmp_path / "e.lp")]) == 0
    assert main(["attack", "--data", str(data), "--weights", str(w), "--budget-frac", "0.1", "--trials", "2",
                 "--out", str(tmp_path / "p.txt"), "--lp-dump", str(tmp_path / "a.lp")]) == 0
    for name in ("t.lp", "e.lp", "a.lp"):
        text = (tmp_path / name).read_text()
        assert text.rstrip().endswith("End")


def test_input_errors(data, tmp_path, capsys):
    assert main(["train", "--data", str(tmp_path / "nope.txt")]) == EXIT_INPUT
    bad = tmp_path / "bad.txt"
    bad.write_text("amn-dataset v2 1 1 2\n")
    assert main(["train", "--data", str(bad)]) == EXIT_INPUT
    assert main(["attack", "--data", str(data)]) == EXIT_INPUT  # lp mode needs weights
    assert main(["sweep"]) == EXIT_INPUT
    cfg = tmp_path / "c.cfg"
    cfg.write_text("seeds = zero\n")
    assert main(["sweep", "--config", str(cfg)]) == EXIT_INPUT
    assert "error:" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        main(["frobnicate"])


def test_train_from_config_dataset(data, tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text(f"dataset = {data}\n")
    assert main(["train", "--config", str(cfg), "--out", str(tmp_path / "w.txt")]) == EXIT_OK


def test_sweep(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("nodes = 30\ndim = 3\ndegree = 2\nseeds = 2\nattacks = none, struct-d, struct-rs\n"
                   "budgets = 0.1\ntrainers = amn, svm\nC_grid = 1\nfolds = 2\ncv_trials = 2\n")
    out = tmp_path / "r.csv"
    assert main(["sweep", "--config", str(cfg), "--trials", "3", "--out", str(out),
                 "--plots", str(tmp_path / "plots")]) == EXIT_OK
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 2 * 2 * 3 and {r["status"] for r in rows} == {"ok"}
    assert (tmp_path / "r.summary.csv").exists()
    assert sorted(p.name for p in (tmp_path / "plots").iterdir())
    assert "amn" in capsys.readouterr().out


def test_sweep_with_failures_exits_one(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text(f"dataset = {tmp_path / 'missing.txt'}\nseeds = 1\nattacks = none\ntrainers = svm\n")
    assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "r.csv")]) == EXIT_FAILED


def test_certify_bounds(tmp_path, capsys):
    out = tmp_path / "cert.csv"
    assert main(["certify-bounds", "--instances", "2", "--trials", "200", "--out", str(out)]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[-1].endswith("checks passed")
    assert all(line.startswith("PASS") for line in lines[:-1])
    rows = list(csv.DictReader(out.open()))
    assert rows and all(r["passed"] == "1" for r in rows)
    assert np.isfinite(float(rows[0]["lhs"]))
