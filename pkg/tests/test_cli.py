import subprocess
import sys
from pathlib import Path

import numpy as np
from dynprune import __version__
from dynprune.cli import dispatch
from dynprune.curriculum import epochs_for_budget
from dynprune.embeddings import EmbeddingMatrix, load_embeddings, save_embeddings
from dynprune.selection import Selection

ROOT = Path(__file__).resolve().parent.parent
QUICK = str(ROOT / "configs" / "quickstart.cfg")


def features(tmp_path, n=300, d=4, labels=True):
    rng = np.random.default_rng(0)
    m = EmbeddingMatrix(rng.standard_normal((n, d)), labels=rng.integers(0, 3, n) if labels else None)
    path = tmp_path / "f.emb"
    save_embeddings(m, path)
    return path


def test_prune_keep_one_lists_everything(tmp_path):
    path = features(tmp_path)
    assert dispatch(["prune", "--features", str(path), "--seed", "1", "--keep", "1.0", "--out", str(tmp_path / "o")]) == 0
    sel = Selection.load(tmp_path / "o" / "selection.txt")
    assert sel.indices.tolist() == list(range(300))


def test_prune_discard_equals_keep(tmp_path):
    path = features(tmp_path)
    base = ["prune", "--features", str(path), "--seed", "4"]
    assert dispatch(base + ["--keep", "0.25", "--out", str(tmp_path / "a")]) == 0
    assert dispatch(base + ["--discard", "0.75", "--out", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "selection.txt").read_text()
    assert a == (tmp_path / "b" / "selection.txt").read_text()
    assert len(Selection.load(tmp_path / "a" / "selection.txt")) == 75


def test_train_quickstart(tmp_path):
    out = tmp_path / "run"
    assert dispatch(["train", "--config", QUICK, "--out", str(out)]) == 0
    lines = (out / "history.csv").read_text().splitlines()
    header = [l for l in lines if l.startswith("#")]
    rows = [l for l in lines if not l.startswith("#")][1:]
    assert len(rows) == epochs_for_budget(8, 2, 0.5)
    assert any(l.startswith("# config_hash=") for l in header)
    assert "# seed=7" in header and f"# version={__version__}" in header
    sels = sorted(out.glob("selection_e*.txt"))
    assert [p.name for p in sels] == [f"selection_e{e:04d}.txt" for e in (4, 6, 8, 10, 12, 14)]
    for p in sels:
        text = p.read_text()
        assert "# config_hash=" in text and "# seed=7" in text and "# version=" in text
    W = load_embeddings(out / "encoder.emb")
    assert W.values.shape == (16, 8)
    assert "config_hash=" in (out / "encoder.emb.meta").read_text()


def test_train_discard_equals_keep(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert dispatch(["train", "--config", QUICK, "--out", str(a), "--keep", "0.5"]) == 0
    assert dispatch(["train", "--config", QUICK, "--out", str(b), "--discard", "0.5"]) == 0
    for name in ["history.csv"] + [p.name for p in a.glob("selection_e*.txt")]:
        ta = (a / name).read_text().replace(str(a), "")
        tb = (b / name).read_text().replace(str(b), "")
        # the config hash covers the override, so compare everything else
        strip = lambda t: [l for l in t.splitlines() if not l.startswith("# config_hash")]
        assert strip(ta) == strip(tb)


def test_synth_probe_stats(tmp_path, capsys):
    out = tmp_path / "s"
    assert dispatch(["synth", "--config", QUICK, "--out", str(out)]) == 0
    data = load_embeddings(out / "data.emb")
    assert data.n == 1200 and data.labels is not None
    assert (out / "data.emb.meta").exists()
    capsys.readouterr()
    assert dispatch(["stats", "--data", str(out / "data.emb"), "--out", str(out)]) == 0
    assert capsys.readouterr().out.startswith("size,entropy,cv,redundancy,counts")
    assert dispatch(["probe", "--train", str(out / "probe.emb"), "--test", str(out / "probe.emb"), "--k", "1"]) == 0
    row = capsys.readouterr().out.splitlines()[1].split(",")
    assert row[0] == "classification" and float(row[2]) == 1.0


def test_unknown_subcommand_is_usage_error(capsys):
    assert dispatch(["frobnicate"]) == 1
    assert "usage" in capsys.readouterr().err
    assert dispatch([]) == 1


def test_config_error_exit_one(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("[run]\nseed = 1\nout = x\n[prune]\nrho = 1.5\n")
    assert dispatch(["train", "--config", str(bad)]) == 1


def test_data_errors_exit_two(tmp_path, capsys):
    junk = tmp_path / "junk.emb"
    junk.write_bytes(b"NOPE" + b"\x00" * 30)
    assert dispatch(["prune", "--features", str(junk), "--seed", "1", "--out", str(tmp_path)]) == 2
    assert "data error" in capsys.readouterr().err
    assert dispatch(["stats", "--data", str(tmp_path / "missing.emb")]) == 2
    path = features(tmp_path, labels=False)
    assert dispatch(["stats", "--data", str(path)]) == 2


def test_numeric_failure_exit_three(tmp_path):
    # a vanishing initial encoder underflows every embedding norm to zero
    feats = features(tmp_path)
    cfg = tmp_path / "c.cfg"
    cfg.write_text(
        "[run]\nseed = 1\nout = %s\ndata = %s\n[synth]\nd = 4\n[trainer]\ninit_scale = 1e-300\nbatch_size = 16\n"
        "[curriculum]\nbudget_epochs = 2\nwarmup = 1\n[prune]\nn_c = 50\nks = 5\n" % (tmp_path / "o", feats)
    )
    assert dispatch(["train", "--config", str(cfg)]) == 3


def test_version_and_module_entry():
    r = subprocess.run([sys.executable, "-m", "dynprune", "version"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.strip() == __version__
