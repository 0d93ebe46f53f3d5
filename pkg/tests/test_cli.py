import json
import subprocess
import sys

import pytest

from crs_learn import cli
from crs_learn.learn import load_model
from conftest import CORPUS, RULES_CONF


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture(scope="module")
def features(tmp_path_factory):
    out = tmp_path_factory.mktemp("feat") / "pl4"
    assert run("extract", "--conf", RULES_CONF, "--dataset", CORPUS, "--pl", 4,
               "--out", out, "--train-per-class", 70, "--test-per-class", 30) == 0
    return out


def outputs(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())
            if p.is_file() and p.name != "manifest.json"}


def test_parse_summary(capsys):
    assert run("parse", RULES_CONF) == 0
    out = capsys.readouterr().out
    assert "scoring rules: 39" in out and "PL1: 13" in out


def test_parse_empty_file(tmp_path, capsys):
    (tmp_path / "empty.conf").write_text("")
    assert run("parse", tmp_path / "empty.conf") == 0
    assert "scoring rules: 0" in capsys.readouterr().out


def test_parse_strict_unknown_operator(tmp_path, capsys):
    conf = tmp_path / "bad.conf"
    conf.write_text('SecRule ARGS "@bogus x" "id:942999,phase:2,deny,severity:CRITICAL"\n')
    assert run("parse", conf, "--strict") == 2
    assert "942999" in capsys.readouterr().err
    assert run("parse", conf) == 0
    assert run("parse", tmp_path / "missing.conf") == 2


def test_parse_dump(tmp_path):
    assert run("parse", RULES_CONF, "--dump", tmp_path / "rules.json") == 0
    doc = json.loads((tmp_path / "rules.json").read_text())
    assert len(doc["rules"]) == 39


def test_extract_outputs(features):
    space = json.loads((features / "space.json").read_text())
    assert 0 < len(space["rule_ids"]) <= 39
    assert space["manifest"] == json.loads((features / "manifest.json").read_text())["hash"]
    for name in ("train.csv", "train.crsf", "train_labels.txt", "test.jsonl"):
        assert (features / name).exists()
    assert len((features / "train_labels.txt").read_text().split()) == 140


def test_extract_pl1_is_narrower(tmp_path, features):
    out = tmp_path / "pl1"
    assert run("extract", "--conf", RULES_CONF, "--dataset", CORPUS, "--pl", 1, "--out", out,
               "--train-per-class", 70, "--test-per-class", 30) == 0
    pl1 = json.loads((out / "space.json").read_text())["rule_ids"]
    pl4 = json.loads((features / "space.json").read_text())["rule_ids"]
    assert len(pl1) <= 13 and set(pl1) <= set(pl4)


def test_extract_is_idempotent(tmp_path, features):
    again = tmp_path / "again"
    assert run("extract", "--conf", RULES_CONF, "--dataset", CORPUS, "--pl", 4,
               "--out", again, "--train-per-class", 70, "--test-per-class", 30) == 0
    assert outputs(again) == outputs(features)


def test_train_echoes_config(tmp_path, features, capsys):
    path = tmp_path / "lr.json"
    assert run("train", "--features", features, "--model", "lr", "--penalty", "l1",
               "--c", 0.5, "--out", path) == 0
    doc = json.loads(path.read_text())
    assert doc["penalty"] == "l1" and doc["C"] == 0.5 and doc["kind"] == "linear"
    assert "zero_weights=" in capsys.readouterr().out
    assert (tmp_path / "lr.manifest.json").exists()


def test_train_rf_warns_about_penalty(tmp_path, features, capsys):
    path = tmp_path / "rf.json"
    assert run("train", "--features", features, "--model", "rf", "--penalty", "l1",
               "--n-trees", 5, "--out", path) == 0
    assert "ignored" in capsys.readouterr().err
    assert load_model(path).d == len(json.loads((features / "space.json").read_text())["rule_ids"])


@pytest.mark.parametrize("bad", ["0", "-1", "abc"])
def test_train_rejects_bad_c(tmp_path, features, bad):
    assert run("train", "--features", features, "--model", "svm", "--c", bad,
               "--out", tmp_path / "m.json") == 2


def test_eval_tables(tmp_path, features):
    lr = tmp_path / "lr.json"
    svm = tmp_path / "svm.json"
    run("train", "--features", features, "--model", "lr", "--out", lr)
    run("train", "--features", features, "--model", "svm", "--penalty", "l1", "--out", svm)
    assert run("eval", "--features", features, "--out-dir", tmp_path / "v") == 0
    assert (tmp_path / "v" / "table1.csv").read_text().count("\nvanilla,") == 1
    out = tmp_path / "e"
    assert run("eval", "--features", features, "--models", lr, svm, "--out-dir", out) == 0
    rows = [ln for ln in (out / "table1.csv").read_text().splitlines()
            if not ln.startswith("#")]
    assert [r.split(",")[0] for r in rows[1:]] == ["vanilla", "svm_l1", "lr_l2"]
    again = tmp_path / "e2"
    run("eval", "--features", features, "--models", lr, svm, "--out-dir", again)
    assert outputs(again) == outputs(out)


def test_eval_missing_labels(tmp_path, features):
    assert run("eval", "--features", features, "--labels", tmp_path / "nope.txt",
               "--out-dir", tmp_path / "o") == 2


def test_check_mode(tmp_path, features):
    good = tmp_path / "good.csv"
    good.write_text("model,PL4\nvanilla,>=0\n")
    bad = tmp_path / "bad.csv"
    bad.write_text("model,PL4\nvanilla,2.0+-0.01\n")
    assert run("eval", "--features", features, "--out-dir", tmp_path / "a", "--check", good) == 0
    assert run("eval", "--features", features, "--out-dir", tmp_path / "b", "--check", bad) == 1
    assert run("eval", "--features", features, "--out-dir", tmp_path / "c",
               "--check", tmp_path / "missing.csv") == 2


def test_run_full_matrix(tmp_path, capsys):
    out = tmp_path / "run"
    argv = ["run", "--conf", RULES_CONF, "--dataset", CORPUS, "--out-dir", out,
            "--n-trees", 10, "--train-per-class", 70, "--test-per-class", 30, "--save-models"]
    assert run(*argv) == 0
    rows = [ln for ln in (out / "table1.csv").read_text().splitlines()
            if not ln.startswith("#")]
    assert rows[0] == "model,PL1,PL2,PL3,PL4"
    assert len(rows) == 7 and all(len(r.split(",")) == 5 for r in rows)
    assert (out / "weights_pl4.csv").exists() and (out / "models" / "pl4_rf.json").exists()
    argv[6] = tmp_path / "run2"
    assert run(*argv) == 0
    assert outputs(tmp_path / "run2") == outputs(out)


def test_config_file_sets_defaults(tmp_path, features):
    cfg = tmp_path / "train.cfg"
    cfg.write_text(f"# defaults\nfeatures = {features}\nmodel = lr\npenalty = l1\nc = 0.1\n")
    path = tmp_path / "m.json"
    assert run("train", "--config", cfg, "--out", path) == 0
    assert json.loads(path.read_text())["C"] == 0.1
    # flags win over the file
    assert run("train", "--config", cfg, "--c", 1.0, "--out", path) == 0
    assert json.loads(path.read_text())["C"] == 1.0
    cfg.write_text("nonsense = 1\n")
    assert run("train", "--config", cfg, "--out", path) == 2


def test_console_script_usage_error():
    proc = subprocess.run([sys.executable, "-m", "crs_learn.cli", "train"],
                          capture_output=True, text=True)
    assert proc.returncode == 2
