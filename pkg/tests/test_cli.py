import json

import pytest
import yaml

from cvmpc.cli import EXIT_CHECK, EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, main

from test_harness import TINY


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    (d / "tiny.yaml").write_text(yaml.safe_dump(TINY))
    return d


def run(workdir, *args):
    return main(["--config", str(workdir / "tiny.yaml"), "--out", str(workdir / "out"), *args])


@pytest.fixture(scope="module")
def collected(workdir):
    assert run(workdir, "collect") == EXIT_OK
    return workdir / "out" / "demos.jsonl"


def test_collect_writes_log_and_manifest(collected, workdir):
    assert collected.exists()
    man = json.loads((workdir / "out" / "manifest_collect.json").read_text())
    assert man["command"] == "collect" and "demos" in man["outputs"]


def test_train_eval_inspect(collected, workdir, capsys):
    assert run(workdir, "train", "--dataset", str(collected)) == EXIT_OK
    ckpt = workdir / "out" / "checkpoint.npz"
    assert run(workdir, "eval", "--checkpoint", str(ckpt), "--trials", "2") == EXIT_OK
    assert (workdir / "out" / "eval.csv").exists()
    capsys.readouterr()
    assert run(workdir, "inspect", str(ckpt)) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["K"] == TINY["K"]


def test_replay_exit_codes(collected, workdir, tmp_path):
    assert run(workdir, "replay", str(collected)) == EXIT_OK
    recs = [json.loads(l) for l in collected.read_text().splitlines()]
    step = next(r for r in recs if r["type"] == "step" and r["step"] == 2)
    step["cmd"][1] += 1.0
    bad = tmp_path / "bad.jsonl"
    bad.write_text("\n".join(json.dumps(r) for r in recs) + "\n")
    assert run(workdir, "replay", str(bad)) == EXIT_CHECK


def test_threshold_failure_exits_3(workdir):
    # the goal-only controller cannot finish within 25 steps
    assert run(workdir, "eval", "--controller", "goal", "--trials", "1",
               "--min-success", "100") == EXIT_CHECK


def test_config_errors_exit_1(workdir, tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("K: 0\n")
    assert main(["--config", str(bad), "inspect", "x"]) == EXIT_CONFIG
    assert main(["--config", str(tmp_path / "missing.yaml"), "inspect", "x"]) == EXIT_CONFIG
    assert main(["--workers", "0", "inspect", "x"]) == EXIT_CONFIG
    assert main(["frobnicate"]) == EXIT_CONFIG
    assert run(workdir, "eval") == EXIT_CONFIG  # cvmpc needs --checkpoint


def test_runtime_errors_exit_2(workdir, tmp_path):
    assert run(workdir, "inspect", str(tmp_path / "nothing.jsonl")) == EXIT_RUNTIME
    junk = tmp_path / "junk.npz"
    junk.write_bytes(b"junk")
    assert run(workdir, "eval", "--checkpoint", str(junk)) == EXIT_RUNTIME


def test_help_exits_0(capsys):
    assert main(["--help"]) == EXIT_OK
    assert "collect" in capsys.readouterr().out
