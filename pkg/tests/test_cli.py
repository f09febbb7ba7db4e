import json
import subprocess
import sys

import pytest

from progtransfer.cli import (
    EXIT_CONFIG,
    EXIT_DATA,
    EXIT_EXECUTION,
    EXIT_MISSING,
    EXIT_OK,
    COMMANDS,
    main,
)

from conftest import FIXTURE1

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

TINY_DATA = ["--source-size", "20", "--target-size", "8", "--dev-size", "4", "--concepts", "4",
             "--relations", "6", "--entities-per-concept", "4"]
TINY_TRAIN = ["--epochs", "2", "--hidden", "8", "--emb-dim", "8", "--workers", "1"]


def _files(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    out = tmp_path_factory.mktemp("data")
    assert main(["gen", "--seed", "3", "--out", str(out)] + TINY_DATA) == EXIT_OK
    return out


def test_gen_is_deterministic(tmp_path, capsys):
    args = ["gen", "--seed", "7", "--source-size", "200", "--target-size", "100"]
    assert main(args + ["--out", str(tmp_path / "a")]) == EXIT_OK
    assert main(args + ["--out", str(tmp_path / "b")]) == EXIT_OK
    a, b = _files(tmp_path / "a"), _files(tmp_path / "b")
    assert a == b
    assert {"kb_source.json", "kb_target.json", "source.jsonl", "target_train.jsonl", "target_dev.jsonl"} <= set(a)
    assert capsys.readouterr().out.splitlines() == [str(tmp_path / "a"), str(tmp_path / "b")]


def test_exec_prints_answers(capsys):
    program = "Find(FC Barcelona);Relate(arena stadium forward);FilterConcept(sports facility)"
    assert main(["exec", "--kb", str(FIXTURE1), "--program", program]) == EXIT_OK
    assert capsys.readouterr().out == "Camp Nou\n"
    assert main(["exec", "--kb", str(FIXTURE1), "--program", program, "--trace"]) == EXIT_OK
    out = capsys.readouterr()
    assert out.out == "Camp Nou\n"
    assert "Relate(arena stadium forward)" in out.err


def test_exec_program_from_file(tmp_path, capsys):
    path = tmp_path / "p.txt"
    path.write_text("FindAll();Count()\n")
    assert main(["exec", "--kb", str(FIXTURE1), "--program", str(path)]) == EXIT_OK
    assert capsys.readouterr().out == "4\n"


def test_eval_on_empty_dataset(tmp_path, capsys):
    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    run = tmp_path / "run"
    code = main(["eval", "--kb", str(FIXTURE1), "--dataset", str(empty), "--model", str(tmp_path),
                 "--run-dir", str(run)])
    assert code == EXIT_DATA
    assert "empty" in capsys.readouterr().err
    assert not run.exists()


@pytest.mark.parametrize("argv, code", [
    (["exec", "--kb", "missing.json", "--program", "FindAll()"], EXIT_MISSING),
    (["exec", "--kb", str(FIXTURE1)], EXIT_CONFIG),
    (["exec", "--kb", str(FIXTURE1), "--program", "Frob()"], EXIT_DATA),
    (["exec", "--kb", str(FIXTURE1), "--program", "Find(Nobody);QueryName()"], EXIT_EXECUTION),
    (["exec", "--kb", str(FIXTURE1), "--program", "FindAll();FindAll()"], EXIT_EXECUTION),
    (["exec", "--kb", str(FIXTURE1), "--config", "missing.toml", "--program", "FindAll()"], EXIT_MISSING),
])
def test_exit_codes(argv, code, capsys):
    assert main(argv) == code
    err = capsys.readouterr().err
    assert err.startswith("error: ")


def test_config_errors(tmp_path, capsys):
    bad_key = tmp_path / "bad.toml"
    bad_key.write_text("epochs = 2\nlearning_rate = 0.1\n")
    assert main(["pretrain", "--config", str(bad_key), "--kb", str(FIXTURE1), "--dataset", "x"]) == EXIT_CONFIG
    assert "learning_rate" in capsys.readouterr().err
    bad_value = tmp_path / "value.toml"
    bad_value.write_text('beam = 0\n')
    assert main(["pretrain", "--config", str(bad_value), "--kb", str(FIXTURE1), "--dataset", str(bad_value),
                 "--run-dir", str(tmp_path / "r")]) == EXIT_CONFIG
    broken = tmp_path / "broken.toml"
    broken.write_text("epochs = \n")
    assert main(["exec", "--config", str(broken)]) == EXIT_CONFIG


def test_malformed_dataset_is_data_error(tmp_path, capsys):
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"question": "q", "answers": ["a"]}\n{oops\n')
    assert main(["pretrain", "--kb", str(FIXTURE1), "--dataset", str(bad), "--run-dir",
                 str(tmp_path / "run")]) == EXIT_DATA
    assert "bad.jsonl:2" in capsys.readouterr().err


def test_env_override_and_priority(tmp_path, monkeypatch):
    monkeypatch.setenv("PROGTRANSFER_SEED", "11")
    monkeypatch.setenv("PROGTRANSFER_SOURCE_SIZE", "5")
    assert main(["gen", "--out", str(tmp_path / "a"), "--target-size", "3", "--dev-size", "2"]) == EXIT_OK
    cfg = tomllib.loads((tmp_path / "a" / "gen_config.toml").read_text())
    assert (cfg["seed"], cfg["source_size"], cfg["target_size"]) == (11, 5, 3)
    # explicit flags win over the environment
    assert main(["gen", "--out", str(tmp_path / "b"), "--seed", "12", "--target-size", "3",
                 "--dev-size", "2"]) == EXIT_OK
    assert tomllib.loads((tmp_path / "b" / "gen_config.toml").read_text())["seed"] == 12
    monkeypatch.setenv("PROGTRANSFER_SEED", "eleven")
    assert main(["gen", "--out", str(tmp_path / "c")]) == EXIT_CONFIG


@pytest.mark.parametrize("command", sorted(COMMANDS))
def test_help(command, capsys):
    with pytest.raises(SystemExit) as exc:
        main([command, "--help"])
    assert exc.value.code == 0
    assert f"progtransfer {command}" in capsys.readouterr().out


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "progtransfer", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "prune-stats" in out.stdout


def test_pipeline_and_config_echo(data, tmp_path, capsys):
    run = tmp_path / "pre"
    argv = ["pretrain", "--kb", str(data / "kb_source.json"), "--dataset", str(data / "source.jsonl"),
            "--run-dir", str(run)] + TINY_TRAIN
    assert main(argv) == EXIT_OK
    assert json.loads(capsys.readouterr().out.strip().splitlines()[-1])["train_exact_match"]
    echo = tomllib.loads((run / "config.toml").read_text())
    assert echo["epochs"] == 2 and echo["hidden"] == 8
    # the echoed config alone reproduces the run
    again = tmp_path / "again"
    assert main(["pretrain", "--config", str(run / "config.toml"), "--run-dir", str(again)]) == EXIT_OK
    assert (again / "metrics.json").read_bytes() == (run / "metrics.json").read_bytes()
    assert (again / "model" / "params.bin").read_bytes() == (run / "model" / "params.bin").read_bytes()

    ft = tmp_path / "ft"
    assert main(["finetune", "--kb", str(data / "kb_target.json"), "--dataset", str(data / "target_train.jsonl"),
                 "--model", str(run / "model"), "--run-dir", str(ft), "--finetune-epochs", "1"]
                + TINY_TRAIN) == EXIT_OK
    assert (ft / "finetune_loss.csv").read_text().startswith("epoch,loss,skipped,search_f1")
    ev = tmp_path / "ev"
    assert main(["eval", "--kb", str(data / "kb_target.json"), "--dataset", str(data / "target_dev.jsonl"),
                 "--model", str(ft / "model"), "--run-dir", str(ev)] + TINY_TRAIN) == EXIT_OK
    metrics = json.loads((ev / "metrics.json").read_text())
    assert metrics["n"] == 4
    tops = [metrics["topk_f1"][k] for k in ("1", "2", "5", "10")]
    assert tops == sorted(tops)
    assert len((ev / "predictions.jsonl").read_text().splitlines()) == 4
    assert "Hits@1" in capsys.readouterr().out


def test_prune_stats(data, capsys):
    assert main(["prune-stats", "--kb", str(data / "kb_source.json"),
                 "--dataset", str(data / "source.jsonl")]) == EXIT_OK
    rows = capsys.readouterr().out.splitlines()
    assert rows[0].startswith("id,pruned,unpruned,ratio")
    assert len(rows) == 20 + 2
    mean = float(rows[-1].split(",")[3])
    assert 0 < mean <= 1


def test_transfer_is_reproducible(data, tmp_path):
    argv = ["transfer", "--data", str(data), "--finetune-epochs", "1"] + TINY_TRAIN
    assert main(argv + ["--run-dir", str(tmp_path / "a")]) == EXIT_OK
    assert main(argv + ["--run-dir", str(tmp_path / "b")]) == EXIT_OK
    for name in ("metrics.json", "pretrain_loss.csv", "finetune_loss.csv", "report.txt", "config.toml"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
