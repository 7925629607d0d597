import hashlib
import json

import numpy as np
import pytest

from rssgan.cli import cli, main

from conftest import write_toy_file

COMMANDS = ["fetch", "split", "train-gan", "generate", "train-classifier", "evaluate", "table1", "sweep"]
FAST = ["--set", "gan.iterations=20", "--set", "classifier.epochs=3", "--set", "classifier.hidden=[8]"]


@pytest.fixture
def env(tmp_path):
    data = write_toy_file(tmp_path / "toy.txt")
    out = tmp_path / "runs"

    def run(*args):
        return main([args[0], "--data", str(data), "--output-dir", str(out), *args[1:]])

    return run, out, data


@pytest.mark.parametrize("command", COMMANDS)
def test_every_command_has_help(command, capsys):
    assert main([command, "--help"]) == 0
    assert "Usage" in capsys.readouterr().out


def test_group_help_lists_commands(capsys):
    assert main(["--help"]) == 0
    text = capsys.readouterr().out
    assert all(c in text for c in COMMANDS)


def test_unknown_flag_is_usage_error():
    assert main(["split", "--no-such-flag"]) == 1


def test_bad_override_is_config_error(env):
    run, *_ = env
    assert run("split", "--set", "gan.nope=3") == 1


def test_missing_dataset_is_data_error(tmp_path):
    assert main(["split", "--data", str(tmp_path / "absent.txt"), "--output-dir", str(tmp_path)]) == 2


def test_full_pipeline(env, capsys):
    run, out, _ = env
    assert run("split", "--tag", "s") == 0
    split = out / "split" / "s"
    assert (split / "manifest.csv").exists()

    assert run("train-gan", "--split", str(split), "--fraction", "0.5", "--tag", "g", *FAST) == 0
    gans = out / "train-gan" / "g"
    assert sorted(p.name for p in gans.glob("gan_class*.json")) == [f"gan_class{c}.json" for c in range(1, 5)]

    assert run("generate", "--gan", str(gans), "--class", "2", "--count", "250", "--tag", "x") == 0
    synth = out / "generate" / "x"
    rows = np.loadtxt(synth / "synthetic_class2.txt", delimiter="\t")
    assert rows.shape == (250, 8) and np.all(rows[:, -1] == 2)
    assert json.loads((synth / "manifest.json").read_text())["synthetic"] is True

    assert run("train-classifier", "--split", str(split), "--fraction", "0.5",
               "--synthetic", str(synth), "--tag", "c", *FAST) == 0
    assert "(250 synthetic)" in capsys.readouterr().out
    model = out / "train-classifier" / "c"
    assert (model / "model.json").exists()

    assert run("evaluate", "--model", str(model), "--split", str(split), "--tag", "e") == 0
    header, row = (out / "evaluate" / "e" / "eval.csv").read_text().splitlines()
    assert 0.0 <= float(row.split(",")[0]) <= 100.0


def test_tag_is_write_once(env):
    run, *_ = env
    assert run("split", "--tag", "t") == 0
    assert run("split", "--tag", "t") == 1


def test_untagged_outputs_do_not_collide(env):
    run, out, _ = env
    assert run("split") == 0 and run("split") == 0
    assert len(list((out / "split").iterdir())) == 2


def test_evaluate_missing_model_fails(env, tmp_path, capsys):
    run, out, _ = env
    assert run("split", "--tag", "s") == 0
    code = run("evaluate", "--model", str(tmp_path / "nowhere"), "--split", str(out / "split" / "s"))
    assert code != 0
    assert "missing trained classifier" in capsys.readouterr().err


def test_generate_missing_class_model_fails(env, tmp_path):
    run, *_ = env
    assert run("generate", "--gan", str(tmp_path), "--class", "1", "--count", "3") == 1


def test_fetch_keeps_valid_cache(tmp_path, capsys):
    data = write_toy_file(tmp_path / "wifi.txt")
    digest = hashlib.sha256(data.read_bytes()).hexdigest()
    code = main(["fetch", "--data", str(data), "--url", "http://unreachable.invalid/x", "--sha256", digest])
    assert code == 0
    assert digest in capsys.readouterr().out


def test_fetch_corrupted_download_names_digests(tmp_path, capsys):
    src = tmp_path / "served.txt"
    src.write_text("corrupted\n")
    dest = tmp_path / "cache" / "wifi.txt"
    code = main(["fetch", "--data", str(dest), "--url", src.as_uri(), "--sha256", "a" * 64])
    assert code == 2
    err = capsys.readouterr().err
    assert "a" * 64 in err and hashlib.sha256(b"corrupted\n").hexdigest() in err
    assert not dest.exists()


def test_table1_twice_gives_identical_aggregate(env):
    run, out, _ = env
    args = ["--seed", "7", "--repetitions", "2", "--workers", "1", *FAST]
    assert run("table1", "--tag", "a", *args) == 0
    assert run("table1", "--tag", "b", *args) == 0
    a = (out / "table1" / "a" / "aggregate.csv").read_bytes()
    assert a == (out / "table1" / "b" / "aggregate.csv").read_bytes()
    for name in ("runs.csv", "table1.md", "meta.json", "config.yaml"):
        assert (out / "table1" / "a" / name).exists()


def test_sweep_writes_figure(env):
    run, out, _ = env
    assert run("sweep", "--tag", "s", "--step", "0.5", "--repetitions", "1", "--workers", "1", *FAST) == 0
    svg = (out / "sweep" / "s" / "sweep.svg").read_text()
    assert svg.startswith("<svg")


def test_click_group_is_importable():
    assert set(COMMANDS) <= set(cli.commands)


def test_aggregate_independent_of_worker_count(env):
    run, out, _ = env
    args = ["--seed", "3", "--repetitions", "2", *FAST]
    assert run("table1", "--tag", "one", "--workers", "1", *args) == 0
    assert run("table1", "--tag", "two", "--workers", "2", *args) == 0
    assert (out / "table1/one/aggregate.csv").read_bytes() == (out / "table1/two/aggregate.csv").read_bytes()
