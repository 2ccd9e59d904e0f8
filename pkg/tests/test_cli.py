import configparser
import csv
import json
import time

import pytest

from cnsl.cli import EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, main, parse_diffusion
from cnsl.config import SNAPSHOT, ConfigError


def run(*argv):
    return main([str(a) for a in argv])


def snapshot(directory):
    p = configparser.ConfigParser(interpolation=None)
    p.read(directory / SNAPSHOT)
    return p


@pytest.fixture(scope="module")
def toy(tmp_path_factory):
    d = tmp_path_factory.mktemp("toy") / "data"
    assert run("simulate-data", "--kind", "toy", "--diffusion", "ic2ic", "--samples", 24, "--seed", 3,
               "--ic-edge-prob", 0.3, "--out", d) == EXIT_OK
    return d


@pytest.fixture(scope="module")
def trained(toy, tmp_path_factory):
    out = tmp_path_factory.mktemp("model")
    t0 = time.perf_counter()
    assert run("train", "--data", toy, "--out", out, "--epochs", 1, "--seed", 3) == EXIT_OK
    assert time.perf_counter() - t0 < 60
    return out


def test_parse_diffusion():
    assert parse_diffusion("lt2ic") == ("LT", "IC")
    assert parse_diffusion("SIS2lt") == ("SIS", "LT")
    with pytest.raises(ConfigError):
        parse_diffusion("lt2xx")


def test_simulate_cross_platform_meta_names_both_models(tmp_path):
    out = tmp_path / "d"
    assert run("simulate-data", "--kind", "cross-platform", "--diffusion", "lt2ic", "--samples", 2,
               "--out", out) == EXIT_OK
    meta = json.loads((out / "meta.json").read_text())
    assert meta["diffusion_source"]["model"] == "LT"
    assert meta["diffusion_target"]["model"] == "IC"
    assert meta["label"] == "LT2IC"
    assert (out / SNAPSHOT).is_file()
    assert run("validate", "--data", out) == EXIT_OK


def test_samples_zero_is_usage_error(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        run("simulate-data", "--samples", 0, "--out", tmp_path / "d")
    assert exc.value.code == EXIT_USAGE
    assert ">= 1" in capsys.readouterr().err


def test_unknown_config_key_is_named(tmp_path, capsys):
    ini = tmp_path / "bad.ini"
    ini.write_text("[train]\nepochz = 2\n")
    assert run("simulate-data", "--config", ini, "--out", tmp_path / "d") == EXIT_USAGE
    assert "epochz" in capsys.readouterr().err


def test_same_seed_gives_identical_dataset(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert run("simulate-data", "--kind", "toy", "--samples", 4, "--seed", 7, "--out", d) == EXIT_OK
    files = sorted(p.name for p in a.iterdir())
    assert files == sorted(p.name for p in b.iterdir())
    for name in files:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_missing_dataset_names_path(tmp_path, capsys):
    missing = tmp_path / "nowhere"
    assert run("train", "--data", missing, "--out", tmp_path / "m") == EXIT_USAGE
    assert str(missing) in capsys.readouterr().err


def test_train_defaults_recorded(trained):
    snap = snapshot(trained)
    assert snap["train"]["batch_size"] == "2"
    assert snap["train"]["epochs"] == "1"           # overridden by the flag
    assert snap["invocation"]["command"] == "train"
    with open(trained / "history.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert rows and rows[0]["epoch"] == "0"
    assert (trained / "model.ckpt").is_file()


def test_default_epochs_in_snapshot(tmp_path):
    from cnsl.config import load_config, write_snapshot
    snap = write_snapshot(load_config(), tmp_path)
    p = configparser.ConfigParser(interpolation=None)
    p.read(snap)
    assert p["train"]["epochs"] == "15" and p["train"]["batch_size"] == "2"
    assert p["infer"]["eta"] == "2"


def test_infer_outputs(toy, trained, tmp_path):
    out = tmp_path / "pred"
    assert run("infer", "--data", toy, "--checkpoint", trained / "model.ckpt", "--out", out,
               "--seed", 3) == EXIT_OK
    info = json.loads((out / "predictions.json").read_text())
    assert info["method"] == "CNSL" and info["test_indices"]
    meta = json.loads((toy / "meta.json").read_text())
    for i in info["test_indices"]:
        with open(out / f"pred_{i}.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == meta["n_source"]
        assert {r["seed"] for r in rows} <= {"0", "1"}
        trace = json.loads((out / f"trace_{i}.json").read_text())
        assert trace["eta"] == 2 and len(trace["iterations"]) == 2
        assert trace["objective"] == "observed"


def test_infer_spread_max_trace(toy, trained, tmp_path):
    out = tmp_path / "pred"
    assert run("infer", "--data", toy, "--checkpoint", trained / "model.ckpt", "--out", out,
               "--objective", "spread-max") == EXIT_OK
    info = json.loads((out / "predictions.json").read_text())
    trace = json.loads((out / f"trace_{info['test_indices'][0]}.json").read_text())
    assert trace["objective"] == "spread-max"
    assert trace["target_all_ones"] is True
    assert trace["target_sum"] == json.loads((toy / "meta.json").read_text())["n_target"]


def test_infer_rejects_mismatched_checkpoint(trained, tmp_path, capsys):
    other = tmp_path / "other"
    assert run("simulate-data", "--kind", "toy", "--samples", 3, "--seed", 99, "--out", other) == EXIT_OK
    assert run("infer", "--data", other, "--checkpoint", trained / "model.ckpt",
               "--out", tmp_path / "p") == EXIT_USAGE
    assert "model.ckpt" in capsys.readouterr().err


def test_evaluate_and_empty_dir(toy, tmp_path, capsys):
    lp = tmp_path / "lpsi"
    assert run("baseline", "lpsi", "--data", toy, "--out", lp) == EXIT_OK
    assert run("evaluate", "--predictions", lp, "--out", tmp_path / "ev") == EXIT_OK
    text = (tmp_path / "ev" / "metrics.md").read_text()
    assert "LPSI" in text and "toy-IC2IC AUC" in text
    empty = tmp_path / "empty"
    empty.mkdir()
    capsys.readouterr()
    assert run("evaluate", "--predictions", empty, "--out", tmp_path / "ev2") == EXIT_USAGE
    assert "nothing to evaluate" in capsys.readouterr().err


def test_benchmark_runtime_rows(toy, tmp_path):
    out = tmp_path / "bench"
    assert run("benchmark", "--data", toy, "--epochs", 1, "--out", out) == EXIT_OK
    with open(out / "runtime.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert sorted(r["method"] for r in rows) == ["CNSL", "LPSI"]
    assert (out / "predictions" / "toy-IC2IC" / "cnsl" / "predictions.json").is_file()


def test_validate_flags_broken_dataset(toy, tmp_path, capsys):
    import shutil
    broken = tmp_path / "broken"
    shutil.copytree(toy, broken)
    path = broken / "sample_0_x_s.csv"
    path.write_text(path.read_text().replace(",1.0\n", ",0.5\n"))
    assert run("validate", "--data", broken) == EXIT_RUNTIME
    assert "sample 0" in capsys.readouterr().out


def test_threads_env(monkeypatch, tmp_path):
    monkeypatch.setenv("CNSL_THREADS", "0")
    assert run("simulate-data", "--kind", "toy", "--samples", 2, "--out", tmp_path / "d") == EXIT_USAGE
    monkeypatch.setenv("CNSL_THREADS", "2")
    assert run("simulate-data", "--kind", "toy", "--samples", 2, "--out", tmp_path / "d") == EXIT_OK
    assert snapshot(tmp_path / "d")["run"]["threads"] == "2"
