import json
import subprocess
import sys

import pytest

from postureguard.cli import EXIT_DATA, EXIT_MODEL, EXIT_OK, EXIT_USAGE, main
from postureguard.io import load_dataset


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["simulate", "--subjects", "1", "--samples-per-class", "2", "--frames", "10",
                 "--out", str(d / "ds.jsonl")]) == EXIT_OK
    return d


@pytest.fixture(scope="module")
def tau2_model(workdir):
    path = workdir / "m2.pgb"
    assert main(["train", str(workdir / "ds.jsonl"), "--model", str(path), "--tau", "2",
                 "--max-rounds", "8", "--num-leaves", "4", "--seed", "1"]) == EXIT_OK
    return path


def test_simulate_sample_count_and_determinism(workdir):
    ds = load_dataset(workdir / "ds.jsonl")
    assert len(ds.samples) == 38 and ds.n_frames == 380
    assert main(["simulate", "--subjects", "1", "--samples-per-class", "2", "--frames", "10",
                 "--out", str(workdir / "again.jsonl")]) == EXIT_OK
    assert (workdir / "again.jsonl").read_bytes() == (workdir / "ds.jsonl").read_bytes()


def test_simulate_perturbation_flag(workdir):
    out = workdir / "noisy.jsonl"
    assert main(["simulate", "--subjects", "1", "--samples-per-class", "1", "--frames", "2",
                 "--noise-floor-scale", "2.0", "--out", str(out)]) == EXIT_OK
    assert '"noise_floor_scale"' in out.read_text().splitlines()[1]
    assert main(["simulate", "--noise-floor-scale", "0", "--out", str(out)]) == EXIT_USAGE


def test_usage_errors(workdir, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["simulate", "--subjects", "0", "--out", str(workdir / "x.jsonl")])
    assert exc.value.code == EXIT_USAGE
    with pytest.raises(SystemExit) as exc:
        main(["evaluate", "--compare-tau", "1,x"])
    assert exc.value.code == EXIT_USAGE
    assert main(["evaluate"]) == EXIT_USAGE


def test_train_report_and_zero_rounds(workdir, capsys):
    path = workdir / "m0.pgb"
    assert main(["train", str(workdir / "ds.jsonl"), "--model", str(path), "--tau", "1",
                 "--max-rounds", "0"]) == EXIT_OK
    report = json.loads((workdir / "m0.report.json").read_text())
    assert report["train"]["best_round"] == 0 and report["tau"] == 1
    assert len(report["train_samples"]) + len(report["test_samples"]) == 38
    assert "weighted F1" in capsys.readouterr().out


def test_layout_mismatch_exit_code(workdir, tau2_model, capsys):
    feats = workdir / "tau1.npz"
    assert main(["export-schema", "--tau", "1", "--out", str(workdir / "schema.json"),
                 "--dataset", str(workdir / "ds.jsonl"), "--features-out", str(feats)]) == EXIT_OK
    assert len(json.loads((workdir / "schema.json").read_text())["feature_names"]) == 103
    code = main(["evaluate", "--model", str(tau2_model), "--features", str(feats),
                 "--out-dir", str(workdir)])
    assert code == EXIT_MODEL
    assert "tau=1" in capsys.readouterr().err


def test_evaluate_and_predict(workdir, tau2_model):
    assert main(["evaluate", "--model", str(tau2_model), "--dataset", str(workdir / "ds.jsonl"),
                 "--out-dir", str(workdir / "eval")]) == EXIT_OK
    assert (workdir / "eval" / "confusion_seed1_tau2.csv").exists()
    out = workdir / "pred.csv"
    assert main(["predict", "--model", str(tau2_model), "--dataset", str(workdir / "ds.jsonl"),
                 "--out", str(out)]) == EXIT_OK
    lines = out.read_text().splitlines()
    assert lines[0] == "sample_id,timestamp_s,predicted" and len(lines) == 381


def test_sweep_writes_table(workdir, tau2_model):
    assert main(["evaluate", "--model", str(tau2_model), "--dataset", str(workdir / "ds.jsonl"),
                 "--sweep", "1,2", "--out-dir", str(workdir / "sweep")]) == EXIT_OK
    tables = list((workdir / "sweep").glob("*.csv"))
    assert len(tables) == 1 and len(tables[0].read_text().splitlines()) == 3


def test_stream_command(workdir, tau2_model, capsys):
    src = (workdir / "ds.jsonl").read_text().splitlines()
    # drop the per-sample fields; a stream is just frames after the header
    frames = [json.loads(l) for l in src[1:11]]
    for f in frames:
        for k in ("sample_id", "subject_id", "label", "scenario_tags"):
            f.pop(k)
    (workdir / "live.jsonl").write_text("\n".join([src[0], "garbage"] + [json.dumps(f) for f in frames]) + "\n")
    timeline = workdir / "timeline.jsonl"
    assert main(["stream", "--model", str(tau2_model), "--input", str(workdir / "live.jsonl"),
                 "--timeline", str(timeline), "--quiet"]) == EXIT_OK
    assert len(timeline.read_text().splitlines()) == 10
    assert "10 frames" in capsys.readouterr().err


def test_model_and_data_errors(workdir):
    bad = workdir / "bad.pgb"
    bad.write_bytes(b"PGBOOST\nnot really a model")
    assert main(["predict", "--model", str(bad), "--dataset", str(workdir / "ds.jsonl")]) == EXIT_MODEL
    assert main(["train", str(workdir / "missing.jsonl"), "--model", str(bad)]) == EXIT_DATA


def test_console_entry_point(workdir):
    res = subprocess.run([sys.executable, "-m", "postureguard", "export-schema", "--tau", "2"],
                         capture_output=True, text=True, check=True)
    assert json.loads(res.stdout)["tau"] == 2
