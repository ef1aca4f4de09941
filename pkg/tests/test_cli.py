import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from nowcastamp.seqz import write_seqz

POWER_HEADER = "timestamp_ms,power_w,sm_util_pct,mem_util_pct\n"


def run_cli(*args, cwd=None):
    return subprocess.run(
        [sys.executable, "-m", "nowcastamp", *args],
        capture_output=True, text=True, cwd=cwd,
    )


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("events")
    r = run_cli("gen-data", "--out", str(d), "--events", "4", "--hw", "16",
                "--frames", "25", "--seed", "1")
    assert r.returncode == 0, r.stderr
    return d


def test_gen_data_writes_events(data_dir):
    files = sorted(data_dir.glob("*.seqz"))
    assert len(files) == 4


def test_train_outputs(tmp_path, data_dir):
    out = tmp_path / "run"
    r = run_cli("train", "--data", str(data_dir), "--model", "U1-4",
                "--precision", "amp", "--batch", "4", "--epochs", "2",
                "--seed", "0", "--out", str(out), "--test-data", str(data_dir))
    assert r.returncode == 0, r.stderr
    assert (out / "history.csv").exists()
    assert (out / "loss_curve.png").stat().st_size > 0
    assert (out / "weights" / "manifest.json").exists()
    assert (out / "runs.csv").exists()
    summary = json.loads((out / "run.json").read_text())
    assert summary["model"] == "U1-4"
    assert "test_mse" in summary and "persistence_mse" in summary


def test_eval_writes_csv_and_figure(tmp_path):
    rng = np.random.default_rng(0)
    pred_dir, truth_dir = tmp_path / "p", tmp_path / "t"
    pred_dir.mkdir(), truth_dir.mkdir()
    for i in range(3):
        write_seqz(pred_dir / f"{i}.seqz", rng.uniform(0, 255, (12, 8, 8)).astype(np.float32))
        write_seqz(truth_dir / f"{i}.seqz", rng.uniform(0, 255, (12, 8, 8)).astype(np.float32))
    out = tmp_path / "eval" / "report.csv"
    r = run_cli("eval", "--pred", str(pred_dir), "--truth", str(truth_dir),
                "--out", str(out))
    assert r.returncode == 0, r.stderr
    with open(out) as fh:
        rows = list(csv.reader(fh))
    assert rows[0][:4] == ["threshold", "lead_time", "H", "M"]
    assert out.with_suffix(".png").stat().st_size > 0


def test_eval_mismatched_stacks_exit_1(tmp_path):
    pred_dir, truth_dir = tmp_path / "p", tmp_path / "t"
    pred_dir.mkdir(), truth_dir.mkdir()
    write_seqz(pred_dir / "a.seqz", np.zeros((12, 8, 8), np.float32))
    write_seqz(truth_dir / "a.seqz", np.zeros((12, 4, 4), np.float32))
    r = run_cli("eval", "--pred", str(pred_dir), "--truth", str(truth_dir),
                "--out", str(tmp_path / "r.csv"))
    assert r.returncode == 1


def test_cost_text_and_csv(tmp_path):
    csv_path = tmp_path / "cost.csv"
    r = run_cli("cost", "--model", "U4-32", "--batch", "32", "--precision", "amp",
                "--budget-bytes", "34359738368", "--csv", str(csv_path))
    assert r.returncode == 0, r.stderr
    assert "trainable params" in r.stdout
    assert "fits" in r.stdout
    with open(csv_path) as fh:
        rows = list(csv.reader(fh))
    assert rows[1][0] == "U4-32"


def test_cost_param_table_lists_family(tmp_path):
    r = run_cli("cost", "--param-table")
    assert r.returncode == 0
    assert "U5-256" in r.stdout and "reported" in r.stdout


def test_cost_bad_model_name_exit_2():
    r = run_cli("cost", "--model", "U-4")
    assert r.returncode == 2
    assert "U-4" in r.stderr


def test_sweep_outputs(tmp_path, data_dir):
    out = tmp_path / "sweep"
    r = run_cli("sweep", "--data", str(data_dir), "--models", "U1-2,U1-4",
                "--precisions", "fp32,amp", "--batches", "4", "--epochs", "1",
                "--out", str(out))
    assert r.returncode == 0, r.stderr
    with open(out / "cells.csv") as fh:
        cells = list(csv.DictReader(fh))
    assert len(cells) == 4
    assert all(c["status"] == "completed" for c in cells)
    with open(out / "runs.csv") as fh:
        runs = list(csv.DictReader(fh))
    assert len(runs) == 4


def test_report_from_reference(tmp_path):
    out = tmp_path / "rep"
    r = run_cli("report", "--use-reference", "--baseline", "U4-32", "--out", str(out))
    assert r.returncode == 0, r.stderr
    for name in ("usage.csv", "timing.csv", "relative.csv", "energy.csv",
                 "report.txt", "speedup.png", "energy_reduction.png",
                 "relative_cost.png"):
        assert (out / name).stat().st_size > 0, name
    assert "1549.71" in (out / "relative.csv").read_text()


def test_report_missing_baseline_exit_1(tmp_path, data_dir):
    runs = tmp_path / "runs.csv"
    runs.write_text(
        "model,precision,batch,mean_epoch_s,energy_j,avg_sm,max_mem_util,avg_mem\n"
        "U1-2,fp32,4,1.0,0,0,0,0\n"
    )
    r = run_cli("report", "--runs", str(runs), "--baseline", "U4-32",
                "--out", str(tmp_path / "rep"))
    assert r.returncode == 1


def test_ingest_telemetry(tmp_path):
    log0 = tmp_path / "p0.csv"
    log0.write_text(POWER_HEADER + "0,100,50,40\n10000,100,55,42\n")
    log1 = tmp_path / "p1.csv"
    log1.write_text(POWER_HEADER + "0,0,10,10\n10000,200,20,20\n")
    out = tmp_path / "telem"
    r = run_cli("ingest-telemetry", "--log", str(log0), "--log", str(log1),
                "--out", str(out))
    assert r.returncode == 0, r.stderr
    with open(out / "energy.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[1][0] == "p0.csv" and float(rows[1][1]) == 1000.0
    assert rows[2][0] == "p1.csv" and float(rows[2][1]) == 1000.0
    assert rows[3][0] == "TOTAL" and float(rows[3][1]) == 2000.0
    assert (out / "power.png").stat().st_size > 0


def test_ingest_telemetry_bad_log_exit_2(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text(POWER_HEADER + "0,abc,50,40\n")
    r = run_cli("ingest-telemetry", "--log", str(bad), "--out", str(tmp_path / "o"))
    assert r.returncode == 2
    assert "line 2" in r.stderr


def test_train_corrupt_seqz_exit_2(tmp_path):
    d = tmp_path / "events"
    d.mkdir()
    (d / "event_00000.seqz").write_bytes(b"XXXX garbage")
    r = run_cli("train", "--data", str(d), "--model", "U1-2", "--batch", "2",
                "--epochs", "1", "--out", str(tmp_path / "run"))
    assert r.returncode == 2
