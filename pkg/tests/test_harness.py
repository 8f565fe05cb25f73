import json
import math
import os
import subprocess
import sys

import numpy as np
import pytest

from ctddiff.errors import ConfigError
from ctddiff.harness import (
    ExperimentConfig,
    emit_results,
    load_config,
    parse_results,
    run_cooperation_ablation,
    run_snr_sweep,
    run_trial,
    run_user_sweep,
)
from ctddiff.harness.cli import main
from ctddiff.harness.results import CSV_COLUMNS, SweepResult

SMALL = ExperimentConfig(trials=6, snr_db_list=(0.0, 10.0), num_users=6, user_list=(2, 6))


def test_config_layers(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("trials: 7\nsnr_db_list: [1, 2]\nchannel: awgn\n")
    cfg = load_config(p, {"trials": "9", "cooperation": "false"})
    assert cfg.trials == 9 and cfg.snr_db_list == (1.0, 2.0) and cfg.channel == "awgn" and cfg.cooperation is False


@pytest.mark.parametrize(
    "text", ["bogus: 1\n", "trials: many\n", "- 1\n- 2\n", "trials: [1\n"]
)
def test_config_errors(tmp_path, text):
    p = tmp_path / "c.yaml"
    p.write_text(text)
    with pytest.raises(ConfigError):
        load_config(p)


@pytest.mark.parametrize(
    "change",
    [dict(trials=0), dict(snr_db_list=()), dict(channel="ricean"), dict(denoiser="trained"),
     dict(denoiser="trained", checkpoint="/nonexistent.json"), dict(lambda0=1.5)],
)
def test_config_validation(change):
    with pytest.raises(ConfigError):
        ExperimentConfig().replace(**change).validate()


def test_trial_is_reproducible_and_order_free():
    a = run_trial(SMALL, 0.0, 6, True, 3)
    run_trial(SMALL, 10.0, 6, True, 1)
    b = run_trial(SMALL, 0.0, 6, True, 3)
    assert a == b


def test_sweep_shape_and_records():
    res = run_user_sweep(SMALL)
    assert len(res.records) == 4
    assert all(r.psnr_std >= 0 and r.ms_ssim_std >= 0 for r in res.records)
    assert res.config == SMALL.to_dict()
    with pytest.raises(ConfigError):
        run_user_sweep(SMALL.replace(user_list=(4,)))


def test_single_user_equals_no_cooperation():
    cfg = SMALL.replace(num_users=1)
    on = run_snr_sweep(cfg.replace(cooperation=True), timestamp="x")
    off = run_snr_sweep(cfg.replace(cooperation=False), timestamp="x")
    for a, b in zip(on.records, off.records):
        assert a.psnr_mean == b.psnr_mean and a.effective_variance_mean == b.effective_variance_mean


def test_awgn_variance_closed_form():
    for K in (1, 4, 8):
        cfg = SMALL.replace(channel="awgn", num_users=K, snr_db_list=(3.0,))
        R = K - 1
        var = 10 ** (-0.3)
        rec = run_snr_sweep(cfg).records[0]
        assert rec.effective_variance_mean == pytest.approx(var * (2 * R + 1) / (R + 1) ** 2, rel=0.02)


def test_high_snr_mse_vanishes():
    rec = run_snr_sweep(SMALL.replace(snr_db_list=(40.0,), source="gaussian", trials=20)).records[0]
    assert rec.mse_mean < 1e-3


def test_cooperation_helps_at_k8():
    cfg = SMALL.replace(num_users=8, snr_db_list=(0.0,), trials=200)
    paired = run_cooperation_ablation(cfg)
    assert paired.with_cooperation.records[0].psnr_mean > paired.without_cooperation.records[0].psnr_mean


def test_noiseless_delta_is_zero():
    cfg = SMALL.replace(snr_db_list=(math.inf,), trials=10)
    d = run_cooperation_ablation(cfg).deltas[math.inf]
    assert np.max(np.abs(d)) <= 1e-9


def test_high_snr_delta_non_negative_and_shrinking():
    cfg = SMALL.replace(num_users=20, snr_db_list=(20.0, 30.0, 40.0), trials=100)
    rows = run_cooperation_ablation(cfg).delta_summary()
    means = [r["psnr_delta_mean"] for r in rows]
    assert all(m >= 0 for m in means)
    assert means[0] > means[1] > means[2]


def test_csv_json_roundtrip(tmp_path):
    res = run_snr_sweep(SMALL, timestamp="2026-01-01T00:00:00+00:00")
    for fmt in ("csv", "json"):
        p = tmp_path / f"r.{fmt}"
        emit_results(res, fmt, p)
        back = parse_results(p)
        assert back == res
    doc = json.loads((tmp_path / "r.json").read_text())
    assert doc["schema_version"] == 1 and doc["provenance"]["timestamp"].startswith("2026")


def test_csv_format_contract(tmp_path):
    res = run_snr_sweep(SMALL)
    p = tmp_path / "r.csv"
    emit_results(res, "csv", p)
    lines = p.read_text().splitlines()
    assert lines[0].split(",") == CSV_COLUMNS
    assert len(lines) == 1 + len(res.records)
    psnr_field = lines[1].split(",")[CSV_COLUMNS.index("psnr_mean")]
    assert "e" not in psnr_field.lower()
    assert len(psnr_field.replace(".", "").replace("-", "").lstrip("0")) >= 9


def test_empty_result_is_header_only(tmp_path):
    p = tmp_path / "e.csv"
    emit_results(SweepResult("snr", [], None, None, None), "csv", p)
    assert p.read_text() == ",".join(CSV_COLUMNS) + "\n"
    assert parse_results(p).records == []


def test_emit_error_names_path(tmp_path):
    bad = tmp_path / "missing" / "r.csv"
    with pytest.raises(OSError, match="missing"):
        emit_results(SweepResult("snr", [], None, None, None), "csv", bad)


def test_workers_do_not_change_bytes(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    emit_results(run_snr_sweep(SMALL, workers=1), "csv", a)
    emit_results(run_snr_sweep(SMALL, workers=3), "csv", b)
    assert a.read_bytes() == b.read_bytes()


def test_cli_exit_codes(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("CTDDIFF_OUTPUT_DIR", str(tmp_path))
    assert main(["sweep-snr", "--trials", "2", "--snr", "0"]) == 0
    assert (tmp_path / "sweep_snr.csv").is_file()
    assert main(["sweep-snr", "--set", "trials=0"]) == 1
    assert main(["sweep-snr", "--config", str(tmp_path / "nope.yaml")]) == 1
    assert main(["ablate-coop", "--trials", "2", "--snr", "0", "--out", str(tmp_path / "ab.csv")]) == 0
    assert {"ab_coop.csv", "ab_nocoop.csv", "ab_delta.csv"} <= set(os.listdir(tmp_path))
    bad = ["train", "--set", "train_steps=400", "--set", "learning_rate=50", "--set", "optimizer=sgd", "--set", "source=gaussian"]
    with np.errstate(all="ignore"):
        assert main(bad) == 2


def test_cli_train_and_eval(tmp_path):
    ck = tmp_path / "ck.json"
    base = ["--set", "source=gaussian", "--set", "feature_dim=4", "--set", "hidden=16"]
    assert main(["train", *base, "--set", "train_steps=50", "--set", "batch_size=16", "--out", str(ck)]) == 0
    out = tmp_path / "ev.csv"
    assert main(["eval-checkpoint", *base, "--checkpoint", str(ck), "--trials", "5", "--out", str(out)]) == 0
    assert out.read_text().startswith("t,trained_mse,analytic_mse,excess_ratio")
    sweep = ["sweep-snr", *base, "--denoiser", "trained", "--checkpoint", str(ck), "--trials", "2", "--out", str(tmp_path / "s.csv")]
    assert main(sweep) == 0
    mismatch = ["sweep-snr", "--denoiser", "trained", "--checkpoint", str(ck), "--trials", "2", "--out", str(tmp_path / "t.csv")]
    assert main(mismatch) == 1


def test_module_entry_point(tmp_path):
    out = subprocess.run(
        [sys.executable, "-m", "ctddiff", "selftest", "--out", str(tmp_path / "st.csv")], capture_output=True, text=True
    )
    assert out.returncode == 0, out.stderr
    assert "FAIL" not in out.stdout
