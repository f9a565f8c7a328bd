"""End-to-end tests of the cimsim CLI (binary path in CIMSIM_CLI)."""

import json
import os
import subprocess
from pathlib import Path

import pytest

CLI = os.environ.get("CIMSIM_CLI")
if not CLI:
    pytest.skip("CIMSIM_CLI not set", allow_module_level=True)

REPO = Path(__file__).resolve().parents[2]


def run(*args, env_extra=None, check=False):
    env = dict(os.environ)
    if env_extra:
        env.update(env_extra)
    proc = subprocess.run(
        [CLI, *args], capture_output=True, text=True, env=env, timeout=540
    )
    if check and proc.returncode != 0:
        raise AssertionError(f"{args} failed ({proc.returncode}): {proc.stderr}\n{proc.stdout}")
    return proc


def test_device_mc_summary_and_determinism(tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    run("--out", str(out1), "--seed", "9", "device-mc", "--cells", "20000",
        "--levels", "16", check=True)
    summary = json.loads((out1 / "device_mc_summary.json").read_text())
    assert summary["yield"] >= 0.998
    assert abs(summary["forming_mean_v"] - 1.89) < 0.01

    run("--out", str(out2), "--seed", "9", "device-mc", "--cells", "20000",
        "--levels", "16", check=True)
    assert (out1 / "device_mc.csv").read_bytes() == (out2 / "device_mc.csv").read_bytes()


def test_device_mc_usage_error(tmp_path):
    proc = run("--out", str(tmp_path / "o"), "device-mc", "--cells", "0")
    assert proc.returncode == 2


def test_seed_env_override(tmp_path):
    run("--out", str(tmp_path / "o"), "device-mc", "--cells", "64",
        env_extra={"CIM_SIM_SEED": "99"}, check=True)
    summary = json.loads((tmp_path / "o" / "device_mc_summary.json").read_text())
    assert summary["seed"] == 99


def test_verify_logic_pass_and_negative_control(tmp_path):
    proc = run("--out", str(tmp_path / "a"), "--seed", "3", "verify-logic",
               "--samples", "200000")
    assert proc.returncode == 0
    assert "PASS" in proc.stdout

    proc = run("--out", str(tmp_path / "b"), "--seed", "3", "verify-logic",
               "--samples", "1000", "--inject-gate-bug")
    assert proc.returncode == 1

    proc = run("--out", str(tmp_path / "c"), "--seed", "3", "verify-logic",
               "--delay-us", "4.0", "--samples", "200000")
    assert proc.returncode == 0
    report = json.loads((tmp_path / "c" / "verify_logic.json").read_text())
    assert report["empirical_ber"] > 0.4
    assert "warning" in proc.stdout


def test_mac_oracle(tmp_path):
    proc = run("--out", str(tmp_path / "o"), "--seed", "3", "mac-oracle", check=True)
    assert "PASS" in proc.stdout
    report = json.loads((tmp_path / "o" / "mac_oracle.json").read_text())
    assert report["multiply_cases"] == 65025
    assert report["multiply_mismatches"] == 0
    assert report["spot_multiply_7_m27"] == -189
    assert report["spot_euclid_7_m27"] == 1156


def test_energy_manifests(tmp_path):
    proc = run("--out", str(tmp_path / "t1"), "energy", "--network",
               str(REPO / "manifests" / "mnist_cnn.json"), check=True)
    report = json.loads((tmp_path / "t1" / "energy.json").read_text())
    rows = {r["platform"]: r for r in report["platforms"]}
    assert 75.11 <= rows["cim_pruned"]["reduction_vs_gpu_pct"] <= 76.11

    run("--out", str(tmp_path / "t2"), "energy", "--network",
        str(REPO / "manifests" / "pointcloud_conv.json"), check=True)
    report = json.loads((tmp_path / "t2" / "energy.json").read_text())
    rows = {r["platform"]: r for r in report["platforms"]}
    assert abs(rows["cim_pruned"]["reduction_vs_unpruned_pct"] - 59.94) < 1e-9

    empty = tmp_path / "empty.json"
    empty.write_text('{"layers": []}')
    run("--out", str(tmp_path / "t3"), "energy", "--network", str(empty), check=True)
    report = json.loads((tmp_path / "t3" / "energy.json").read_text())
    for row in report["platforms"]:
        assert row["energy_pj_scaled"] == 0.0

    bad = tmp_path / "bad.json"
    bad.write_text('{"layers": [{"name": "x", "type": "zap"}]}')
    proc = run("--out", str(tmp_path / "t4"), "energy", "--network", str(bad))
    assert proc.returncode == 2


def test_train_requires_dataset(tmp_path):
    cfg = tmp_path / "cfg.toml"
    cfg.write_text(f'seed = 1\n[train]\ndataset_dir = "{tmp_path}/missing"\n')
    proc = run("--config", str(cfg), "--out", str(tmp_path / "o"), "train")
    assert proc.returncode == 3


def test_seed_is_mandatory_for_sampling_commands(tmp_path):
    proc = run("--out", str(tmp_path / "o"), "device-mc", "--cells", "16")
    assert proc.returncode == 2
    assert "seed" in proc.stderr


def test_train_artifacts_and_determinism(tmp_path):
    data = tmp_path / "digits"
    run("--seed", "11", "--out", str(tmp_path / "gen"), "dataset-gen", "--dir",
        str(data), "--train", "400", "--test", "200", check=True)

    cfg = tmp_path / "cfg.toml"
    cfg.write_text(
        "seed = 5\n"
        "[train]\n"
        "epochs = 2\n"
        "train_subset = 200\n"
        "test_subset = 100\n"
        f'dataset_dir = "{data}"\n'
        "[prune]\n"
        "normalized = true\n"
        "distance_threshold = 0.15\n"
    )

    out1, out2 = tmp_path / "r1", tmp_path / "r2"
    run("--config", str(cfg), "--out", str(out1), "train", check=True)
    for name in ["history.json", "features.csv", "energy.json", "prune_history.csv",
                 "ledger.json", "manifest.json", "fc.bin"]:
        assert (out1 / name).exists(), name
    assert list((out1 / "blocks").glob("*.cimb"))

    history = json.loads((out1 / "history.json").read_text())
    assert len(history["epochs"]) == 2
    assert all(e["modes_match"] for e in history["epochs"])

    run("--config", str(cfg), "--out", str(out2), "train", check=True)
    assert (out1 / "history.json").read_bytes() == (out2 / "history.json").read_bytes()
    assert (out1 / "features.csv").read_bytes() == (out2 / "features.csv").read_bytes()

    # --no-prune keeps every kernel active.
    out3 = tmp_path / "r3"
    run("--config", str(cfg), "--out", str(out3), "train", "--no-prune", check=True)
    history = json.loads((out3 / "history.json").read_text())
    assert history["final_prune_fraction"] == 0.0
    assert history["ops_reduction_pct"] == 0.0


def test_output_directory_lock(tmp_path):
    out = tmp_path / "locked"
    out.mkdir()
    (out / ".lock").write_text("locked\n")
    proc = run("--out", str(out), "--seed", "1", "device-mc", "--cells", "16")
    assert proc.returncode == 2
    assert "locked" in proc.stderr


def test_config_errors(tmp_path):
    cfg = tmp_path / "bad.toml"
    cfg.write_text("[device]\nprogram_sgima = 1.0\n")
    proc = run("--config", str(cfg), "--out", str(tmp_path / "o"), "device-mc",
               "--cells", "16")
    assert proc.returncode == 2
    assert "unknown key" in proc.stderr
