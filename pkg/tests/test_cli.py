import json

import numpy as np
import pytest

from secfpp import cli, selftest


def write_config(tmp_path, payload, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


RUN_CFG = {
    "seed": 7, "n_users": 8, "rounds": 3, "lr": 0.05, "local_epochs": 5,
    "k_tokens": 3, "d_embed": 4, "r_reduced": 4,
    "adaptive": {"theta_spawn": 5.0, "theta_merge": 0.5},
    "task": {"n_domains": 2, "separation": 4.0, "local_scale": 0.2,
             "noise_sigma": 0.02},
}


def test_run_command_produces_outputs(tmp_path):
    cfg = write_config(tmp_path, RUN_CFG)
    code = cli.main(["run", "--config", cfg, "--out", str(tmp_path / "out")])
    assert code == 0
    run_dirs = list((tmp_path / "out").iterdir())
    assert len(run_dirs) == 1
    files = {p.name for p in run_dirs[0].iterdir()}
    assert files == {"transcript.jsonl", "metrics.jsonl", "summary.csv",
                     "audit.json"}
    audit = json.loads((run_dirs[0] / "audit.json").read_text())
    assert audit["passed"] is True


def test_run_outputs_deterministic(tmp_path):
    cfg = write_config(tmp_path, RUN_CFG)
    assert cli.main(["run", "--config", cfg, "--out", str(tmp_path / "a")]) == 0
    assert cli.main(["run", "--config", cfg, "--out", str(tmp_path / "b")]) == 0
    a = next((tmp_path / "a").iterdir())
    b = next((tmp_path / "b").iterdir())
    for name in ("transcript.jsonl", "summary.csv", "audit.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
    # metrics carry wall-clock phase timings; everything else must agree
    for la, lb in zip((a / "metrics.jsonl").read_text().splitlines(),
                      (b / "metrics.jsonl").read_text().splitlines()):
        ma, mb = json.loads(la), json.loads(lb)
        ma.pop("phase_seconds"), mb.pop("phase_seconds")
        assert ma == mb


def test_malformed_config_exit_2(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{"seed": 1,\n  "n_users": }')
    assert cli.main(["run", "--config", str(path)]) == 2
    err = capsys.readouterr().err
    assert "line 2" in err


def test_unknown_key_exit_2(tmp_path, capsys):
    cfg = write_config(tmp_path, {**RUN_CFG, "bogus": 1})
    assert cli.main(["run", "--config", cfg,
                     "--out", str(tmp_path / "out")]) == 2
    assert "bogus" in capsys.readouterr().err


def test_ell_constraint_named_in_error(tmp_path, capsys):
    cfg = write_config(tmp_path, {**RUN_CFG, "ell": 10})
    assert cli.main(["run", "--config", cfg,
                     "--out", str(tmp_path / "out")]) == 2
    assert "2*(ell+t-1)+1" in capsys.readouterr().err


def test_audit_command_on_persisted_transcript(tmp_path):
    cfg = write_config(tmp_path, RUN_CFG)
    assert cli.main(["run", "--config", cfg,
                     "--out", str(tmp_path / "out")]) == 0
    transcript = next((tmp_path / "out").iterdir()) / "transcript.jsonl"
    assert cli.main(["audit", "--transcript", str(transcript)]) == 0
    # corrupt it: append a plaintext-looking server-bound message
    with open(transcript, "a") as fh:
        fh.write(json.dumps({"type": "message", "round": 99,
                             "sender": "user:0", "receiver": "server",
                             "kind": "plaintext-prompt", "size": 8,
                             "digest": "ff" * 32}) + "\n")
    assert cli.main(["audit", "--transcript", str(transcript)]) == 4


def test_mi_command_single_point(tmp_path):
    cfg = write_config(tmp_path, {"n_values": [8], "d_values": [4],
                                  "sample_count": 1000, "seed": 3})
    assert cli.main(["mi", "--config", cfg,
                     "--out", str(tmp_path / "out")]) == 0
    csv_path = next((tmp_path / "out").iterdir()) / "mi.csv"
    lines = csv_path.read_text().strip().splitlines()
    assert lines[0] == "n,d,quantity,estimate,stderr"
    assert len(lines) == 1 + 6  # header + six quantities


def test_mi_grid_bounds_checked(tmp_path, capsys):
    cfg = write_config(tmp_path, {"n_values": [300], "d_values": [4]})
    assert cli.main(["mi", "--config", cfg,
                     "--out", str(tmp_path / "out")]) == 2


def test_bench_refuses_single_user(tmp_path, capsys):
    cfg = write_config(tmp_path, {"n_values": [1], "d_values": [16]})
    assert cli.main(["bench", "--config", cfg,
                     "--out", str(tmp_path / "out")]) == 2
    assert "n >= 2" in capsys.readouterr().err


def test_bench_small_grid(tmp_path):
    cfg = write_config(tmp_path, {"n_values": [6, 9], "d_values": [16, 64],
                                  "repeats": 2, "seed": 1})
    assert cli.main(["bench", "--config", cfg,
                     "--out", str(tmp_path / "out")]) == 0
    out = next((tmp_path / "out").iterdir())
    rows = (out / "bench.csv").read_text().strip().splitlines()
    assert rows[0] == "n,d,phase,wall_time,bytes_sent"
    assert len(rows) == 1 + 2 * 2 * 5  # grid x phases
    fits = json.loads((out / "bench_fits.json").read_text())
    assert "user_compute_vs_nd" in fits
    # byte accounting is exact: (n-1)*ceil(d/ell) + n*k elements, 8 bytes
    from secfpp import lcc
    for n, d in ((6, 16), (9, 64)):
        ell = lcc.default_ell(n, int(n / 3))
        want = ((n - 1) * (-(-d // ell)) + n * 2) * 8
        assert fits["per_user_bytes"][f"n{n}_d{d}"] == want


def test_selftest_passes_and_is_deterministic(capsys):
    assert cli.main(["selftest"]) == 0
    first = capsys.readouterr().out
    assert cli.main(["selftest"]) == 0
    second = capsys.readouterr().out
    assert first == second
    assert first.count("PASS") == len(selftest.SUITES)


def test_selftest_detects_corrupted_constant(monkeypatch, capsys):
    from secfpp import infotheory
    monkeypatch.setattr(infotheory, "EULER_GAMMA", 0.58)
    assert cli.main(["selftest"]) == 1
    assert "FAIL" in capsys.readouterr().out
