import csv
import subprocess
import sys

import pytest

from contactclass.cli import EXIT_CHECK, EXIT_CONFIG, EXIT_IO, EXIT_OK, main
from contactclass.config import ENV_PREFIX, load


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    import os

    for k in list(os.environ):
        if k.startswith(ENV_PREFIX):
            monkeypatch.delenv(k)


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# tables and curves


def test_tables_files_and_values(tmp_path):
    assert main(["tables", "--out", str(tmp_path)]) == EXIT_OK
    t4 = {int(r["n"]): float(r["pi_md_av"]) for r in rows(tmp_path / "table4_pi_md_av.csv")}
    assert abs(t4[1] - 0.12) <= 0.005 and abs(t4[480] - 0.0003) <= 0.0005
    t5 = rows(tmp_path / "table5_performance.csv")
    assert [(r["n"], r["x0"]) for r in t5] == [("6", "3"), ("6", "5"), ("15", "3"), ("15", "5"), ("60", "3"), ("60", "5")]
    assert t5[0]["rho_per_s_fraction"] == "1/50"
    t3 = rows(tmp_path / "table3_pfa_targets.csv")
    assert float(t3[1]["pi_fa_large_x0_limit"]) == 0.25
    assert abs(float(t3[0]["pi_fa_x0_30"]) - 0.93) <= 0.005


def test_outputs_are_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["tables", "--out", str(d)]) == EXIT_OK
        assert main(["curves", "--out", str(d)]) == EXIT_OK
    for name in ("table3_pfa_targets.csv", "table4_pi_md_av.csv", "table5_performance.csv", "fig2_pi_md_bluetooth.csv", "fig5_audio.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_curves_grids(tmp_path):
    assert main(["curves", "--out", str(tmp_path)]) == EXIT_OK
    fig2 = rows(tmp_path / "fig2_pi_md_bluetooth.csv")
    fig5 = rows(tmp_path / "fig5_audio.csv")
    assert len(fig2) == 200 and float(fig2[-1]["d_m"]) == 2.0
    assert float(fig2[-1]["pi_md_lognormal_n1"]) == 0.5
    assert len(fig5) == 200
    md = [float(r["pi_md_audio"]) for r in fig5]
    assert md == sorted(md)


# configuration layers


def test_env_overrides_file_and_flag_overrides_env(tmp_path, monkeypatch):
    ini = tmp_path / "run.ini"
    ini.write_text("[lognormal]\nsigma_md = 1.0\n[run]\nout = from_file\n")
    monkeypatch.setenv("CONTACTCLASS_LOGNORMAL_SIGMA_MD", "1.60")
    monkeypatch.setenv("CONTACTCLASS_RUN_OUT", "from_env")
    rc = load(str(ini), {"out": str(tmp_path / "from_flag")})
    assert rc.lognormal_md.sigma_l == 1.60
    assert rc.out == str(tmp_path / "from_flag")
    assert load(str(ini)).out == "from_env"
    monkeypatch.delenv("CONTACTCLASS_LOGNORMAL_SIGMA_MD")
    assert load(str(ini)).lognormal_md.sigma_l == 1.0


def test_negative_sigma_from_env(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("CONTACTCLASS_LOGNORMAL_SIGMA_MD", "-1")
    assert main(["tables", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "configuration error" in capsys.readouterr().err


def test_unknown_key_and_section(tmp_path):
    ini = tmp_path / "bad.ini"
    ini.write_text("[rice]\ngamma = 3\n")
    assert main(["tables", "--config", str(ini), "--out", str(tmp_path)]) == EXIT_CONFIG
    ini.write_text("[nonsense]\na = 1\n")
    assert main(["tables", "--config", str(ini), "--out", str(tmp_path)]) == EXIT_CONFIG


def test_malformed_list(tmp_path, monkeypatch):
    monkeypatch.setenv("CONTACTCLASS_EPISODE_N_VALUES", "6,x")
    assert main(["tables", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["tables", "--out", str(blocker / "sub")]) == EXIT_IO


def test_trials_caps_dsp_trials():
    rc = load(None, {"trials": 100})
    assert rc.trials == 100 and rc.dsp_trials == 100
    assert load().dsp_trials == 500


# stochastic commands


def test_seed_required(tmp_path):
    assert main(["validate", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["dsp-experiment", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_validate_small_run_is_inconclusive(tmp_path, capsys):
    assert main(["validate", "--seed", "7", "--trials", "100", "--out", str(tmp_path)]) == EXIT_OK
    report = rows(tmp_path / "validate_report.csv")
    status = {r["name"]: r["status"] for r in report}
    assert status["mc_lognormal_n1_d1.5"] == "inconclusive"
    assert status["dsp_std_ratio_6db"] == "inconclusive"
    assert status["table3_r1_x0_30"] == "info"
    assert "fail" not in status.values()


def test_protocol_default_pair(tmp_path, capsys):
    assert main(["protocol", "--out", str(tmp_path)]) == EXIT_OK
    d = rows(tmp_path / "protocol_distances.csv")
    assert len(d) == 1 and float(d[0]["distance_m"]) == pytest.approx(2.0, abs=1e-9)
    assert len(rows(tmp_path / "protocol_deltas.csv")) == 2
    assert "cycle 0.800 s" in capsys.readouterr().out


def test_protocol_line_with_random_delays(tmp_path, monkeypatch):
    monkeypatch.setenv("CONTACTCLASS_PROTOCOL_MAX_DELAY", "0.05")
    assert main(["protocol", "--positions", "0,1.5,3", "--seed", "4", "--out", str(tmp_path)]) == EXIT_OK
    d = {(r["id_a"], r["id_b"]): float(r["distance_m"]) for r in rows(tmp_path / "protocol_distances.csv")}
    assert d == pytest.approx({("0", "1"): 1.5, ("0", "2"): 3.0, ("1", "2"): 1.5}, abs=1e-9)
    assert len(rows(tmp_path / "protocol_transcript.csv")) == 9
    # random delays need a seed
    assert main(["protocol", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_protocol_needs_two_devices(tmp_path):
    assert main(["protocol", "--positions", "1.0", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_dsp_experiment_seeded(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["dsp-experiment", "--seed", "3", "--trials", "20", "--out", str(d)]) == EXIT_OK
    assert (a / "dsp_experiment.csv").read_bytes() == (b / "dsp_experiment.csv").read_bytes()
    summary = rows(a / "dsp_experiment.csv")
    assert [r["esn0_dB"] for r in summary] == ["6.0", "12.0"]
    assert len(rows(a / "dsp_errors.csv")) == 40


def test_exit_codes_distinct():
    assert len({EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_IO}) == 4


def test_console_entry_point(tmp_path):
    out = subprocess.run(
        [sys.executable, "-m", "contactclass.cli", "tables", "--out", str(tmp_path)], capture_output=True, text=True
    )
    assert out.returncode == 0
    assert (tmp_path / "table5_performance.csv").exists()
    usage = subprocess.run([sys.executable, "-m", "contactclass.cli", "bogus"], capture_output=True, text=True)
    assert usage.returncode == 2
