import json

import pytest

from dipolar_ladder import CODE_VERSION
from dipolar_ladder.cli import main


def _write(path, text):
    path.write_text(text)
    return str(path)


def test_ground_state_files(tmp_path):
    params = _write(tmp_path / "p.yaml", "L: 2\nJ_s: 1\nJ_d: 0\n")
    out = tmp_path / "gs"
    assert main(["ground-state", "--params", params, "--out", str(out)]) == 0
    rec = json.loads((out / "ground_state.json").read_text())
    assert rec["energy"] == pytest.approx(-0.5, abs=1e-10)
    assert rec["converged"] and rec["seed"] == 1234 and rec["code_version"] == CODE_VERSION
    text = (out / "profile.csv").read_text()
    assert "# code_version:" in text and "site,sx,sz,dx,dz" in text


def test_invalid_key_is_config_error(tmp_path, capsys):
    params = _write(tmp_path / "p.yaml", "L: 4\nhs: 1\n")
    assert main(["ground-state", "--params", params, "--out", str(tmp_path / "o")]) == 2
    assert "hs" in capsys.readouterr().err


def test_bad_flag_is_config_error():
    assert main(["ground-state", "--bogus"]) == 2


def test_non_empty_out_rejected(tmp_path):
    params = _write(tmp_path / "p.yaml", "L: 2\n")
    out = tmp_path / "o"
    out.mkdir()
    (out / "x").write_text("x")
    assert main(["ground-state", "--params", params, "--out", str(out)]) == 2


def test_non_convergence_exit_code(tmp_path):
    params = _write(tmp_path / "p.yaml", "L: 8\nJ_d: 2\nh_s: 1\nh_d: -1\nC: 0.3\n")
    assert main(["ground-state", "--params", params, "--out", str(tmp_path / "o"), "--max-sweeps", "1",
                 "--dmrg-chi", "8"]) == 3


def test_global_quench_small_chain(tmp_path):
    params = _write(tmp_path / "q.yaml", "initial: {L: 4, J_d: 10, h_s: 1, h_d: -20}\nfinal: {h_d: 20}\n")
    out = tmp_path / "gq"
    code = main(["global-quench", "--params", params, "--out", str(out), "--t-end", "0.3", "--stride", "2",
                 "--dmrg-cutoff", "0"])
    assert code == 0
    fit = json.loads((out / "fit.json").read_text())
    assert fit["code_version"] == CODE_VERSION and "fit" in fit
    dev = json.loads((out / "ed_deviation.json").read_text())["max_abs_deviation"]
    assert dev["dx"] < 1e-3
    assert (out / "spectral_report.csv").read_text().startswith("rank,weight,energy,flip_character")
    assert main(["fit", str(out / "series.csv"), "--out", str(tmp_path / "refit"), "--window", "0,0.3"]) in (0, 3)
    assert (tmp_path / "refit" / "results.csv").exists()


def test_identical_quench_unidentifiable(tmp_path):
    params = _write(tmp_path / "q.yaml", "initial: {L: 3, J_d: 2, h_s: 1, h_d: -2}\nfinal: {}\n")
    out = tmp_path / "gq"
    main(["global-quench", "--params", params, "--out", str(out), "--t-end", "0.3", "--dt", "1e-3",
          "--dmrg-cutoff", "0"])
    assert json.loads((out / "fit.json").read_text())["fit"]["status"] == "unidentifiable"


def test_byte_identical_outputs(tmp_path):
    params = _write(tmp_path / "q.yaml", "L: 4\nJ_d: 4\nh_s: 1\nh_d: -5\n")
    for name in ("a", "b"):
        assert main(["global-quench", "--params", params, "--out", str(tmp_path / name), "--t-end", "0.05"]) == 0
    assert (tmp_path / "a" / "series.csv").read_bytes() == (tmp_path / "b" / "series.csv").read_bytes()


def test_local_quench_and_velocity(tmp_path):
    params = _write(tmp_path / "p.yaml", "L: 8\nJ_d: 10\nh_s: 1\nh_d: -20\n")
    out = tmp_path / "lq"
    assert main(["local-quench", "--params", params, "--out", str(out), "--flip-site", "1", "--t-end", "0.2",
                 "--chi", "32"]) == 0
    vel = json.loads((out / "velocity.json").read_text())["velocity"]
    assert vel["dx_left"]["status"] == "insufficient_signal"
    header = (out / "profile_dx.csv").read_text().splitlines()
    assert any(h.startswith("# params:") for h in header)
    assert main(["velocity", str(out / "profile_dx.csv"), "--origin", "1", "--out", str(tmp_path / "v")]) == 0


def test_sweep_command(tmp_path):
    manifest = _write(tmp_path / "m.yaml", "task_type: ground_state\nbase: {L: 4, J_d: 2, h_d: -2}\n"
                                         "axes: {h_s: [0.3, 2.0]}\nconfig: {chi_max: 16}\n")
    out = tmp_path / "sw"
    assert main(["sweep", manifest, "--out", str(out)]) == 0
    rows = (out / "phase_table.csv").read_text().splitlines()
    assert rows[1] == "C,h_s,h_d,sx,dx,abs_sz,abs_dz,phase_s,phase_d" and len(rows) == 4
    assert main(["sweep", manifest, "--out", str(out)]) == 2  # needs --resume
    assert main(["sweep", manifest, "--out", str(out), "--resume"]) == 0
