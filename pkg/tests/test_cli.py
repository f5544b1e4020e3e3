import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from desclab import cli
from desclab import resolvent as R
from desclab.config import (ConfigError, ExperimentConfig, dump_config,
                            load_config, parse_config)


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr().out
    return code, out


def run_json(capsys, *argv):
    code, out = run(capsys, *argv)
    return code, json.loads(out)


def test_family_two(capsys):
    code, out = run_json(capsys, "thresholds", "family", "--n", "2")
    assert code == 0
    assert out["tuple"] == [4, 8, 8, 4, 2, 2]
    assert out["min_slack"] == 0.5
    assert out["status"] == "PASS"


def test_family_one_fails_closed(capsys):
    code, out = run_json(capsys, "thresholds", "family", "--n", "1")
    assert code == 1
    assert out["status"] == "FAIL"
    assert out["failed"] == ["family:N=1"]


def test_unknown_key_is_error_json(capsys):
    code, out = run_json(capsys, "--set", "grid.nope=1", "thresholds",
                         "family", "--n", "2")
    assert code == 2
    assert out["error"] == "ConfigError"
    assert "nope" in out["message"]


def test_unknown_section_in_file(tmp_path):
    p = tmp_path / "bad.ini"
    p.write_text("[mesh]\nh = 0.1\n")
    with pytest.raises(ConfigError):
        load_config(str(p))


def test_bad_metric_kind(capsys):
    code, out = run_json(capsys, "selfadjoint", "check", "--set",
                         "metric.kind=kerr")
    assert code == 2 and "kerr" in out["message"]


def test_metric_decay_vaidya_nff(capsys):
    code, out = run(capsys, "metric", "decay", "--metric", "vaidya",
                    "--face", "nFf")
    assert code == 0
    lines = out.strip().splitlines()
    assert lines[0] == "face,c_or_v_or_beta,alpha,residual,n_samples"
    alphas = [float(line.split(",")[2]) for line in lines[1:]]
    assert len(alphas) == 3
    assert all(abs(a - 4) < 0.15 for a in alphas)


def test_metric_decay_bad_face(capsys):
    code, out = run_json(capsys, "metric", "decay", "--face", "Xf")
    assert code == 2


def test_geometry_check_deterministic(capsys, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert cli.main(["geometry", "check", "--out", str(a)]) == 0
    assert cli.main(["geometry", "check", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    data = json.loads(a.read_text())
    assert data["bdf_in_unit_interval"]
    c = tmp_path / "c.json"
    cli.main(["geometry", "check", "--set", "run.seed=1", "--out", str(c)])
    assert c.read_bytes() != a.read_bytes()


def test_flow_trace_csv(capsys, tmp_path):
    p = tmp_path / "ray.csv"
    code = cli.main(["--set", "metric.kind=schwarzschild", "flow", "trace",
                     "--out", str(p)])
    assert code == 0
    rows = p.read_text().splitlines()
    assert rows[0].startswith("s,chart,t,x0,tau,xi0")
    last = dict(zip(rows[0].split(","), rows[-1].split(",")))
    assert float(last["rho_nFf"]) < 0.05


def test_thresholds_check_and_solve(capsys):
    code, out = run_json(capsys, "thresholds", "check", "--m", "4", "--s",
                         "8,8,4,2,2")
    assert code == 0 and out["min_slack"] == 0.5
    code, out = run_json(capsys, "thresholds", "check", "--m", "4", "--s",
                         "8,8,4,2,2", "--case", "case2")
    assert code == 1 and len(out["failed"]) == 8
    code, out = run_json(capsys, "thresholds", "solve", "--cases",
                         "case1,case2")
    assert code == 0
    assert out["feasible"] is False
    assert out["certificate_check"]["combined_constant"] <= 0
    code, out = run_json(capsys, "thresholds", "check", "--m", "4", "--s",
                         "8,8,4")
    assert code == 2


def test_thresholds_variable(capsys):
    code, out = run_json(capsys, "thresholds", "variable", "--n", "2")
    # one tuple on both sheets: every set on sheet - is violated
    assert code == 1
    assert all(k[1] == "-" for k in out["failed"])
    assert len(out["sets"]) == 16


def test_resolvent_free_artifacts(capsys, tmp_path):
    code, out = run_json(capsys, "resolvent", "free",
                         "--set", "grid.fourier_n=256",
                         "--set", f"output.dir={tmp_path}")
    assert code == 0
    assert out["bound_holds"] and out["round_trip_error"] < 1e-12
    u = R.GridField.load(str(tmp_path / "desclab_free"))
    assert u.values.shape == (256, 256)
    assert np.isclose(u.norm(), out["norm_u"], rtol=1e-12)
    csv = (tmp_path / "desclab_free_seminorms.csv").read_text().splitlines()
    assert csv[0] == "N,alpha,value" and len(csv) == 1 + 3 * 6


def test_resolvent_curved_deterministic(capsys):
    args = ("resolvent", "curved", "--set", "grid.extent=6.4")
    c1, o1 = run(capsys, *args)
    c2, o2 = run(capsys, *args)
    assert c1 == c2 == 0 and o1 == o2
    out = json.loads(o1)
    assert out["bound_holds"] and out["residual"] < 1e-8


def test_selfadjoint_broken_fails(capsys):
    base = ("--set", "grid.extent=6.4", "--set", "grid.h=0.2")
    code, out = run_json(capsys, "selfadjoint", "check", *base)
    assert code == 0 and out["verdict"] == "PASS"
    code, out = run_json(capsys, "selfadjoint", "check", *base, "--broken")
    assert code == 1
    assert out["failed"] == ["deficiency"]
    assert out["verdict"].startswith("FAIL")


def test_report_names_failing_criterion(capsys):
    code, out = run_json(capsys, "report", "--only", "1,2")
    assert code == 1
    assert out["verdict"] == "FAIL"
    assert [c["number"] for c in out["criteria"]] == [1, 2]
    assert out["failed"] == [f"criterion 1: {out['criteria'][0]['name']}"]
    assert out["config"]["thresholds"]["bounds"] == 100.0


def test_report_pass(capsys):
    code, out = run_json(capsys, "report", "--only", "2")
    assert code == 0 and out["verdict"] == "PASS"


def test_report_bad_number(capsys):
    code, out = run_json(capsys, "report", "--only", "11")
    assert code == 2


def test_config_file(tmp_path, capsys):
    p = tmp_path / "exp.ini"
    p.write_text("[lambda]\nim = -0.5\n[thresholds]\nN = 2, 3\n")
    cfg = load_config(str(p), ["grid.h=0.2"])
    assert cfg.lambda_.value == -0.5j
    assert cfg.thresholds.N == (2.0, 3.0)
    assert cfg.grid.h == 0.2
    code, out = run_json(capsys, "--config", str(p), "thresholds", "family")
    assert [f["N"] for f in out["families"]] == [2, 3]


@settings(max_examples=25, deadline=None)
@given(st.floats(1e-3, 1e3), st.floats(-5, 5), st.integers(0, 2**31))
def test_config_roundtrip(h, im, seed):
    cfg = load_config(None, [f"grid.h={h!r}", f"lambda.im={im!r}",
                             f"run.seed={seed}"])
    again = parse_config(dump_config(cfg))
    assert again == cfg
    assert again.seed == seed


def test_defaults_are_acceptance_config():
    assert parse_config("") == ExperimentConfig()
    assert load_config() == ExperimentConfig()
