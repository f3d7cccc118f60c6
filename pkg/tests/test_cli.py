from __future__ import annotations

import json

import numpy as np
import pytest

from weakkam import outputs
from weakkam.cli import main
from weakkam.config import ConfigError, RunConfig, apply_overrides, defaults_yaml, leaf_fields, validate
from weakkam.lax_oleinik import GridValueFunction

SMALL = ["--m", "32", "--dt", "0.02"]


def read_json(path):
    return json.loads(path.read_text())


def test_defaults_are_valid_and_documented():
    cfg = RunConfig()
    assert validate({}) == cfg
    assert validate(cfg.echo()) == cfg
    assert "minimize:" in defaults_yaml()
    assert "minimize.T" in leaf_fields() and "n" in leaf_fields()


def test_overrides_parse_yaml():
    data = apply_overrides({}, {"minimize.start": "[0.1, 0.2]", "dt": "1e-3", "potential": "{kind: zero}"})
    cfg = validate(data)
    assert cfg.minimize.start == [0.1, 0.2]
    assert cfg.dt == 1e-3
    assert cfg.build_potential().kind == "zero"


@pytest.mark.parametrize(
    "data, field",
    [
        ({"n": 0}, "n"),
        ({"minimize": {"T": -1}}, "minimize.T"),
        ({"potential": {"kind": "bogus"}}, "potential.kind"),
        ({"potential": {"kind": "sum", "parts": [{"kind": "nope"}]}}, "potential.parts[0].kind"),
        ({"verify": {"unknown": 1}}, "verify.unknown"),
        ({"verify": {"path_m": [64]}}, "verify.path_m"),
    ],
)
def test_validation_names_field(data, field):
    with pytest.raises(ConfigError) as exc:
        validate(data)
    assert str(exc.value).startswith(field)


def test_solve_zero_potential(tmp_path, capsys):
    out = tmp_path / "s"
    code = main(["solve", "--potential", "{kind: zero}", "--m", "16", "--out", str(out), "--threads", "1"])
    assert code == 0
    doc = read_json(out / "solution.json")
    assert doc["lambda"] == 0.0 and doc["residual"] < doc["config"]["tol"]
    assert outputs.check_json((out / "solution.json").read_text())
    for name in ("values.csv", "convergence.csv"):
        assert outputs.check_csv((out / name).read_text())
    blob = (out / "values.bin").read_bytes()
    assert outputs.sha256(blob) == doc["values_bin_sha256"]
    assert np.all(GridValueFunction.from_binary(blob).values == 0.0)


def test_solve_pendulum_records_lambda(tmp_path):
    out = tmp_path / "p"
    assert main(["solve", "--out", str(out)]) == 0
    doc = read_json(out / "solution.json")
    assert abs(doc["lambda"] - 1.0) <= 0.03
    assert doc["config"]["m"] == 256 and doc["config"]["potential"]["kind"] == "one_body"
    lines = (out / "convergence.csv").read_text().splitlines()
    assert lines[0].startswith("# config: ") and lines[1].startswith("# content_sha256: ")
    assert lines[2] == "iteration,lambda,spread"


def test_solve_flags_non_convergence(tmp_path):
    assert main(["solve", *SMALL, "--max_iters", "3", "--out", str(tmp_path)]) == 2


def test_bad_potential_exit_1(tmp_path, capsys):
    assert main(["solve", "--potential", "{kind: bogus}", "--out", str(tmp_path)]) == 1
    assert "potential.kind" in capsys.readouterr().err


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "run.yaml"
    cfg.write_text("m: 16\ndt: 0.05\npotential: {kind: zero}\n")
    out = tmp_path / "o"
    assert main(["solve", "--config", str(cfg), "--m", "8", "--out", str(out)]) == 0
    doc = read_json(out / "solution.json")
    assert doc["config"]["m"] == 8 and doc["config"]["dt"] == 0.05


def test_config_file_errors(tmp_path, capsys):
    assert main(["solve", "--config", str(tmp_path / "missing.yaml")]) == 1
    bad = tmp_path / "bad.yaml"
    bad.write_text("- 1\n- 2\n")
    assert main(["solve", "--config", str(bad)]) == 1
    assert main(["solve", "--unknown-flag", "1"]) == 1
    assert main(["solve", "--threads", "0"]) == 1


def test_print_config(capsys):
    assert main(["solve", "--print-config", "--n", "2"]) == 0
    assert json.loads(capsys.readouterr().out)["n"] == 2


def test_minimize_zero_potential(tmp_path):
    out = tmp_path / "m"
    code = main(["minimize", "--potential", "{kind: zero}", "--minimize.start", "[0.1]",
                 "--minimize.end", "[0.8]", "--minimize.T", "2", "--out", str(out)])
    assert code == 0
    rep = read_json(out / "action_report.json")
    assert rep["value"] == pytest.approx(0.3**2 / 4, abs=1e-9)
    assert outputs.check_csv((out / "curve.csv").read_text())


def test_minimize_with_oracle_and_files(tmp_path):
    (tmp_path / "a.json").write_text("[0.2]")
    (tmp_path / "b.csv").write_text("x1\n0.65\n")
    out = tmp_path / "m"
    code = main(["minimize", "--minimize.start", str(tmp_path / "a.json"), "--minimize.end",
                 str(tmp_path / "b.csv"), "--minimize.oracle", "true", "--minimize.T", "1.5", "--out", str(out)])
    assert code == 0
    orc = read_json(out / "action_report.json")["oracle"]
    assert {"dp_value", "continuous_value_at_K", "gap", "relative_gap"} <= set(orc)
    assert orc["relative_gap"] <= 0.05


@pytest.mark.parametrize(
    "args, field",
    [
        (["--minimize.end", "[0.3]"], "minimize.start"),
        (["--minimize.start", "[0.3]", "--minimize.end", "[0.3]", "--minimize.T", "0"], "minimize.T"),
        (["--minimize.start", "[0.3, 0.4]", "--minimize.end", "[0.3]"], "minimize.start"),
        (["--minimize.start", "nowhere.json", "--minimize.end", "[0.3]"], "minimize.start"),
    ],
)
def test_minimize_input_errors(tmp_path, capsys, args, field):
    assert main(["minimize", *args, "--out", str(tmp_path)]) == 1
    assert field in capsys.readouterr().err


def test_calibrate_pendulum_and_zero(tmp_path):
    sol = tmp_path / "solve"
    assert main(["solve", *SMALL, "--out", str(sol)]) == 0
    out = tmp_path / "cal"
    assert main(["calibrate", "--calibrate.solution", str(sol), "--calibrate.horizon", "1.0", "--out", str(out)]) == 0
    rep = read_json(out / "calibrate_report.json")
    assert rep["passed"] and rep["state"] == 0 and rep["steps"] == 50
    body = outputs.read_csv_body((out / "calibrated_curve.csv").read_text()).splitlines()
    # equilibrium chain at the potential maximum
    assert all(row.split(",")[1] == "0.0" for row in body[1:])

    zsol = tmp_path / "zsolve"
    assert main(["solve", "--potential", "{kind: zero}", "--m", "8", "--n", "2", "--out", str(zsol)]) == 0
    zout = tmp_path / "zcal"
    assert main(["calibrate", "--calibrate.solution", str(zsol), "--calibrate.state", "[0.25, 0.5]",
                 "--calibrate.horizon", "0.5", "--out", str(zout)]) == 0
    defects = outputs.read_csv_body((zout / "defects.csv").read_text()).splitlines()[1:]
    assert all(float(row.split(",")[3]) == 0.0 for row in defects)
    body = outputs.read_csv_body((zout / "calibrated_curve.csv").read_text()).splitlines()[1:]
    assert len({row.split(",", 1)[1] for row in body}) == 1


def test_calibrate_errors(tmp_path, capsys):
    assert main(["calibrate", "--calibrate.solution", str(tmp_path / "none"), "--out", str(tmp_path)]) == 1
    assert "calibrate.solution" in capsys.readouterr().err
    assert main(["calibrate", "--out", str(tmp_path)]) == 1


def test_calibrate_detects_tampered_table(tmp_path):
    sol = tmp_path / "solve"
    assert main(["solve", *SMALL, "--out", str(sol)]) == 0
    blob = bytearray((sol / "values.bin").read_bytes())
    blob[-1] ^= 1
    (sol / "values.bin").write_bytes(bytes(blob))
    assert main(["calibrate", "--calibrate.solution", str(sol), "--out", str(tmp_path / "c")]) == 1


SMALL_VERIFY = [
    *SMALL, "--verify.law_pairs", "20", "--verify.matching_pairs", "20", "--verify.path_m", "[4, 8]",
    "--verify.path_k", "3", "--verify.samples", "20", "--verify.horizon", "1.0", "--verify.tonelli_instances", "2",
]


def test_verify_small(tmp_path):
    out = tmp_path / "v"
    assert main(["verify", *SMALL_VERIFY, "--out", str(out)]) == 0
    rep = read_json(out / "verify_report.json")
    assert rep["passed"]
    names = {c["name"] for c in rep["checks"]}
    assert {"matching_oracle", "path_oracle", "domination", "lipschitz", "determinism", "tonelli"} <= names


def test_verify_fault_injection_fails(tmp_path):
    out = tmp_path / "v"
    assert main(["verify", *SMALL_VERIFY, "--fault-flip-tiebreak", "--out", str(out)]) == 2
    checks = {c["name"]: c["passed"] for c in read_json(out / "verify_report.json")["checks"]}
    assert checks["determinism"] is False
    assert all(v for k, v in checks.items() if k != "determinism")


def test_verify_seed_changes_values_not_status(tmp_path):
    reps = []
    for seed in ("0", "1"):
        out = tmp_path / seed
        assert main(["verify", *SMALL_VERIFY, "--seed", seed, "--out", str(out)]) == 0
        reps.append(read_json(out / "verify_report.json"))
    a, b = ({c["name"]: c for c in r["checks"]} for r in reps)
    assert a["matching_oracle"]["passed"] == b["matching_oracle"]["passed"]
    assert a["domination"]["details"] != b["domination"]["details"]


def test_outputs_byte_identical_across_runs_and_threads(tmp_path):
    runs = []
    for t in ("1", "4"):
        out = tmp_path / f"t{t}"
        assert main(["solve", *SMALL, "--threads", t, "--out", str(out / "s")]) == 0
        assert main(["minimize", "--minimize.start", "[0.1]", "--minimize.end", "[0.7]", "--minimize.K", "8",
                     "--threads", t, "--out", str(out / "m")]) == 0
        runs.append(out)
    for rel in ("s/solution.json", "s/values.csv", "s/values.bin", "s/convergence.csv",
                "m/curve.csv", "m/action_report.json"):
        assert (runs[0] / rel).read_bytes() == (runs[1] / rel).read_bytes()
