import hashlib
import json
import subprocess
import sys

import numpy as np
import pytest

from qecopt import channels as ch
from qecopt import cli, design
from qecopt import fidelity as fd
from qecopt.errors import SolverError
from qecopt.policy import ENV_VAR, load_policy


def write_config(tmp_path, **fields):
    cfg = {"schema": "qecopt-config", "version": 1, **fields}
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return path


def test_flops_table(capsys):
    assert cli.main(["flops", "--qs", "1", "--qca", "1", "--json"]) == 0
    rows = json.loads(capsys.readouterr().out)
    rec = next(r for r in rows if r["problem"] == "recovery")
    enc = next(r for r in rows if r["problem"] == "encoding")
    assert rec["primal_flops"] == 147456 and rec["speedup"] == 9
    assert enc["primal_flops"] == 230400
    assert cli.main(["flops", "--qs", "0", "--qca", "1"]) == 0
    assert "out of model" in capsys.readouterr().out


def test_console_script_entry_point():
    out = subprocess.run([sys.executable, "-m", "qecopt.cli", "flops"], capture_output=True, text=True)
    assert out.returncode == 0 and "147456" in out.stdout


def test_reproduce_dry_run_touches_no_solver(tmp_path, capsys, monkeypatch):
    def boom(*a, **k):
        raise AssertionError("solver was called")

    monkeypatch.setattr(cli, "reproduce_paper", boom)
    assert cli.main(["reproduce-paper", "--out", str(tmp_path), "--dry-run"]) == 0
    text = capsys.readouterr().out
    assert "table1" in text and "table2" in text
    assert not any(tmp_path.iterdir())


def test_channel_gen(tmp_path):
    assert cli.main(["channel-gen", "--seed", "3", "--delta-e", "0.5", "--out", str(tmp_path)]) == 0
    got = ch.load_channel(tmp_path / "channel.json")
    ref = ch.random_error_channel(3, 0.5)
    assert all(np.array_equal(a, b) for a, b in zip(got.kraus, ref.kraus))
    assert cli.main(["channel-gen", "--seed", "3", "--delta-e", "-1", "--out", str(tmp_path)]) == 1


def test_identity_error_design(tmp_path):
    cfg = write_config(tmp_path, mode="design", errors=[{"identity": 4}])
    out = tmp_path / "out"
    assert cli.main(["design", "--config", str(cfg), "--out", str(out), "--trace"]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert abs(rep["final_f_avg"] - 1.0) <= 1e-8
    assert (out / "trace.csv").read_text().startswith("iteration,")
    lines = (out / "solver_trace.jsonl").read_text().splitlines()
    assert lines and "duality_measure" in json.loads(lines[0])
    assert rep["provenance"]["input_hashes"]["config"] == hashlib.sha256(cfg.read_bytes()).hexdigest()


def test_seeded_random_design_is_bit_reproducible(tmp_path):
    cfg = write_config(tmp_path, mode="design", errors=[{"random": {"delta_e": 0.5}}], max_iters=3)
    digests = []
    for run in ("a", "b"):
        out = tmp_path / run
        assert cli.main(["design", "--config", str(cfg), "--out", str(out), "--seed", "11"]) == 0
        digests.append(hashlib.sha256((out / "report.json").read_bytes()).hexdigest())
    assert digests[0] == digests[1]


def test_printed_channel_config_matches_library(tmp_path):
    cfg = write_config(tmp_path, mode="design", errors=[{"paper": "E_a"}], max_iters=3, epsilon=1e-12)
    out = tmp_path / "out"
    assert cli.main(["design", "--config", str(cfg), "--out", str(out)]) == 0
    rep = json.loads((out / "report.json").read_text())
    lib = design.biconvex_design(ch.paper_error_channel("E_a"), max_iters=3, epsilon=1e-12)
    assert rep["final_f_avg"] == lib.final_f_avg
    assert [tuple(r) for r in rep["fidelity_trace"]] == [tuple(map(float, r)) for r in lib.fidelity_trace]
    assert "paper:E_a" in rep["provenance"]["input_hashes"]


def test_robust_command_and_file_source(tmp_path):
    ch.save_channel(ch.random_error_channel(1, 0.3), tmp_path / "e1.json")
    cfg = write_config(tmp_path, mode="robust", errors=[{"file": "e1.json"}, {"paper": "E_b"}], max_iters=2)
    out = tmp_path / "out"
    assert cli.main(["robust", "--config", str(cfg), "--out", str(out)]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["robust_worst_case"] == pytest.approx(min(rep["per_error_f_avg"]))
    assert "e1.json" in rep["provenance"]["input_hashes"]


def test_export_magnitudes_round_trip(tmp_path):
    cfg = write_config(tmp_path, mode="design", errors=[{"random": {"seed": 2, "delta_e": 0.5}}], max_iters=2)
    out = tmp_path / "out"
    assert cli.main(["design", "--config", str(cfg), "--out", str(out)]) == 0
    assert cli.main(["export-magnitudes", str(out / "report.json"), "--out", str(out)]) == 0
    rep = json.loads((out / "report.json").read_text())
    for key, name in (("x_encoding", "X_C"), ("y_encoding", "Y_C"), ("x_recovery", "X_R"), ("y_recovery", "Y_R")):
        val = rep[key]["x"] if isinstance(rep[key], dict) else rep[key]
        ref = np.abs(ch.matrix_from_json(val))
        assert np.max(np.abs(cli.read_matrix_csv(out / "magnitudes" / f"{name}.csv") - ref)) <= 1e-12
    assert cli.main(["export-magnitudes", str(cfg), "--out", str(out)]) == 1


def test_partial_trace_recovery_magnitudes(tmp_path):
    x = fd.process_matrix_of(design.partial_trace_recovery(2, 2), fd.canonical_basis(2, 4, "recovery"))
    cli.write_matrix_csv(tmp_path / "x.csv", np.abs(x))
    back = cli.read_matrix_csv(tmp_path / "x.csv")
    # one 2x2 block of ones per Kraus element
    assert np.sum(np.isclose(back, 1.0)) == 2 * 2 * 2
    assert np.sum(np.isclose(back, 0.0)) == 64 - 8


def test_fidelity_command(tmp_path, capsys):
    cfg = write_config(tmp_path, mode="fidelity", errors=[{"paper": "E_a"}],
                       recovery={"partial_trace": [2, 2]}, encoding={"file": "enc.json"})
    enc = ch.random_channel(np.random.default_rng(0), 2, 4, 1)
    ch.save_channel(enc, tmp_path / "enc.json")
    assert cli.main(["fidelity", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    rep = json.loads((tmp_path / "o" / "report.json").read_text())
    s = ch.compose_all([design.partial_trace_recovery(2, 2), ch.paper_error_channel("E_a"), enc])
    assert rep["f_avg"] == pytest.approx(fd.f_avg(s), abs=1e-12)
    assert rep["f_mixed"] <= rep["f_pure_estimate"] + 1e-8


@pytest.mark.parametrize("fields, needle", [
    ({"mode": "design", "errors": []}, "errors"),
    ({"mode": "design", "errors": [{"identity": 4}], "epsilon": 0}, "epsilon"),
    ({"mode": "design", "errors": [{"identity": 4}], "max_iters": 0}, "max_iters"),
    ({"mode": "sideways", "errors": [{"identity": 4}]}, "mode"),
    ({"mode": "design", "errors": [{"file": "missing.json"}]}, "errors[0]"),
    ({"mode": "design", "errors": [{"warp": 1}]}, "errors[0]"),
    ({"mode": "design", "errors": [{"identity": 4}], "numeric_policy": {"bogus": 1}}, "numeric_policy"),
    ({"mode": "robust", "errors": [{"identity": 4}]}, "errors"),
])
def test_bad_config_exits_with_validation_code(tmp_path, capsys, fields, needle):
    cfg = write_config(tmp_path, **fields)
    cmd = "robust" if fields["mode"] == "robust" else "design"
    assert cli.main([cmd, "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
    assert needle in capsys.readouterr().err


def test_json_syntax_error_reports_line(tmp_path, capsys):
    path = tmp_path / "config.json"
    path.write_text('{\n  "mode": "design",\n  "errors": [\n}')
    assert cli.main(["design", "--config", str(path), "--out", str(tmp_path)]) == 1
    assert "line 4" in capsys.readouterr().err


def test_solver_failure_exit_code(tmp_path, monkeypatch):
    def fail(*a, **k):
        raise SolverError("forced")

    monkeypatch.setattr(design, "_recovery_step", fail)
    cfg = write_config(tmp_path, mode="design", errors=[{"identity": 4}])
    assert cli.main(["design", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2


def test_numeric_policy_env_override(tmp_path, monkeypatch):
    override = tmp_path / "policy.json"
    override.write_text(json.dumps({"gap_tol": 1e-5}))
    monkeypatch.setenv(ENV_VAR, str(override))
    assert load_policy().gap_tol == 1e-5
    override.write_text(json.dumps({"no_such_field": 1}))
    with pytest.raises(ValueError):
        load_policy()
