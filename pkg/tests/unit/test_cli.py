"""Tests for the command-line front end."""

import pytest

from pybrach.cli import main
from pybrach.cli.main import build_parser, run
from pybrach.core.errors import UsageError
from pybrach.funnel.model import load_funnel, save_funnel
from pybrach.funnel.synthesis import SynthesisResult
from pybrach.funnel.validate import ValidationReport
from pybrach.storage.database import ResultStore


@pytest.fixture
def workspace(tmp_path, hanging):
    """Output directory holding a rest reference and its funnel, plus a spring-plant config."""
    out = tmp_path / "out"
    out.mkdir()
    hanging.reference.save(out / "reference.txt")
    save_funnel(hanging.funnel, out / "funnel.txt")
    config = tmp_path / "pybrach.cfg"
    config.write_text("# spring plant, coarse steps\n"
                      "simulation.plant=spring\n"
                      "simulation.w=0\n"
                      "simulation.dt=0.002\n"
                      f"paths.database={tmp_path / 'runs.db'}\n")
    return tmp_path, out, config


def test_parser_commands():
    """Test command parsing and usage errors."""
    parser = build_parser()
    args = parser.parse_args(["--threads", "2", "simulate", "--controller", "tvlqr"])
    assert args.command == "simulate" and args.controller == "tvlqr" and args.threads == 2
    with pytest.raises(UsageError):
        parser.parse_args(["fly"])


@pytest.mark.parametrize("argv", [["fly"], [], ["--threads", "0", "tvlqr"]])
def test_usage_errors_exit_one(argv):
    """Test that usage errors map to exit code 1."""
    assert run(argv) == 1


def test_missing_artifacts_exit_six(tmp_path):
    """Test that a command without its input artifacts fails with exit code 6."""
    assert run(["--out", str(tmp_path), "tvlqr"]) == 6
    assert run(["--config", str(tmp_path / "absent.cfg"), "--out", str(tmp_path), "tvlqr"]) == 6


def test_simulate_and_export(workspace):
    """Test a closed-loop run, its database record and the plot export."""
    tmp_path, out, config = workspace
    assert run(["--config", str(config), "--out", str(out), "simulate"]) == 0
    assert (out / "simulation_sos.txt").exists()
    assert run(["--config", str(config), "--out", str(out), "export-plots", "--pair", "theta1:dtheta1"]) == 0
    assert list((out / "plots").glob("projection_sos_theta1_dtheta1_*.txt"))
    assert (out / "plots" / "levels.svg").exists()
    runs = ResultStore(str(tmp_path / "runs.db")).runs()
    assert [(r.command, r.status) for r in runs] == [("simulate", "goal")]


def test_montecarlo_records_trials(workspace):
    """Test that a Monte Carlo study stores one row per trial."""
    tmp_path, out, config = workspace
    with config.open("a") as handle:
        handle.write("simulation.trials=3\nsimulation.radius_scale=0\n")
    assert run(["--config", str(config), "--out", str(out), "montecarlo"]) == 0
    assert "goal_rate 1.0" in (out / "montecarlo.txt").read_text()
    store = ResultStore(str(tmp_path / "runs.db"))
    (run_row,) = store.runs("montecarlo")
    assert len(store.trials(run_row.id)) == 3


def test_bad_pair_is_config_error(workspace):
    """Test that an unknown state pair exits with the configuration code."""
    _, out, config = workspace
    assert run(["--config", str(config), "--out", str(out), "export-plots", "--pair", "theta1:yaw"]) == 2


def test_failed_validation_exits_three(workspace, hanging, monkeypatch):
    """Test that synth keeps its artifacts but exits 3 when sampled validation fails."""
    tmp_path, out, config = workspace
    (out / "funnel.txt").unlink()
    result = SynthesisResult(hanging.funnel, None, (hanging.funnel.integral(),), 1, True)
    monkeypatch.setattr(main._Context, "problem", lambda self: None)
    monkeypatch.setattr(main, "synthesize", lambda problem, settings: result)
    monkeypatch.setattr(main, "validate_funnel", lambda *args: ValidationReport(50, 0.5, 0.3, 2))
    assert run(["--config", str(config), "--out", str(out), "synth"]) == 3
    assert load_funnel(out / "funnel.txt").integral() == pytest.approx(hanging.funnel.integral())
    assert (out / "synthesis.txt").exists()
    runs = ResultStore(str(tmp_path / "runs.db")).runs()
    assert [(r.command, r.status) for r in runs] == [("synth", "validation-failed")]


def test_passed_validation_exits_zero(workspace, hanging, monkeypatch):
    """Test that synth exits 0 and records ok when sampled validation passes."""
    tmp_path, out, config = workspace
    result = SynthesisResult(hanging.funnel, None, (hanging.funnel.integral(),), 1, True)
    monkeypatch.setattr(main._Context, "problem", lambda self: None)
    monkeypatch.setattr(main, "synthesize", lambda problem, settings: result)
    monkeypatch.setattr(main, "validate_funnel", lambda *args: ValidationReport(50, 1.0, -0.1, 0))
    assert run(["--config", str(config), "--out", str(out), "synth"]) == 0
    assert [r.status for r in ResultStore(str(tmp_path / "runs.db")).runs()] == ["ok"]


def test_simulate_rerun_is_identical(workspace):
    """Test that repeated simulate and montecarlo runs write byte-identical files."""
    _, out, config = workspace
    with config.open("a") as handle:
        handle.write("simulation.trials=3\n")
    outputs = []
    for _ in range(2):
        assert run(["--config", str(config), "--out", str(out), "simulate"]) == 0
        assert run(["--config", str(config), "--out", str(out), "montecarlo"]) == 0
        outputs.append(((out / "simulation_sos.txt").read_bytes(), (out / "montecarlo.txt").read_bytes()))
    assert outputs[0] == outputs[1]


@pytest.mark.slow
def test_reference_and_tvlqr_pipeline(tmp_path):
    """Test the first two pipeline stages with default settings."""
    assert run(["--out", str(tmp_path), "trajgen"]) == 0
    assert run(["--out", str(tmp_path), "tvlqr"]) == 0
    assert (tmp_path / "riccati.txt").exists()


@pytest.mark.slow
def test_synthesis_pipeline_beats_tvlqr(tmp_path):
    """Test trajgen through synth on a coarse grid: the synthesized funnel is at least the TVLQR one."""
    config = tmp_path / "pybrach.cfg"
    config.write_text("synthesis.n_samples=10\nsynthesis.max_rounds=3\n")
    argv = ["--config", str(config), "--out", str(tmp_path)]
    for command in ("trajgen", "tvlqr", "verify-tvlqr", "synth"):
        assert run(argv + [command]) == 0
    assert load_funnel(tmp_path / "funnel.txt").integral() >= load_funnel(tmp_path / "funnel_tvlqr.txt").integral()
