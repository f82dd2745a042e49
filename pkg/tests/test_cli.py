"""End-to-end tests of the command-line interface."""
import json

import pandas as pd
import pytest

from fcam.cli.main import EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION, main
from fcam.services import sampler_service

QUICK = ["--iters", "30", "--burnin", "20", "--thin", "2"]


@pytest.fixture
def simulated(tmp_path):
    out = tmp_path / "sim"
    assert main(["simulate", "--scenario", "2", "--seed", "7", "--out", str(out), "--T-per-condition", "40"]) == EXIT_OK
    return out


@pytest.mark.integration
class TestPipeline:
    """Test simulate, fit, summarize and evaluate chained together."""

    def test_simulate_writes_matching_files(self, simulated):
        trace = pd.read_csv(simulated / "trace.csv")
        truth = pd.read_csv(simulated / "truth.csv")
        assert list(trace.columns) == ["t", "y", "condition"]
        assert len(trace) == len(truth) == 160

    def test_simulate_is_byte_reproducible(self, simulated, tmp_path):
        again = tmp_path / "again"
        main(["simulate", "--scenario", "2", "--seed", "7", "--out", str(again), "--T-per-condition", "40"])
        for name in ("trace.csv", "truth.csv"):
            assert (again / name).read_bytes() == (simulated / name).read_bytes()

    def test_full_pipeline(self, simulated, tmp_path, capsys):
        fit_dir = tmp_path / "fit"
        assert main(["fit", "--input", str(simulated / "trace.csv"), "--out", str(fit_dir), *QUICK, "--seed", "3"]) == EXIT_OK
        assert (fit_dir / "chain_0.fcd").exists()
        diagnostics = pd.read_csv(fit_dir / "diagnostics.csv")
        assert len(diagnostics) == 30
        assert {"iteration", "Kplus", "Lplus", "gamma_accept"} <= set(diagnostics.columns)
        run = json.loads((fit_dir / "run.json").read_text())
        assert run["T"] == 160 and run["chain_files"] == ["chain_0.fcd"]

        assert main(["summarize", "--draws", str(fit_dir)]) == EXIT_OK
        summary = json.loads((fit_dir / "summary.json").read_text())
        assert summary["draws"] == 5 and summary["T"] == 160
        for name in ("b", "gamma", "sigma2", "tau2", "p"):
            interval = summary["parameters"][name]
            assert interval["lower95"] <= interval["upper95"]
        plot = pd.read_csv(fit_dir / "plotdata.csv")
        assert list(plot.columns)[:4] == ["t", "y", "spike_prob", "amplitude_label"]
        calls = [p > 0.6 for p in summary["partition"]["spike_prob"]]
        assert summary["partition"]["spike_calls"] == calls

        assert main(["evaluate", "--summary", str(fit_dir / "summary.json"), "--truth", str(simulated / "truth.csv")]) == EXIT_OK
        metrics = json.loads((fit_dir / "metrics.json").read_text())
        assert 0.0 <= metrics["misclassification_rate"] <= 1.0
        assert "misclassification=" in capsys.readouterr().out

    def test_fit_is_byte_reproducible(self, simulated, tmp_path):
        args = ["fit", "--input", str(simulated / "trace.csv"), *QUICK, "--seed", "11"]
        main([*args, "--out", str(tmp_path / "a")])
        main([*args, "--out", str(tmp_path / "b")])
        assert (tmp_path / "a" / "chain_0.fcd").read_bytes() == (tmp_path / "b" / "chain_0.fcd").read_bytes()

    def test_summarize_from_another_directory(self, simulated, tmp_path, monkeypatch):
        """Relative fit paths are stored absolute, so summarize finds the trace from any cwd."""
        monkeypatch.chdir(simulated)
        assert main(["fit", "--input", "trace.csv", "--out", "fit", *QUICK]) == EXIT_OK
        run = json.loads((simulated / "fit" / "run.json").read_text())
        assert run["config"]["input_path"] == str(simulated.resolve() / "trace.csv")
        elsewhere = tmp_path / "elsewhere"
        elsewhere.mkdir()
        monkeypatch.chdir(elsewhere)
        assert main(["summarize", "--draws", str(simulated / "fit")]) == EXIT_OK
        assert (simulated / "fit" / "summary.json").exists()

    def test_chains_differ(self, simulated, tmp_path):
        out = tmp_path / "fit"
        args = ["fit", "--input", str(simulated / "trace.csv"), "--out", str(out), *QUICK, "--chains", "2", "--seed", "11"]
        assert main(args) == EXIT_OK
        assert (out / "chain_0.fcd").read_bytes() != (out / "chain_1.fcd").read_bytes()

    def test_evaluate_perfect_summary(self, simulated, tmp_path):
        fit_dir = tmp_path / "fit"
        main(["fit", "--input", str(simulated / "trace.csv"), "--out", str(fit_dir), *QUICK])
        main(["summarize", "--draws", str(fit_dir)])
        summary = json.loads((fit_dir / "summary.json").read_text())
        truth = pd.read_csv(simulated / "truth.csv")
        calls = truth["spike_true"].astype(bool)
        summary["partition"]["spike_calls"] = calls.tolist()
        summary["partition"]["obs_partition"] = truth["obs_label"].tolist()
        summary["partition"]["dist_partition"] = truth.groupby("condition", sort=False)["dist_label"].first().tolist()
        perfect = tmp_path / "perfect.json"
        perfect.write_text(json.dumps(summary))
        assert main(["evaluate", "--summary", str(perfect), "--truth", str(simulated / "truth.csv")]) == EXIT_OK
        metrics = json.loads((tmp_path / "metrics.json").read_text())
        assert metrics == {"misclassification_rate": 0.0, "observational_ari": 1.0, "distributional_ari": 1.0}


class TestErrors:
    """Test exit codes and messages."""

    def test_unknown_scenario(self, tmp_path, capsys):
        assert main(["simulate", "--scenario", "9", "--out", str(tmp_path)]) == EXIT_VALIDATION
        assert "unknown scenario" in capsys.readouterr().err

    def test_missing_condition_column(self, tmp_path, capsys):
        path = tmp_path / "trace.csv"
        path.write_text("t,y\n1,0.1\n2,0.2\n")
        assert main(["fit", "--input", str(path), "--out", str(tmp_path / "fit"), *QUICK]) == EXIT_VALIDATION
        assert "condition" in capsys.readouterr().err

    def test_ragged_row_reports_line(self, tmp_path, capsys):
        path = tmp_path / "trace.csv"
        path.write_text("t,y,condition\n1,0.1,a\n2,0.2,a,extra\n")
        assert main(["fit", "--input", str(path), "--out", str(tmp_path / "fit"), *QUICK]) == EXIT_VALIDATION
        assert "line 3" in capsys.readouterr().err

    def test_bad_config_value(self, tmp_path, capsys):
        path = tmp_path / "trace.csv"
        path.write_text("t,y,condition\n1,0.1,a\n2,0.2,a\n")
        args = ["fit", "--input", str(path), "--out", str(tmp_path / "fit"), "--iters", "5", "--burnin", "9"]
        assert main(args) == EXIT_VALIDATION
        assert "burnin" in capsys.readouterr().err

    def test_empty_draw_directory(self, tmp_path, capsys):
        trace = tmp_path / "trace.csv"
        trace.write_text("t,y,condition\n1,0.1,a\n2,0.2,a\n")
        (tmp_path / "draws").mkdir()
        assert main(["summarize", "--draws", str(tmp_path / "draws"), "--input", str(trace)]) == EXIT_VALIDATION
        assert "no draws found" in capsys.readouterr().err

    def test_evaluate_length_mismatch(self, simulated, tmp_path, capsys):
        fit_dir = tmp_path / "fit"
        main(["fit", "--input", str(simulated / "trace.csv"), "--out", str(fit_dir), *QUICK])
        main(["summarize", "--draws", str(fit_dir)])
        truth = pd.read_csv(simulated / "truth.csv").iloc[:100]
        short = tmp_path / "short.csv"
        truth.to_csv(short, index=False)
        assert main(["evaluate", "--summary", str(fit_dir / "summary.json"), "--truth", str(short)]) == EXIT_VALIDATION
        assert "truth has T=100, summary has T=160" in capsys.readouterr().err

    def test_sampler_failure_is_runtime_error(self, simulated, tmp_path, monkeypatch, capsys):
        def boom(*args, **kwargs):
            raise FloatingPointError("overflow in slab update")

        monkeypatch.setattr(sampler_service, "update_atoms", boom)
        args = ["fit", "--input", str(simulated / "trace.csv"), "--out", str(tmp_path / "fit"), *QUICK]
        assert main(args) == EXIT_RUNTIME
        assert "iteration 0" in capsys.readouterr().err

    def test_unwritable_output(self, simulated, tmp_path):
        blocked = tmp_path / "blocked"
        blocked.write_text("a file, not a directory")
        args = ["fit", "--input", str(simulated / "trace.csv"), "--out", str(blocked / "fit"), *QUICK]
        assert main(args) == EXIT_RUNTIME
