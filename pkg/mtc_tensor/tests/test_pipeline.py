"""
End-to-end runs of the experiment pipeline and the CLI entrypoint.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
import pytest

from mtc_tensor.__main__ import main
from mtc_tensor.config import ExperimentConfig, SolverConfig
from mtc_tensor.ingest import load_factors, read_report_csv, write_tensor_file
from mtc_tensor.pipeline import run

EXAMPLES = Path(__file__).resolve().parents[2] / "data" / "examples"


def _summary(output: Path) -> dict[str, str]:
    with (output / "summary.csv").open(newline="") as f:
        return {row["model"]: row["pof"] for row in csv.DictReader(f)}


def _synth(output: Path, **kw) -> ExperimentConfig:
    fields = {
        "mode": "synth",
        "seed": 3,
        "output": output,
        "mode_size": 12,
        "coarse_size": 3,
        "observed_fraction": 0.3,
        "baselines": ["cpc_als", "oracle_cpd"],
        "solver": SolverConfig(rank=2, coarse_level_iters=3, fine_level_iters=10, min_mode_size=4),
    }
    fields.update(kw)
    return ExperimentConfig(**fields)


def _complete(output: Path, **kw) -> ExperimentConfig:
    fields = {
        "mode": "complete",
        "output": output,
        "observations": EXAMPLES / "observations.coo",
        "coarse": {2: EXAMPLES / "coarse_2.coo"},
        "aggregation": {2: EXAMPLES / "aggregation_2.txt"},
        "ground_truth": EXAMPLES / "truth.coo",
        "kinds": ["continuous", "continuous", "continuous"],
        "baselines": ["cpc_als"],
        "solver": SolverConfig(rank=1, fine_level_iters=200, tolerance=0.0),
    }
    fields.update(kw)
    return ExperimentConfig(**fields)


class TestSynthRun:
    def test_writes_reports(self, tmp_path):
        assert run(_synth(tmp_path)) == 0
        for name in ("summary.csv", "report_mtc.csv", "report_cpc_als.csv",
                     "report_oracle_cpd.csv", "factors_mtc.npz"):
            assert (tmp_path / name).is_file()
        assert set(_summary(tmp_path)) == {"mtc", "cpc_als", "oracle_cpd"}
        report = read_report_csv(tmp_path / "report_mtc.csv")
        assert report.records[-1].pof is not None
        assert len(report.for_level(0)) == 3

    def test_reruns_are_byte_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert run(_synth(a)) == 0
        assert run(_synth(b)) == 0
        for name in ("report_mtc.csv", "report_cpc_als.csv", "summary.csv"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_seed_changes_result(self, tmp_path):
        assert run(_synth(tmp_path / "a", baselines=[])) == 0
        assert run(_synth(tmp_path / "b", seed=4, baselines=[])) == 0
        a, b = (tmp_path / name / "report_mtc.csv" for name in ("a", "b"))
        assert a.read_bytes() != b.read_bytes()


class TestCompleteRun:
    def test_example_problem(self, tmp_path):
        assert run(_complete(tmp_path)) == 0
        summary = _summary(tmp_path)
        assert float(summary["mtc"]) >= 0.99
        assert "cpc_als" in summary
        assert load_factors(tmp_path / "factors_mtc.npz").shape == (6, 6, 4)

    def test_truth_shape_mismatch_fails(self, tmp_path, capsys):
        write_tensor_file(tmp_path / "small.coo", np.ones((2, 2, 2)))
        assert run(_complete(tmp_path / "out", ground_truth=tmp_path / "small.coo")) == 1
        assert "error:" in capsys.readouterr().err

    def test_oracle_without_truth_fails(self, tmp_path):
        cfg = _complete(tmp_path, ground_truth=None, baselines=["oracle_cpd"])
        assert run(cfg) == 1


class TestEvalAndForecast:
    @pytest.fixture
    def factors(self, tmp_path) -> Path:
        assert run(_complete(tmp_path / "fit", baselines=[])) == 0
        return tmp_path / "fit" / "factors_mtc.npz"

    def test_eval(self, tmp_path, factors):
        cfg = ExperimentConfig(
            mode="eval",
            output=tmp_path / "eval",
            factors=factors,
            ground_truth=EXAMPLES / "truth.coo",
        )
        assert run(cfg) == 0
        assert float(_summary(tmp_path / "eval")["factors_mtc"]) >= 0.99

    def test_forecast_with_future(self, tmp_path, factors):
        i = np.arange(1, 7, dtype=float)[:, None, None]
        v = np.array([1.0, 1.0, 2.0, 2.0, 3.0, 3.0])[None, :, None]
        k = np.array([5.0, 6.0])[None, None, :]
        write_tensor_file(tmp_path / "future.coo", i * v * k)
        cfg = ExperimentConfig(
            mode="forecast", output=tmp_path / "fc", factors=factors,
            future=tmp_path / "future.coo", horizon=2,
        )
        assert run(cfg) == 0
        summary = _summary(tmp_path / "fc")
        assert list(summary) == ["gp", "gp_cumulative", "persistence", "persistence_cumulative"]
        assert all(value != "" for value in summary.values())
        assert len((tmp_path / "fc" / "w_future.csv").read_text().splitlines()) == 2

    def test_forecast_without_future(self, tmp_path, factors):
        cfg = ExperimentConfig(mode="forecast", output=tmp_path / "fc", factors=factors, horizon=3)
        assert run(cfg) == 0
        assert _summary(tmp_path / "fc") == {"gp": ""}


class TestCli:
    def test_missing_observations_file(self, tmp_path, capsys):
        conf = tmp_path / "run.conf"
        conf.write_text("mode = complete\nobservations = nowhere.coo\n", encoding="utf-8")
        assert main(["--config", str(conf), "--quiet"]) == 2
        assert "nowhere.coo" in capsys.readouterr().err

    def test_missing_config_file(self, tmp_path):
        assert main(["--config", str(tmp_path / "absent.conf"), "--quiet"]) == 2

    def test_synth_run(self, tmp_path):
        conf = tmp_path / "run.conf"
        conf.write_text(
            f"mode = synth\noutput = {tmp_path / 'out'}\nmode_size = 10\ncoarse_size = 3\n"
            "observed_fraction = 0.3\nrank = 2\ncoarse_level_iters = 2\nfine_level_iters = 5\n",
            encoding="utf-8",
        )
        assert main(["--config", str(conf), "--seed", "5", "--quiet"]) == 0
        assert (tmp_path / "out" / "summary.csv").is_file()
