"""
Tests for configuration and report model validation.
"""

from __future__ import annotations

from pathlib import Path

import pytest
from pydantic import ValidationError

from mtc_tensor.config import ExperimentConfig, SolverConfig
from mtc_tensor.models import RunSummary, SolveRecord, SolveReport

EXAMPLES = Path(__file__).resolve().parents[2] / "data" / "examples"


def _record(level: int, iteration: int, **kw) -> SolveRecord:
    return SolveRecord(
        level=level, iteration=iteration, lam=1.0, observed_loss=1.0, coarse_loss=0.0, **kw
    )


class TestSolverConfig:
    def test_defaults(self):
        cfg = SolverConfig(seed=1, min_mode_size=16)
        assert cfg.rank == 10
        assert cfg.coarse_level_iters == 20
        assert cfg.fine_level_iters == 200
        assert cfg.stage1_iters == 5
        assert cfg.jacobi_rounds == 5
        assert cfg.jacobi_weight == pytest.approx(0.7)
        assert cfg.jacobi_damping is True
        assert cfg.diag_epsilon == pytest.approx(1e-5)
        assert cfg.lambda_decay == pytest.approx(20.0)

    def test_bounds(self):
        with pytest.raises(ValidationError):
            SolverConfig(rank=0)
        with pytest.raises(ValidationError):
            SolverConfig(jacobi_weight=1.5)
        with pytest.raises(ValidationError):
            SolverConfig(diag_epsilon=0.0)
        with pytest.raises(ValidationError):
            SolverConfig(min_mode_size=1)

    def test_unknown_field_rejected(self):
        with pytest.raises(ValidationError):
            SolverConfig(ranks=3)

    def test_frozen(self):
        cfg = SolverConfig()
        with pytest.raises(ValidationError):
            cfg.rank = 3

    def test_ablation_helpers(self):
        cfg = SolverConfig(rank=4)
        assert cfg.without_stage1().stage1_iters == 0
        assert cfg.without_multiresolution().min_mode_size > 10**6
        assert cfg.without_stage1().rank == 4


class TestExperimentConfig:
    def test_synth_defaults(self):
        cfg = ExperimentConfig(mode="synth")
        assert cfg.mode_size == 125
        assert cfg.coarse_size == 12
        assert cfg.observed_fraction == pytest.approx(0.03)
        assert cfg.coarse_modes == [1, 2]
        assert cfg.known_modes == [2]
        assert cfg.kinds == ["categorical", "continuous", "continuous"]

    def test_modes_sorted_and_deduplicated(self):
        cfg = ExperimentConfig(mode="synth", coarse_modes=[3, 1, 3], known_modes=[])
        assert cfg.coarse_modes == [1, 3]

    def test_mode_out_of_range(self):
        with pytest.raises(ValidationError):
            ExperimentConfig(mode="synth", coarse_modes=[4])

    def test_known_must_be_coarse(self):
        with pytest.raises(ValidationError):
            ExperimentConfig(mode="synth", coarse_modes=[1], known_modes=[2])

    def test_coarse_size_below_mode_size(self):
        with pytest.raises(ValidationError):
            ExperimentConfig(mode="synth", mode_size=10, coarse_size=10)

    def test_complete_needs_observations(self):
        with pytest.raises(ValidationError) as exc:
            ExperimentConfig(mode="complete")
        assert "observations" in str(exc.value)

    def test_eval_needs_factors_and_truth(self):
        with pytest.raises(ValidationError):
            ExperimentConfig(mode="eval", ground_truth=EXAMPLES / "truth.coo")

    def test_missing_file_named(self, tmp_path):
        with pytest.raises(ValidationError) as exc:
            ExperimentConfig(mode="complete", observations=tmp_path / "gone.coo")
        assert "input file not found" in str(exc.value)
        assert "gone.coo" in str(exc.value)

    def test_aggregation_needs_coarse_tensor(self):
        with pytest.raises(ValidationError):
            ExperimentConfig(
                mode="complete",
                observations=EXAMPLES / "observations.coo",
                aggregation={2: EXAMPLES / "aggregation_2.txt"},
            )

    def test_kinds_length(self):
        with pytest.raises(ValidationError):
            ExperimentConfig(mode="synth", kinds=["continuous", "continuous"])

    def test_unknown_baseline(self):
        with pytest.raises(ValidationError):
            ExperimentConfig(mode="synth", baselines=["tucker"])


class TestSolveReport:
    def test_empty(self):
        report = SolveReport()
        assert report.model == "mtc"
        assert report.records == []
        assert report.final_pof is None

    def test_append_and_levels(self):
        report = SolveReport()
        report.append(_record(0, 1))
        report.append(_record(0, 2))
        report.append(_record(1, 1, pof=0.5))
        assert [r.iteration for r in report.for_level(0)] == [1, 2]
        assert report.final_pof == 0.5

    def test_iteration_must_increase(self):
        report = SolveReport()
        report.append(_record(0, 2))
        with pytest.raises(ValueError):
            report.append(_record(0, 2))

    def test_validated_on_construction(self):
        with pytest.raises(ValidationError):
            SolveReport(records=[_record(1, 3), _record(1, 1)])

    def test_record_bounds(self):
        with pytest.raises(ValidationError):
            _record(-1, 1)
        with pytest.raises(ValidationError):
            _record(0, 0)


class TestRunSummary:
    def test_defaults(self):
        s = RunSummary(model="gp")
        assert s.pof is None
        assert s.iterations == 0
        assert s.seconds == 0.0
