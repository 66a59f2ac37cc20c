"""
Tests for the synthetic generator, the reference baselines and forecasting.
"""

from __future__ import annotations

import numpy as np
import pytest

from mtc_tensor.bench.baselines import cpc_als, oracle_cpd
from mtc_tensor.bench.forecast import (
    ForecastError,
    evaluate_prediction,
    gp_forecast,
    persistence_forecast,
)
from mtc_tensor.bench.synthetic import generate_synthetic, sample_mask, synthetic_problem
from mtc_tensor.config import SolverConfig
from mtc_tensor.kruskal import pof, reconstruct
from mtc_tensor.models import SolveReport
from mtc_tensor.problem import ModeKind, validate
from mtc_tensor.tensor_core import CooObservations, ShapeMismatchError, mode_product


def _cfg(**kw) -> SolverConfig:
    base = {"rank": 1, "fine_level_iters": 60, "tolerance": 0.0, "seed": 0}
    base.update(kw)
    return SolverConfig(**base)


class TestSyntheticInstance:
    def test_shapes_and_coarse_tensors(self):
        inst = generate_synthetic(rank=3, mode_size=20, coarse_size=4, seed=5)
        assert inst.truth.shape == (20, 20, 20)
        assert inst.c1.shape == (4, 20, 20)
        assert inst.c2.shape == (20, 4, 20)
        assert np.array_equal(inst.c1, mode_product(inst.truth, inst.p1.dense(), 1))
        assert np.array_equal(inst.c2, mode_product(inst.truth, inst.p2.dense(), 2))

    def test_smooth_modes_sorted(self):
        inst = generate_synthetic(rank=3, mode_size=20, coarse_size=4, seed=5)
        assert np.all(np.diff(inst.v, axis=0) >= 0)
        assert np.all(np.diff(inst.w, axis=0) >= 0)
        assert np.all((inst.u >= 0) & (inst.u < 1))

    def test_same_seed_same_instance(self):
        a = generate_synthetic(rank=2, mode_size=10, coarse_size=3, seed=9)
        b = generate_synthetic(rank=2, mode_size=10, coarse_size=3, seed=9)
        assert np.array_equal(a.truth, b.truth)

    def test_coarse_size_checked(self):
        with pytest.raises(ValueError):
            generate_synthetic(mode_size=10, coarse_size=10)

    def test_factors_carry_aggregated_aux(self):
        inst = generate_synthetic(rank=2, mode_size=10, coarse_size=3, seed=1)
        fs = inst.factors
        assert np.allclose(fs.q1, inst.p1.apply(inst.u))
        assert np.allclose(reconstruct(*fs.fine), inst.truth)


class TestSampleMask:
    def test_count_and_values(self):
        x = np.arange(60.0).reshape(3, 4, 5)
        obs = sample_mask(x, 0.25, seed=0)
        assert len(obs) == 15
        c = obs.coords
        assert np.array_equal(obs.values, x[c[:, 0], c[:, 1], c[:, 2]])
        assert len(obs.duplicates()) == 0

    def test_full_fraction_keeps_everything(self):
        x = np.ones((2, 3, 4))
        assert len(sample_mask(x, 1.0, seed=3)) == 24

    def test_seeded(self):
        x = np.ones((5, 5, 5))
        first, second = sample_mask(x, 0.1, seed=4), sample_mask(x, 0.1, seed=4)
        assert np.array_equal(first.coords, second.coords)

    @pytest.mark.parametrize("fraction", [0.0, -0.1, 1.5])
    def test_fraction_range(self, fraction):
        with pytest.raises(ValueError):
            sample_mask(np.ones((2, 2, 2)), fraction, seed=0)


class TestSyntheticProblem:
    def test_known_and_unknown_modes(self):
        inst = generate_synthetic(rank=2, mode_size=12, coarse_size=3, seed=0)
        p = synthetic_problem(inst, sample_mask(inst.truth, 0.2, seed=1))
        assert p.spec(1).kind == ModeKind.CATEGORICAL
        assert p.spec(1).aggregation is None and p.spec(1).coarse_size == 3
        assert p.spec(2).aggregation is inst.p2
        assert p.coarse_modes == [1, 2]
        assert validate(p) == []

    def test_default_instance_is_valid(self):
        inst = generate_synthetic(seed=1)
        assert inst.truth.shape == (125, 125, 125)
        p = synthetic_problem(inst, sample_mask(inst.truth, 0.03, seed=2))
        assert validate(p) == []

    def test_subset_of_coarse_modes(self):
        inst = generate_synthetic(rank=2, mode_size=12, coarse_size=3, seed=0)
        p = synthetic_problem(inst, sample_mask(inst.truth, 0.2, seed=1), coarse_modes=(2,))
        assert p.coarse_modes == [2]
        assert p.spec(1).coarse_size is None


class TestBaselines:
    def test_oracle_rank_one(self):
        rng = np.random.default_rng(0)
        x = reconstruct(*(rng.random((n, 1)) + 0.5 for n in (5, 4, 3)))
        report = SolveReport(model="oracle_cpd")
        fs = oracle_cpd(x, 1, _cfg(), report)
        assert pof(x, reconstruct(*fs.fine)) >= 0.999
        assert report.final_pof == pytest.approx(pof(x, reconstruct(*fs.fine)))

    def test_oracle_rank_two(self):
        rng = np.random.default_rng(1)
        x = reconstruct(*(rng.normal(size=(n, 2)) for n in (7, 6, 5)))
        fs = oracle_cpd(x, 2, _cfg(rank=2, fine_level_iters=300))
        assert pof(x, reconstruct(*fs.fine)) >= 0.99

    def test_cpc_als_on_full_observations_matches_oracle(self):
        rng = np.random.default_rng(2)
        x = reconstruct(*(rng.random((n, 2)) for n in (5, 4, 3)))
        cfg = _cfg(rank=2, fine_level_iters=20)
        a = oracle_cpd(x, 2, cfg)
        b = cpc_als(CooObservations.from_dense(x), 2, cfg)
        for fa, fb in zip(a.fine, b.fine):
            assert np.array_equal(fa, fb)

    def test_cpc_als_rank_one_from_half_the_entries(self):
        rng = np.random.default_rng(3)
        x = reconstruct(*(rng.random((6, 1)) + 0.5 for _ in range(3)))
        obs = sample_mask(x, 0.5, seed=4)
        # a single random start can stall at a spurious stationary point
        fits = [
            pof(x, reconstruct(*cpc_als(obs, 1, _cfg(fine_level_iters=200, seed=s)).fine))
            for s in (1, 2, 3)
        ]
        assert max(fits) >= 0.99

    def test_cpc_als_needs_observations(self):
        with pytest.raises(ValueError):
            cpc_als(CooObservations.empty((3, 3, 3)), 1, _cfg())


class TestGpForecast:
    def test_constant_column(self):
        w = np.full((30, 2), 0.4)
        out = gp_forecast(w, 5)
        assert out.shape == (5, 2)
        assert np.max(np.abs(out - 0.4)) < 1e-3

    def test_smooth_signal_one_step_ahead(self):
        t = np.arange(1, 41, dtype=float)
        w = np.sin(t / 3.0)[:, None]
        out = gp_forecast(w, 3, length_scale=3.0)
        assert abs(out[0, 0] - np.sin(41 / 3.0)) < 0.1

    def test_horizon_checked(self):
        with pytest.raises(ValueError):
            gp_forecast(np.ones((10, 1)), 0)

    def test_needs_two_steps(self):
        with pytest.raises(ValueError):
            gp_forecast(np.ones((1, 3)), 2)

    def test_singular_kernel_reported(self):
        w = np.linspace(0.0, 1.0, 60)[:, None]
        with pytest.raises(ForecastError):
            gp_forecast(w, 2, length_scale=50.0, noise=0.0)


class TestPersistence:
    def test_repeats_last_row(self):
        w = np.array([[1.0, 2.0], [3.0, 4.0]])
        assert persistence_forecast(w, 3).tolist() == [[3.0, 4.0]] * 3

    def test_horizon_checked(self):
        with pytest.raises(ValueError):
            persistence_forecast(np.ones((2, 2)), 0)


class TestEvaluatePrediction:
    def _factors(self):
        rng = np.random.default_rng(8)
        return rng.random((4, 2)), rng.random((3, 2)), rng.random((5, 2))

    def test_true_time_factor(self):
        u, v, w = self._factors()
        assert evaluate_prediction(reconstruct(u, v, w), u, v, w) == pytest.approx(1.0)

    def test_zero_time_factor(self):
        u, v, w = self._factors()
        zero = np.zeros_like(w)
        assert evaluate_prediction(reconstruct(u, v, w), u, v, zero) == pytest.approx(0.0)

    def test_cumulative_uses_running_sums(self):
        u, v, w = self._factors()
        future = reconstruct(u, v, w)
        guess = 0.5 * w
        expected = pof(np.cumsum(future, axis=2), np.cumsum(reconstruct(u, v, guess), axis=2))
        assert evaluate_prediction(future, u, v, guess, cumulative=True) == pytest.approx(expected)

    def test_shape_checked(self):
        u, v, w = self._factors()
        with pytest.raises(ShapeMismatchError):
            evaluate_prediction(np.ones((4, 3, 2)), u, v, w)

    def test_gp_beats_persistence_on_drifting_time_factor(self):
        rng = np.random.default_rng(9)
        u, v = rng.random((5, 2)) + 0.5, rng.random((4, 2)) + 0.5
        t = np.arange(1, 36, dtype=float)[:, None]
        w = 0.2 + np.array([[0.03, 0.05]]) * t
        past, future = w[:30], w[30:]
        truth = reconstruct(u, v, future)
        gp = evaluate_prediction(truth, u, v, gp_forecast(past, 5))
        last = evaluate_prediction(truth, u, v, persistence_forecast(past, 5))
        assert gp > last
