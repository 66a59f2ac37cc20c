"""
Experiment runner.
One config-driven run per invocation: load or generate inputs -> solve ->
write reports. Every failure is logged and turned into a nonzero status.
"""

from __future__ import annotations

import logging
import sys
import time
from pathlib import Path

import numpy as np

from mtc_tensor.bench.baselines import cpc_als, oracle_cpd
from mtc_tensor.bench.forecast import evaluate_prediction, gp_forecast, persistence_forecast
from mtc_tensor.bench.synthetic import generate_synthetic, sample_mask, synthetic_problem
from mtc_tensor.config import ExperimentConfig, SolverConfig
from mtc_tensor.ingest import (
    load_factors,
    parse_aggregation_file,
    parse_coo_file,
    parse_tensor_file,
    save_factors,
    write_matrix_csv,
    write_report_csv,
    write_summary_csv,
)
from mtc_tensor.kruskal import FactorSet, pof, reconstruct
from mtc_tensor.models import RunSummary, SolveReport
from mtc_tensor.problem import CompletionProblem, ModeKind, ModeSpec
from mtc_tensor.solver import mtc_solve
from mtc_tensor.tensor_core import CooObservations, ShapeMismatchError

logger = logging.getLogger(__name__)


def run(cfg: ExperimentConfig) -> int:
    """Execute one experiment; returns the process exit status."""
    stats: dict = {
        "mode": cfg.mode,
        "seed": cfg.seed,
        "models": [],
        "duration_seconds": 0,
    }
    start_time = time.monotonic()

    try:
        cfg.output.mkdir(parents=True, exist_ok=True)
        solver = cfg.solver.model_copy(update={"seed": cfg.seed})
        if cfg.mode == "synth":
            summaries = _run_synth(cfg, solver, stats)
        elif cfg.mode == "complete":
            summaries = _run_complete(cfg, solver, stats)
        elif cfg.mode == "eval":
            summaries = _run_eval(cfg)
        else:
            summaries = _run_forecast(cfg)

        write_summary_csv(cfg.output / "summary.csv", summaries)
        stats["models"] = [s.model for s in summaries]
        elapsed = time.monotonic() - start_time
        stats["duration_seconds"] = round(elapsed, 2)
        for s in summaries:
            logger.info("%-16s PoF %s", s.model, "n/a" if s.pof is None else f"{s.pof:.6f}")
        logger.info("=== Run complete in %.1fs: %s ===", elapsed, stats)
        return 0

    except Exception as e:
        elapsed = time.monotonic() - start_time
        logger.error("Run failed after %.1fs: %s", elapsed, e,
                     exc_info=logger.isEnabledFor(logging.DEBUG))
        print(f"error: {e}", file=sys.stderr)
        return 1


# ── Solving ────────────────────────────────────────────────────────────

def _summary(
    model: str, fs: FactorSet, report: SolveReport, truth: np.ndarray | None
) -> RunSummary:
    return RunSummary(
        model=model,
        pof=pof(truth, reconstruct(*fs.fine)) if truth is not None else None,
        iterations=len(report.records),
        seconds=sum(r.seconds for r in report.records),
    )


def _solve_all(
    cfg: ExperimentConfig,
    solver: SolverConfig,
    problem: CompletionProblem,
    truth: np.ndarray | None,
    stats: dict,
) -> list[RunSummary]:
    logger.info("=== Stage 2: Multiresolution completion (rank %d) ===", solver.rank)
    fs, report = mtc_solve(problem, solver, truth=truth)
    write_report_csv(cfg.output / "report_mtc.csv", report)
    save_factors(cfg.output / "factors_mtc.npz", fs)
    summaries = [_summary("mtc", fs, report, truth)]
    stats["observations"] = len(problem.observations)

    if cfg.baselines:
        logger.info("=== Stage 3: Baselines %s ===", ", ".join(cfg.baselines))
    for name in cfg.baselines:
        base_report = SolveReport(model=name)
        if name == "oracle_cpd":
            if truth is None:
                raise ValueError("oracle_cpd needs a ground-truth tensor")
            base = oracle_cpd(truth, solver.rank, solver, base_report)
        else:
            base = cpc_als(problem.observations, solver.rank, solver, base_report, truth=truth)
        write_report_csv(cfg.output / f"report_{name}.csv", base_report)
        summaries.append(_summary(name, base, base_report, truth))
    return summaries


def _run_synth(cfg: ExperimentConfig, solver: SolverConfig, stats: dict) -> list[RunSummary]:
    logger.info("=== Stage 1: Synthetic instance (%d^3, rank %d, %.1f%% observed) ===",
                cfg.mode_size, solver.rank, 100 * cfg.observed_fraction)
    instance = generate_synthetic(
        rank=solver.rank,
        mode_size=cfg.mode_size,
        coarse_size=cfg.coarse_size,
        seed=cfg.seed,
        aggregated_modes=cfg.coarse_modes,
    )
    # separate stream from the factor draw
    obs = sample_mask(instance.truth, cfg.observed_fraction, seed=cfg.seed + 1)
    problem = synthetic_problem(instance, obs, cfg.coarse_modes, cfg.known_modes)
    return _solve_all(cfg, solver, problem, instance.truth, stats)


def _load_problem(cfg: ExperimentConfig) -> CompletionProblem:
    assert cfg.observations is not None
    obs: CooObservations = parse_coo_file(cfg.observations)
    coarse = {m: parse_tensor_file(path) for m, path in sorted(cfg.coarse.items())}
    aggregation = {m: parse_aggregation_file(path) for m, path in sorted(cfg.aggregation.items())}

    specs: list[ModeSpec] = []
    for mode in (1, 2, 3):
        kind = ModeKind(cfg.kinds[mode - 1])
        size = obs.shape[mode - 1]
        if mode in aggregation:
            specs.append(ModeSpec.known(kind, aggregation[mode]))
        elif mode in coarse:
            specs.append(ModeSpec(kind, size, coarse[mode].shape[mode - 1]))
        else:
            specs.append(ModeSpec(kind, size))
    logger.info("Loaded %d observations of a %s tensor, coarse tensors on modes %s (known: %s)",
                len(obs), obs.shape, sorted(coarse), sorted(aggregation))
    return CompletionProblem(
        shape=obs.shape,
        observations=obs,
        mode_specs=(specs[0], specs[1], specs[2]),
        coarse=coarse,
        weights=dict(cfg.weights),
    )


def _run_complete(cfg: ExperimentConfig, solver: SolverConfig, stats: dict) -> list[RunSummary]:
    logger.info("=== Stage 1: Ingestion ===")
    problem = _load_problem(cfg)
    truth = parse_tensor_file(cfg.ground_truth) if cfg.ground_truth is not None else None
    if truth is not None and truth.shape != problem.shape:
        raise ShapeMismatchError(f"ground truth {truth.shape} vs observations {problem.shape}")
    return _solve_all(cfg, solver, problem, truth, stats)


# ── Evaluation ─────────────────────────────────────────────────────────

def _run_eval(cfg: ExperimentConfig) -> list[RunSummary]:
    assert cfg.factors is not None and cfg.ground_truth is not None
    logger.info("=== Evaluating %s against %s ===", cfg.factors, cfg.ground_truth)
    fs = load_factors(cfg.factors)
    truth = parse_tensor_file(cfg.ground_truth)
    if truth.shape != fs.shape:
        raise ShapeMismatchError(f"ground truth {truth.shape} vs factors {fs.shape}")
    return [RunSummary(model=Path(cfg.factors).stem, pof=pof(truth, reconstruct(*fs.fine)))]


def _run_forecast(cfg: ExperimentConfig) -> list[RunSummary]:
    assert cfg.factors is not None
    logger.info("=== Forecasting %d steps from %s ===", cfg.horizon, cfg.factors)
    fs = load_factors(cfg.factors)
    w_future = gp_forecast(fs.w, cfg.horizon, cfg.length_scale, cfg.noise)
    write_matrix_csv(cfg.output / "w_future.csv", w_future)
    if cfg.future is None:
        return [RunSummary(model="gp")]

    future = parse_tensor_file(cfg.future)
    w_last = persistence_forecast(fs.w, cfg.horizon)
    return [
        RunSummary(model="gp", pof=evaluate_prediction(future, fs.u, fs.v, w_future)),
        RunSummary(model="gp_cumulative",
                   pof=evaluate_prediction(future, fs.u, fs.v, w_future, cumulative=True)),
        RunSummary(model="persistence", pof=evaluate_prediction(future, fs.u, fs.v, w_last)),
        RunSummary(model="persistence_cumulative",
                   pof=evaluate_prediction(future, fs.u, fs.v, w_last, cumulative=True)),
    ]
