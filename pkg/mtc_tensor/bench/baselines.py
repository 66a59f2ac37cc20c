"""
Reference models on the shared ALS kernels.

OracleCPD decomposes the complete tensor; CPC-ALS completes from the partial
observations alone. Both are single-level solves without coarse terms.
"""

from __future__ import annotations

import logging

import numpy as np

from mtc_tensor.config import SolverConfig
from mtc_tensor.kruskal import FactorSet
from mtc_tensor.models import SolveReport
from mtc_tensor.problem import CompletionProblem, ModeKind, ModeSpec, ensure_valid
from mtc_tensor.solver import initial_factors, solve_level
from mtc_tensor.tensor_core import CooObservations, as_tensor3

logger = logging.getLogger(__name__)


def _plain_problem(obs: CooObservations) -> CompletionProblem:
    specs = tuple(ModeSpec(ModeKind.CONTINUOUS, n) for n in obs.shape)
    return ensure_valid(CompletionProblem(shape=obs.shape, observations=obs, mode_specs=specs))


def _solve(
    obs: CooObservations,
    rank: int,
    cfg: SolverConfig,
    report: SolveReport,
    truth: np.ndarray | None,
) -> FactorSet:
    problem = _plain_problem(obs)
    cfg = cfg.model_copy(update={"rank": rank})
    init = initial_factors(problem, rank, np.random.default_rng(cfg.seed))
    return solve_level(problem, init, cfg.fine_level_iters, cfg, report, truth=truth)


def oracle_cpd(
    x: np.ndarray,
    rank: int,
    cfg: SolverConfig,
    report: SolveReport | None = None,
) -> FactorSet:
    """CP-ALS on the fully observed tensor."""
    x = as_tensor3(x)
    report = report if report is not None else SolveReport(model="oracle_cpd")
    logger.info("OracleCPD: rank %d on %s", rank, x.shape)
    return _solve(CooObservations.from_dense(x), rank, cfg, report, truth=x)


def cpc_als(
    obs: CooObservations,
    rank: int,
    cfg: SolverConfig,
    report: SolveReport | None = None,
    truth: np.ndarray | None = None,
) -> FactorSet:
    """EM-style completion from the observations only."""
    if not len(obs):
        raise ValueError("CPC-ALS needs at least one observed entry")
    report = report if report is not None else SolveReport(model="cpc_als")
    logger.info("CPC-ALS: rank %d on %s with %d observations", rank, obs.shape, len(obs))
    return _solve(obs, rank, cfg, report, truth=truth)
