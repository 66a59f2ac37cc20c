"""
Coupled-ALS engine.

Each outer iteration updates W, Q1, U and V (plus any other auxiliary
factors) from their joint normal equations. The first `stage1_iters`
iterations of a level use a few weighted-Jacobi sweeps per solve, later
iterations use an exact Cholesky solve. `mtc_solve` runs this engine on every
level of the resolution hierarchy, coarse to fine.
"""

from __future__ import annotations

import logging
import math
import time
from typing import Literal

import numpy as np
from scipy.linalg import cho_solve
from scipy.linalg import lapack as la

from mtc_tensor.config import SolverConfig
from mtc_tensor.kruskal import FactorSet, pof, random_factors, reconstruct, rescale_columns
from mtc_tensor.models import SolveRecord, SolveReport
from mtc_tensor.multires import build_hierarchy, interpolate_solution
from mtc_tensor.problem import (
    CompletionProblem,
    coarse_factors,
    coarse_loss,
    ensure_valid,
    interim_mttkrp,
    observed_loss,
)
from mtc_tensor.tensor_core import mttkrp_dense

logger = logging.getLogger(__name__)

Target = Literal["U", "V", "W", "Q1", "Q2", "Q3"]

_FINE_TARGETS: dict[str, int] = {"U": 1, "V": 2, "W": 3}


class FactorizationError(np.linalg.LinAlgError):
    def __init__(self, pivot: int):
        super().__init__(
            f"Cholesky factorization failed: leading minor {pivot} is not positive definite"
        )
        self.pivot = pivot


def lambda_at(i: int, decay: float = 20.0) -> float:
    """
    Coarse-term weight e^(-i/decay) at iteration i.

    Fine-level iterations are counted from 1, so solve_level starts at
    e^(-1/decay); i = 0 gives 1.0, the weight coarse levels use throughout.
    """
    if i < 0:
        raise ValueError(f"iteration index must be nonnegative, got {i}")
    return math.exp(-i / decay)


def _gram(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return (a.T @ a) * (b.T @ b)


def assemble_normal_equation(
    p: CompletionProblem, fs: FactorSet, target: Target, lam: float
) -> tuple[np.ndarray, np.ndarray]:
    """
    Joint normal equation gram · X = rhs for one factor, X being its transpose.

    A fine factor of mode t stacks the interim-tensor equations with the
    lam-weighted equations of every coarse tensor aggregated on another mode.
    An auxiliary factor Q_m only sees its own coarse tensor (the weight
    cancels on both sides).
    """
    if target in _FINE_TARGETS:
        mode = _FINE_TARGETS[target]
        a, b = (m for m in (1, 2, 3) if m != mode)
        gram = _gram(fs.factor(a), fs.factor(b))
        rhs = interim_mttkrp(p, fs, mode)
        for c in p.coarse_modes:
            scale = lam * p.weight(c)
            if c == mode or scale == 0.0:
                continue
            factors = coarse_factors(fs, c)
            fa, fb = factors[a - 1], factors[b - 1]
            gram = gram + scale * _gram(fa, fb)
            rhs = rhs + scale * mttkrp_dense(p.coarse[c], fa, fb, mode)
        return gram, rhs.T

    if target not in ("Q1", "Q2", "Q3"):
        raise ValueError(f"unknown factor target {target!r}")
    mode = int(target[1])
    if mode not in p.coarse:
        raise ValueError(f"target {target} needs a coarse tensor aggregated along mode {mode}")
    a, b = (m for m in (1, 2, 3) if m != mode)
    gram = _gram(fs.factor(a), fs.factor(b))
    rhs = mttkrp_dense(p.coarse[mode], fs.factor(a), fs.factor(b), mode)
    return gram, rhs.T


# ── Linear solvers ─────────────────────────────────────────────────────

def jacobi_solve(
    gram: np.ndarray,
    rhs: np.ndarray,
    x0: np.ndarray,
    rounds: int = 5,
    weight: float = 0.7,
    epsilon: float = 1e-5,
) -> np.ndarray:
    """Weighted Jacobi sweeps X <- w·D^-1(B - R·X) + (1 - w)·X with D = diag(gram) + eps."""
    diag = np.diag(gram) + epsilon
    off = gram - np.diag(np.diag(gram))
    x = np.array(x0, dtype=np.float64)
    for _ in range(rounds):
        x = weight * (rhs - off @ x) / diag[:, None] + (1.0 - weight) * x
    return x


def jacobi_spectral_radius(gram: np.ndarray, weight: float = 0.7, epsilon: float = 1e-5) -> float:
    """Spectral radius of the Jacobi iteration matrix (1 - w)·I - w·D^-1·R."""
    diag = np.diag(gram) + epsilon
    off = gram - np.diag(np.diag(gram))
    it = (1.0 - weight) * np.eye(gram.shape[0]) - weight * off / diag[:, None]
    return float(np.max(np.abs(np.linalg.eigvals(it)))) if gram.size else 0.0


def damped_jacobi_weight(
    gram: np.ndarray, weight: float = 0.7, epsilon: float = 1e-5, margin: float = 1.9
) -> float:
    """
    `weight`, lowered to margin / λmax(D^-1 (gram + eps·I)) when larger.

    Weighted Jacobi on an SPD system converges for 0 < w < 2 / λmax; Grams of
    same-signed factors have one dominant eigenvalue that puts w = 0.7 past it.
    """
    if not gram.size:
        return weight
    a = gram + epsilon * np.eye(gram.shape[0])
    scale = 1.0 / np.sqrt(np.diag(a))
    top = float(np.linalg.eigvalsh(a * scale[:, None] * scale[None, :])[-1])
    return min(weight, margin / top) if top > 0.0 else weight


def cholesky_solve(
    gram: np.ndarray, rhs: np.ndarray, epsilon: float = 1e-5, retries: int = 4
) -> np.ndarray:
    """
    Solve (gram + eps·I)·X = rhs with one factorization and two triangular solves.

    The Gram is symmetrized first. If rounding leaves gram + eps·I indefinite,
    the ridge is rescaled to the mean diagonal of the Gram and grown tenfold
    per retry; FactorizationError reports the pivot of the last attempt.
    """
    a = (gram + gram.T) / 2.0
    eye = np.eye(a.shape[0])
    scale = max(1.0, float(np.trace(a)) / max(a.shape[0], 1))
    ridges = [epsilon] + [epsilon * scale * 10.0**k for k in range(retries)]
    info = 0
    for ridge in ridges:
        c, info = la.dpotrf(a + ridge * eye, lower=False, clean=True)
        if info < 0:
            raise ValueError(f"invalid argument {-info} passed to the Cholesky factorization")
        if info == 0:
            if ridge != epsilon:
                logger.warning("Cholesky needed ridge %.3g (requested %.3g)", ridge, epsilon)
            return cho_solve((c, False), rhs)
    raise FactorizationError(int(info))


# ── ALS ────────────────────────────────────────────────────────────────

def initial_factors(p: CompletionProblem, rank: int, rng: np.random.Generator) -> FactorSet:
    """Uniform [-1, 1] start; known aggregations define their Q from the fine factor."""
    fs = random_factors(p.shape, rank, rng, p.coarse_sizes())
    for mode in p.coarse_modes:
        agg = p.spec(mode).aggregation
        if agg is not None:
            fs = fs.with_factor(f"Q{mode}", agg.apply(fs.factor(mode)))
    return fs


def _current(fs: FactorSet, target: str) -> np.ndarray:
    if target in _FINE_TARGETS:
        return fs.factor(_FINE_TARGETS[target])
    return fs.aux[int(target[1])]


def als_iteration(
    p: CompletionProblem,
    fs: FactorSet,
    i: int,
    cfg: SolverConfig,
    lam: float | None = None,
    radii: list[float] | None = None,
) -> FactorSet:
    """
    One outer iteration (i is 1-based within its level).

    Order: W, Q1 (unknown aggregation), U, V, then the remaining auxiliary
    factors: Q_m := P_m · factor_m for a known aggregation, else its own
    normal equation. Columns are rescaled and the snapshot refreshed last.
    """
    lam = lambda_at(i, cfg.lambda_decay) if lam is None else lam
    jacobi = i <= cfg.stage1_iters

    def update(state: FactorSet, target: Target) -> FactorSet:
        gram, rhs = assemble_normal_equation(p, state, target, lam)
        if jacobi:
            x0 = _current(state, target).T
            w = cfg.jacobi_weight
            if cfg.jacobi_damping:
                w = damped_jacobi_weight(gram, w, cfg.diag_epsilon)
            x = jacobi_solve(gram, rhs, x0, cfg.jacobi_rounds, w, cfg.diag_epsilon)
            if cfg.diagnostics and radii is not None:
                radii.append(jacobi_spectral_radius(gram, w, cfg.diag_epsilon))
        else:
            x = cholesky_solve(gram, rhs, cfg.diag_epsilon)
        return state.with_factor(target, x.T)

    q1_first = 1 in p.coarse and p.spec(1).aggregation is None
    fs = update(fs, "W")
    if q1_first:
        fs = update(fs, "Q1")
    fs = update(fs, "U")
    fs = update(fs, "V")
    for mode in p.coarse_modes:
        if mode == 1 and q1_first:
            continue
        agg = p.spec(mode).aggregation
        if agg is not None:
            fs = fs.with_factor(f"Q{mode}", agg.apply(fs.factor(mode)))
        else:
            fs = update(fs, f"Q{mode}")  # type: ignore[arg-type]

    return rescale_columns(fs).with_snapshot()


def solve_level(
    p: CompletionProblem,
    init: FactorSet,
    iters: int,
    cfg: SolverConfig,
    report: SolveReport,
    level: int = 0,
    lam: float | None = None,
    truth: np.ndarray | None = None,
) -> FactorSet:
    """
    Run up to `iters` ALS iterations, stopping early once the relative change
    of the objective falls below `cfg.tolerance`. `lam` fixes the coarse
    weight; None follows the decay schedule.
    """
    if iters == 0:
        return init
    fs = init if init.snapshot is not None else init.with_snapshot()

    previous: float | None = None
    for i in range(1, iters + 1):
        started = time.perf_counter()
        lam_i = lambda_at(i, cfg.lambda_decay) if lam is None else lam
        radii: list[float] = []
        fs = als_iteration(p, fs, i, cfg, lam=lam_i, radii=radii)
        if not fs.all_finite():
            raise FloatingPointError(f"non-finite factors at level {level}, iteration {i}")

        obs_loss = observed_loss(p, fs)
        crs_loss = coarse_loss(p, fs, lam_i)
        fit = pof(truth, reconstruct(*fs.fine)) if truth is not None else None
        radius = max(radii) if radii else None
        if radius is not None and radius >= 1.0:
            logger.warning(
                "Jacobi iteration matrix has spectral radius %.3f at level %d, iteration %d",
                radius, level, i,
            )
        elapsed = time.perf_counter() - started
        report.append(SolveRecord(
            level=level,
            iteration=i,
            lam=lam_i,
            observed_loss=obs_loss,
            coarse_loss=crs_loss,
            pof=fit,
            jacobi_radius=radius,
            seconds=elapsed if cfg.record_timing else 0.0,
        ))
        logger.debug("level %d iter %d: lambda=%.4f observed=%.6g coarse=%.6g pof=%s",
                     level, i, lam_i, obs_loss, crs_loss, fit)

        total = obs_loss + crs_loss
        if previous is not None:
            change = abs(previous - total) / max(abs(previous), 1e-300)
            if change <= cfg.tolerance:
                logger.info("Level %d converged after %d iterations", level, i)
                break
        previous = total
    return fs


def mtc_solve(
    p: CompletionProblem,
    cfg: SolverConfig,
    truth: np.ndarray | None = None,
    model: str = "mtc",
) -> tuple[FactorSet, SolveReport]:
    """
    Multiresolution coupled completion.

    Random start on the coarsest level, `coarse_level_iters` iterations with
    full coarse weight on every level but the finest, then interpolation up
    and `fine_level_iters` scheduled iterations on the original problem.
    """
    ensure_valid(p)
    hierarchy = build_hierarchy(p, cfg.min_mode_size, rank=cfg.rank)
    report = SolveReport(model=model)
    rng = np.random.default_rng(cfg.seed)

    fs = initial_factors(hierarchy.coarsest, cfg.rank, rng)
    for idx, lv in enumerate(hierarchy.levels):
        if idx > 0:
            below = hierarchy.levels[idx - 1]
            fs = interpolate_solution(lv.problem, below.selections or {}, fs, cfg.seed, level=idx)
        finest = idx == hierarchy.depth
        iters = cfg.fine_level_iters if finest else cfg.coarse_level_iters
        logger.info("Solving level %d/%d, shape %s, %d observations, %d iterations",
                    idx, hierarchy.depth, lv.problem.shape, len(lv.problem.observations), iters)
        fs = solve_level(
            lv.problem,
            fs,
            iters,
            cfg,
            report,
            level=idx,
            lam=None if finest else 1.0,
            truth=truth if finest else None,
        )

    if report.final_pof is not None:
        logger.info("Finished %s: PoF %.4f", model, report.final_pof)
    return fs, report
