"""
Completion-problem data model: partial observations, coarse tensors, mode
specifications and coarse-term weights; objective terms and the implicit
interim-tensor MTTKRP.

The mask M is the coordinate set of the observations. Each coarse tensor is
aggregated along exactly one mode m and is approximated by [[..., Q_m, ...]]
with Q_m in place of the fine factor of mode m.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable

import numpy as np

from mtc_tensor.kruskal import FactorSet, reconstruct
from mtc_tensor.tensor_core import (
    CooObservations,
    Mode,
    ShapeMismatchError,
    masked_reconstruction,
    mttkrp_sparse,
)

logger = logging.getLogger(__name__)


class ModeKind(str, Enum):
    CONTINUOUS = "continuous"
    CATEGORICAL = "categorical"


class ProblemValidationError(ValueError):
    def __init__(self, errors: list[str]):
        super().__init__("invalid completion problem: " + "; ".join(errors))
        self.errors = errors


# ── Aggregation ────────────────────────────────────────────────────────

@dataclass(frozen=True)
class AggregationMatrix:
    """
    Binary J×I coarse-from-fine map with one-hot columns.

    `assignment[i]` is the 0-based coarse index that fine index i sums into.
    """

    coarse_size: int
    fine_size: int
    assignment: np.ndarray

    def __post_init__(self) -> None:
        assignment = np.array(self.assignment, dtype=np.int64).reshape(-1)
        assignment.setflags(write=False)
        object.__setattr__(self, "assignment", assignment)

    @classmethod
    def from_pairs(
        cls, coarse_size: int, fine_size: int, pairs: Iterable[tuple[int, int]]
    ) -> AggregationMatrix:
        """Build from 1-based (coarse_index, fine_index) pairs covering every fine index."""
        assignment = np.full(fine_size, -1, dtype=np.int64)
        for coarse, fine in pairs:
            assignment[fine - 1] = coarse - 1
        return cls(coarse_size=coarse_size, fine_size=fine_size, assignment=assignment)

    @classmethod
    def contiguous(cls, coarse_size: int, fine_size: int) -> AggregationMatrix:
        """Blocks of ceil(I/J) consecutive fine indices; the last block absorbs the rest."""
        block = -(-fine_size // coarse_size)
        assignment = np.minimum(np.arange(fine_size) // block, coarse_size - 1)
        return cls(coarse_size=coarse_size, fine_size=fine_size, assignment=assignment)

    def problems(self) -> list[str]:
        errs: list[str] = []
        if self.assignment.shape[0] != self.fine_size:
            covered = self.assignment.shape[0]
            errs.append(f"assignment covers {covered} of {self.fine_size} fine indices")
            return errs
        if self.coarse_size >= self.fine_size:
            errs.append(
                f"coarse size {self.coarse_size} must be smaller than fine size {self.fine_size}"
            )
        bad = np.flatnonzero((self.assignment < 0) | (self.assignment >= self.coarse_size))
        if bad.size:
            errs.append(f"fine index {int(bad[0]) + 1} unassigned or out of range")
            return errs
        empty = np.flatnonzero(np.bincount(self.assignment, minlength=self.coarse_size) == 0)
        if empty.size:
            errs.append(f"coarse index {int(empty[0]) + 1} has no fine index")
        return errs

    def dense(self) -> np.ndarray:
        p = np.zeros((self.coarse_size, self.fine_size))
        p[self.assignment, np.arange(self.fine_size)] = 1.0
        return p

    def apply(self, factor: np.ndarray) -> np.ndarray:
        """P @ factor, summing fine rows into their coarse row."""
        if factor.shape[0] != self.fine_size:
            raise ShapeMismatchError(
                f"factor has {factor.shape[0]} rows, aggregation expects {self.fine_size}"
            )
        out = np.zeros((self.coarse_size, factor.shape[1]))
        np.add.at(out, self.assignment, factor)
        return out


@dataclass(frozen=True)
class ModeSpec:
    """
    One tensor mode: its kind, fine size and optional aggregation.

    `coarse_size` set means the mode is aggregated in a coarse tensor;
    `aggregation` set means that aggregation matrix is known.
    """

    kind: ModeKind
    fine_size: int
    coarse_size: int | None = None
    aggregation: AggregationMatrix | None = None

    @classmethod
    def known(cls, kind: ModeKind, aggregation: AggregationMatrix) -> ModeSpec:
        return cls(kind, aggregation.fine_size, aggregation.coarse_size, aggregation)

    @property
    def is_aggregated(self) -> bool:
        return self.coarse_size is not None

    @property
    def is_known(self) -> bool:
        return self.aggregation is not None


# ── Problem ────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class CompletionProblem:
    shape: tuple[int, int, int]
    observations: CooObservations
    mode_specs: tuple[ModeSpec, ModeSpec, ModeSpec]
    coarse: dict[int, np.ndarray] = field(default_factory=dict)
    weights: dict[int, float] = field(default_factory=dict)

    def weight(self, mode: int) -> float:
        return float(self.weights.get(mode, 1.0))

    def spec(self, mode: int) -> ModeSpec:
        return self.mode_specs[mode - 1]

    @property
    def coarse_modes(self) -> list[int]:
        return sorted(self.coarse)

    def coarse_sizes(self) -> dict[int, int]:
        return {m: int(self.coarse[m].shape[m - 1]) for m in self.coarse_modes}

    def coarse_shape(self, mode: int) -> tuple[int, int, int]:
        shape = list(self.shape)
        shape[mode - 1] = int(self.spec(mode).coarse_size or 0)
        return tuple(shape)


def validate(p: CompletionProblem) -> list[str]:
    """Every violated invariant of `p`; an empty list means the problem is valid."""
    errs: list[str] = []
    if len(p.shape) != 3 or any(s < 1 for s in p.shape):
        return [f"shape {p.shape} must have three positive sizes"]
    if len(p.mode_specs) != 3:
        return [f"expected 3 mode specs, got {len(p.mode_specs)}"]

    for mode, spec in enumerate(p.mode_specs, start=1):
        if spec.fine_size != p.shape[mode - 1]:
            size = p.shape[mode - 1]
            errs.append(f"mode {mode}: spec size {spec.fine_size} differs from shape {size}")
        if spec.coarse_size is not None and spec.coarse_size >= spec.fine_size:
            errs.append(
                f"mode {mode}: coarse size {spec.coarse_size} must be smaller than {spec.fine_size}"
            )
        if spec.aggregation is not None:
            if spec.aggregation.coarse_size != spec.coarse_size:
                errs.append(f"mode {mode}: aggregation coarse size differs from the mode spec")
            errs.extend(f"mode {mode}: {e}" for e in spec.aggregation.problems())
        if spec.is_aggregated and mode not in p.coarse:
            errs.append(f"mode {mode}: aggregated but no coarse tensor is attached")

    if p.observations.shape != p.shape:
        errs.append(f"observations shape {p.observations.shape} differs from {p.shape}")
    for i, j, k in p.observations.out_of_range()[:5].tolist():
        errs.append(f"observation ({i + 1}, {j + 1}, {k + 1}) outside shape {p.shape}")
    for i, j, k in p.observations.duplicates()[:5].tolist():
        errs.append(f"duplicate observation coordinate ({i + 1}, {j + 1}, {k + 1})")
    if len(p.observations) and not np.all(np.isfinite(p.observations.values)):
        errs.append("observations contain non-finite values")

    if not len(p.observations) and len(p.coarse) == 1:
        errs.append(f"mode {p.coarse_modes[0]} is aggregated in every available tensor")
    for mode, tensor in sorted(p.coarse.items()):
        if mode not in (1, 2, 3):
            errs.append(f"coarse tensor attached to unknown mode {mode}")
            continue
        if not p.spec(mode).is_aggregated:
            errs.append(f"mode {mode}: coarse tensor given but the mode spec has no aggregation")
            continue
        expected = p.coarse_shape(mode)
        if tuple(tensor.shape) != expected:
            got = tuple(tensor.shape)
            errs.append(f"mode {mode}: coarse tensor shape {got}, expected {expected}")
        elif not np.all(np.isfinite(tensor)):
            errs.append(f"mode {mode}: coarse tensor contains non-finite values")

    for mode, weight in p.weights.items():
        if weight < 0:
            errs.append(f"mode {mode}: negative weight {weight}")
    return errs


def ensure_valid(p: CompletionProblem) -> CompletionProblem:
    errs = validate(p)
    if errs:
        raise ProblemValidationError(errs)
    return p


def _check_factor_shapes(p: CompletionProblem, fs: FactorSet) -> None:
    if fs.shape != p.shape:
        raise ShapeMismatchError(f"factors describe {fs.shape}, problem is {p.shape}")
    for mode in p.coarse_modes:
        q = fs.aux.get(mode)
        expected = p.coarse_sizes()[mode]
        if q is None or q.shape[0] != expected:
            raise ShapeMismatchError(f"auxiliary factor Q{mode} missing or not {expected} rows")


def coarse_factors(fs: FactorSet, mode: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(U, V, W) with Q_mode substituted at `mode`."""
    factors = list(fs.fine)
    factors[mode - 1] = fs.aux[mode]
    return factors[0], factors[1], factors[2]


# ── Objective ──────────────────────────────────────────────────────────

def observed_loss(p: CompletionProblem, fs: FactorSet) -> float:
    """|M * (X - [[U, V, W]])|_F^2 over the observed coordinates only."""
    _check_factor_shapes(p, fs)
    if not len(p.observations):
        return 0.0
    approx = masked_reconstruction(p.observations, fs.u, fs.v, fs.w)
    return float(np.sum(np.square(p.observations.values - approx.values)))


def coarse_loss(p: CompletionProblem, fs: FactorSet, lam: float = 1.0) -> float:
    """Σ_m lam·weight_m·|C^(m) - [[.., Q_m, ..]]|_F^2 over the attached coarse tensors."""
    _check_factor_shapes(p, fs)
    total = 0.0
    for mode in p.coarse_modes:
        scale = lam * p.weight(mode)
        if scale == 0.0:
            continue
        resid = p.coarse[mode] - reconstruct(*coarse_factors(fs, mode))
        total += scale * float(np.sum(np.square(resid)))
    return total


def interim_mttkrp(p: CompletionProblem, fs: FactorSet, mode: Mode) -> np.ndarray:
    """
    MTTKRP of the interim tensor X~ = M*X + (1-M)*[[U^k, V^k, W^k]] along `mode`.

    Computed as MTTKRP(M*X) + F^k (G1 * G2) - MTTKRP(M*R) where R is the
    snapshot reconstruction and G are the cross Grams of the current and
    snapshot factors; X~ is never formed.
    """
    if fs.snapshot is None:
        raise ValueError("interim MTTKRP needs the previous-iteration snapshot")
    _check_factor_shapes(p, fs)

    others = [m for m in (1, 2, 3) if m != mode]
    f1, f2 = fs.factor(others[0]), fs.factor(others[1])
    snap = fs.snapshot
    cross = (f1.T @ snap[others[0] - 1]) * (f2.T @ snap[others[1] - 1])
    out = snap[mode - 1] @ cross.T

    obs = p.observations
    if len(obs):
        mr = masked_reconstruction(obs, *snap)
        out += mttkrp_sparse(obs, f1, f2, mode) - mttkrp_sparse(mr, f1, f2, mode)
    return out
