"""
Resolution hierarchy for the multiresolution initialization.

Going down a level keeps about half of every aspect (a mode at one
granularity): continuous aspects keep every other index, categorical aspects
keep the densest half. Going up, factor rows of retained indices are copied
and the remaining rows are filled by neighbour averaging (continuous) or by
uniform [-1, 1] noise (categorical). Coarse aspects of aggregated modes are
treated as categorical; with a known aggregation the coarse aspect follows
the fine selection instead.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from mtc_tensor.kruskal import FactorSet
from mtc_tensor.problem import AggregationMatrix, CompletionProblem, ModeKind, ModeSpec
from mtc_tensor.tensor_core import CooObservations, ShapeMismatchError

logger = logging.getLogger(__name__)

# slot offsets for per-factor random streams
_FINE_SLOT = 0
_COARSE_SLOT = 3


class Aspect(NamedTuple):
    mode: int
    coarse: bool = False

    def __str__(self) -> str:
        return f"mode{self.mode}{'-coarse' if self.coarse else ''}"


@dataclass(frozen=True)
class AspectSelection:
    """Indices (0-based, increasing) of an aspect of size `size` kept one level down."""

    size: int
    indices: np.ndarray
    aspect: Aspect | None = None

    def __post_init__(self) -> None:
        idx = np.array(self.indices, dtype=np.int64).reshape(-1)
        if idx.size and (np.any(np.diff(idx) <= 0) or idx[0] < 0 or idx[-1] >= self.size):
            raise ValueError(
                f"selection for {self.aspect} must be increasing and within 1..{self.size}"
            )
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)

    def __len__(self) -> int:
        return int(self.indices.shape[0])

    def one_based(self) -> tuple[int, ...]:
        return tuple(int(i) + 1 for i in self.indices)

    @property
    def is_identity(self) -> bool:
        return len(self) == self.size


Selections = dict[Aspect, AspectSelection]


@dataclass(frozen=True)
class Level:
    problem: CompletionProblem
    # selections that produced this level from the next finer one (None at the finest)
    selections: Selections | None = None


@dataclass(frozen=True)
class ResolutionHierarchy:
    levels: tuple[Level, ...]  # coarse -> fine

    @property
    def depth(self) -> int:
        return len(self.levels) - 1

    @property
    def finest(self) -> CompletionProblem:
        return self.levels[-1].problem

    @property
    def coarsest(self) -> CompletionProblem:
        return self.levels[0].problem


def aspects_of(p: CompletionProblem) -> list[Aspect]:
    out = [Aspect(m) for m in (1, 2, 3)]
    out.extend(Aspect(m, coarse=True) for m in p.coarse_modes)
    return out


# ── Subsampling ────────────────────────────────────────────────────────

def subsample_continuous(n: int, aspect: Aspect | None = None) -> AspectSelection:
    """Indices {1, 3, 5, ...}: ceil(n/2) of them."""
    if n < 1:
        raise ValueError(f"aspect size must be positive, got {n}")
    return AspectSelection(size=n, indices=np.arange(0, n, 2), aspect=aspect)


def count_slab_density(p: CompletionProblem, aspect: Aspect) -> np.ndarray:
    """
    Nonzero entries per slab of `aspect`, summed over every stored tensor
    that carries the aspect: the observations and the coarse tensors
    aggregated along other modes for a fine aspect, or the mode's own coarse
    tensor for a coarse aspect.
    """
    mode = aspect.mode
    axes = tuple(a for a in range(3) if a != mode - 1)

    if aspect.coarse:
        if mode not in p.coarse:
            raise ValueError(f"mode {mode} has no coarse tensor")
        return np.count_nonzero(p.coarse[mode], axis=axes).astype(np.int64)

    if p.spec(mode).kind is not ModeKind.CATEGORICAL:
        raise ValueError(f"slab density needs a categorical aspect; mode {mode} is continuous")

    obs = p.observations
    nonzero = obs.values != 0.0
    counts = np.bincount(obs.coords[nonzero, mode - 1], minlength=p.shape[mode - 1])
    counts = counts.astype(np.int64)
    for other, tensor in p.coarse.items():
        if other != mode:
            counts += np.count_nonzero(tensor, axis=axes)
    return counts


def subsample_categorical(
    counts: Sequence[int] | np.ndarray, aspect: Aspect | None = None
) -> AspectSelection:
    """The ceil(n/2) densest indices, ties to the smaller index, in increasing order."""
    counts = np.asarray(counts)
    if counts.ndim != 1 or counts.size < 1:
        raise ValueError("counts must be a non-empty vector")
    if np.any(counts < 0):
        raise ValueError("counts must be nonnegative")
    n = counts.size
    order = np.lexsort((np.arange(n), -counts))
    keep = np.sort(order[: math.ceil(n / 2)])
    return AspectSelection(size=n, indices=keep, aspect=aspect)


def select_aspects(p: CompletionProblem) -> Selections:
    """Selections for one step down from `p`."""
    sel: Selections = {}
    for mode in (1, 2, 3):
        aspect = Aspect(mode)
        spec = p.spec(mode)
        if spec.kind is ModeKind.CONTINUOUS:
            sel[aspect] = subsample_continuous(spec.fine_size, aspect)
        else:
            sel[aspect] = subsample_categorical(count_slab_density(p, aspect), aspect)

    for mode in p.coarse_modes:
        aspect = Aspect(mode, coarse=True)
        spec = p.spec(mode)
        if spec.aggregation is not None:
            reached = np.unique(spec.aggregation.assignment[sel[Aspect(mode)].indices])
            sel[aspect] = AspectSelection(
                size=spec.aggregation.coarse_size, indices=reached, aspect=aspect
            )
        else:
            sel[aspect] = subsample_categorical(count_slab_density(p, aspect), aspect)
    return sel


def _lookup(selection: AspectSelection) -> np.ndarray:
    lut = np.full(selection.size, -1, dtype=np.int64)
    lut[selection.indices] = np.arange(len(selection))
    return lut


def _restrict_aggregation(
    mode: int, agg: AggregationMatrix, fine: AspectSelection, coarse: AspectSelection
) -> tuple[AggregationMatrix, AspectSelection]:
    """Restrict P to the selected columns and rows, dropping rows left empty."""
    reached = np.unique(agg.assignment[fine.indices])
    kept = np.intersect1d(coarse.indices, reached)
    if kept.size != reached.size:
        missing = np.setdiff1d(reached, coarse.indices)
        raise ValueError(
            f"mode {mode}: retained fine indices aggregate into "
            f"unselected coarse index {int(missing[0]) + 1}"
        )
    effective = AspectSelection(size=coarse.size, indices=kept, aspect=coarse.aspect)
    assignment = _lookup(effective)[agg.assignment[fine.indices]]
    restricted = AggregationMatrix(
        coarse_size=len(effective), fine_size=len(fine), assignment=assignment
    )
    return restricted, effective


def _block_fractions(
    agg: AggregationMatrix, fine: AspectSelection, coarse: AspectSelection
) -> np.ndarray:
    """Retained share of each selected coarse block's fine indices."""
    full = np.bincount(agg.assignment, minlength=agg.coarse_size)
    kept = np.bincount(agg.assignment[fine.indices], minlength=agg.coarse_size)
    return kept[coarse.indices] / full[coarse.indices]


def subsample_problem(p: CompletionProblem, sel: Selections) -> CompletionProblem:
    """
    Keep only the selected indices of every aspect, re-indexed compactly.

    A coarse tensor with a known aggregation is scaled per block by the
    retained share of that block, so that it stays consistent with the
    restricted aggregation matrix.
    """
    for aspect in aspects_of(p):
        if aspect not in sel:
            raise ValueError(f"no selection for aspect {aspect}")
        expected = p.shape[aspect.mode - 1] if not aspect.coarse else p.coarse_sizes()[aspect.mode]
        if sel[aspect].size != expected:
            raise ValueError(
                f"selection for {aspect} refers to size {sel[aspect].size}, aspect has {expected}"
            )

    sel = dict(sel)
    specs: list[ModeSpec] = []
    for mode in (1, 2, 3):
        spec = p.spec(mode)
        fine = sel[Aspect(mode)]
        if mode not in p.coarse:
            specs.append(ModeSpec(spec.kind, len(fine)))
            continue
        coarse = sel[Aspect(mode, coarse=True)]
        if spec.aggregation is not None:
            agg, coarse = _restrict_aggregation(mode, spec.aggregation, fine, coarse)
            sel[Aspect(mode, coarse=True)] = coarse
            specs.append(ModeSpec(spec.kind, len(fine), len(coarse), agg))
        else:
            specs.append(ModeSpec(spec.kind, len(fine), len(coarse)))

    shape = (len(sel[Aspect(1)]), len(sel[Aspect(2)]), len(sel[Aspect(3)]))
    obs = p.observations
    mapped = np.stack([_lookup(sel[Aspect(m)])[obs.coords[:, m - 1]] for m in (1, 2, 3)], axis=1)
    keep = np.all(mapped >= 0, axis=1)
    observations = CooObservations(shape=shape, coords=mapped[keep], values=obs.values[keep])

    coarse_tensors: dict[int, np.ndarray] = {}
    for mode, tensor in p.coarse.items():
        index = [sel[Aspect(m, coarse=(m == mode))].indices for m in (1, 2, 3)]
        sub = tensor[np.ix_(*index)]
        agg = p.spec(mode).aggregation
        if agg is not None:
            # the restricted P only sums the retained fine indices of each block
            fraction = _block_fractions(agg, sel[Aspect(mode)], sel[Aspect(mode, coarse=True)])
            shape = [1, 1, 1]
            shape[mode - 1] = fraction.size
            sub = sub * fraction.reshape(shape)
        coarse_tensors[mode] = sub

    return CompletionProblem(
        shape=shape,
        observations=observations,
        mode_specs=(specs[0], specs[1], specs[2]),
        coarse=coarse_tensors,
        weights=dict(p.weights),
    )


# ── Interpolation ──────────────────────────────────────────────────────

def interpolate_continuous(low: np.ndarray, target_rows: int) -> np.ndarray:
    """
    Odd target rows (1-based) copy the low-resolution rows; even rows average
    their two neighbours, or copy the last row at an even boundary.
    """
    rows = low.shape[0]
    if rows != math.ceil(target_rows / 2):
        raise ShapeMismatchError(f"{rows} coarse rows cannot interpolate {target_rows} rows")
    out = np.empty((target_rows, low.shape[1]))
    out[0::2] = low
    left = np.arange(target_rows // 2)
    right = left + 1
    inner = right < rows
    out[1::2][inner] = (low[left[inner]] + low[right[inner]]) / 2.0
    out[1::2][~inner] = low[left[~inner]]
    return out


def interpolate_categorical(
    low: np.ndarray,
    sel: AspectSelection,
    target_rows: int,
    rng_seed: int | Sequence[int],
) -> np.ndarray:
    """Selected rows copied from `low`; the rest drawn i.i.d. from U[-1, 1]."""
    if low.shape[0] != len(sel) or sel.size != target_rows:
        raise ShapeMismatchError(
            f"{low.shape[0]} rows and a {len(sel)}-of-{sel.size} selection "
            f"cannot fill {target_rows} rows"
        )
    rng = np.random.default_rng(rng_seed)
    out = rng.uniform(-1.0, 1.0, size=(target_rows, low.shape[1]))
    out[sel.indices] = low
    return out


def interpolate_solution(
    p_high: CompletionProblem,
    sel: Selections,
    low_fs: FactorSet,
    rng_seed: int,
    level: int = 0,
) -> FactorSet:
    """
    Initialize the factors of `p_high` from the solution one level down.

    Fine factors follow their mode's strategy. Q_m of a known aggregation is
    recomputed as P_m · factor_m; otherwise it is interpolated on its own
    (categorical) aspect. The snapshot is reset to the interpolated (U, V, W).
    """
    fine: list[np.ndarray] = []
    for mode in (1, 2, 3):
        aspect = Aspect(mode)
        if aspect not in sel:
            raise ValueError(f"no selection for aspect {aspect}")
        low = low_fs.factor(mode)
        size = p_high.shape[mode - 1]
        if sel[aspect].is_identity:
            fine.append(low.copy())
        elif p_high.spec(mode).kind is ModeKind.CONTINUOUS:
            fine.append(interpolate_continuous(low, size))
        else:
            slot = (rng_seed, level, _FINE_SLOT + mode)
            fine.append(interpolate_categorical(low, sel[aspect], size, slot))

    aux: dict[int, np.ndarray] = {}
    for mode in p_high.coarse_modes:
        spec = p_high.spec(mode)
        if spec.aggregation is not None:
            aux[mode] = spec.aggregation.apply(fine[mode - 1])
            continue
        aspect = Aspect(mode, coarse=True)
        if aspect not in sel or mode not in low_fs.aux:
            raise ValueError(f"no selection or low-resolution factor for aspect {aspect}")
        size = p_high.coarse_sizes()[mode]
        if sel[aspect].is_identity:
            aux[mode] = low_fs.aux[mode].copy()
        else:
            aux[mode] = interpolate_categorical(
                low_fs.aux[mode], sel[aspect], size, (rng_seed, level, _COARSE_SLOT + mode)
            )

    return FactorSet(u=fine[0], v=fine[1], w=fine[2], aux=aux).with_snapshot()


# ── Hierarchy ──────────────────────────────────────────────────────────

def _aggregations_valid(p: CompletionProblem) -> bool:
    return all(
        spec.coarse_size is None or 1 <= spec.coarse_size < spec.fine_size for spec in p.mode_specs
    )


def parameter_count(p: CompletionProblem, rank: int) -> int:
    """Free factor entries: the fine factors plus Q_m of every unknown aggregation."""
    rows = sum(p.shape)
    rows += sum(size for m, size in p.coarse_sizes().items() if not p.spec(m).is_known)
    return rank * rows


def build_hierarchy(
    p: CompletionProblem, min_mode_size: int = 16, rank: int | None = None
) -> ResolutionHierarchy:
    """
    Subsample every aspect repeatedly until some fine mode would drop below
    `min_mode_size` or an aggregated mode would stop being coarser than its
    fine aspect. With `rank` given, a level with fewer observations than
    free factor entries is not added either.
    """
    if min_mode_size < 2:
        raise ValueError(f"min_mode_size must be at least 2, got {min_mode_size}")
    if rank is not None and rank < 1:
        raise ValueError(f"rank must be positive, got {rank}")

    finest_first: list[Level] = [Level(problem=p)]
    current = p
    while all(math.ceil(n / 2) >= min_mode_size for n in current.shape):
        sel = select_aspects(current)
        lower = subsample_problem(current, sel)
        if not _aggregations_valid(lower):
            logger.debug("Stopping hierarchy at %s: aggregated mode no longer coarser",
                         current.shape)
            break
        if rank is not None and len(lower.observations) < parameter_count(lower, rank):
            logger.debug(
                "Stopping hierarchy at %s: %d observations for %d factor entries",
                current.shape, len(lower.observations), parameter_count(lower, rank),
            )
            break
        finest_first.append(Level(problem=lower, selections=sel))
        current = lower

    levels = tuple(reversed(finest_first))
    logger.info(
        "Resolution hierarchy depth %d: %s",
        len(levels) - 1,
        " -> ".join("x".join(str(n) for n in lv.problem.shape) for lv in levels),
    )
    return ResolutionHierarchy(levels=levels)
