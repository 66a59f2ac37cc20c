"""
Synthetic low-rank instances with coarse tensors.

Factors are uniform on [0, 1); the columns of V and W are sorted so that
modes 2 and 3 vary smoothly. Mode 1 is categorical, modes 2 and 3
continuous. Aggregations group contiguous blocks of fine indices.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from mtc_tensor.kruskal import FactorSet, reconstruct
from mtc_tensor.problem import AggregationMatrix, CompletionProblem, ModeKind, ModeSpec
from mtc_tensor.tensor_core import CooObservations, as_tensor3, mode_product

logger = logging.getLogger(__name__)

KINDS = (ModeKind.CATEGORICAL, ModeKind.CONTINUOUS, ModeKind.CONTINUOUS)


@dataclass(frozen=True)
class SyntheticInstance:
    truth: np.ndarray
    u: np.ndarray
    v: np.ndarray
    w: np.ndarray
    aggregations: dict[int, AggregationMatrix] = field(default_factory=dict)
    coarse: dict[int, np.ndarray] = field(default_factory=dict)
    seed: int = 0

    @property
    def p1(self) -> AggregationMatrix | None:
        return self.aggregations.get(1)

    @property
    def p2(self) -> AggregationMatrix | None:
        return self.aggregations.get(2)

    @property
    def c1(self) -> np.ndarray | None:
        return self.coarse.get(1)

    @property
    def c2(self) -> np.ndarray | None:
        return self.coarse.get(2)

    @property
    def factors(self) -> FactorSet:
        fine = (self.u, self.v, self.w)
        aux = {m: agg.apply(fine[m - 1]) for m, agg in self.aggregations.items()}
        return FactorSet(u=self.u, v=self.v, w=self.w, aux=aux)


def generate_synthetic(
    rank: int = 10,
    mode_size: int = 125,
    coarse_size: int = 12,
    seed: int = 0,
    aggregated_modes: Iterable[int] = (1, 2),
) -> SyntheticInstance:
    if coarse_size >= mode_size:
        raise ValueError(f"coarse size {coarse_size} must be smaller than mode size {mode_size}")
    rng = np.random.default_rng(seed)
    u = rng.random((mode_size, rank))
    v = np.sort(rng.random((mode_size, rank)), axis=0)
    w = np.sort(rng.random((mode_size, rank)), axis=0)
    truth = reconstruct(u, v, w)

    aggregations: dict[int, AggregationMatrix] = {}
    coarse: dict[int, np.ndarray] = {}
    for mode in sorted(set(aggregated_modes)):
        agg = AggregationMatrix.contiguous(coarse_size, mode_size)
        aggregations[mode] = agg
        coarse[mode] = mode_product(truth, agg.dense(), mode)

    logger.info("Generated synthetic rank-%d %d^3 instance (seed=%d, coarse modes %s)",
                rank, mode_size, seed, sorted(coarse))
    return SyntheticInstance(
        truth=truth, u=u, v=v, w=w, aggregations=aggregations, coarse=coarse, seed=seed
    )


def sample_mask(x: np.ndarray, fraction: float, seed: int) -> CooObservations:
    """floor(fraction · size) distinct coordinates drawn uniformly, values copied from x."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"observed fraction must be in (0, 1], got {fraction}")
    x = as_tensor3(x)
    count = math.floor(fraction * x.size)
    rng = np.random.default_rng(seed)
    flat = np.sort(rng.choice(x.size, size=count, replace=False))
    coords = np.stack(np.unravel_index(flat, x.shape), axis=1)
    return CooObservations(shape=x.shape, coords=coords, values=x.reshape(-1)[flat])


def synthetic_problem(
    instance: SyntheticInstance,
    observations: CooObservations,
    coarse_modes: Iterable[int] = (1, 2),
    known_modes: Iterable[int] = (2,),
) -> CompletionProblem:
    """Attach the requested coarse tensors; `known_modes` expose their aggregation matrix."""
    coarse_modes = sorted(set(coarse_modes))
    known = set(known_modes)
    specs: list[ModeSpec] = []
    for mode, kind in enumerate(KINDS, start=1):
        size = instance.truth.shape[mode - 1]
        if mode not in coarse_modes:
            specs.append(ModeSpec(kind, size))
        elif mode in known:
            specs.append(ModeSpec.known(kind, instance.aggregations[mode]))
        else:
            specs.append(ModeSpec(kind, size, instance.aggregations[mode].coarse_size))
    return CompletionProblem(
        shape=instance.truth.shape,
        observations=observations,
        mode_specs=(specs[0], specs[1], specs[2]),
        coarse={m: instance.coarse[m] for m in coarse_modes},
    )
