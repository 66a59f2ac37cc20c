"""
CP factor containers, Kruskal reconstruction, column rescaling and PoF.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from mtc_tensor.tensor_core import ShapeMismatchError, frobenius_norm


class ZeroColumnError(ValueError):
    def __init__(self, column: int, factor: str):
        super().__init__(f"column {column + 1} of factor {factor} has zero norm")
        self.column = column
        self.factor = factor


@dataclass(frozen=True)
class FactorSet:
    """
    CP factors of the fine tensor plus one auxiliary factor per coarse tensor.

    `aux` maps an aggregated mode (1, 2 or 3) to its coarse-aspect factor Q_m,
    which tracks the fine factor of the same mode. `snapshot` holds the
    (U, V, W) of the previous outer iteration that defines the interim tensor.
    """

    u: np.ndarray
    v: np.ndarray
    w: np.ndarray
    aux: dict[int, np.ndarray] = field(default_factory=dict)
    snapshot: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None

    def __post_init__(self) -> None:
        ranks = {m.shape[1] for m in (self.u, self.v, self.w, *self.aux.values())}
        if len(ranks) != 1:
            raise ShapeMismatchError(f"factor column counts differ: {sorted(ranks)}")
        if self.snapshot is not None:
            for now, then in zip(self.fine, self.snapshot):
                if now.shape != then.shape:
                    raise ShapeMismatchError(f"snapshot factor {then.shape} vs current {now.shape}")

    @property
    def rank(self) -> int:
        return int(self.u.shape[1])

    @property
    def fine(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.u, self.v, self.w

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.u.shape[0], self.v.shape[0], self.w.shape[0]

    @property
    def q1(self) -> np.ndarray | None:
        return self.aux.get(1)

    @property
    def q2(self) -> np.ndarray | None:
        return self.aux.get(2)

    @property
    def q3(self) -> np.ndarray | None:
        return self.aux.get(3)

    def factor(self, mode: int) -> np.ndarray:
        return self.fine[mode - 1]

    def with_factor(self, name: str, value: np.ndarray) -> FactorSet:
        """Replace one factor by name: 'U', 'V', 'W', 'Q1', 'Q2' or 'Q3'."""
        if name in ("U", "V", "W"):
            return replace(self, **{name.lower(): value})
        aux = dict(self.aux)
        aux[int(name[1])] = value
        return replace(self, aux=aux)

    def with_snapshot(self) -> FactorSet:
        """Freeze the current (U, V, W) as the interim-tensor snapshot."""
        return replace(self, snapshot=(self.u.copy(), self.v.copy(), self.w.copy()))

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(m)) for m in (*self.fine, *self.aux.values()))


def random_factors(
    shape: tuple[int, int, int],
    rank: int,
    rng: np.random.Generator,
    coarse_sizes: dict[int, int] | None = None,
) -> FactorSet:
    """I.i.d. uniform [-1, 1] factors; snapshot set to the initial (U, V, W)."""
    u, v, w = (rng.uniform(-1.0, 1.0, size=(n, rank)) for n in shape)
    aux = {
        mode: rng.uniform(-1.0, 1.0, size=(size, rank))
        for mode, size in sorted((coarse_sizes or {}).items())
    }
    return FactorSet(u=u, v=v, w=w, aux=aux).with_snapshot()


def reconstruct(u: np.ndarray, v: np.ndarray, w: np.ndarray) -> np.ndarray:
    """[[u, v, w]]: t(i,j,k) = Σ_r u(i,r) v(j,r) w(k,r)."""
    if not u.shape[1] == v.shape[1] == w.shape[1]:
        raise ShapeMismatchError(f"ranks differ: {u.shape[1]}, {v.shape[1]}, {w.shape[1]}")
    return np.einsum("ir,jr,kr->ijk", u, v, w)


def rescale_columns(fs: FactorSet) -> FactorSet:
    """
    Equilibrate the norms of each rank-one component.

    Column r of U, V and W is normalized and multiplied by
    f_r = (|U_r| |V_r| |W_r|)^(1/3). Each auxiliary factor Q_m is multiplied
    by the same per-column multiplier as the fine factor of mode m, which
    keeps Q_m = P_m · factor_m exact for known aggregations.
    """
    norms = [np.linalg.norm(f, axis=0) for f in fs.fine]
    for name, n in zip("UVW", norms):
        zero = np.flatnonzero(n == 0.0)
        if zero.size:
            raise ZeroColumnError(int(zero[0]), name)

    target = np.cbrt(norms[0] * norms[1] * norms[2])
    multipliers = [target / n for n in norms]
    u, v, w = (f * m for f, m in zip(fs.fine, multipliers))
    aux = {mode: q * multipliers[mode - 1] for mode, q in fs.aux.items()}
    return replace(fs, u=u, v=v, w=w, aux=aux)


def pof(target: np.ndarray, approx: np.ndarray) -> float:
    """Percentage of fitness, 1 - |target - approx|_F / |target|_F."""
    if target.shape != approx.shape:
        raise ShapeMismatchError(f"shapes differ: {target.shape} vs {approx.shape}")
    denom = frobenius_norm(target)
    if denom == 0.0:
        raise ValueError("PoF is undefined for a zero-norm target")
    return 1.0 - frobenius_norm(target - approx) / denom
