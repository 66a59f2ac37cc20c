"""
Order-3 tensor algebra.

Dense tensors are float64 numpy arrays of shape (I1, I2, I3) in row-major
layout. Partially observed tensors are held as coordinate lists
(`CooObservations`), which stand for both the mask M and the data M*X.

Unfolding convention (last index fastest):
  mode 1: (i, j*I3 + k)    mode 2: (j, i*I3 + k)    mode 3: (k, i*I2 + j)
so that unfold(x, m) @ khatri_rao(f1, f2) is the MTTKRP of mode m when
(f1, f2) are the factors of the two remaining modes in mode order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Literal

import numpy as np

Mode = Literal[1, 2, 3]
Shape3 = tuple[int, int, int]

# mode -> axis order that puts the mode first while keeping the others in order
_AXES: dict[int, tuple[int, int, int]] = {1: (0, 1, 2), 2: (1, 0, 2), 3: (2, 0, 1)}


class ShapeMismatchError(ValueError):
    """Operands have incompatible shapes."""


def _check_mode(mode: int) -> None:
    if mode not in _AXES:
        raise ValueError(f"mode must be 1, 2 or 3, got {mode}")


def as_tensor3(data: np.ndarray) -> np.ndarray:
    """Validate and coerce to a finite float64 order-3 tensor."""
    t = np.asarray(data, dtype=np.float64)
    if t.ndim != 3 or min(t.shape) < 1:
        raise ShapeMismatchError(f"expected an order-3 tensor with positive sizes, got {t.shape}")
    if not np.all(np.isfinite(t)):
        raise ValueError("tensor contains non-finite entries")
    return t


# ── Coordinate-list observations ───────────────────────────────────────

@dataclass(frozen=True)
class CooObservations:
    """
    Observed entries of an I1×I2×I3 tensor.

    Indices are stored 0-based in `coords` (n×3) and kept in lexicographic
    order, so every computation over the list has a fixed summation order.
    The external contract (`from_entries`, `entries`) is 1-based.
    """

    shape: Shape3
    coords: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        coords = np.array(self.coords, dtype=np.int64).reshape(-1, 3)
        values = np.array(self.values, dtype=np.float64).reshape(-1)
        if coords.shape[0] != values.shape[0]:
            raise ShapeMismatchError(
                f"{coords.shape[0]} coordinates but {values.shape[0]} values"
            )
        if coords.shape[0]:
            order = np.lexsort((coords[:, 2], coords[:, 1], coords[:, 0]))
            coords = coords[order]
            values = values[order]
        coords.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_entries(
        cls, shape: Shape3, entries: Iterable[tuple[int, int, int, float]]
    ) -> CooObservations:
        rows = list(entries)
        if not rows:
            return cls.empty(shape)
        arr = np.asarray(rows, dtype=np.float64)
        coords = arr[:, :3].astype(np.int64) - 1
        return cls(shape=shape, coords=coords, values=arr[:, 3])

    @classmethod
    def empty(cls, shape: Shape3) -> CooObservations:
        return cls(shape=shape, coords=np.zeros((0, 3), dtype=np.int64), values=np.zeros(0))

    @classmethod
    def from_dense(cls, x: np.ndarray, mask: np.ndarray | None = None) -> CooObservations:
        """Every coordinate of `x` (or those where `mask` is true)."""
        x = as_tensor3(x)
        keep = np.ones(x.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
        coords = np.argwhere(keep)
        return cls(shape=x.shape, coords=coords, values=x[keep])

    def __len__(self) -> int:
        return int(self.values.shape[0])

    def entries(self) -> Iterator[tuple[int, int, int, float]]:
        """Yield (i, j, k, value) with 1-based indices."""
        for (i, j, k), v in zip(self.coords.tolist(), self.values.tolist()):
            yield i + 1, j + 1, k + 1, v

    def with_values(self, values: np.ndarray) -> CooObservations:
        """Same coordinates, new values (given in stored order)."""
        return CooObservations(shape=self.shape, coords=self.coords, values=values)

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape)
        if len(self):
            out[self.coords[:, 0], self.coords[:, 1], self.coords[:, 2]] = self.values
        return out

    def out_of_range(self) -> np.ndarray:
        """Rows of `coords` (0-based) that fall outside `shape`."""
        bad = (self.coords < 0) | (self.coords >= np.asarray(self.shape))
        return self.coords[bad.any(axis=1)]

    def duplicates(self) -> np.ndarray:
        """Distinct 0-based coordinates that occur more than once."""
        if len(self) < 2:
            return np.zeros((0, 3), dtype=np.int64)
        same = np.all(self.coords[1:] == self.coords[:-1], axis=1)
        return np.unique(self.coords[1:][same], axis=0)


# ── Unfolding ──────────────────────────────────────────────────────────

def unfold(t: np.ndarray, mode: Mode) -> np.ndarray:
    _check_mode(mode)
    t = np.asarray(t, dtype=np.float64)
    moved = np.transpose(t, _AXES[mode])
    return moved.reshape(moved.shape[0], -1)


def fold(m: np.ndarray, mode: Mode, shape: Shape3) -> np.ndarray:
    """Inverse of `unfold` for a tensor of the given shape."""
    _check_mode(mode)
    axes = _AXES[mode]
    moved_shape = tuple(shape[a] for a in axes)
    if m.shape != (moved_shape[0], moved_shape[1] * moved_shape[2]):
        raise ShapeMismatchError(f"cannot fold {m.shape} into {shape} along mode {mode}")
    return np.transpose(m.reshape(moved_shape), np.argsort(axes))


# ── Matrix products ────────────────────────────────────────────────────

def khatri_rao(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Column-wise Kronecker product; row p*b.rows + q is a[p] * b[q]."""
    if a.shape[1] != b.shape[1]:
        raise ShapeMismatchError(f"column counts differ: {a.shape[1]} vs {b.shape[1]}")
    return np.einsum("ir,jr->ijr", a, b).reshape(-1, a.shape[1])


def kronecker(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.kron(a, b)


def hadamard(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape != b.shape:
        raise ShapeMismatchError(f"shapes differ: {a.shape} vs {b.shape}")
    return a * b


def mode_product(t: np.ndarray, p: np.ndarray, mode: Mode) -> np.ndarray:
    """t ×_mode p: unfold, left-multiply by p, refold."""
    _check_mode(mode)
    if p.shape[1] != t.shape[mode - 1]:
        raise ShapeMismatchError(
            f"matrix with {p.shape[1]} columns cannot act on mode {mode} "
            f"of size {t.shape[mode - 1]}"
        )
    shape = list(t.shape)
    shape[mode - 1] = p.shape[0]
    return fold(p @ unfold(t, mode), mode, tuple(shape))


# ── MTTKRP ─────────────────────────────────────────────────────────────

def _check_factors(shape: Shape3, f1: np.ndarray, f2: np.ndarray, mode: Mode) -> None:
    _check_mode(mode)
    others = [s for m, s in enumerate(shape, start=1) if m != mode]
    if f1.shape[0] != others[0] or f2.shape[0] != others[1]:
        raise ShapeMismatchError(
            f"factors with {f1.shape[0]} and {f2.shape[0]} rows do not match "
            f"the non-target sizes {others} of mode {mode}"
        )
    if f1.shape[1] != f2.shape[1]:
        raise ShapeMismatchError(f"factor ranks differ: {f1.shape[1]} vs {f2.shape[1]}")


def mttkrp_dense(t: np.ndarray, f1: np.ndarray, f2: np.ndarray, mode: Mode) -> np.ndarray:
    """unfold(t, mode) @ khatri_rao(f1, f2), shape I_mode × R."""
    _check_factors(t.shape, f1, f2, mode)
    return unfold(t, mode) @ khatri_rao(f1, f2)


def mttkrp_sparse(obs: CooObservations, f1: np.ndarray, f2: np.ndarray, mode: Mode) -> np.ndarray:
    """MTTKRP over the stored coordinates only."""
    _check_factors(obs.shape, f1, f2, mode)
    rank = f1.shape[1]
    size = obs.shape[mode - 1]
    if not len(obs):
        return np.zeros((size, rank))

    target, a, b = (obs.coords[:, ax] for ax in _AXES[mode])
    contrib = obs.values[:, None] * f1[a] * f2[b]
    out = np.empty((size, rank))
    for r in range(rank):
        out[:, r] = np.bincount(target, weights=contrib[:, r], minlength=size)
    return out


def masked_reconstruction(
    mask_coords: CooObservations, u: np.ndarray, v: np.ndarray, w: np.ndarray
) -> CooObservations:
    """Values of [[u, v, w]] at the stored coordinates."""
    if (u.shape[0], v.shape[0], w.shape[0]) != mask_coords.shape:
        raise ShapeMismatchError(
            f"factor rows {(u.shape[0], v.shape[0], w.shape[0])} do not match {mask_coords.shape}"
        )
    if not u.shape[1] == v.shape[1] == w.shape[1]:
        raise ShapeMismatchError("factor ranks differ")
    i, j, k = mask_coords.coords.T
    values = np.einsum("nr,nr,nr->n", u[i], v[j], w[k])
    return mask_coords.with_values(values)


def frobenius_norm(t: np.ndarray) -> float:
    return float(np.sqrt(np.sum(np.square(t))))
