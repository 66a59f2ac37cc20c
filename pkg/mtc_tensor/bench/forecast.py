"""
Tensor prediction from learned factors.

The time factor W is extended column by column with Gaussian-process
regression (RBF + white noise, fixed hyperparameters, constant mean equal
to the column mean); the future tensor is [[U, V, W_future]].
"""

from __future__ import annotations

import logging

import numpy as np
from sklearn.gaussian_process import GaussianProcessRegressor
from sklearn.gaussian_process.kernels import RBF, WhiteKernel

from mtc_tensor.kruskal import pof, reconstruct
from mtc_tensor.tensor_core import ShapeMismatchError

logger = logging.getLogger(__name__)


class ForecastError(ValueError):
    pass


def gp_forecast(
    w: np.ndarray,
    horizon: int,
    length_scale: float = 10.0,
    noise: float = 1e-4,
) -> np.ndarray:
    """Posterior mean at t = T+1..T+horizon of a GP fit on t = 1..T, per column."""
    if w.ndim != 2 or w.shape[0] < 2:
        raise ValueError("need a factor matrix with at least two time steps")
    if horizon < 1:
        raise ValueError(f"horizon must be at least 1, got {horizon}")

    steps = w.shape[0]
    t_fit = np.arange(1, steps + 1, dtype=np.float64)[:, None]
    t_new = np.arange(steps + 1, steps + horizon + 1, dtype=np.float64)[:, None]
    kernel = RBF(length_scale=length_scale, length_scale_bounds="fixed") + WhiteKernel(
        noise_level=noise, noise_level_bounds="fixed"
    )

    out = np.empty((horizon, w.shape[1]))
    for r in range(w.shape[1]):
        gp = GaussianProcessRegressor(kernel=kernel, alpha=0.0, optimizer=None, normalize_y=True)
        try:
            gp.fit(t_fit, w[:, r])
        except np.linalg.LinAlgError as e:
            raise ForecastError(
                f"kernel matrix is not positive definite for column {r + 1} "
                f"(length_scale={length_scale}, noise={noise})"
            ) from e
        out[:, r] = gp.predict(t_new)
    logger.debug("GP forecast of %d columns over %d steps", w.shape[1], horizon)
    return out


def persistence_forecast(w: np.ndarray, horizon: int) -> np.ndarray:
    """Repeat the last time step."""
    if horizon < 1:
        raise ValueError(f"horizon must be at least 1, got {horizon}")
    return np.repeat(w[-1:], horizon, axis=0)


def evaluate_prediction(
    true_future: np.ndarray,
    u: np.ndarray,
    v: np.ndarray,
    w_future: np.ndarray,
    cumulative: bool = False,
) -> float:
    """PoF of [[u, v, w_future]]; `cumulative` compares running sums along time."""
    approx = reconstruct(u, v, w_future)
    if approx.shape != true_future.shape:
        raise ShapeMismatchError(f"prediction {approx.shape} vs future tensor {true_future.shape}")
    if cumulative:
        return pof(np.cumsum(true_future, axis=2), np.cumsum(approx, axis=2))
    return pof(true_future, approx)
