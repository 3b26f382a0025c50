"""Kalman filter baseline over a full-channel linear observation model."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolationError
from .state_space import (
    LinearObservationModel,
    LinearStateTransition,
    _frozen_array,
    _values,
)


@dataclass(frozen=True)
class KalmanState:
    """Gaussian state belief: mean (d_x,) and covariance (d_x, d_x)."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = _frozen_array(self.mean, ndim=1, name="mean")
        cov = np.array(self.cov, dtype=np.float64)
        if cov.shape != (mean.shape[0], mean.shape[0]):
            raise ContractViolationError(
                f"covariance shape {cov.shape} does not match mean dim {mean.shape[0]}"
            )
        if not np.all(np.isfinite(mean)) or not np.all(np.isfinite(cov)):
            raise ContractViolationError("Kalman state contains non-finite entries")
        if not np.allclose(cov, cov.T, atol=1e-10):
            raise ContractViolationError("covariance must be symmetric")
        cov = 0.5 * (cov + cov.T)
        w = np.linalg.eigvalsh(cov)
        if w.min() < -1e-12:
            raise ContractViolationError(f"covariance has negative eigenvalue {w.min():.3e}")
        if w.min() < 0.0:
            # within tolerance of zero: clamp to PSD
            w_clamped, v = np.linalg.eigh(cov)
            cov = (v * np.maximum(w_clamped, 0.0)) @ v.T
            cov = 0.5 * (cov + cov.T)
        cov.flags.writeable = False
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def kalman_step(ks: KalmanState, trans: LinearStateTransition,
                obs: LinearObservationModel, y) -> KalmanState:
    """Standard predict/update with a Joseph-form covariance update.

    The observation model must cover every measurement channel.
    """
    yv = _values(y)
    d = ks.dim
    if trans.dim != d:
        raise ContractViolationError(f"transition dim {trans.dim} != state dim {d}")
    if obs.mask != tuple(range(yv.shape[0])):
        raise ContractViolationError(
            "Kalman baseline requires a full-channel observation model "
            f"(mask {obs.mask} vs {yv.shape[0]} channels)"
        )
    if obs.state_dim != d:
        raise ContractViolationError(f"observation state dim {obs.state_dim} != {d}")

    # predict
    m = trans.A @ ks.mean
    P = trans.A @ ks.cov @ trans.A.T + trans.Q

    # update
    H = obs.H
    R = np.diag(obs.r)
    S = H @ P @ H.T + R
    K = np.linalg.solve(S.T, (P @ H.T).T).T
    innovation = yv - (H @ m + obs.b)
    mean = m + K @ innovation
    IKH = np.eye(d) - K @ H
    cov = IKH @ P @ IKH.T + K @ R @ K.T
    return KalmanState(mean, 0.5 * (cov + cov.T))


def run_kalman(trans: LinearStateTransition, obs: LinearObservationModel,
               measurements: np.ndarray, init: KalmanState) -> tuple[np.ndarray, np.ndarray]:
    """Filter every row of ``measurements``; returns (means (T, d), covs (T, d, d))."""
    measurements = np.asarray(measurements, dtype=np.float64)
    if measurements.ndim != 2:
        raise ContractViolationError(f"measurements must be (T, d_y), got {measurements.shape}")
    t_total = measurements.shape[0]
    means = np.empty((t_total, init.dim))
    covs = np.empty((t_total, init.dim, init.dim))
    state = init
    for t in range(t_total):
        state = kalman_step(state, trans, obs, measurements[t])
        means[t] = state.mean
        covs[t] = state.cov
    return means, covs
