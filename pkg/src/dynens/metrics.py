"""Decoding metrics: Pearson correlation, plug-in mutual information for
channel ranking, and dominance statistics over model-weight traces."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractViolationError, UndefinedMetricError
from .state_space import Dataset, _frozen_array


@dataclass(frozen=True)
class WeightTrace:
    """Per-step model posteriors (T, M) with their step indices (T,)."""

    posteriors: np.ndarray
    steps: np.ndarray

    def __post_init__(self):
        posteriors = _frozen_array(self.posteriors, ndim=2, name="posteriors")
        steps = np.array(self.steps, dtype=np.int64)
        if steps.ndim != 1 or steps.shape[0] != posteriors.shape[0]:
            raise ContractViolationError(
                f"steps shape {steps.shape} does not match posteriors {posteriors.shape}"
            )
        sums = posteriors.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > 1e-8):
            raise ContractViolationError("every posterior row must sum to 1")
        steps.flags.writeable = False
        object.__setattr__(self, "posteriors", posteriors)
        object.__setattr__(self, "steps", steps)

    @property
    def n_models(self) -> int:
        return self.posteriors.shape[1]


def correlation_coefficient(a, b) -> float:
    """Pearson correlation of two equal-length sequences with nonzero variance."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 1 or b.ndim != 1 or a.shape != b.shape:
        raise ContractViolationError(f"sequences must share a 1-D shape, got {a.shape} / {b.shape}")
    if a.shape[0] < 2:
        raise ContractViolationError("need at least two samples")
    am = a - a.mean()
    bm = b - b.mean()
    denom = np.sqrt(np.sum(am * am) * np.sum(bm * bm))
    if denom == 0.0:
        raise UndefinedMetricError("correlation undefined for a zero-variance sequence")
    return float(np.clip(np.sum(am * bm) / denom, -1.0, 1.0))


def _contingency(counts: np.ndarray, states: np.ndarray, state_bins: int) -> np.ndarray:
    """Joint histogram of raw count values x quantile-binned states."""
    edges = np.quantile(states, np.linspace(0.0, 1.0, state_bins + 1)[1:-1])
    state_cat = np.searchsorted(edges, states, side="right")
    _, count_cat = np.unique(counts, return_inverse=True)
    n_state = state_bins
    n_count = count_cat.max() + 1
    flat = np.bincount(state_cat * n_count + count_cat, minlength=n_state * n_count)
    return flat.reshape(n_state, n_count)


def _mi_bits(joint: np.ndarray) -> float:
    if (joint.sum(axis=1) > 0).sum() <= 1 or (joint.sum(axis=0) > 0).sum() <= 1:
        return 0.0  # a degenerate marginal carries no information
    total = joint.sum()
    p = joint / total
    pr = p.sum(axis=1, keepdims=True)
    pc = p.sum(axis=0, keepdims=True)
    nz = p > 0
    mi = float(np.sum(p[nz] * np.log2(p[nz] / (pr @ pc)[nz])))
    return max(mi, 0.0)


def mutual_information(counts, states, state_bins: int = 8) -> float:
    """Plug-in MI (bits) between raw count values and quantile-binned states."""
    counts = np.asarray(counts)
    states = np.asarray(states, dtype=np.float64)
    if counts.ndim != 1 or states.ndim != 1 or counts.shape != states.shape:
        raise ContractViolationError(
            f"sequences must share a 1-D shape, got {counts.shape} / {states.shape}"
        )
    if counts.shape[0] == 0:
        raise ContractViolationError("mutual information of empty sequences is undefined")
    if state_bins < 2:
        raise ContractViolationError("state_bins must be >= 2")
    return _mi_bits(_contingency(counts, states, state_bins))


def rank_channels(data: Dataset, by_state_component: int = 0,
                  top_k: int | None = None, state_bins: int = 8) -> list[int]:
    """Channels sorted by descending MI against one state component.

    Ties break toward the lower channel index.
    """
    if not (0 <= by_state_component < data.state_dim):
        raise ContractViolationError(
            f"state component {by_state_component} out of range for d_x = {data.state_dim}"
        )
    if top_k is None:
        top_k = data.n_channels
    if not (1 <= top_k <= data.n_channels):
        raise ContractViolationError(f"top_k must lie in [1, {data.n_channels}], got {top_k}")
    states = data.states[:, by_state_component]
    mi = np.array([
        mutual_information(data.measurements[:, c], states, state_bins)
        for c in range(data.n_channels)
    ])
    order = np.argsort(-mi, kind="stable")
    return [int(c) for c in order[:top_k]]


def segment_dominance(trace: WeightTrace, segments) -> list[float]:
    """Fraction of steps in each (start, end, expected_model) segment — bounds
    inclusive, in trace step indices — where the expected model holds the
    strict arg-max posterior. Ties count as failures."""
    results = []
    for start, end, expected in segments:
        if not (0 <= expected < trace.n_models):
            raise ConfigError(f"expected model {expected} out of range")
        sel = (trace.steps >= start) & (trace.steps <= end)
        if start > end or not np.any(sel):
            raise ConfigError(f"segment ({start}, {end}) outside trace range")
        rows = trace.posteriors[sel]
        top = rows.max(axis=1)
        ties = (rows == top[:, None]).sum(axis=1) > 1
        hits = (np.argmax(rows, axis=1) == expected) & ~ties
        results.append(float(hits.mean()))
    return results


def mean_posterior_l1_change(posteriors: np.ndarray) -> float:
    """Mean per-step L1 change of the model posterior (smoothness of switching)."""
    posteriors = np.asarray(posteriors, dtype=np.float64)
    if posteriors.ndim != 2 or posteriors.shape[0] < 2:
        raise ContractViolationError("need a (T, M) trace with T >= 2")
    return float(np.mean(np.abs(np.diff(posteriors, axis=0)).sum(axis=1)))


def root_mean_square_error(estimates, truth) -> float:
    """RMSE between two equally shaped trajectories."""
    estimates = np.asarray(estimates, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if estimates.shape != truth.shape:
        raise ContractViolationError(f"shape mismatch {estimates.shape} vs {truth.shape}")
    return float(np.sqrt(np.mean((estimates - truth) ** 2)))
