"""Core state-space types: states, measurements, transition and observation
models, and time-aligned datasets.

All types are immutable value objects; the arrays they hold are copied on
construction and marked read-only, so instances can be shared freely across
threads. Operations in this module are pure functions.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

from . import kernels
from .errors import ContractViolationError

NOISE_VAR_FLOOR = 1e-6


def _frozen_array(values, dtype=np.float64, ndim=None, name="array"):
    arr = np.array(values, dtype=dtype)
    if ndim is not None and arr.ndim != ndim:
        raise ContractViolationError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    arr.flags.writeable = False
    return arr


def _require_finite(arr, name):
    if not np.all(np.isfinite(arr)):
        raise ContractViolationError(f"{name} contains non-finite entries")


def _values(v) -> np.ndarray:
    """Accept a StateVector/MeasurementVector or any array-like; return float64 1-D values."""
    if isinstance(v, (StateVector, MeasurementVector)):
        return v.values
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1:
        raise ContractViolationError(f"expected a 1-D vector, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class StateVector:
    """Latent state x at one time step (e.g. [position, velocity, acceleration])."""

    values: np.ndarray

    def __post_init__(self):
        arr = _frozen_array(self.values, ndim=1, name="state values")
        _require_finite(arr, "state values")
        if arr.size < 1:
            raise ContractViolationError("state must have at least one component")
        object.__setattr__(self, "values", arr)

    @property
    def dim(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class MeasurementVector:
    """Observed channel vector y at one time step (spike counts per bin, or a scalar)."""

    values: np.ndarray

    def __post_init__(self):
        arr = _frozen_array(self.values, ndim=1, name="measurement values")
        _require_finite(arr, "measurement values")
        if arr.size < 1:
            raise ContractViolationError("measurement must have at least one channel")
        object.__setattr__(self, "values", arr)

    @classmethod
    def from_counts(cls, values) -> "MeasurementVector":
        """Construct from spike counts, enforcing non-negativity."""
        arr = np.asarray(values, dtype=np.float64)
        if np.any(arr < 0):
            raise ContractViolationError("spike counts must be non-negative")
        return cls(arr)

    @property
    def dim(self) -> int:
        return self.values.shape[0]


def _psd_factor(cov: np.ndarray) -> np.ndarray:
    """Factor L with L @ L.T == cov for symmetric PSD cov (eigendecomposition based)."""
    if np.allclose(cov, 0.0):
        return np.zeros_like(cov)
    w, v = np.linalg.eigh(cov)
    w = np.clip(w, 0.0, None)
    return v * np.sqrt(w)


@dataclass(frozen=True)
class LinearStateTransition:
    """Linear dynamics x_k = A x_{k-1} + v, v ~ N(0, Q)."""

    A: np.ndarray
    Q: np.ndarray

    def __post_init__(self):
        A = _frozen_array(self.A, ndim=2, name="A")
        Q = np.array(self.Q, dtype=np.float64)
        if A.shape[0] != A.shape[1]:
            raise ContractViolationError(f"A must be square, got {A.shape}")
        if Q.shape != A.shape:
            raise ContractViolationError(f"Q shape {Q.shape} does not match A shape {A.shape}")
        _require_finite(A, "A")
        _require_finite(Q, "Q")
        if not np.allclose(Q, Q.T, atol=1e-10):
            raise ContractViolationError("Q must be symmetric")
        Q = 0.5 * (Q + Q.T)
        eigvals = np.linalg.eigvalsh(Q)
        if eigvals.min() < -1e-12:
            raise ContractViolationError(f"Q has negative eigenvalue {eigvals.min():.3e}")
        Q.flags.writeable = False
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "Q", Q)
        factor = _psd_factor(Q)
        factor.flags.writeable = False
        object.__setattr__(self, "_noise_factor", factor)

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    @property
    def is_stochastic(self) -> bool:
        return bool(np.any(self._noise_factor))

    def sample(self, states: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """One draw of x_k for each row of ``states``; consumes no randomness if Q == 0."""
        out = states @ self.A.T
        if self.is_stochastic:
            out = out + rng.standard_normal(states.shape) @ self._noise_factor.T
        return out


@dataclass(frozen=True)
class GenericStateTransition:
    """Caller-supplied time-indexed transition rule.

    ``fn(states, k, rng)`` maps an (N, d_x) batch of states at step k-1 to the
    (N, d_x) batch at step k. It must be deterministic given the stream position
    of ``rng`` (draw from ``rng`` only).
    """

    fn: Callable[[np.ndarray, int, np.random.Generator], np.ndarray]

    def __post_init__(self):
        if not callable(self.fn):
            raise ContractViolationError("transition rule must be callable")

    def sample(self, states: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
        out = np.asarray(self.fn(states, k, rng), dtype=np.float64)
        if out.shape != states.shape:
            raise ContractViolationError(
                f"transition rule returned shape {out.shape}, expected {states.shape}"
            )
        return out


@dataclass(frozen=True)
class LinearObservationModel:
    """One candidate measurement model over a subset of channels.

    Predicts y[mask] ~ N(H x + b, diag(r)). ``mask`` holds the sorted indices of
    the connected channels; rows of H, b and r correspond positionally to it.
    Noise variances are floored at ``NOISE_VAR_FLOOR``.
    """

    mask: tuple[int, ...]
    H: np.ndarray
    b: np.ndarray
    r: np.ndarray

    def __post_init__(self):
        mask = tuple(int(c) for c in self.mask)
        if len(mask) == 0:
            raise ContractViolationError("mask must contain at least one channel")
        if any(c < 0 for c in mask):
            raise ContractViolationError("mask indices must be non-negative")
        if list(mask) != sorted(set(mask)):
            raise ContractViolationError("mask must be sorted and free of duplicates")
        H = _frozen_array(self.H, ndim=2, name="H")
        b = _frozen_array(self.b, ndim=1, name="b")
        r = np.array(self.r, dtype=np.float64)
        if r.ndim != 1:
            raise ContractViolationError(f"r must be the diagonal vector, got shape {r.shape}")
        s = len(mask)
        if H.shape[0] != s or b.shape[0] != s or r.shape[0] != s:
            raise ContractViolationError(
                f"mask size {s} inconsistent with H {H.shape}, b {b.shape}, r {r.shape}"
            )
        _require_finite(H, "H")
        _require_finite(b, "b")
        _require_finite(r, "r")
        r = np.maximum(r, NOISE_VAR_FLOOR)
        r.flags.writeable = False
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "r", r)

    @property
    def size(self) -> int:
        """Number of connected channels (the model size s)."""
        return len(self.mask)

    @property
    def state_dim(self) -> int:
        return self.H.shape[1]


@dataclass(frozen=True)
class Dataset:
    """Time-aligned state trajectory and measurement matrix.

    ``meta`` carries free-form provenance (e.g. corruption records) and is
    written to the JSON sidecar on save.
    """

    states: np.ndarray
    measurements: np.ndarray
    bin_width_ms: float = 100.0
    channel_labels: tuple[str, ...] = ()
    meta: Mapping = field(default_factory=dict)

    def __post_init__(self):
        states = _frozen_array(self.states, ndim=2, name="states")
        meas = _frozen_array(self.measurements, ndim=2, name="measurements")
        if states.shape[0] != meas.shape[0]:
            raise ContractViolationError(
                f"states ({states.shape[0]} rows) and measurements ({meas.shape[0]} rows) differ"
            )
        if states.shape[0] < 1:
            raise ContractViolationError("dataset must contain at least one row")
        if not self.bin_width_ms > 0:
            raise ContractViolationError("bin_width_ms must be positive")
        labels = tuple(self.channel_labels) if self.channel_labels else tuple(
            f"c{i}" for i in range(meas.shape[1])
        )
        if len(labels) != meas.shape[1]:
            raise ContractViolationError(
                f"{len(labels)} channel labels for {meas.shape[1]} channels"
            )
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "measurements", meas)
        object.__setattr__(self, "channel_labels", labels)
        object.__setattr__(self, "meta", dict(self.meta))

    @property
    def n_bins(self) -> int:
        return self.states.shape[0]

    @property
    def state_dim(self) -> int:
        return self.states.shape[1]

    @property
    def n_channels(self) -> int:
        return self.measurements.shape[1]

    def slice(self, start: int, stop: int) -> "Dataset":
        """Row-range view as a new Dataset (metadata preserved)."""
        return Dataset(
            self.states[start:stop],
            self.measurements[start:stop],
            self.bin_width_ms,
            self.channel_labels,
            self.meta,
        )

    def select_channels(self, channels) -> "Dataset":
        """Keep only the given channels (ascending original order preserved)."""
        idx = sorted(int(c) for c in channels)
        if len(set(idx)) != len(idx) or (idx and (idx[0] < 0 or idx[-1] >= self.n_channels)):
            raise ContractViolationError(f"invalid channel selection {idx}")
        return Dataset(
            self.states,
            self.measurements[:, idx],
            self.bin_width_ms,
            tuple(self.channel_labels[c] for c in idx),
            self.meta,
        )


def state_moments(states: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean and covariance of a (T, d_x) state matrix (used by filter initializers)."""
    states = np.asarray(states, dtype=np.float64)
    mean = states.mean(axis=0)
    centered = states - mean
    cov = centered.T @ centered / states.shape[0]
    return mean, 0.5 * (cov + cov.T)


def log_likelihood(model: LinearObservationModel, x, y) -> float:
    """Log density of y's masked channels under the model, N(H x + b, diag(r))."""
    xv = _values(x)
    yv = _values(y)
    if xv.shape[0] != model.state_dim:
        raise ContractViolationError(
            f"state dim {xv.shape[0]} does not match model state dim {model.state_dim}"
        )
    if model.mask[-1] >= yv.shape[0]:
        raise ContractViolationError(
            f"model mask {model.mask} exceeds measurement dim {yv.shape[0]}"
        )
    y_masked = yv[list(model.mask)]
    out = kernels.masked_loglik(xv[None, :], model.H, model.b, model.r, y_masked)
    return float(out[0])


def predict_mean(model: LinearObservationModel, x) -> np.ndarray:
    """Expected masked measurement H x + b (length s)."""
    xv = _values(x)
    if xv.shape[0] != model.state_dim:
        raise ContractViolationError(
            f"state dim {xv.shape[0]} does not match model state dim {model.state_dim}"
        )
    return model.H @ xv + model.b


def _fmt(value: float) -> str:
    return format(float(value), ".17g")


def save_dataset(dataset: Dataset, csv_path) -> None:
    """Write the dataset CSV (`t,x0..,c0..`) plus its JSON metadata sidecar."""
    csv_path = Path(csv_path)
    header = (
        ["t"]
        + [f"x{i}" for i in range(dataset.state_dim)]
        + [f"c{i}" for i in range(dataset.n_channels)]
    )
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for t in range(dataset.n_bins):
            row = [str(t)]
            row += [_fmt(v) for v in dataset.states[t]]
            row += [_fmt(v) for v in dataset.measurements[t]]
            writer.writerow(row)
    sidecar = {
        "bin_width_ms": dataset.bin_width_ms,
        "channel_labels": list(dataset.channel_labels),
    }
    sidecar.update(dataset.meta)
    with open(csv_path.with_suffix(".json"), "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_dataset(csv_path) -> Dataset:
    """Inverse of :func:`save_dataset`."""
    csv_path = Path(csv_path)
    with open(csv_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [row for row in reader]
    d_x = sum(1 for name in header if name.startswith("x"))
    d_y = sum(1 for name in header if name.startswith("c"))
    if header != ["t"] + [f"x{i}" for i in range(d_x)] + [f"c{i}" for i in range(d_y)]:
        raise ContractViolationError(f"unrecognized dataset header in {csv_path}")
    data = np.array(rows, dtype=np.float64)
    with open(csv_path.with_suffix(".json")) as fh:
        sidecar = json.load(fh)
    meta = {k: v for k, v in sidecar.items() if k not in ("bin_width_ms", "channel_labels")}
    return Dataset(
        data[:, 1 : 1 + d_x],
        data[:, 1 + d_x :],
        float(sidecar["bin_width_ms"]),
        tuple(sidecar["channel_labels"]),
        meta,
    )
