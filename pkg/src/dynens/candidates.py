"""Candidate model generation: least-squares fitting of the shared dynamics
and of per-candidate observation models, channel dropout, and weight
perturbation.

Each candidate is built independently from its own randomness stream (stream i
is seeded with ``seed + i``), so generation is reproducible and
order-independent.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, ContractViolationError, SingularFitError
from .state_space import Dataset, LinearObservationModel, LinearStateTransition

DEFAULT_RIDGE = 1e-8
Q_EIGENVALUE_FLOOR = 1e-9


@dataclass(frozen=True)
class GenerationConfig:
    """Candidate-set shape: M models of size s, perturbed by factor p."""

    model_count: int
    model_size: int
    perturbation_factor: float
    seed: int

    def __post_init__(self):
        if self.model_count < 1:
            raise ConfigError("model_count must be >= 1")
        if self.model_size < 1:
            raise ConfigError("model_size must be >= 1")
        if not (np.isfinite(self.perturbation_factor) and self.perturbation_factor >= 0):
            raise ConfigError("perturbation_factor must be finite and >= 0")


def _check_fittable(design: np.ndarray, ridge: float, what: str) -> None:
    rows, cols = design.shape
    if rows < cols + 1:
        raise SingularFitError(
            f"{what}: {rows} rows cannot determine {cols} coefficients with a residual"
        )
    if ridge == 0.0:
        if np.linalg.matrix_rank(design) < cols:
            raise SingularFitError(f"{what}: regressor matrix is rank-deficient and ridge is 0")


def fit_state_transition(data: Dataset, ridge: float = DEFAULT_RIDGE) -> LinearStateTransition:
    """Least-squares A minimizing sum ||x_{k+1} - A x_k||^2; Q from the residuals.

    Q is symmetrized and eigenvalue-floored at ``Q_EIGENVALUE_FLOOR``.
    """
    if ridge < 0:
        raise ConfigError("ridge must be >= 0")
    states = data.states
    d = states.shape[1]
    if states.shape[0] < d + 2:
        raise SingularFitError(
            f"need at least d_x + 2 = {d + 2} rows to fit dynamics, got {states.shape[0]}"
        )
    X = states[:-1]
    Y = states[1:]
    if ridge == 0.0 and np.any(np.ptp(X, axis=0) == 0.0):
        raise SingularFitError("a state component is constant (zero-variance regressor)")
    _check_fittable(X, ridge, "state transition")
    G = X.T @ X + ridge * np.eye(d)
    A = np.linalg.solve(G, X.T @ Y).T
    resid = Y - X @ A.T
    Q = resid.T @ resid / resid.shape[0]
    Q = 0.5 * (Q + Q.T)
    w, v = np.linalg.eigh(Q)
    Q = (v * np.maximum(w, Q_EIGENVALUE_FLOOR)) @ v.T
    return LinearStateTransition(A, 0.5 * (Q + Q.T))


def fit_observation(data: Dataset, channels, ridge: float = DEFAULT_RIDGE) -> LinearObservationModel:
    """Per-channel least squares of y_c on [x, 1] over the masked channels.

    The intercept column is not ridge-penalized. Residual variances become the
    model's noise diagonal (floored by the model constructor).
    """
    if ridge < 0:
        raise ConfigError("ridge must be >= 0")
    mask = tuple(sorted(int(c) for c in channels))
    if len(set(mask)) != len(mask) or not mask:
        raise ContractViolationError(f"channel set {channels!r} must be non-empty and unique")
    if mask[0] < 0 or mask[-1] >= data.n_channels:
        raise ContractViolationError(
            f"channel set {mask} invalid for {data.n_channels} channels"
        )
    states = data.states
    d = states.shape[1]
    t_rows = states.shape[0]
    if t_rows < d + 2:
        raise SingularFitError(
            f"need at least d_x + 2 = {d + 2} rows to fit observation model, got {t_rows}"
        )
    X = np.column_stack([states, np.ones(t_rows)])
    _check_fittable(X, ridge, "observation model")
    Y = data.measurements[:, list(mask)]
    penalty = ridge * np.diag(np.r_[np.ones(d), 0.0])
    G = X.T @ X + penalty
    B = np.linalg.solve(G, X.T @ Y)  # (d + 1, s)
    H = B[:d].T
    b = B[d]
    resid = Y - X @ B
    r = np.mean(resid * resid, axis=0)
    return LinearObservationModel(mask, H, b, r)


def neuron_dropout(n_channels: int, s: int, rng: np.random.Generator) -> tuple[int, ...]:
    """Uniformly random s-subset of channels 0..n_channels-1, without replacement, sorted."""
    if not (1 <= s <= n_channels):
        raise ConfigError(f"model size must satisfy 1 <= s <= {n_channels}, got {s}")
    chosen = rng.choice(n_channels, size=s, replace=False)
    return tuple(int(c) for c in np.sort(chosen))


def perturb_weights(model: LinearObservationModel, p: float,
                    rng: np.random.Generator) -> LinearObservationModel:
    """Shift every entry of H and b by p * eps, eps ~ N(0, 1) drawn per entry.

    Mask and noise variances are untouched. Draw order: H entries (row-major),
    then bias entries.
    """
    if not (np.isfinite(p) and p >= 0):
        raise ContractViolationError(f"perturbation factor must be finite and >= 0, got {p}")
    if p == 0.0:
        return model
    H = model.H + p * rng.standard_normal(model.H.shape)
    b = model.b + p * rng.standard_normal(model.b.shape)
    return LinearObservationModel(model.mask, H, b, model.r)


def generate_candidates(data: Dataset, cfg: GenerationConfig,
                        ridge: float = DEFAULT_RIDGE) -> list[LinearObservationModel]:
    """Build M candidates: channel dropout, least-squares fit, weight perturbation.

    Candidate i uses its own generator seeded with ``cfg.seed + i``; dropout
    subsets are drawn independently per candidate (duplicates allowed).
    """
    if cfg.model_size > data.n_channels:
        raise ConfigError(
            f"model size {cfg.model_size} exceeds channel count {data.n_channels}"
        )
    models = []
    for i in range(cfg.model_count):
        rng_i = np.random.default_rng(cfg.seed + i)
        mask = neuron_dropout(data.n_channels, cfg.model_size, rng_i)
        try:
            fitted = fit_observation(data, mask, ridge)
        except SingularFitError as exc:
            raise SingularFitError(f"candidate {i}: {exc}") from exc
        models.append(perturb_weights(fitted, cfg.perturbation_factor, rng_i))
    return models


def save_candidates(models, path, generation: GenerationConfig | None = None) -> None:
    """Serialize a candidate set (masks, H row-major, biases, noise diagonals)
    with its generation config for provenance."""
    doc = {
        "generation": None if generation is None else {
            "model_count": generation.model_count,
            "model_size": generation.model_size,
            "perturbation_factor": generation.perturbation_factor,
            "seed": generation.seed,
        },
        "models": [
            {
                "mask": list(m.mask),
                "H": [[float(v) for v in row] for row in m.H],
                "b": [float(v) for v in m.b],
                "r": [float(v) for v in m.r],
            }
            for m in models
        ],
    }
    with open(Path(path), "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_candidates(path) -> tuple[list[LinearObservationModel], GenerationConfig | None]:
    """Inverse of :func:`save_candidates`."""
    with open(Path(path)) as fh:
        doc = json.load(fh)
    models = [
        LinearObservationModel(tuple(m["mask"]), np.array(m["H"]), np.array(m["b"]), np.array(m["r"]))
        for m in doc["models"]
    ]
    gen = doc.get("generation")
    cfg = None if gen is None else GenerationConfig(
        gen["model_count"], gen["model_size"], gen["perturbation_factor"], gen["seed"]
    )
    return models, cfg
