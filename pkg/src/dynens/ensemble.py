"""Dynamic-ensemble particle filter.

Maintains a bank of M candidate measurement models and, at every step,
re-weights them online: the previous model posterior is flattened by a
forgetting exponent to form a transition prior, each candidate's evidence for
the incoming measurement is approximated from the particle set, and Bayes'
rule yields the new model posterior. The state posterior is the
posterior-weighted mixture of the per-candidate particle weightings.

The recursion carries a single combined particle weight vector between steps;
per-candidate weightings are recomputed fresh within each step. Resampling
acts on the combined weights after estimation, triggered when the effective
sample size falls below a configured fraction of N.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import (
    ConfigError,
    ContractViolationError,
    DegenerateEvidenceError,
    DegenerateHypothesisError,
)
from .particles import ParticleSet, propagate, systematic_resample
from .state_space import LinearObservationModel, StateVector, _frozen_array, _values

# Log evidence at or below this is treated as numerically zero: if every
# candidate falls under it the step keeps its prediction instead of failing,
# so a single outlier bin cannot kill an online decoding session.
LOG_EVIDENCE_FLOOR = -700.0


class DegenerateEvidenceWarning(UserWarning):
    """Emitted when a step's evidence underflowed for every candidate model."""


@dataclass(frozen=True)
class ModelPosterior:
    """Probability of each candidate model given the measurements so far."""

    probs: np.ndarray

    def __post_init__(self):
        probs = _frozen_array(self.probs, ndim=1, name="model posterior")
        if probs.shape[0] < 1:
            raise ContractViolationError("model posterior must cover at least one model")
        if not np.all(np.isfinite(probs)) or np.any(probs < 0):
            raise ContractViolationError("model posterior entries must be finite and non-negative")
        total = float(probs.sum())
        if abs(total - 1.0) > 1e-10:
            raise ContractViolationError(f"model posterior sums to {total!r}, expected 1")
        object.__setattr__(self, "probs", probs)

    @property
    def n_models(self) -> int:
        return self.probs.shape[0]

    @classmethod
    def uniform(cls, n_models: int) -> "ModelPosterior":
        return cls(np.full(n_models, 1.0 / n_models))


@dataclass(frozen=True)
class EnsembleConfig:
    """Immutable per-session settings for the ensemble filter."""

    models: tuple[LinearObservationModel, ...]
    transition: object
    alpha: float
    n_particles: int
    ess_threshold_fraction: float = 0.5

    def __post_init__(self):
        models = tuple(self.models)
        if len(models) < 1:
            raise ConfigError("at least one candidate model is required")
        if not all(isinstance(m, LinearObservationModel) for m in models):
            raise ConfigError("candidate models must be LinearObservationModel instances")
        if not (0.0 < self.alpha < 1.0):
            raise ConfigError(
                f"forgetting factor must satisfy 0 < alpha < 1 (strict); got {self.alpha}"
            )
        if self.n_particles < 1:
            raise ConfigError("n_particles must be >= 1")
        if not (0.0 < self.ess_threshold_fraction <= 1.0):
            raise ConfigError("ess_threshold_fraction must lie in (0, 1]")
        object.__setattr__(self, "models", models)

    @property
    def n_models(self) -> int:
        return len(self.models)


@dataclass(frozen=True)
class EnsembleFilterState:
    """Filter state carried between steps, plus per-step diagnostics.

    The model posterior is carried as un-normalized-safe log probabilities
    (``log_posterior``, normalized so its log-sum-exp is 0): a model whose
    linear probability underflows keeps a finite log weight and can win back
    mass when the signal regime returns to it. The linear view is exposed as
    the ``posterior`` property.

    ``last_ess`` is the effective sample size of the combined weights before
    any resampling at the step that produced this state; ``degenerate`` marks
    steps where the all-candidates evidence guard fired.
    """

    ps: ParticleSet
    log_posterior: np.ndarray
    step_index: int
    last_ess: float = field(default=float("nan"), compare=False)
    degenerate: bool = field(default=False, compare=False)

    def __post_init__(self):
        lp = np.array(self.log_posterior, dtype=np.float64)
        if lp.ndim != 1 or lp.shape[0] < 1:
            raise ContractViolationError("log posterior must be a non-empty vector")
        if np.any(np.isnan(lp)) or np.any(lp == np.inf):
            raise ContractViolationError("log posterior entries must be finite or -inf")
        if abs(_logsumexp(lp)) > 1e-8:
            raise ContractViolationError("log posterior must be normalized (log-sum-exp 0)")
        lp.flags.writeable = False
        object.__setattr__(self, "log_posterior", lp)
        if self.step_index < 0:
            raise ContractViolationError("step_index must be >= 0")

    @property
    def posterior(self) -> ModelPosterior:
        """Linear-space model posterior (tiny log weights may round to 0 here)."""
        p = np.exp(self.log_posterior - self.log_posterior.max())
        return ModelPosterior(p / p.sum())


def initial_state(cfg: EnsembleConfig, ps: ParticleSet) -> EnsembleFilterState:
    """Session start: supplied particle cloud, uniform model posterior, k = 0."""
    if ps.n_particles != cfg.n_particles:
        raise ConfigError(
            f"initial cloud has {ps.n_particles} particles, config expects {cfg.n_particles}"
        )
    return EnsembleFilterState(ps, np.full(cfg.n_models, -np.log(cfg.n_models)), 0)


def forgetting_predict(posterior: ModelPosterior, alpha: float) -> ModelPosterior:
    """Model-transition prior: flatten the posterior as p_m^alpha / sum_j p_j^alpha."""
    if not (0.0 < alpha < 1.0):
        raise ConfigError(f"forgetting factor must satisfy 0 < alpha < 1 (strict); got {alpha}")
    p = posterior.probs ** alpha
    total = p.sum()
    if total <= 0.0:
        raise ContractViolationError("forgetting prior has no mass")
    return ModelPosterior(p / total)


def _logsumexp(row: np.ndarray) -> float:
    m = row.max()
    if m == -np.inf:
        return -np.inf
    return float(m + np.log(np.sum(np.exp(row - m))))


def _log_joint(prev_weights: np.ndarray, particles: np.ndarray, y: np.ndarray,
               models) -> np.ndarray:
    """(M, N) matrix of log(w_{k-1}^i) + log p_m(y_k | x_k^i)."""
    d_y = y.shape[0]
    with np.errstate(divide="ignore"):
        logw = np.log(prev_weights)
    out = np.empty((len(models), particles.shape[0]))
    for m, model in enumerate(models):
        if model.mask[-1] >= d_y:
            raise ContractViolationError(
                f"model {m} mask {model.mask} exceeds measurement dim {d_y}"
            )
        if model.state_dim != particles.shape[1]:
            raise ContractViolationError(
                f"model {m} state dim {model.state_dim} != particle dim {particles.shape[1]}"
            )
        y_m = y[list(model.mask)]
        out[m] = logw + kernels.masked_loglik(particles, model.H, model.b, model.r, y_m)
    return out


def per_hypothesis_weights(prev_weights, particles, y, models) -> np.ndarray:
    """Row m holds the normalized weights w_{k-1}^i * p_m(y_k | x_k^i)."""
    prev_weights = np.asarray(prev_weights, dtype=np.float64)
    particles = np.asarray(particles, dtype=np.float64)
    lj = _log_joint(prev_weights, particles, _values(y), models)
    rows = np.empty_like(lj)
    for m in range(lj.shape[0]):
        shift = lj[m].max()
        if shift == -np.inf:
            raise DegenerateHypothesisError(
                f"candidate {m} assigned zero likelihood to every particle"
            )
        row = np.exp(lj[m] - shift)
        rows[m] = row / row.sum()
    return rows


def marginal_likelihoods(prev_weights, particles, y, models) -> np.ndarray:
    """Log evidence per model: log sum_i w_{k-1}^i p_m(y_k | x_k^i), via log-sum-exp."""
    prev_weights = np.asarray(prev_weights, dtype=np.float64)
    particles = np.asarray(particles, dtype=np.float64)
    lj = _log_joint(prev_weights, particles, _values(y), models)
    return np.array([_logsumexp(lj[m]) for m in range(lj.shape[0])])


def update_model_posterior(predictive: ModelPosterior, log_marginals) -> ModelPosterior:
    """Bayes update of the model probabilities by each model's log evidence."""
    log_marginals = np.asarray(log_marginals, dtype=np.float64)
    if log_marginals.shape != predictive.probs.shape:
        raise ContractViolationError(
            f"{log_marginals.shape[0]} marginals for {predictive.n_models} models"
        )
    with np.errstate(divide="ignore"):
        t = np.log(predictive.probs) + log_marginals
    shift = t.max()
    if not np.isfinite(shift):
        raise DegenerateEvidenceError("all model evidences are zero; posterior undefined")
    p = np.exp(t - shift)
    return ModelPosterior(p / p.sum())


def combine_posterior(posterior: ModelPosterior, hyp_weights) -> np.ndarray:
    """Mixture of the per-model particle weightings: w_i = sum_m p_m * w_{m,i}."""
    hyp_weights = np.asarray(hyp_weights, dtype=np.float64)
    if hyp_weights.ndim != 2 or hyp_weights.shape[0] != posterior.n_models:
        raise ContractViolationError(
            f"hypothesis weights shape {hyp_weights.shape} does not match {posterior.n_models} models"
        )
    row_sums = hyp_weights.sum(axis=1)
    if np.any(np.abs(row_sums - 1.0) > 1e-8):
        raise ContractViolationError("each hypothesis weight row must be normalized")
    return posterior.probs @ hyp_weights


def estimate_state(particles, combined_weights) -> StateVector:
    """Posterior-mean readout of the mixture: sum_i w_i x_i."""
    particles = np.asarray(particles, dtype=np.float64)
    w = np.asarray(combined_weights, dtype=np.float64)
    total = float(w.sum())
    if abs(total - 1.0) > 1e-8 or np.any(w < 0):
        raise ContractViolationError("estimate_state requires normalized weights")
    return StateVector(kernels.weighted_mean(particles, w))


def step(state: EnsembleFilterState, cfg: EnsembleConfig, y,
         rng: np.random.Generator) -> tuple[EnsembleFilterState, StateVector, ModelPosterior]:
    """Advance the filter by one measurement.

    Order of operations: forgetting prediction of the model prior, particle
    propagation through the transition prior, per-candidate weighting and
    evidence, Bayes model update, mixture combination, state estimate, then
    ESS-triggered systematic resampling of the combined weights.
    """
    k = state.step_index + 1
    yv = _values(y)
    # forgetting prediction of the model prior, in log space so that models
    # whose linear probability underflowed remain recoverable
    scaled = cfg.alpha * state.log_posterior
    log_predictive = scaled - _logsumexp(scaled)
    moved = propagate(state.ps, cfg.transition, k, rng)
    particles = moved.particles
    prev_weights = moved.weights

    lj = _log_joint(prev_weights, particles, yv, cfg.models)
    log_marginals = np.array([_logsumexp(lj[m]) for m in range(lj.shape[0])])

    if log_marginals.max() < LOG_EVIDENCE_FLOOR:
        # Evidence underflowed for every candidate: keep the predictive model
        # prior and the carried weights, flag the step, and continue.
        warnings.warn(
            f"step {k}: evidence underflowed for all {cfg.n_models} candidates; "
            "keeping predictive posterior and prior weights",
            DegenerateEvidenceWarning,
            stacklevel=2,
        )
        ess = float(1.0 / np.sum(prev_weights * prev_weights))
        estimate = StateVector(kernels.weighted_mean(particles, prev_weights))
        new_state = EnsembleFilterState(
            ParticleSet(particles, prev_weights), log_predictive, k,
            last_ess=ess, degenerate=True,
        )
        return new_state, estimate, new_state.posterior

    n = cfg.n_particles
    rows = np.empty_like(lj)
    for m in range(lj.shape[0]):
        shift = lj[m].max()
        if shift == -np.inf:
            # Impossible candidate: its evidence is zero, so its posterior
            # weight is exactly 0 and this placeholder never reaches the mix.
            rows[m] = 1.0 / n
            continue
        row = np.exp(lj[m] - shift)
        rows[m] = row / row.sum()

    # Bayes update of the model posterior, still in log space
    unnorm = log_predictive + log_marginals
    norm = _logsumexp(unnorm)
    if not np.isfinite(norm):
        raise DegenerateEvidenceError("all model evidences are zero", step_index=k)
    log_post = unnorm - norm
    new_state_posterior = np.exp(log_post - log_post.max())
    posterior = ModelPosterior(new_state_posterior / new_state_posterior.sum())

    combined = posterior.probs @ rows
    estimate = StateVector(kernels.weighted_mean(particles, combined))
    ess = float(1.0 / np.sum(combined * combined))

    ps = ParticleSet(particles, combined)
    if ess < cfg.ess_threshold_fraction * n:
        ps = systematic_resample(ps, rng)
    new_state = EnsembleFilterState(ps, log_post, k, last_ess=ess)
    return new_state, estimate, posterior


@dataclass(frozen=True)
class FilterRun:
    """Stacked outputs of a full filtering pass."""

    estimates: np.ndarray     # (T, d_x)
    posteriors: np.ndarray    # (T, M)
    ess: np.ndarray           # (T,)
    degenerate_steps: tuple[int, ...]
    final_state: EnsembleFilterState


def run_filter(cfg: EnsembleConfig, measurements: np.ndarray,
               init: EnsembleFilterState, rng: np.random.Generator) -> FilterRun:
    """Run :func:`step` over every row of ``measurements`` (T, d_y)."""
    measurements = np.asarray(measurements, dtype=np.float64)
    if measurements.ndim != 2:
        raise ContractViolationError(f"measurements must be (T, d_y), got {measurements.shape}")
    t_total = measurements.shape[0]
    estimates = np.empty((t_total, init.ps.state_dim))
    posteriors = np.empty((t_total, cfg.n_models))
    ess = np.empty(t_total)
    degenerate = []
    state = init
    for t in range(t_total):
        state, estimate, posterior = step(state, cfg, measurements[t], rng)
        estimates[t] = estimate.values
        posteriors[t] = posterior.probs
        ess[t] = state.last_ess
        if state.degenerate:
            degenerate.append(state.step_index)
    return FilterRun(estimates, posteriors, ess, tuple(degenerate), state)
