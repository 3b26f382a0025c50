"""Generic particle machinery: propagation, weight normalization, effective
sample size, and systematic resampling.

Weighted reductions run through the kernel backend with a fixed summation
order, so a given backend produces bit-identical results run to run.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ContractViolationError, DegenerateWeightsError
from .state_space import GenericStateTransition, LinearStateTransition, _frozen_array

WEIGHT_SUM_TOL = 1e-10


@dataclass(frozen=True)
class ParticleSet:
    """N weighted samples of the latent state: particles (N, d_x), weights (N,)."""

    particles: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        particles = _frozen_array(self.particles, ndim=2, name="particles")
        weights = _frozen_array(self.weights, ndim=1, name="weights")
        n = particles.shape[0]
        if n < 1:
            raise ContractViolationError("particle set must contain at least one particle")
        if weights.shape[0] != n:
            raise ContractViolationError(
                f"{weights.shape[0]} weights for {n} particles"
            )
        if not np.all(np.isfinite(particles)):
            raise ContractViolationError("particles contain non-finite entries")
        if not np.all(np.isfinite(weights)):
            raise DegenerateWeightsError("weights contain non-finite entries")
        if np.any(weights < 0):
            raise DegenerateWeightsError("weights must be non-negative")
        total = float(weights.sum())
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            raise ContractViolationError(f"weights sum to {total!r}, expected 1 within {WEIGHT_SUM_TOL}")
        object.__setattr__(self, "particles", particles)
        object.__setattr__(self, "weights", weights)

    @property
    def n_particles(self) -> int:
        return self.particles.shape[0]

    @property
    def state_dim(self) -> int:
        return self.particles.shape[1]

    @classmethod
    def from_point(cls, x0, n: int) -> "ParticleSet":
        """All particles at one state, uniform weights."""
        x0 = np.atleast_1d(np.asarray(x0, dtype=np.float64))
        return cls(np.tile(x0, (n, 1)), np.full(n, 1.0 / n))

    @classmethod
    def from_gaussian(cls, mean, cov, n: int, rng: np.random.Generator) -> "ParticleSet":
        """Particles drawn from N(mean, cov), uniform weights."""
        mean = np.atleast_1d(np.asarray(mean, dtype=np.float64))
        cov = np.atleast_2d(np.asarray(cov, dtype=np.float64))
        draws = rng.multivariate_normal(mean, cov, size=n, method="eigh")
        return cls(draws, np.full(n, 1.0 / n))


def propagate(ps: ParticleSet, transition, k: int, rng: np.random.Generator) -> ParticleSet:
    """Draw each particle from the transition prior p(x_k | x_{k-1}^i); weights unchanged.

    Reads only the particles, never the weights.
    """
    if isinstance(transition, LinearStateTransition):
        if transition.dim != ps.state_dim:
            raise ContractViolationError(
                f"transition dim {transition.dim} does not match particle dim {ps.state_dim}"
            )
        new_particles = transition.sample(ps.particles, rng)
    elif isinstance(transition, GenericStateTransition):
        new_particles = transition.sample(ps.particles, k, rng)
    else:
        raise ContractViolationError(f"unsupported transition type {type(transition).__name__}")
    return ParticleSet(new_particles, ps.weights)


def normalize(weights) -> np.ndarray:
    """Scale non-negative weights to sum to 1. Reads nothing but the weights."""
    w = np.asarray(weights, dtype=np.float64)
    if not np.all(np.isfinite(w)):
        raise DegenerateWeightsError("weights contain non-finite entries")
    if np.any(w < 0):
        raise DegenerateWeightsError("weights must be non-negative")
    total = w.sum()
    if total <= 0.0:
        raise DegenerateWeightsError("weights sum to zero; no usable mass")
    return w / total


def effective_sample_size(weights) -> float:
    """ESS = 1 / sum(w_i^2) of normalized weights; lies in [1, N]."""
    w = np.asarray(weights, dtype=np.float64)
    total = float(w.sum())
    if not np.isfinite(total) or abs(total - 1.0) > 1e-8 or np.any(w < 0):
        raise ContractViolationError("effective_sample_size requires normalized weights")
    return float(1.0 / np.sum(w * w))


def systematic_resample(ps: ParticleSet, rng: np.random.Generator) -> ParticleSet:
    """Resample N particles with one uniform offset u ~ U[0, 1/N) against the
    cumulative weights; returns uniform output weights.

    Copy counts are guaranteed within 1 of N * w_i for every particle.
    """
    n = ps.n_particles
    u0 = rng.random() / n
    cum = np.cumsum(ps.weights)
    idx = kernels.resample_indices(cum, u0)
    return ParticleSet(ps.particles[idx], np.full(n, 1.0 / n))
