"""Synthetic data generators.

Three generators live here:

* the piecewise scalar series whose measurement function switches between
  three known linear maps at fixed boundaries, used to demonstrate automatic
  model switching;
* a surrogate cortical recording: a press-pulse trajectory driving Poisson
  spike counts through slowly drifting linear tuning, so decoders can be
  compared without real recordings;
* channel corruption, which replaces chosen channels with uniform random
  integers to emulate noisy electrodes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .state_space import Dataset, GenericStateTransition, LinearObservationModel

# Piecewise measurement maps (weight, intercept) and the unit measurement
# noise variance used by the scalar simulation.
SIM_MEASUREMENT_PARAMS = ((2.0, -3.0), (-1.0, 8.0), (0.5, 5.0))
SIM_MEASUREMENT_NOISE_VAR = 1.0


@dataclass(frozen=True)
class SimulationSpec:
    """Scalar piecewise-measurement series settings.

    State noise is Gamma(shape, scale) — read as shape/scale, so the default
    draws have mean 6 — and measurement noise is Gaussian with unit variance.
    Segment m owns the half-open step range (boundary_{m-1}, boundary_m].
    """

    length: int = 300
    boundaries: tuple[int, int] = (100, 200)
    gamma_shape: float = 3.0
    gamma_scale: float = 2.0
    measurement_noise_std: float = 1.0
    x0: float = 0.0

    def __post_init__(self):
        if self.length < 1:
            raise ConfigError("length must be >= 1")
        b = tuple(int(v) for v in self.boundaries)
        if len(b) != 2 or not (0 < b[0] < b[1] < self.length):
            raise ConfigError(
                f"boundaries must be strictly increasing and < length, got {b}"
            )
        if self.gamma_shape <= 0 or self.gamma_scale <= 0:
            raise ConfigError("gamma parameters must be positive")
        if self.measurement_noise_std < 0:
            raise ConfigError("measurement noise std must be >= 0")
        object.__setattr__(self, "boundaries", b)


def simulation_transition_mean(x, k: int):
    """Noise-free transition: 1 + sin(0.04 pi k) + 0.5 x."""
    return 1.0 + math.sin(0.04 * math.pi * k) + 0.5 * np.asarray(x, dtype=np.float64)


def simulation_segment(k: int, boundaries: tuple[int, int] = (100, 200)) -> int:
    """Index of the measurement map active at step k (boundary steps belong
    to the earlier segment)."""
    if k <= boundaries[0]:
        return 0
    if k <= boundaries[1]:
        return 1
    return 2


def simulation_measurement_mean(x, k: int, boundaries: tuple[int, int] = (100, 200)):
    """Noise-free measurement of the segment active at step k."""
    w, c = SIM_MEASUREMENT_PARAMS[simulation_segment(k, boundaries)]
    return w * np.asarray(x, dtype=np.float64) + c


def simulation_transition(spec: SimulationSpec) -> GenericStateTransition:
    """Transition prior matching the generator (Gamma state noise), for filters."""

    def fn(states: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
        noise = rng.gamma(spec.gamma_shape, spec.gamma_scale, size=states.shape)
        return simulation_transition_mean(states, k) + noise

    return GenericStateTransition(fn)


def candidate_set_for_simulation() -> list[LinearObservationModel]:
    """The three scalar measurement maps as candidate models (unit noise, full mask)."""
    return [
        LinearObservationModel((0,), [[w]], [c], [SIM_MEASUREMENT_NOISE_VAR])
        for w, c in SIM_MEASUREMENT_PARAMS
    ]


def simulate_series(spec: SimulationSpec, rng: np.random.Generator) -> Dataset:
    """Generate the piecewise series. Step k draws the Gamma state noise first,
    then the Gaussian measurement noise; rows hold steps k = 1..length."""
    t_total = spec.length
    states = np.empty((t_total, 1))
    meas = np.empty((t_total, 1))
    x = spec.x0
    for k in range(1, t_total + 1):
        x = float(simulation_transition_mean(x, k)) + rng.gamma(spec.gamma_shape, spec.gamma_scale)
        y = float(simulation_measurement_mean(x, k, spec.boundaries))
        if spec.measurement_noise_std > 0:
            y += rng.normal(0.0, spec.measurement_noise_std)
        states[k - 1, 0] = x
        meas[k - 1, 0] = y
    return Dataset(states, meas, meta={"generator": "simulation", "x0": spec.x0})


@dataclass(frozen=True)
class SynthCortexSpec:
    """Surrogate cortical dataset settings.

    The trajectory is zero-baseline position with raised-cosine press pulses at
    Poisson-arriving event times; velocity and acceleration follow by central
    finite differences. Channel c fires Poisson spikes at
    max(0, drift_c(t) * (h_c . x_t) + baseline_rate); informative channels get
    tuning rows with per-component magnitudes in
    [0.5, 1.5] * tuning_scale (random signs), the rest are pure baseline noise.
    Tuning drifts multiplicatively as 1 + drift_amplitude * sin(2 pi t / drift_period + phase_c).
    """

    channel_count: int = 20
    n_bins: int = 4000
    press_rate: float = 0.04
    pulse_width: int = 10
    tuning_scale: float = 2.0
    drift_amplitude: float = 0.2
    drift_period: float = 600.0
    informative_fraction: float = 0.5
    baseline_rate: float = 1.5
    bin_width_ms: float = 100.0
    seed: int = 0

    def __post_init__(self):
        if self.channel_count < 1 or self.n_bins < 3:
            raise ConfigError("need at least one channel and three bins")
        if not (0.0 <= self.informative_fraction <= 1.0):
            raise ConfigError("informative_fraction must lie in [0, 1]")
        if self.press_rate <= 0 or self.pulse_width < 2:
            raise ConfigError("press_rate must be positive and pulse_width >= 2")
        if self.drift_amplitude < 0 or self.drift_period <= 0:
            raise ConfigError("drift amplitude must be >= 0 and period positive")
        if self.baseline_rate < 0 or self.tuning_scale < 0:
            raise ConfigError("baseline_rate and tuning_scale must be >= 0")


def _press_positions(spec: SynthCortexSpec, rng: np.random.Generator) -> np.ndarray:
    position = np.zeros(spec.n_bins)
    pulse = np.hanning(spec.pulse_width)
    t = rng.exponential(1.0 / spec.press_rate)
    while t < spec.n_bins:
        start = int(t)
        stop = min(start + spec.pulse_width, spec.n_bins)
        position[start:stop] += pulse[: stop - start]
        t += rng.exponential(1.0 / spec.press_rate)
    return position


def synth_cortex(spec: SynthCortexSpec, *, rates_only: bool = False) -> Dataset:
    """Generate the surrogate recording. With ``rates_only`` the measurement
    matrix holds the clipped firing rates instead of Poisson draws."""
    rng = np.random.default_rng(spec.seed)
    c_total = spec.channel_count
    n_info = int(round(spec.informative_fraction * c_total))

    position = _press_positions(spec, rng)
    velocity = np.gradient(position)
    acceleration = np.gradient(velocity)
    states = np.column_stack([position, velocity, acceleration])

    tuning = np.zeros((c_total, 3))
    magnitudes = spec.tuning_scale * rng.uniform(0.5, 1.5, size=(n_info, 3))
    signs = np.where(rng.random(size=(n_info, 3)) < 0.5, -1.0, 1.0)
    tuning[:n_info] = magnitudes * signs
    phases = rng.uniform(0.0, 2.0 * np.pi, size=c_total)

    t_axis = np.arange(spec.n_bins)
    drift = 1.0 + spec.drift_amplitude * np.sin(
        2.0 * np.pi * t_axis[:, None] / spec.drift_period + phases[None, :]
    )
    rates = np.maximum(drift * (states @ tuning.T) + spec.baseline_rate, 0.0)
    measurements = rates if rates_only else rng.poisson(rates).astype(np.float64)

    return Dataset(
        states,
        measurements,
        bin_width_ms=spec.bin_width_ms,
        channel_labels=tuple(f"ch{c:02d}" for c in range(c_total)),
        meta={
            "generator": "synth_cortex",
            "informative_channels": list(range(n_info)),
            "seed": spec.seed,
        },
    )


def inject_noise(data: Dataset, channels, low: int, high: int,
                 rng: np.random.Generator) -> Dataset:
    """Replace the listed channels, every bin, with i.i.d. uniform integers in
    [low, high] inclusive.

    Channels are processed in ascending order, drawing one batch of T integers
    per channel, so corrupting {2} then {13} with one stream equals corrupting
    {2, 13} in a single call.
    """
    chans = sorted(int(c) for c in channels)
    if len(set(chans)) != len(chans):
        raise ConfigError(f"duplicate channels in {channels!r}")
    if chans and (chans[0] < 0 or chans[-1] >= data.n_channels):
        raise ConfigError(f"channels {chans} invalid for {data.n_channels} channels")
    if low > high:
        raise ConfigError(f"empty noise range [{low}, {high}]")
    if not chans:
        return data
    measurements = data.measurements.copy()
    for c in chans:
        measurements[:, c] = rng.integers(low, high + 1, size=data.n_bins).astype(np.float64)
    meta = dict(data.meta)
    records = list(meta.get("corruption", []))
    records.append({"channels": chans, "low": int(low), "high": int(high)})
    meta["corruption"] = records
    return Dataset(data.states, measurements, data.bin_width_ms, data.channel_labels, meta)
