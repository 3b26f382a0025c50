"""Benchmark the numba kernels against the pure-numpy fallback.

Times the three hot kernels at decoding scale (N = 1000 particles, s = 15
channels, d = 3 state components) and a full 300-step ensemble filtering run,
under each backend. Run with:

    python3 benchmarks/bench_backends.py
"""

import time

import numpy as np

from dynens import kernels
from dynens.datagen import SimulationSpec, candidate_set_for_simulation, simulate_series, simulation_transition
from dynens.ensemble import EnsembleConfig, initial_state, run_filter
from dynens.particles import ParticleSet

N_PARTICLES = 1000
N_CHANNELS = 15
STATE_DIM = 3
REPEATS = 2000


def time_kernels(backend):
    kernels.set_backend(backend)
    rng = np.random.default_rng(0)
    particles = rng.normal(size=(N_PARTICLES, STATE_DIM))
    H = rng.normal(size=(N_CHANNELS, STATE_DIM))
    b = rng.normal(size=N_CHANNELS)
    r = rng.uniform(0.5, 2.0, size=N_CHANNELS)
    y = rng.normal(size=N_CHANNELS)
    weights = rng.dirichlet(np.ones(N_PARTICLES))
    cum = np.cumsum(weights)

    # first calls outside the timer (JIT compilation for the numba backend)
    kernels.masked_loglik(particles, H, b, r, y)
    kernels.resample_indices(cum, 1e-4)
    kernels.weighted_mean(particles, weights)

    timings = {}
    t0 = time.perf_counter()
    for _ in range(REPEATS):
        kernels.masked_loglik(particles, H, b, r, y)
    timings["masked_loglik"] = (time.perf_counter() - t0) / REPEATS

    t0 = time.perf_counter()
    for _ in range(REPEATS):
        kernels.resample_indices(cum, 1e-4)
    timings["resample_indices"] = (time.perf_counter() - t0) / REPEATS

    t0 = time.perf_counter()
    for _ in range(REPEATS):
        kernels.weighted_mean(particles, weights)
    timings["weighted_mean"] = (time.perf_counter() - t0) / REPEATS
    return timings


def time_filter_run(backend):
    kernels.set_backend(backend)
    spec = SimulationSpec()
    data = simulate_series(spec, np.random.default_rng(1))
    cfg = EnsembleConfig(tuple(candidate_set_for_simulation()),
                         simulation_transition(spec), alpha=0.5, n_particles=N_PARTICLES)
    init = initial_state(cfg, ParticleSet.from_point([0.0], N_PARTICLES))
    run_filter(cfg, data.measurements, init, np.random.default_rng(2))  # warm-up
    t0 = time.perf_counter()
    for i in range(3):
        init = initial_state(cfg, ParticleSet.from_point([0.0], N_PARTICLES))
        run_filter(cfg, data.measurements, init, np.random.default_rng(2 + i))
    return (time.perf_counter() - t0) / 3


def main():
    backends = kernels.available_backends()
    print(f"backends available: {', '.join(backends)}")
    print(f"kernel shapes: particles ({N_PARTICLES}, {STATE_DIM}), "
          f"model size {N_CHANNELS}, {REPEATS} repeats\n")

    kernel_times = {b: time_kernels(b) for b in backends}
    names = sorted(kernel_times[backends[0]])
    width = max(len(n) for n in names)
    header = f"{'kernel':<{width}}" + "".join(f"  {b:>12}" for b in backends)
    if len(backends) == 2:
        header += f"  {'speedup':>8}"
    print(header)
    for name in names:
        row = f"{name:<{width}}"
        for b in backends:
            row += f"  {kernel_times[b][name] * 1e6:>10.2f}us"
        if len(backends) == 2:
            ratio = kernel_times[backends[0]][name] / kernel_times[backends[1]][name]
            row += f"  {ratio:>7.2f}x"
        print(row)

    print("\nfull 300-step filter run (3 candidates, 1000 particles):")
    run_times = {b: time_filter_run(b) for b in backends}
    for b in backends:
        print(f"  {b:>6}: {run_times[b] * 1e3:8.1f} ms")
    if len(backends) == 2:
        print(f"  speedup: {run_times[backends[0]] / run_times[backends[1]]:.2f}x")


if __name__ == "__main__":
    main()
