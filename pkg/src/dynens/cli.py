"""Config-driven experiment harness.

Three subcommands, each reading a JSON config and writing artifacts to an
output directory:

* ``simulate`` — piecewise-measurement series decoded with the three known
  candidate maps; emits weight traces, a segment-dominance report, and a
  posterior-smoothness report per forgetting factor.
* ``decode``   — surrogate cortical recording decoded by the Kalman baseline
  and ensemble variants on clean and channel-corrupted test data; emits a
  correlation report (mean +- std over seeds) and per-run traces.
* ``sweep``    — one decoder parameter swept over a value list, all others at
  their rest values; emits one CSV of CC against the swept value.

Every output directory also receives ``config.resolved.json`` holding the
fully resolved configuration (defaults merged, kernel backend recorded).
Re-running a scenario from that file reproduces the artifacts byte for byte.

Per-seed randomness: streams for data generation, candidate generation,
filtering, and corruption are derived from each seed via
``numpy.random.SeedSequence(seed).generate_state(4)``; filter streams are
additionally keyed by condition index.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .candidates import GenerationConfig, fit_observation, fit_state_transition, generate_candidates
from .datagen import (
    SimulationSpec,
    SynthCortexSpec,
    candidate_set_for_simulation,
    inject_noise,
    simulate_series,
    simulation_transition,
    synth_cortex,
)
from .ensemble import EnsembleConfig, initial_state, run_filter
from .errors import ConfigError, DynensError
from .kalman import KalmanState, run_kalman
from .metrics import (
    WeightTrace,
    correlation_coefficient,
    mean_posterior_l1_change,
    rank_channels,
    segment_dominance,
)
from .particles import ParticleSet
from .state_space import state_moments
from .traces import fmt17, write_trace

SCENARIOS = ("simulation", "synth-decode", "sweep")

DEFAULT_SIMULATION = {
    "length": 300,
    "boundaries": [100, 200],
    "gamma_shape": 3.0,
    "gamma_scale": 2.0,
    "measurement_noise_std": 1.0,
    "x0": 0.0,
    "alphas": [0.5],
    "n_particles": 200,
    "ess_threshold_fraction": 0.5,
}

DEFAULT_DATA = {
    "channel_count": 24,
    "n_bins": 6000,
    "press_rate": 0.04,
    "pulse_width": 10,
    "tuning_scale": 2.0,
    "drift_amplitude": 0.2,
    "drift_period": 600.0,
    "informative_fraction": 0.5,
    "baseline_rate": 1.5,
    "bin_width_ms": 100.0,
}

DEFAULT_DECODER = {
    "alpha": 0.1,
    "n_particles": 1000,
    "model_count": 20,
    "model_size": 15,
    "perturbation_factor": 0.1,
    "ess_threshold_fraction": 0.5,
    "ridge": 1e-8,
    "channels": 20,
}

DEFAULT_CORRUPTION = {"counts": [2, 4], "low": 0, "high": 10}

DEFAULT_METHODS = [
    {"name": "kalman"},
    {"name": "dyn-ensemble-plain", "drop": 0, "perturbation_factor": 0.0},
    {"name": "dyn-ensemble-p", "drop": 0, "perturbation_factor": 0.1},
    {"name": "dyn-ensemble-d2", "drop": 2, "perturbation_factor": 0.1},
    {"name": "dyn-ensemble-d5", "drop": 5, "perturbation_factor": 0.1},
]

DEFAULT_SEEDS = {"simulation": [0, 1, 2, 3, 4], "synth-decode": [0, 1, 2], "sweep": [0, 1, 2]}

SWEEPABLE = ("model_size", "model_count", "alpha", "perturbation_factor", "n_particles")


def _merged(defaults: dict, overrides, what: str) -> dict:
    if overrides is None:
        return dict(defaults)
    if not isinstance(overrides, dict):
        raise ConfigError(f"{what} section must be a JSON object")
    unknown = set(overrides) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown {what} keys: {sorted(unknown)}")
    out = dict(defaults)
    out.update(overrides)
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved experiment settings for one scenario."""

    scenario: str
    seeds: tuple[int, ...]
    backend: str
    sections: dict

    @classmethod
    def from_dict(cls, raw: dict, scenario: str) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        if scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {scenario!r}")
        declared = raw.get("scenario")
        if declared is not None and declared != scenario:
            raise ConfigError(f"config declares scenario {declared!r}, command ran {scenario!r}")
        known = {"scenario", "seeds", "backend", "simulation", "data", "decoder",
                 "corruption", "methods", "sweep", "version"}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")

        seeds = raw.get("seeds", DEFAULT_SEEDS[scenario])
        if not isinstance(seeds, list) or not seeds or not all(isinstance(s, int) for s in seeds):
            raise ConfigError("seeds must be a non-empty list of integers")

        backend = raw.get("backend", kernels.get_backend())
        if backend not in ("numpy", "numba"):
            raise ConfigError(f"backend must be 'numpy' or 'numba', got {backend!r}")

        sections: dict = {}
        if scenario == "simulation":
            sections["simulation"] = _merged(DEFAULT_SIMULATION, raw.get("simulation"), "simulation")
        else:
            sections["data"] = _merged(DEFAULT_DATA, raw.get("data"), "data")
            sections["decoder"] = _merged(DEFAULT_DECODER, raw.get("decoder"), "decoder")
            if sections["decoder"]["channels"] > sections["data"]["channel_count"]:
                raise ConfigError("decoder.channels cannot exceed data.channel_count")
        if scenario == "synth-decode":
            sections["corruption"] = _merged(DEFAULT_CORRUPTION, raw.get("corruption"), "corruption")
            methods = raw.get("methods", DEFAULT_METHODS)
            sections["methods"] = _validated_methods(methods, sections["decoder"]["channels"])
        if scenario == "sweep":
            sweep = raw.get("sweep")
            if not isinstance(sweep, dict) or "parameter" not in sweep:
                raise ConfigError("sweep scenario requires a sweep section with a parameter")
            parameter = sweep["parameter"]
            if parameter not in SWEEPABLE:
                raise ConfigError(f"sweep parameter must be one of {SWEEPABLE}, got {parameter!r}")
            values = sweep.get("values")
            if not isinstance(values, list) or not values:
                raise ConfigError("sweep.values must be a non-empty list")
            sections["sweep"] = {"parameter": parameter, "values": values}
        return cls(scenario, tuple(seeds), backend, sections)

    def resolved(self) -> dict:
        out = {"scenario": self.scenario, "seeds": list(self.seeds), "backend": self.backend,
               "version": __version__}
        out.update(self.sections)
        return out


def _validated_methods(methods, n_channels: int) -> list[dict]:
    if not isinstance(methods, list) or not methods:
        raise ConfigError("methods must be a non-empty list")
    seen = set()
    out = []
    for spec in methods:
        if not isinstance(spec, dict) or "name" not in spec:
            raise ConfigError(f"method entries need a name: {spec!r}")
        name = spec["name"]
        if name in seen:
            raise ConfigError(f"duplicate method name {name!r}")
        seen.add(name)
        if name == "kalman":
            out.append({"name": "kalman"})
            continue
        drop = int(spec.get("drop", 0))
        perturbation = float(spec.get("perturbation_factor", 0.0))
        if not (0 <= drop < n_channels):
            raise ConfigError(f"method {name!r}: drop must lie in [0, {n_channels})")
        if perturbation < 0:
            raise ConfigError(f"method {name!r}: perturbation_factor must be >= 0")
        unknown = set(spec) - {"name", "drop", "perturbation_factor"}
        if unknown:
            raise ConfigError(f"method {name!r}: unknown keys {sorted(unknown)}")
        out.append({"name": name, "drop": drop, "perturbation_factor": perturbation})
    return out


def _derive_streams(seed: int) -> tuple[int, int, int, int]:
    """(data, candidates, filter, corruption) seed material for one run seed."""
    state = np.random.SeedSequence(seed).generate_state(4)
    return tuple(int(v) for v in state)


def _write_resolved_config(cfg: ExperimentConfig, out_dir: Path) -> Path:
    path = out_dir / "config.resolved.json"
    with open(path, "w") as fh:
        json.dump(cfg.resolved(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _write_csv(path: Path, header: list[str], rows: list[list[str]]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


class _BackendGuard:
    """Temporarily pin the kernel backend recorded in a config."""

    def __init__(self, backend: str):
        self.backend = backend
        self.previous = kernels.get_backend()

    def __enter__(self):
        try:
            kernels.set_backend(self.backend)
        except ImportError as exc:
            raise ConfigError(
                f"config requires the {self.backend!r} backend, which is unavailable"
            ) from exc
        return self

    def __exit__(self, *exc_info):
        kernels.set_backend(self.previous)
        return False


def run_simulation_scenario(cfg: ExperimentConfig, out_dir) -> list[Path]:
    """Weight traces plus dominance and smoothness reports for the piecewise series."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    sim_cfg = cfg.sections["simulation"]
    spec = SimulationSpec(
        length=int(sim_cfg["length"]),
        boundaries=tuple(sim_cfg["boundaries"]),
        gamma_shape=float(sim_cfg["gamma_shape"]),
        gamma_scale=float(sim_cfg["gamma_scale"]),
        measurement_noise_std=float(sim_cfg["measurement_noise_std"]),
        x0=float(sim_cfg["x0"]),
    )
    alphas = list(sim_cfg["alphas"])
    if not alphas:
        raise ConfigError("simulation.alphas must be non-empty")
    n_particles = int(sim_cfg["n_particles"])
    models = candidate_set_for_simulation()
    transition = simulation_transition(spec)
    b0, b1 = spec.boundaries
    segments = [(10, b0, 0), (b0 + 10, b1, 1), (b1 + 10, spec.length, 2)]

    written = []
    dominance_rows = []
    smoothness_rows = []
    with _BackendGuard(cfg.backend):
        for alpha in alphas:
            ens_cfg = EnsembleConfig(
                models=tuple(models),
                transition=transition,
                alpha=float(alpha),
                n_particles=n_particles,
                ess_threshold_fraction=float(sim_cfg["ess_threshold_fraction"]),
            )
            for seed in cfg.seeds:
                data_seed, _, filt_seed, _ = _derive_streams(seed)
                data = simulate_series(spec, np.random.default_rng(data_seed))
                init = initial_state(ens_cfg, ParticleSet.from_point([spec.x0], n_particles))
                run = run_filter(ens_cfg, data.measurements, init, np.random.default_rng(filt_seed))
                steps = np.arange(1, spec.length + 1)
                trace_path = out_dir / f"trace_alpha{alpha:g}_seed{seed}.csv"
                write_trace(trace_path, steps, run.estimates, data.states,
                            run.posteriors, run.ess)
                written.append(trace_path)
                fractions = segment_dominance(WeightTrace(run.posteriors, steps), segments)
                for (start, end, expected), fraction in zip(segments, fractions):
                    dominance_rows.append([
                        fmt17(alpha), str(seed), str(start), str(end),
                        str(expected), fmt17(fraction),
                    ])
                smoothness_rows.append([
                    fmt17(alpha), str(seed), fmt17(mean_posterior_l1_change(run.posteriors)),
                ])

    dominance_path = out_dir / "dominance.csv"
    _write_csv(dominance_path,
               ["alpha", "seed", "segment_start", "segment_end", "expected_model", "fraction"],
               dominance_rows)
    smoothness_path = out_dir / "smoothness.csv"
    _write_csv(smoothness_path, ["alpha", "seed", "mean_posterior_l1_change"], smoothness_rows)
    written += [dominance_path, smoothness_path, _write_resolved_config(cfg, out_dir)]
    return written


def _split_rows(n_bins: int) -> tuple[slice, slice]:
    """Train on the first half, test on the last quarter (middle quarter held out)."""
    return slice(0, n_bins // 2), slice(n_bins - n_bins // 4, n_bins)


def _decode_conditions(corruption: dict) -> list[tuple[str, int]]:
    counts = [int(c) for c in corruption["counts"]]
    if any(c < 1 for c in counts):
        raise ConfigError(f"corruption counts must be positive, got {counts}")
    if len(set(counts)) != len(counts):
        raise ConfigError(f"duplicate corruption counts: {counts}")
    return [("clean", 0)] + [(f"noisy{c}", c) for c in counts]


def run_decode_scenario(cfg: ExperimentConfig, out_dir) -> list[Path]:
    """Correlation report for Kalman and ensemble variants on clean and corrupted data."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    data_cfg = cfg.sections["data"]
    decoder = cfg.sections["decoder"]
    corruption = cfg.sections["corruption"]
    methods = cfg.sections["methods"]
    conditions = _decode_conditions(corruption)
    d_y = int(decoder["channels"])
    ridge = float(decoder["ridge"])

    rows_per_run = []
    cc: dict[tuple[str, str], list[float]] = {}
    written = []
    with _BackendGuard(cfg.backend):
        for seed in cfg.seeds:
            data_seed, cand_seed, filt_seed, corrupt_seed = _derive_streams(seed)
            spec = SynthCortexSpec(**data_cfg, seed=data_seed)
            full = synth_cortex(spec)
            train_rows, test_rows = _split_rows(full.n_bins)
            ranked = rank_channels(full.slice(train_rows.start, train_rows.stop), 0, d_y)
            selected = full.select_channels(ranked)
            train = selected.slice(train_rows.start, train_rows.stop)
            test_clean = selected.slice(test_rows.start, test_rows.stop)

            transition = fit_state_transition(train, ridge)
            mean0, cov0 = state_moments(train.states)
            kalman_obs = fit_observation(train, range(d_y), ridge)

            rng_corrupt = np.random.default_rng(corrupt_seed)
            tests = {}
            for cond_name, count in conditions:
                if count == 0:
                    tests[cond_name] = test_clean
                else:
                    chans = np.sort(rng_corrupt.choice(d_y, size=count, replace=False))
                    tests[cond_name] = inject_noise(
                        test_clean, chans, int(corruption["low"]), int(corruption["high"]),
                        rng_corrupt,
                    )

            for method in methods:
                name = method["name"]
                if name == "kalman":
                    for cond_name, _ in conditions:
                        test = tests[cond_name]
                        means, _ = run_kalman(transition, kalman_obs, test.measurements,
                                              KalmanState(mean0, cov0))
                        value = correlation_coefficient(means[:, 0], test.states[:, 0])
                        cc.setdefault((name, cond_name), []).append(value)
                        rows_per_run.append([name, cond_name, str(seed), fmt17(value)])
                        trace_path = out_dir / f"trace_{name}_{cond_name}_seed{seed}.csv"
                        write_trace(trace_path, np.arange(1, means.shape[0] + 1),
                                    means, test.states)
                        written.append(trace_path)
                    continue
                gen_cfg = GenerationConfig(
                    model_count=int(decoder["model_count"]),
                    model_size=d_y - method["drop"],
                    perturbation_factor=method["perturbation_factor"],
                    seed=cand_seed,
                )
                models = generate_candidates(train, gen_cfg, ridge)
                ens_cfg = EnsembleConfig(
                    models=tuple(models),
                    transition=transition,
                    alpha=float(decoder["alpha"]),
                    n_particles=int(decoder["n_particles"]),
                    ess_threshold_fraction=float(decoder["ess_threshold_fraction"]),
                )
                for cond_index, (cond_name, _) in enumerate(conditions):
                    test = tests[cond_name]
                    rng_f = np.random.default_rng([filt_seed, cond_index])
                    init = initial_state(
                        ens_cfg, ParticleSet.from_gaussian(mean0, cov0, ens_cfg.n_particles, rng_f)
                    )
                    run = run_filter(ens_cfg, test.measurements, init, rng_f)
                    value = correlation_coefficient(run.estimates[:, 0], test.states[:, 0])
                    cc.setdefault((name, cond_name), []).append(value)
                    rows_per_run.append([name, cond_name, str(seed), fmt17(value)])
                    trace_path = out_dir / f"trace_{name}_{cond_name}_seed{seed}.csv"
                    write_trace(trace_path, np.arange(1, run.estimates.shape[0] + 1),
                                run.estimates, test.states, run.posteriors, run.ess)
                    written.append(trace_path)

    report_rows = []
    for method in methods:
        row = [method["name"]]
        for cond_name, _ in conditions:
            values = np.array(cc[(method["name"], cond_name)])
            row += [fmt17(values.mean()), fmt17(values.std())]
        report_rows.append(row)
    header = ["method"]
    for cond_name, _ in conditions:
        header += [f"{cond_name}_cc_mean", f"{cond_name}_cc_std"]
    report_path = out_dir / "report.csv"
    _write_csv(report_path, header, report_rows)
    runs_path = out_dir / "cc_runs.csv"
    _write_csv(runs_path, ["method", "condition", "seed", "cc"], rows_per_run)
    written += [report_path, runs_path, _write_resolved_config(cfg, out_dir)]
    return written


def run_sweep_scenario(cfg: ExperimentConfig, out_dir) -> list[Path]:
    """CC against one decoder parameter, all others at their rest values."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    data_cfg = cfg.sections["data"]
    decoder = cfg.sections["decoder"]
    sweep = cfg.sections["sweep"]
    parameter = sweep["parameter"]
    d_y = int(decoder["channels"])
    ridge = float(decoder["ridge"])

    rows = []
    with _BackendGuard(cfg.backend):
        for value in sweep["values"]:
            settings = dict(decoder)
            settings[parameter] = value
            if parameter in ("model_size", "model_count", "n_particles"):
                settings[parameter] = int(value)
            else:
                settings[parameter] = float(value)
            if not (1 <= settings["model_size"] <= d_y):
                raise ConfigError(f"swept model_size {value} outside [1, {d_y}]")
            values_cc = []
            for seed in cfg.seeds:
                data_seed, cand_seed, filt_seed, _ = _derive_streams(seed)
                spec = SynthCortexSpec(**data_cfg, seed=data_seed)
                full = synth_cortex(spec)
                train_rows, test_rows = _split_rows(full.n_bins)
                ranked = rank_channels(full.slice(train_rows.start, train_rows.stop), 0, d_y)
                selected = full.select_channels(ranked)
                train = selected.slice(train_rows.start, train_rows.stop)
                test = selected.slice(test_rows.start, test_rows.stop)
                transition = fit_state_transition(train, ridge)
                mean0, cov0 = state_moments(train.states)
                gen_cfg = GenerationConfig(
                    model_count=int(settings["model_count"]),
                    model_size=int(settings["model_size"]),
                    perturbation_factor=float(settings["perturbation_factor"]),
                    seed=cand_seed,
                )
                models = generate_candidates(train, gen_cfg, ridge)
                ens_cfg = EnsembleConfig(
                    models=tuple(models),
                    transition=transition,
                    alpha=float(settings["alpha"]),
                    n_particles=int(settings["n_particles"]),
                    ess_threshold_fraction=float(settings["ess_threshold_fraction"]),
                )
                rng_f = np.random.default_rng([filt_seed, 0])
                init = initial_state(
                    ens_cfg, ParticleSet.from_gaussian(mean0, cov0, ens_cfg.n_particles, rng_f)
                )
                run = run_filter(ens_cfg, test.measurements, init, rng_f)
                values_cc.append(correlation_coefficient(run.estimates[:, 0], test.states[:, 0]))
            arr = np.array(values_cc)
            rows.append([fmt17(value), fmt17(arr.mean()), fmt17(arr.std())])

    sweep_path = out_dir / f"sweep_{parameter}.csv"
    _write_csv(sweep_path, [parameter, "cc_mean", "cc_std"], rows)
    return [sweep_path, _write_resolved_config(cfg, out_dir)]


_RUNNERS = {
    "simulation": run_simulation_scenario,
    "synth-decode": run_decode_scenario,
    "sweep": run_sweep_scenario,
}

_COMMAND_SCENARIO = {"simulate": "simulation", "decode": "synth-decode", "sweep": "sweep"}


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="dynens",
        description="Dynamic-ensemble decoding experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for command, scenario in _COMMAND_SCENARIO.items():
        p = sub.add_parser(command, help=f"run the {scenario} scenario")
        p.add_argument("--config", default=None, help="JSON config path (defaults apply if omitted)")
        p.add_argument("--out", required=True, help="output directory")
    args = parser.parse_args(argv)

    scenario = _COMMAND_SCENARIO[args.command]
    try:
        cfg = ExperimentConfig.from_dict(_load_config(args.config), scenario)
        written = _RUNNERS[scenario](cfg, args.out)
    except DynensError as exc:
        json.dump({"error": type(exc).__name__, "message": str(exc)}, sys.stderr)
        sys.stderr.write("\n")
        return 1
    except OSError as exc:
        json.dump(
            {"error": type(exc).__name__, "message": str(exc),
             "path": getattr(exc, "filename", None)},
            sys.stderr,
        )
        sys.stderr.write("\n")
        return 1
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
