"""Experiment drivers: convergence traces, interferer-angle sweeps and beampatterns.

Every CSV starts with ``#`` provenance lines (scenario hash, seed and the
JSON config echo) so identical configurations give byte-identical files.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from risopt.channel_stats import (
    ChannelSampler,
    RicianSpec,
    build_statistics,
    rank_one_statistics,
)
from risopt.em_network import build_network, bs_combiner
from risopt.errors import ConfigError
from risopt.evaluator import (
    SNR_REFERENCES,
    beampattern,
    calibrate_noise,
    dbm_to_watts,
    instantaneous_sinr,
    monte_carlo_rate,
    summarize_pattern,
    trial_generators,
)
from risopt.geometry import default_scenario
from risopt.optimizer import AoConfig, ao_optimize, write_trace_csv
from risopt.ris_response import delta_mp

log = logging.getLogger(__name__)

VARIANTS = ("OPT-NoCSI", "CT-NoCSI", "OPT-CSI")
EXPERIMENTS = ("convergence", "angle-sweep", "beampattern", "calibrate")
PRESETS = ("paper-default",)
ANGLE_GRIDS = ("caption", "body")


def interferer_angles(grid: str = "caption") -> list[float]:
    """Interferer position angles: 12 steps of pi/32 from pi/8, or ``i pi/32`` for i = 1..15."""
    if grid == "caption":
        return [math.pi / 8 + i * math.pi / 32 for i in range(12)]
    if grid == "body":
        return [i * math.pi / 32 for i in range(1, 16)]
    raise ConfigError(f"unknown interferer grid {grid!r}; expected one of {ANGLE_GRIDS}")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything that determines an experiment's output files."""

    experiment: str = "convergence"
    preset: str = "paper-default"
    dx: tuple[float, ...] = (0.5, 0.25, 0.125)
    sigma: tuple[float, ...] = (0.0,)
    variants: tuple[str, ...] = VARIANTS
    interferer_grid: str = "caption"
    interferer_angles: tuple[float, ...] | None = None
    convergence_angles: tuple[float, ...] = (math.pi / 8, math.pi / 4, 3 * math.pi / 8)
    intended_angle: float = math.pi / 8
    beam_intended_deg: float = 22.5
    beam_interferer_deg: float = 45.0
    probe_step_deg: float = 0.5
    ue_distance: float = 10.0
    tx_power_dbm: float = 20.0
    frequency: float = 30e9
    snr_db: float = -20.0
    snr_reference: str = "per-antenna"
    calibration_configs: int = 100
    k_ris_ue: float = 10.0
    k_bs_ris: float = 20.0
    nlos_spread: float = math.pi / 6
    trials: int = 200
    csi_realizations: int = 20
    epsilon: float = 0.1
    max_iterations: int = 5000
    mse_tolerance: float = 1e-8
    n_starts: int = 1
    seed: int = 0
    workers: int = 1
    out: str = "results"
    cache_dir: str | None = None
    elevation_aware: bool = True

    def __post_init__(self):
        for name in ("dx", "sigma", "variants", "convergence_angles"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.interferer_angles is not None:
            object.__setattr__(self, "interferer_angles", tuple(self.interferer_angles))
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment must be one of {EXPERIMENTS}")
        if self.preset not in PRESETS:
            raise ConfigError(f"unknown preset {self.preset!r}")
        if not self.variants:
            raise ConfigError("at least one variant is required")
        bad = [v for v in self.variants if v not in VARIANTS]
        if bad:
            raise ConfigError(f"unknown variants {bad}; expected a subset of {VARIANTS}")
        if not self.dx or any(d <= 0 for d in self.dx):
            raise ConfigError("dx values must be positive (in wavelengths)")
        if not self.sigma or any(s < 0 for s in self.sigma):
            raise ConfigError("sigma values must be non-negative")
        if self.snr_reference not in SNR_REFERENCES:
            raise ConfigError(f"snr_reference must be one of {SNR_REFERENCES}")
        if self.interferer_grid not in ANGLE_GRIDS:
            raise ConfigError(f"interferer_grid must be one of {ANGLE_GRIDS}")
        if self.trials < 1 or self.csi_realizations < 1 or self.workers < 1:
            raise ConfigError("trials, csi_realizations and workers must be >= 1")
        if not 0.0 < self.probe_step_deg <= 0.5:
            raise ConfigError("probe_step_deg must lie in (0, 0.5]")
        try:
            AoConfig(epsilon=self.epsilon, max_iterations=self.max_iterations,
                     n_starts=self.n_starts)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    @property
    def tx_power(self) -> float:
        return dbm_to_watts(self.tx_power_dbm)

    @property
    def rician(self) -> RicianSpec:
        return RicianSpec(self.k_ris_ue, self.k_bs_ris, self.nlos_spread, self.nlos_spread)

    def angles(self) -> list[float]:
        if self.interferer_angles is not None:
            return list(self.interferer_angles)
        return interferer_angles(self.interferer_grid)

    def ao_config(self, model: str, seed: int) -> AoConfig:
        return AoConfig(epsilon=self.epsilon, max_iterations=self.max_iterations,
                        mse_tolerance=self.mse_tolerance, model=model, seed=seed,
                        n_starts=self.n_starts)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys {unknown}")
        return cls(**data)


def load_config(path) -> ExperimentConfig:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    return ExperimentConfig.from_dict(data)


def config_hash(payload: dict) -> str:
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


def derive_seed(base: int, *labels) -> int:
    """Stable child seed for a labelled job (labels may be ints, floats or strings)."""
    text = json.dumps([base, *labels])
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:4], "little")


def _header(config: ExperimentConfig, cell: dict, seed: int) -> list[str]:
    echo = config.to_dict()
    return [f"scenario_hash={config_hash({'config': echo, 'cell': cell})}",
            f"seed={seed}",
            f"cell={json.dumps(cell, sort_keys=True)}",
            f"config={json.dumps(echo, sort_keys=True)}"]


def _write_csv(path: Path, header: list[str], columns, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([repr(x) if isinstance(x, float) else x for x in row])


def _tag(value: float) -> str:
    return f"{value:g}".replace(".", "p")


def _map(fn, jobs, workers: int):
    if workers == 1 or len(jobs) <= 1:
        return [fn(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(fn, jobs))


@dataclass
class Cell:
    """A scenario instance: geometry, network, combiner, noise level and statistics."""

    geometry: object
    network: object
    v: np.ndarray
    noise_var: float
    stats: object = field(default=None)


def build_cell(config: ExperimentConfig, dx: float, sigma: float, ue_angles) -> Cell:
    geo = default_scenario(dx=dx, sigma=sigma, ue_angles=tuple(ue_angles),
                        ue_distance=config.ue_distance, tx_power=config.tx_power,
                        frequency=config.frequency)
    net = build_network(geo, cache_dir=config.cache_dir)
    v = bs_combiner(geo, config.elevation_aware)
    noise = calibrate_noise(net, geo, config.tx_power, config.snr_db,
                            config.calibration_configs, config.seed, config.snr_reference, v)
    stats = build_statistics(geo, config.rician, net, config.elevation_aware)
    return Cell(geo, net, v, noise, stats)


# -- convergence --------------------------------------------------------------

def convergence_cell(config: ExperimentConfig, dx: float, sigma: float):
    """MP optimization of the three-user scenario; returns ``(seed, AoResult, noise_var)``."""
    cell = build_cell(config, dx, sigma, config.convergence_angles)
    seed = derive_seed(config.seed, "convergence", dx, sigma)
    result = ao_optimize(cell.network, cell.stats, cell.v, cell.noise_var,
                         config.ao_config("MP", seed))
    return seed, result, cell.noise_var


def _convergence_job(args):
    config, dx, sigma = args
    return (dx, sigma, *convergence_cell(config, dx, sigma))


def run_convergence(config: ExperimentConfig) -> list[dict]:
    """One ``(iteration, rate_bound)`` trace per ``(dx, sigma)`` plus a summary file."""
    out = Path(config.out)
    jobs = [(config, dx, s) for dx in config.dx for s in config.sigma]
    summary = []
    for dx, sigma, seed, result, noise in _map(_convergence_job, jobs, config.workers):
        cell = {"experiment": "convergence", "dx": dx, "sigma": sigma}
        rows = [(r.iteration, r.rate_bound_bits) for r in result.trace if r.accepted]
        path = out / f"convergence_dx{_tag(dx)}_sigma{_tag(sigma)}.csv"
        _write_csv(path, _header(config, cell, seed), ("iteration", "rate_bound"), rows)
        write_trace_csv(result.trace, out / f"trace_dx{_tag(dx)}_sigma{_tag(sigma)}.csv",
                        _header(config, cell, seed))
        summary.append({"dx": dx, "sigma": sigma, "final_rate_bound": result.rate_bound,
                        "iterations": result.state.iteration, "converged": result.converged,
                        "noise_var": noise, "file": str(path)})
    _write_csv(out / "convergence_summary.csv",
               _header(config, {"experiment": "convergence"}, config.seed),
               ("dx", "sigma", "final_rate_bound", "iterations", "converged"),
               [(s["dx"], s["sigma"], s["final_rate_bound"], s["iterations"], int(s["converged"]))
                for s in summary])
    return summary


# -- interferer-angle sweep ---------------------------------------------------

@dataclass(frozen=True)
class SweepPoint:
    interferer_index: int
    interferer_angle: float
    variant: str
    mean_rate: float
    stderr: float
    rate_bound: float
    n_samples: int


def _nocsi_point(config, cell, variant, index, angle, sampler, mc_seed, ao_seed):
    model = "MP" if variant == "OPT-NoCSI" else "CT"
    result = ao_optimize(cell.network, cell.stats, cell.v, cell.noise_var,
                         config.ao_config(model, ao_seed))
    report = monte_carlo_rate(cell.geometry, config.rician, cell.network, result.b, cell.v,
                              cell.noise_var, config.trials, mc_seed, cell.stats, sampler)
    return SweepPoint(index, angle, variant, report.mean_rate, report.stderr,
                      report.rate_bound, report.n_trials)


def _csi_point(config, cell, index, angle, sampler, mc_seed, ao_seed):
    """Per-realization optimization with perfectly known channels, then the realized rate."""
    powers = [ue.tx_power for ue in cell.geometry.ues]
    rates, bounds = [], []
    for j, rng in enumerate(trial_generators(mc_seed, config.csi_realizations)):
        real = sampler.sample(rng)
        stats = rank_one_statistics(real.t_e[0], real.t_e[1:], powers)
        net = cell.network.with_channels(s=real.s_e)
        result = ao_optimize(net, stats, cell.v, cell.noise_var,
                             config.ao_config("MP", derive_seed(ao_seed, j)))
        gamma = instantaneous_sinr(real.s_e, real.t_e, delta_mp(net, result.b), cell.v,
                                   cell.noise_var, powers)
        rates.append(math.log2(1.0 + gamma))
        bounds.append(result.rate_bound)
    rates = np.array(rates)
    stderr = float(np.std(rates, ddof=1) / math.sqrt(len(rates))) if len(rates) > 1 else 0.0
    return SweepPoint(index, angle, "OPT-CSI", float(np.mean(rates)), stderr,
                      float(np.mean(bounds)), len(rates))


def sweep_point(config: ExperimentConfig, dx: float, sigma: float, index: int, angle: float,
                variant: str) -> SweepPoint:
    """One (interferer position, variant) point of the sweep.

    Monte Carlo realizations share the same seed lineage across variants so
    that the variants are compared on identical channels.
    """
    cell = build_cell(config, dx, sigma, (config.intended_angle, angle))
    sampler = ChannelSampler(cell.geometry, config.rician, cell.network, config.elevation_aware)
    mc_seed = derive_seed(config.seed, "sweep-mc", dx, sigma, index)
    ao_seed = derive_seed(config.seed, "sweep-ao", dx, sigma, index, variant)
    if variant == "OPT-CSI":
        return _csi_point(config, cell, index, angle, sampler, mc_seed, ao_seed)
    return _nocsi_point(config, cell, variant, index, angle, sampler, mc_seed, ao_seed)


def _sweep_job(args):
    return args[1], args[2], sweep_point(*args)


SWEEP_COLUMNS = ("interferer_index", "interferer_angle", "variant", "mean_rate", "stderr",
                 "rate_bound", "n_samples")


def run_angle_sweep(config: ExperimentConfig) -> dict:
    """Rates of every variant versus interferer position, one CSV per ``(sigma, dx)``."""
    out = Path(config.out)
    angles = config.angles()
    jobs = [(config, dx, s, i + 1, a, var) for s in config.sigma for dx in config.dx
            for i, a in enumerate(angles) for var in config.variants]
    results: dict[tuple[float, float], list[SweepPoint]] = {}
    for dx, sigma, point in _map(_sweep_job, jobs, config.workers):
        results.setdefault((dx, sigma), []).append(point)
    for (dx, sigma), points in results.items():
        cell = {"experiment": "angle-sweep", "dx": dx, "sigma": sigma}
        path = out / f"sweep_sigma{_tag(sigma)}_dx{_tag(dx)}.csv"
        _write_csv(path, _header(config, cell, config.seed), SWEEP_COLUMNS,
                   [dataclasses.astuple(p) for p in points])
    return results


# -- beampattern --------------------------------------------------------------

BEAM_VARIANT_MODELS = {"OPT-NoCSI": "MP", "CT-NoCSI": "CT"}
NULL_SEARCH_HALF_WIDTH_DEG = 2.0


@dataclass(frozen=True)
class BeamResult:
    dx: float
    sigma: float
    variant: str
    angles_deg: np.ndarray
    power_db: np.ndarray
    peak_angle_deg: float
    peak_db: float
    level_at_interferer_db: float
    null_depth_db: float
    beamwidth_deg: float


def beam_point(config: ExperimentConfig, dx: float, sigma: float, variant: str) -> BeamResult:
    """Optimize for the two-user beam scenario and sweep a single probe transmitter."""
    if variant not in BEAM_VARIANT_MODELS:
        raise ConfigError(f"beampattern supports variants {tuple(BEAM_VARIANT_MODELS)}")
    cell = build_cell(config, dx, sigma, (math.radians(config.beam_intended_deg),
                                          math.radians(config.beam_interferer_deg)))
    seed = derive_seed(config.seed, "beam", dx, sigma, variant)
    result = ao_optimize(cell.network, cell.stats, cell.v, cell.noise_var,
                         config.ao_config(BEAM_VARIANT_MODELS[variant], seed))
    n = int(round(90.0 / config.probe_step_deg))
    deg = np.linspace(0.0, 90.0, n + 1)
    power = beampattern(cell.network, cell.geometry, result.b, cell.v, np.radians(deg),
                        config.ue_distance, config.tx_power)
    summary = summarize_pattern(deg, power, (deg[0], deg[-1]), config.beam_interferer_deg)
    probe = config.beam_interferer_deg
    near = np.abs(deg - probe) <= NULL_SEARCH_HALF_WIDTH_DEG
    null_level = float(np.min(power[near]))
    return BeamResult(dx, sigma, variant, deg, power, summary.peak_angle, summary.peak_db,
                      summary.level_at_probe_db, summary.peak_db - null_level,
                      summary.beamwidth_3db)


def _beam_job(args):
    return beam_point(*args)


def run_beampattern(config: ExperimentConfig) -> list[BeamResult]:
    """Pattern files per ``(sigma, dx, variant)`` and a peak/null summary."""
    out = Path(config.out)
    variants = [v for v in config.variants if v in BEAM_VARIANT_MODELS]
    if not variants:
        raise ConfigError("beampattern needs OPT-NoCSI and/or CT-NoCSI")
    jobs = [(config, dx, s, var) for s in config.sigma for dx in config.dx for var in variants]
    results = _map(_beam_job, jobs, config.workers)
    for r in results:
        cell = {"experiment": "beampattern", "dx": r.dx, "sigma": r.sigma, "variant": r.variant}
        path = out / f"beam_sigma{_tag(r.sigma)}_dx{_tag(r.dx)}_{r.variant}.csv"
        _write_csv(path, _header(config, cell, config.seed), ("angle_deg", "power_db"),
                   zip(r.angles_deg.tolist(), r.power_db.tolist()))
    _write_csv(out / "beam_summary.csv", _header(config, {"experiment": "beampattern"}, config.seed),
               ("sigma", "dx", "variant", "peak_angle_deg", "peak_db", "level_at_interferer_db",
                "null_depth_db", "beamwidth_deg"),
               [(r.sigma, r.dx, r.variant, r.peak_angle_deg, r.peak_db, r.level_at_interferer_db,
                 r.null_depth_db, r.beamwidth_deg) for r in results])
    return results


# -- calibration --------------------------------------------------------------

def run_calibrate(config: ExperimentConfig) -> list[dict]:
    rows = []
    for dx in config.dx:
        cell = build_cell(config, dx, 0.0, (config.intended_angle,))
        rows.append({"dx": dx, "noise_var": cell.noise_var, "reference": config.snr_reference,
                     "snr_db": config.snr_db})
    _write_csv(Path(config.out) / "calibration.csv",
               _header(config, {"experiment": "calibrate"}, config.seed),
               ("dx", "noise_var"), [(r["dx"], r["noise_var"]) for r in rows])
    return rows


RUNNERS = {
    "convergence": run_convergence,
    "angle-sweep": run_angle_sweep,
    "beampattern": run_beampattern,
    "calibrate": run_calibrate,
}


def ensure_writable(out) -> Path:
    path = Path(out)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {path}: {exc}") from exc
    if not os.access(path, os.W_OK):
        raise ConfigError(f"output directory {path} is not writable")
    return path


def run(config: ExperimentConfig):
    ensure_writable(config.out)
    return RUNNERS[config.experiment](config)
