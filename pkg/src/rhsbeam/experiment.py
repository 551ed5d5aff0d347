"""Experiment configuration, scenario generation, Monte-Carlo execution, and I/O.

Determinism contract: every output is a pure function of (config, seed).
User placements for trial t are drawn from a generator keyed by
(seed, 0, t); slot noise is keyed per user by (seed, 1, t, user).  Trials are
therefore independent of execution order and worker count, and the emitted
CSV/JSONL files are byte-identical across reruns.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import codebooks as cb
from . import training
from .beamformer import (DegenerateGeometryError, assemble_holographic,
                         design_digital_beamformer, leaky_power, sum_rate,
                         throughput, training_error)
from .model import ArrayModel, ConfigError, PolarPosition, SystemConfig, User, psi_mu_from_polar
from .optimizer import SampleGrid

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
SCENARIO_RANGES = {"near": (3.0, 20.0), "far": (80.0, 150.0), "hybrid": (3.0, 150.0)}

TRIAL_CSV_COLUMNS = ("schema_version", "config_hash", "seed", "trial", "snr_db",
                     "scheme", "k_users", "slots_paper", "slots_raw",
                     "mean_error", "sum_rate", "throughput", "leaky_ok")
SUMMARY_CSV_COLUMNS = ("schema_version", "config_hash", "scheme", "snr_db",
                       "k_users", "n_trials", "error_mean", "error_std",
                       "rate_mean", "rate_std", "throughput_mean", "throughput_std")

# Desk profile: 64 elements at 10 GHz with 0.75-lambda spacing.  The spacing
# keeps S = 5 within the layer bound log2(range * N * d / lambda) (= 5.58)
# while staying below the grating-lobe limit, and the longer wavelength gives
# the small aperture enough quadratic-phase spread to resolve the J = 5
# distance rings; alpha is scaled so the on-surface attenuation across the
# aperture matches the full-scale setup.
DESK_PROFILE = {"frequency_hz": 10e9, "n_elements": 64,
                "element_spacing_m": 0.0225, "alpha_per_m": 0.9,
                "n_psi": 32, "n_mu": 5, "n_layers": 5,
                "k_users": 3, "trials": 100}
PAPER_PROFILE = {"n_elements": 256, "n_psi": 64, "n_mu": 10, "n_layers": 6,
                 "k_users": 10, "trials": 100}
PROFILES = {"desk": DESK_PROFILE, "paper": PAPER_PROFILE}


@dataclass(frozen=True)
class ExperimentConfig:
    """Full description of one experiment; all outputs derive from this + seed."""

    system: SystemConfig = field(default_factory=SystemConfig)
    psi_min: float = -0.5
    psi_max: float = 0.5
    mu_min: float = 0.005           # 1/m
    mu_max: float = 0.33            # 1/m
    n_psi: int = 32                 # I, angle samplings
    n_mu: int = 5                   # J, distance samplings
    n_layers: int = 5               # S, hierarchical codebook depth
    k_users: int = 3
    scenario: str = "hybrid"
    r_min: float | None = None      # m; None -> scenario default
    r_max: float | None = None
    snr_db: tuple = (0.0, 10.0, 20.0)
    trials: int = 100
    schemes: tuple = training.SCHEMES
    q_candidates: int = 3
    frame_slots: int = 500
    seed: int = 1
    sweeps: int = 20

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.k_users < 1:
            raise ConfigError("n_users must be >= 1")
        if self.scenario not in SCENARIO_RANGES:
            raise ConfigError(f"unknown scenario {self.scenario!r}")
        if self.k_users > self.system.n_feeds:
            raise ConfigError("n_users must not exceed n_feeds (one RF chain "
                              "per stream)")
        if self.n_psi != 1 << self.n_layers:
            raise ConfigError(f"n_angle_samples={self.n_psi} must equal "
                              f"2^n_layers = {1 << self.n_layers}")
        for s in self.schemes:
            if s not in training.SCHEMES:
                raise ConfigError(f"unknown scheme {s!r}")
        if not self.snr_db:
            raise ConfigError("snr_db list must be non-empty")
        lo, hi = self.r_range
        if lo <= 0 or hi < lo:
            raise ConfigError("scenario r range must satisfy 0 < r_min <= r_max")
        # r range must stay inside the region the mu bounds can represent
        psi_abs = max(abs(self.psi_min), abs(self.psi_max))
        implied_lo = (1.0 - psi_abs ** 2) / self.mu_max
        implied_hi = 1.0 / self.mu_min if self.mu_min > 0 else math.inf
        if lo < implied_lo * (1 - 1e-9) or hi > implied_hi * (1 + 1e-9):
            raise ConfigError(
                f"scenario r range [{lo}, {hi}] outside [{implied_lo:.4g}, "
                f"{implied_hi:.4g}] implied by the mu bounds")

    @property
    def r_range(self) -> tuple[float, float]:
        lo, hi = SCENARIO_RANGES[self.scenario]
        return (self.r_min if self.r_min is not None else lo,
                self.r_max if self.r_max is not None else hi)

    def grid(self) -> SampleGrid:
        return SampleGrid(psi_min=self.psi_min, psi_max=self.psi_max,
                          mu_min=self.mu_min, mu_max=self.mu_max,
                          n_psi=self.n_psi, n_mu=self.n_mu)

    def config_hash_hex(self) -> str:
        return self.system.config_hash().hex()


_EXPERIMENT_KEYS = {
    "psi_min": ("psi_min", float),
    "psi_max": ("psi_max", float),
    "mu_min": ("mu_min", float),
    "mu_max": ("mu_max", float),
    "n_angle_samples": ("n_psi", int),
    "n_distance_samples": ("n_mu", int),
    "n_layers": ("n_layers", int),
    "n_users": ("k_users", int),
    "scenario": ("scenario", str),
    "r_min_m": ("r_min", float),
    "r_max_m": ("r_max", float),
    "trials": ("trials", int),
    "q_candidates": ("q_candidates", int),
    "frame_slots": ("frame_slots", int),
    "seed": ("seed", int),
    "sweeps": ("sweeps", int),
}


def parse_config_file(path) -> dict:
    """Read a declarative ``key = value`` file ('#' starts a comment)."""
    kv = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            if not key or not value:
                raise ConfigError(f"{path}:{lineno}: empty key or value")
            kv[key] = value
    return kv


def make_config(profile: str = "desk", file_kv: dict | None = None,
                overrides: dict | None = None) -> ExperimentConfig:
    """Assemble a config: profile defaults <- config file <- explicit overrides."""
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r} (use desk or paper)")
    kv = dict(file_kv or {})
    system_kv = {k: v for k, v in kv.items()
                 if k in ("frequency_hz", "n_elements", "element_spacing_m",
                          "n_feeds", "k_s_rad_per_m", "alpha_per_m", "eta",
                          "power_w", "noise_var_w")}
    exp_kwargs = dict(PROFILES[profile])
    for sys_key in ("frequency_hz", "n_elements", "element_spacing_m", "alpha_per_m"):
        if sys_key in exp_kwargs:
            system_kv.setdefault(sys_key, exp_kwargs.pop(sys_key))
    try:
        system = SystemConfig.from_mapping(system_kv)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad system configuration: {exc}") from exc

    for key, value in kv.items():
        if key in system_kv or key == "n_elements":
            continue
        if key == "snr_db":
            exp_kwargs["snr_db"] = tuple(float(x) for x in str(value).split(","))
        elif key == "schemes":
            exp_kwargs["schemes"] = tuple(s.strip() for s in str(value).split(","))
        elif key in _EXPERIMENT_KEYS:
            attr, cast = _EXPERIMENT_KEYS[key]
            exp_kwargs[attr] = cast(value)
        else:
            raise ConfigError(f"unknown configuration key {key!r}")
    exp_kwargs.update(overrides or {})
    try:
        return ExperimentConfig(system=system, **exp_kwargs)
    except TypeError as exc:
        raise ConfigError(f"bad experiment configuration: {exc}") from exc


@dataclass(frozen=True)
class CodebookSet:
    """All pre-built codebooks one experiment needs."""

    angular: cb.AngularCodebook
    single_beam: cb.SingleBeamCodebook
    far_field: cb.AngularCodebook         # angle-only baseline codebook
    far_beams: cb.SingleBeamCodebook      # mu = 0 beams for the DFT baseline


CODEBOOK_FILES = {"angular": "angular.rhscb", "single_beam": "single_beam.rhscb",
                  "far_field": "far_field.rhscb", "far_beams": "far_beams.rhscb"}


def build_codebooks(config: ExperimentConfig, array: ArrayModel | None = None) -> CodebookSet:
    """Generate the four codebooks for this configuration (one-time cost)."""
    if array is None:
        array = ArrayModel.from_config(config.system)
    grid = config.grid()
    log.info("building angular codebook (S=%d, I=%d, J=%d)...",
             config.n_layers, config.n_psi, config.n_mu)
    angular = cb.build_angular_codebook(grid, array, config.n_layers,
                                        sweeps=config.sweeps)
    log.info("building single-beam codebook (%d patterns)...",
             config.n_psi * config.n_mu)
    single_beam = cb.build_single_beam_codebook(grid, array, sweeps=config.sweeps)
    log.info("building far-field baseline codebook...")
    far_field = cb.build_far_field_codebook(grid, array, config.n_layers,
                                            sweeps=config.sweeps)
    log.info("building mu=0 sweep beams (%d patterns)...", config.n_psi)
    far_beams = cb.build_far_field_single_beams(grid, array, sweeps=config.sweeps)
    return CodebookSet(angular=angular, single_beam=single_beam,
                       far_field=far_field, far_beams=far_beams)


def save_codebooks(books: CodebookSet, out_dir, config: ExperimentConfig) -> None:
    import os
    os.makedirs(out_dir, exist_ok=True)
    digest = config.system.config_hash()
    for name, filename in CODEBOOK_FILES.items():
        cb.save_codebook(getattr(books, name), os.path.join(out_dir, filename), digest)


def load_codebooks(dir_path, config: ExperimentConfig) -> CodebookSet:
    """Load the codebook set written by ``save_codebooks``/gen-codebook."""
    import os
    digest = config.system.config_hash()
    loaded = {}
    for name, filename in CODEBOOK_FILES.items():
        path = os.path.join(dir_path, filename)
        if not os.path.exists(path):
            raise ConfigError(f"codebook file {path} not found; "
                              f"run 'rhsbeam gen-codebook' first")
        loaded[name] = cb.load_codebook(path, expected_hash=digest)
    return CodebookSet(**loaded)


def snr_db_to_noise_variance(snr_db: float) -> float:
    """SNR is defined as 1/sigma^2, so sigma^2 = 10^(-SNR_dB / 10)."""
    return 10.0 ** (-snr_db / 10.0)


def sample_users(scenario, k_users: int, rng: np.random.Generator,
                 psi_bounds: tuple[float, float] = (-0.5, 0.5)) -> list:
    """K users with theta uniform over the codebook angle span and r uniform
    over the scenario range; unit path gain."""
    if isinstance(scenario, str):
        r_lo, r_hi = SCENARIO_RANGES[scenario]
    else:
        r_lo, r_hi = scenario
    if r_hi < r_lo or r_lo <= 0:
        raise ValueError("empty or invalid r range")
    theta_lo = math.acos(psi_bounds[1])   # cos is decreasing
    theta_hi = math.acos(psi_bounds[0])
    users = []
    for u in range(k_users):
        theta = rng.uniform(theta_lo, theta_hi)
        r = rng.uniform(r_lo, r_hi)
        users.append(User(id=u, position=psi_mu_from_polar(PolarPosition(r, theta))))
    return users


def placement_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed, 0, trial)))


def _run_scheme(scheme: str, users, books: CodebookSet, array: ArrayModel,
                mm: training.MeasurementModel, q_candidates: int):
    if scheme == "proposed":
        return training.run_two_phase(users, books.angular, books.single_beam,
                                      array, mm)
    if scheme == "exhaustive":
        return training.run_exhaustive(users, books.single_beam, array, mm)
    if scheme == "far_field":
        return training.run_far_field(users, books.far_field, array, mm)
    if scheme == "two_stage":
        return training.run_two_stage(users, books.angular, books.single_beam,
                                      array, mm)
    if scheme == "dft_distance":
        return training.run_dft_distance(users, books.far_beams,
                                         books.single_beam, array, mm,
                                         q_candidates=q_candidates)
    raise ConfigError(f"unknown scheme {scheme!r}")


def run_trial(config: ExperimentConfig, array: ArrayModel, books: CodebookSet,
              trial: int):
    """All schemes x SNR points for one trial; returns (record, csv_rows)."""
    users = sample_users(config.r_range, config.k_users,
                         placement_rng(config.seed, trial),
                         psi_bounds=(config.psi_min, config.psi_max))
    hash_hex = config.config_hash_hex()
    channels = training._channel_matrix(users, array)
    results = []
    rows = []
    for snr in config.snr_db:
        sigma2 = snr_db_to_noise_variance(snr)
        for scheme in config.schemes:
            mm = training.MeasurementModel(k_users=config.k_users,
                                           noise_variance=sigma2,
                                           master_seed=config.seed,
                                           trial_index=trial)
            transcript = _run_scheme(scheme, users, books, array, mm,
                                     config.q_candidates)
            errors = [training_error(u.position, (p, m)) for u, p, m in
                      zip(users, transcript.psi_hat, transcript.mu_hat)]
            patterns = [books.single_beam.pattern(i, j if j is not None else 1)
                        for i, j in zip(transcript.angle_index,
                                        transcript.distance_index)]
            hb = assemble_holographic(patterns, array)
            digital = design_digital_beamformer(channels, hb,
                                                config.system.power, sigma2)
            metrics = sum_rate(channels, hb.matrix, digital.matrix, sigma2)
            thpt = throughput(metrics.sum_rate, transcript.slots_paper,
                              config.frame_slots)
            leak = leaky_power(hb, digital.matrix, config.system.eta)
            leaky_ok = leak <= config.system.power * (1 + 1e-9)
            if not leaky_ok:
                log.warning("trial %d %s snr=%g: leaky power %.4g exceeds "
                            "budget %.4g", trial, scheme, snr, leak,
                            config.system.power)
            mean_error = float(np.mean(errors))
            results.append({
                "snr_db": snr, "scheme": scheme,
                "slots_raw": transcript.slots_raw,
                "slots_paper": transcript.slots_paper,
                "errors": errors, "mean_error": mean_error,
                "rates": metrics.per_user_rate, "sum_rate": metrics.sum_rate,
                "throughput": thpt, "leaky_power": leak, "leaky_ok": leaky_ok,
                "transcript": transcript.to_dict(),
            })
            rows.append({
                "schema_version": SCHEMA_VERSION, "config_hash": hash_hex,
                "seed": config.seed, "trial": trial, "snr_db": snr,
                "scheme": scheme, "k_users": config.k_users,
                "slots_paper": transcript.slots_paper,
                "slots_raw": transcript.slots_raw,
                "mean_error": mean_error, "sum_rate": metrics.sum_rate,
                "throughput": thpt, "leaky_ok": leaky_ok,
            })
    record = {
        "schema_version": SCHEMA_VERSION, "config_hash": hash_hex,
        "seed": config.seed, "trial": trial,
        "users": [{"id": u.id, "psi": u.position.psi, "mu": u.position.mu}
                  for u in users],
        "results": results,
    }
    return record, rows


_WORKER_CTX: dict = {}


def _init_worker(config, books):
    _WORKER_CTX["config"] = config
    _WORKER_CTX["array"] = ArrayModel.from_config(config.system)
    _WORKER_CTX["books"] = books


def _worker_trial(trial: int):
    return run_trial(_WORKER_CTX["config"], _WORKER_CTX["array"],
                     _WORKER_CTX["books"], trial)


def run_experiment(config: ExperimentConfig, books: CodebookSet | None = None,
                   workers: int = 1):
    """Run all trials; returns (records, rows) ordered by trial index.

    Identical output for any ``workers`` value: trials are keyed by index,
    not execution order.
    """
    array = ArrayModel.from_config(config.system)
    if books is None:
        books = build_codebooks(config, array)
    if workers <= 1:
        results = [run_trial(config, array, books, t) for t in range(config.trials)]
    else:
        with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker,
                                 initargs=(config, books)) as pool:
            results = list(pool.map(_worker_trial, range(config.trials)))
    records = [rec for rec, _ in results]
    rows = [row for _, trial_rows in results for row in trial_rows]
    return records, rows


def aggregate(rows) -> list:
    """Group trial rows by (scheme, snr_db, k_users); mean/std of the metrics."""
    rows = list(rows)
    if not rows:
        raise ValueError("no records to aggregate")
    groups: dict = {}
    for row in rows:
        groups.setdefault((row["scheme"], row["snr_db"], row["k_users"]), []).append(row)
    summary = []
    for key in sorted(groups, key=lambda k: (k[0], k[1], k[2])):
        scheme, snr, k_users = key
        batch = groups[key]
        err = np.array([r["mean_error"] for r in batch])
        rate = np.array([r["sum_rate"] for r in batch])
        thpt = np.array([r["throughput"] for r in batch])
        summary.append({
            "schema_version": SCHEMA_VERSION,
            "config_hash": batch[0]["config_hash"],
            "scheme": scheme, "snr_db": snr, "k_users": k_users,
            "n_trials": len(batch),
            "error_mean": float(err.mean()), "error_std": float(err.std()),
            "rate_mean": float(rate.mean()), "rate_std": float(rate.std()),
            "throughput_mean": float(thpt.mean()),
            "throughput_std": float(thpt.std()),
        })
    return summary


def _format_cell(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(rows, columns, path) -> None:
    """Deterministic CSV: fixed column order, repr() floats, \\n line ends."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_format_cell(row[c]) for c in columns) + "\n")


def write_records_jsonl(records, path) -> None:
    """One JSON document per trial, sorted keys for byte stability."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True, separators=(",", ":")) + "\n")
