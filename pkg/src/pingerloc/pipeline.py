"""End-to-end localization: recording (simulated or loaded) -> bandpass ->
stable-window TDOA -> octant guess -> gradient descent -> azimuth report
stream, plus a Monte Carlo evaluation harness.

Reports serialize as newline-delimited JSON. Per-stage timings are carried on
each report but left out of the serialized stream unless asked for, so runs
with the same seed are byte-identical.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from . import dsp, guess as guess_mod, simulator, solver
from .recording import MultiChannelRecording
from .scene import (
    ConfigError,
    NoiseSpec,
    PingerSource,
    Scenario,
    Vec3,
    default_array,
    octant_of,
    true_azimuth_elevation,
    validate_array,
)

__all__ = [
    "AzimuthReport",
    "MonteCarloConfig",
    "MonteCarloSummary",
    "run_localization",
    "monte_carlo",
    "write_monte_carlo_csv",
    "measure_burst_rms",
    "white_sigma_for_snr",
    "monte_carlo_config_from_dict",
    "FAILED_TRIAL_AZ_ERROR",
]

# Azimuth error charged to a trial whose pipeline failed outright (no ping,
# unstable window, ...): the worst possible bearing error.
FAILED_TRIAL_AZ_ERROR = 180.0

MC_CSV_COLUMNS = [
    "trial", "range_m", "snr_db", "true_az_deg", "est_az_deg", "az_err_deg",
    "octant_true", "octant_guess", "converged", "objective", "iters",
]


@dataclass(frozen=True)
class AzimuthReport:
    """One localized ping. ``window`` is (start sample, length) of the chosen
    analysis window; ``timing`` holds per-stage milliseconds."""

    ping_index: int
    azimuth: float
    elevation: float
    range: float
    octant_guess: str
    objective: float
    converged: bool
    window: tuple[int, int]
    timing: dict[str, float]

    def to_json_dict(self, include_timing: bool = False) -> dict:
        doc = {
            "ping_index": self.ping_index,
            "azimuth": self.azimuth,
            "elevation": self.elevation,
            "range": self.range,
            "octant_guess": self.octant_guess,
            "objective": self.objective,
            "converged": self.converged,
            "window": list(self.window),
        }
        if include_timing:
            doc["timing"] = self.timing
        return doc


def run_localization(scenario: Scenario, recording: MultiChannelRecording | None = None,
                     window_params: dsp.WindowParams | None = None,
                     solver_params: solver.SolverParams | None = None,
                     init_range: float = guess_mod.DEFAULT_INIT_RANGE,
                     debug_sink: list | None = None) -> Iterator[AzimuthReport]:
    """Yield one AzimuthReport per detected ping repetition, in time order.

    With ``recording`` None the scenario is rendered first; otherwise the
    scenario only supplies geometry, sound speed, and filter band. Passing a
    list as ``debug_sink`` collects one window-search diagnostic dict per
    ping. Deterministic given the scenario seed.
    """
    report = validate_array(scenario.array, scenario.pinger.frequency, scenario.sound_speed)
    if not report.ok:
        raise ConfigError("array fails validation: " + "; ".join(report.violations))

    t_start = time.perf_counter()
    if recording is None:
        recording = simulator.render_scene(scenario)
    render_ms = (time.perf_counter() - t_start) * 1e3
    if recording.channel_count != 8:
        raise ConfigError(f"expected an 8-channel recording, got {recording.channel_count}")

    fs = recording.sample_rate
    fe = scenario.front_end
    cascade = dsp.design_bandpass(fe.analog_order, fe.analog_band_low, fe.analog_band_high, fs)
    params = window_params or dsp.WindowParams(sound_speed=scenario.sound_speed)

    t_start = time.perf_counter()
    filtered = {ch: dsp.filter_signal(cascade, recording.channels[ch])
                for ch in range(recording.channel_count)}
    filter_ms = (time.perf_counter() - t_start) * 1e3

    # After a ping is handled, resume the search just ahead of the next
    # repetition slot. Searching right after the burst instead would trip on
    # the filters' decaying tails in quiet recordings.
    span = (params.num_windows - 1) * params.hop + params.window_duration
    past_burst = max(scenario.pinger.ping_duration, span) + 2.5e-3
    skip = int(round(max(scenario.pinger.repetition_interval - 2e-3, past_burst) * fs))
    min_margin = 2.0 / fs
    coarse_positions = list(scenario.array.coarse)

    cursor = 0
    ping_index = 0
    while True:
        diagnostics: dict | None = {} if debug_sink is not None else None
        t_stage = time.perf_counter()
        try:
            tdoa = dsp.tdoa_from_filtered(filtered, fs, scenario.array, params,
                                          start_sample=cursor, diagnostics=diagnostics)
        except dsp.NoPingError:
            if ping_index == 0:
                raise
            return
        tdoa_ms = (time.perf_counter() - t_stage) * 1e3

        t_stage = time.perf_counter()
        arrivals = [tdoa.coarse_arrivals[ch] for ch in scenario.array.coarse_channels]
        octant = guess_mod.octant_guess(arrivals, coarse_positions, scenario.sound_speed,
                                        init_range=init_range, min_margin=min_margin)
        guess_ms = (time.perf_counter() - t_stage) * 1e3

        t_stage = time.perf_counter()
        result = solver.gradient_descent(octant.init, tdoa, scenario.array,
                                         scenario.sound_speed, solver_params)
        solve_ms = (time.perf_counter() - t_stage) * 1e3

        if debug_sink is not None:
            debug_sink.append({
                "ping_index": ping_index,
                "window": list(tdoa.window),
                "pair_delays_us": {f"{i}-{j}": est.delta_t * 1e6
                                   for (i, j), est in
                                   ((est.pair, est) for est in tdoa.pairwise)},
                **(diagnostics or {}),
            })

        yield AzimuthReport(
            ping_index=ping_index,
            azimuth=result.azimuth,
            elevation=result.elevation,
            range=result.range,
            octant_guess=octant.octant.as_string(),
            objective=result.objective,
            converged=result.converged,
            window=tdoa.window,
            timing={"render": render_ms, "filter": filter_ms, "tdoa": tdoa_ms,
                    "guess": guess_ms, "solve": solve_ms},
        )
        ping_index += 1
        cursor = int(round(tdoa.onset_time_abs * fs)) + skip


def measure_burst_rms(recording: MultiChannelRecording, scenario: Scenario) -> float:
    """RMS of the first burst on the channel of the nearest hydrophone,
    measured over [arrival, arrival + ping_duration]. Meant for noiseless
    renders; this is the signal side of the SNR definition."""
    source = scenario.pinger.position.as_array()
    fs = recording.sample_rate
    best_channel, best_r = 0, np.inf
    for ch in range(8):
        r = float(np.linalg.norm(source - scenario.array.channel_position(ch).as_array()))
        if r < best_r:
            best_channel, best_r = ch, r
    start = int(round(best_r / scenario.sound_speed * fs))
    stop = start + int(round(scenario.pinger.ping_duration * fs))
    burst = recording.channels[best_channel][start:stop].astype(float)
    if burst.size == 0:
        raise ValueError("burst window is empty; arrival beyond recording")
    return float(np.sqrt(np.mean(np.square(burst))))


def white_sigma_for_snr(burst_rms: float, snr_db: float, band_low: float,
                        band_high: float, fs: float) -> float:
    """White-noise sigma that puts the in-band noise RMS at
    burst_rms / 10^(snr_db/20). White noise of sigma s has RMS
    s * sqrt(2 (f_hi - f_lo) / fs) inside the band."""
    band_fraction = 2.0 * (band_high - band_low) / fs
    if not (0 < band_fraction <= 1):
        raise ValueError(f"band {band_low}..{band_high} invalid at fs={fs}")
    return burst_rms * 10.0 ** (-snr_db / 20.0) / math.sqrt(band_fraction)


@dataclass(frozen=True)
class MonteCarloConfig:
    """Evaluation grid: every (range, SNR) cell runs ``trials`` randomized
    pinger placements. An SNR of None means zero noise; otherwise white noise
    is calibrated per trial to the requested in-band SNR at the nearest
    hydrophone. Placements keep at least ``clearance`` meters from every
    octant boundary plane so the true octant is unambiguous."""

    ranges: tuple[float, ...]
    snr_db: tuple[float | None, ...]
    trials: int
    seed: int = 0
    success_threshold_deg: float = 5.0
    clearance: float = 1.0
    sample_rate: float = 500_000.0
    sound_speed: float = 1480.0
    carrier_freq: float = 40_000.0
    ping_duration: float = 4e-3
    # One repetition per trial; 50 ms still covers a 30 m arrival (~20 ms)
    # plus the analysis window span.
    repetition_interval: float = 0.05

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError(f"trials must be >= 1, got {self.trials}")
        if not self.ranges or not self.snr_db:
            raise ConfigError("ranges and snr_db must be non-empty")


@dataclass(frozen=True)
class MonteCarloSummary:
    trials: int
    success_count: int
    az_err_p50: float
    az_err_p90: float
    az_err_max: float
    octant_accuracy: float
    cells: tuple[dict, ...]

    def to_json_dict(self) -> dict:
        return {
            "trials": self.trials,
            "success_count": self.success_count,
            "success_fraction": self.success_count / self.trials,
            "az_err_p50": self.az_err_p50,
            "az_err_p90": self.az_err_p90,
            "az_err_max": self.az_err_max,
            "octant_accuracy": self.octant_accuracy,
            "cells": list(self.cells),
        }


def monte_carlo_config_from_dict(doc: dict) -> MonteCarloConfig:
    if not isinstance(doc, dict):
        raise ConfigError("eval config must be a JSON object")
    for key in ("ranges", "snr_db", "trials"):
        if key not in doc:
            raise ConfigError(f"eval config missing required field '{key}'")
    kwargs = {}
    for name in ("seed", "trials"):
        if name in doc:
            kwargs[name] = int(doc[name])
    for name in ("success_threshold_deg", "clearance", "sample_rate", "sound_speed",
                 "carrier_freq", "ping_duration", "repetition_interval"):
        if name in doc:
            kwargs[name] = float(doc[name])
    return MonteCarloConfig(
        ranges=tuple(float(r) for r in doc["ranges"]),
        snr_db=tuple(None if s is None else float(s) for s in doc["snr_db"]),
        **kwargs,
    )


def _azimuth_error_deg(est: float, true: float) -> float:
    return abs((est - true + 180.0) % 360.0 - 180.0)


def _sample_position(rng: np.random.Generator, radius: float, clearance: float) -> Vec3:
    # Uniform direction, resampled until every component clears the octant
    # boundary planes.
    while True:
        v = rng.normal(size=3)
        n = np.linalg.norm(v)
        if n < 1e-12:
            continue
        pos = radius * v / n
        if np.all(np.abs(pos) >= clearance):
            return Vec3.from_array(pos)


def _run_trial(config: MonteCarloConfig, cell_index: int, trial: int,
               radius: float, snr_db: float | None) -> dict:
    ss = np.random.SeedSequence(entropy=config.seed, spawn_key=(cell_index, trial))
    rng = np.random.default_rng(ss)
    position = _sample_position(rng, radius, config.clearance)

    scenario = Scenario(
        array=default_array(),
        pinger=PingerSource(position=position, frequency=config.carrier_freq,
                            ping_duration=config.ping_duration,
                            repetition_interval=config.repetition_interval),
        sound_speed=config.sound_speed,
        sample_rate=config.sample_rate,
        record_duration=config.repetition_interval,
        noise=NoiseSpec.silent(),
        seed=0,
    )
    clean = simulator.render_scene(scenario)
    if snr_db is None:
        recording = clean
    else:
        burst_rms = measure_burst_rms(clean, scenario)
        sigma = white_sigma_for_snr(burst_rms, snr_db,
                                    scenario.front_end.analog_band_low,
                                    scenario.front_end.analog_band_high,
                                    scenario.sample_rate)
        noise_seed = int(ss.generate_state(1, dtype=np.uint32)[0])
        recording = simulator.add_noise(clean, NoiseSpec(white_sigma=sigma,
                                                         interferer_amp=0.0,
                                                         lowfreq_amp=0.0), noise_seed)

    centroid = scenario.array.precise_centroid().as_array()
    true_dir = Vec3.from_array(position.as_array() - centroid)
    true_az, _ = true_azimuth_elevation(true_dir)
    coarse_centroid = scenario.array.coarse_centroid().as_array()
    octant_true = octant_of(Vec3.from_array(position.as_array() - coarse_centroid))

    row = {
        "trial": trial,
        "range_m": radius,
        "snr_db": snr_db,
        "true_az_deg": true_az,
        "est_az_deg": None,
        "az_err_deg": FAILED_TRIAL_AZ_ERROR,
        "octant_true": octant_true.as_string(),
        "octant_guess": "",
        "converged": False,
        "objective": None,
        "iters": 0,
    }
    # Run the stages directly (not via run_localization) so the solver's
    # iteration count is available for the CSV.
    fs = recording.sample_rate
    fe = scenario.front_end
    try:
        cascade = dsp.design_bandpass(fe.analog_order, fe.analog_band_low,
                                      fe.analog_band_high, fs)
        params = dsp.WindowParams(sound_speed=scenario.sound_speed)
        tdoa = dsp.select_stable_window(recording, cascade, scenario.array, params)
        arrivals = [tdoa.coarse_arrivals[ch] for ch in scenario.array.coarse_channels]
        octant = guess_mod.octant_guess(arrivals, list(scenario.array.coarse),
                                        scenario.sound_speed, min_margin=2.0 / fs)
        row["octant_guess"] = octant.octant.as_string()
        result = solver.gradient_descent(octant.init, tdoa, scenario.array,
                                         scenario.sound_speed)
    except (dsp.NoPingError, dsp.UnstableWindowError, guess_mod.UnresolvableAxisError,
            solver.SingularGeometryError, solver.DivergedError):
        return row

    row["est_az_deg"] = result.azimuth
    row["az_err_deg"] = _azimuth_error_deg(result.azimuth, true_az)
    row["converged"] = result.converged
    row["objective"] = result.objective
    row["iters"] = result.iterations
    return row


def monte_carlo(config: MonteCarloConfig) -> tuple[MonteCarloSummary, list[dict]]:
    """Run the full grid. Returns (summary, trial rows); deterministic given
    config.seed."""
    rows: list[dict] = []
    cells: list[dict] = []
    cell_index = 0
    for radius in config.ranges:
        for snr_db in config.snr_db:
            cell_rows = [
                _run_trial(config, cell_index, trial, radius, snr_db)
                for trial in range(config.trials)
            ]
            rows.extend(cell_rows)
            errors = np.array([r["az_err_deg"] for r in cell_rows])
            successes = sum(
                1 for r in cell_rows
                if r["converged"] and r["az_err_deg"] < config.success_threshold_deg
            )
            octant_hits = sum(1 for r in cell_rows if r["octant_guess"] == r["octant_true"])
            cells.append({
                "range_m": radius,
                "snr_db": snr_db,
                "trials": config.trials,
                "success_fraction": successes / config.trials,
                "az_err_p50": float(np.percentile(errors, 50)),
                "az_err_p90": float(np.percentile(errors, 90)),
                "az_err_max": float(errors.max()),
                "octant_accuracy": octant_hits / config.trials,
            })
            cell_index += 1

    errors = np.array([r["az_err_deg"] for r in rows])
    success_count = sum(
        1 for r in rows
        if r["converged"] and r["az_err_deg"] < config.success_threshold_deg
    )
    octant_hits = sum(1 for r in rows if r["octant_guess"] == r["octant_true"])
    summary = MonteCarloSummary(
        trials=len(rows),
        success_count=success_count,
        az_err_p50=float(np.percentile(errors, 50)),
        az_err_p90=float(np.percentile(errors, 90)),
        az_err_max=float(errors.max()),
        octant_accuracy=octant_hits / len(rows),
        cells=tuple(cells),
    )
    return summary, rows


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def write_monte_carlo_csv(path: str | Path, summary: MonteCarloSummary, rows: list[dict]) -> None:
    """Trial rows in run order, then one summary row (trial='summary') with
    the overall p50 error, octant accuracy, and success fraction."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MC_CSV_COLUMNS)
        for idx, row in enumerate(rows):
            writer.writerow([
                idx,
                _fmt(row["range_m"]),
                _fmt(row["snr_db"]),
                _fmt(row["true_az_deg"]),
                _fmt(row["est_az_deg"]),
                _fmt(row["az_err_deg"]),
                row["octant_true"],
                row["octant_guess"],
                _fmt(row["converged"]),
                _fmt(row["objective"]),
                _fmt(row["iters"]),
            ])
        writer.writerow([
            "summary", "", "",
            "", "",
            _fmt(summary.az_err_p50),
            "",
            _fmt(summary.octant_accuracy),
            _fmt(summary.success_count / summary.trials),
            "",
            _fmt(summary.trials),
        ])
