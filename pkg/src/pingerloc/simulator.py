"""Acoustic test rig: synthesize pinger bursts, propagate them spherically to
each hydrophone, emulate the analog front end, and add artificial noise.

Propagation is exact in time: each channel evaluates the continuous-time
burst expression at t - r/c per sample, so true inter-channel delays are not
quantized to the sample grid. Spreading is 1/r. Every stochastic step is a
pure function of its inputs and the seed.
"""

from __future__ import annotations

import numpy as np
from scipy import signal as sps

from .dsp import design_bandpass, filter_signal
from .recording import MultiChannelRecording
from .scene import NoiseSpec, PingerSource, Scenario, validate_array

__all__ = ["synthesize_ping", "ping_waveform", "render_scene", "add_noise"]

RAMP_DURATION = 0.5e-3  # raised-cosine on/off ramp; a hard-keyed burst
                        # splatters energy across the band


def ping_waveform(t: np.ndarray, pinger: PingerSource) -> np.ndarray:
    """Continuous-time source signal sampled at arbitrary times ``t``
    (seconds): a raised-cosine-ramped sinusoidal burst at the carrier,
    repeating every repetition_interval, silent before t = 0."""
    t = np.asarray(t, dtype=float)
    period = pinger.repetition_interval
    u = np.mod(t, period)
    in_burst = (t >= 0.0) & (u < pinger.ping_duration)
    out = np.zeros_like(t)
    if not in_burst.any():
        return out

    ub = u[in_burst]
    ramp = min(RAMP_DURATION, pinger.ping_duration / 2.0)
    env = np.ones_like(ub)
    rising = ub < ramp
    env[rising] = 0.5 * (1.0 - np.cos(np.pi * ub[rising] / ramp))
    falling = ub > pinger.ping_duration - ramp
    env[falling] = 0.5 * (1.0 - np.cos(np.pi * (pinger.ping_duration - ub[falling]) / ramp))
    out[in_burst] = pinger.amplitude * env * np.sin(2.0 * np.pi * pinger.frequency * ub)
    return out


def synthesize_ping(pinger: PingerSource, sample_rate: float, duration: float) -> np.ndarray:
    """Source signal sampled on the regular grid t = n / sample_rate for
    round(duration * sample_rate) samples."""
    if duration <= 0:
        raise ValueError(f"duration must be > 0, got {duration}")
    n = int(round(duration * sample_rate))
    t = np.arange(n) / sample_rate
    return ping_waveform(t, pinger)


def render_scene(scenario: Scenario) -> MultiChannelRecording:
    """Simulate one capture: per channel, gain * bandpass(source(t - r/c) / r)
    plus noise drawn from the scenario seed. Deterministic given the seed."""
    report = validate_array(scenario.array, scenario.pinger.frequency, scenario.sound_speed)
    if not report.ok:
        raise ValueError("array fails validation: " + "; ".join(report.violations))

    fs = scenario.sample_rate
    n = int(round(scenario.record_duration * fs))
    t = np.arange(n) / fs
    source = scenario.pinger.position.as_array()
    fe = scenario.front_end
    cascade = design_bandpass(fe.analog_order, fe.analog_band_low, fe.analog_band_high, fs)

    positions = [scenario.array.channel_position(ch) for ch in range(8)]
    channels = np.empty((8, n), dtype=np.float32)
    for ch, pos in enumerate(positions):
        r = float(np.linalg.norm(source - pos.as_array()))
        if r < 1e-6:
            raise ValueError(f"pinger coincides with hydrophone on channel {ch}")
        delay = r / scenario.sound_speed
        if delay >= scenario.record_duration:
            raise ValueError(
                f"pinger out of recording window: arrival {delay:.4f} s on channel "
                f"{ch} is past record_duration {scenario.record_duration} s"
            )
        pressure = ping_waveform(t - delay, scenario.pinger) / r
        channels[ch] = (fe.gain * filter_signal(cascade, pressure)).astype(np.float32)

    clean = MultiChannelRecording(sample_rate=fs, channels=channels)
    return add_noise(clean, scenario.noise, scenario.seed)


def add_noise(recording: MultiChannelRecording, noise: NoiseSpec, seed: int) -> MultiChannelRecording:
    """New recording with per-channel noise added: white Gaussian, a
    narrowband interferer with a per-channel random phase, and low-passed
    white noise rescaled to RMS lowfreq_amp. Deterministic given the seed."""
    if noise.is_silent():
        return MultiChannelRecording(sample_rate=recording.sample_rate,
                                     channels=recording.channels.copy())

    rng = np.random.default_rng(seed)
    fs = recording.sample_rate
    n = recording.samples_per_channel
    t = np.arange(n) / fs

    lp_sos = None
    if noise.lowfreq_amp > 0 and 0 < noise.lowfreq_cutoff < fs / 2:
        lp_sos = sps.butter(2, noise.lowfreq_cutoff, btype="lowpass", output="sos", fs=fs)

    out = np.empty_like(recording.channels, dtype=np.float32)
    for ch in range(recording.channel_count):
        total = recording.channels[ch].astype(float)
        if noise.white_sigma > 0:
            total = total + rng.normal(0.0, noise.white_sigma, n)
        if noise.interferer_amp > 0:
            phase = rng.uniform(0.0, 2.0 * np.pi)
            total = total + noise.interferer_amp * np.sin(
                2.0 * np.pi * noise.interferer_freq * t + phase
            )
        if noise.lowfreq_amp > 0:
            raw = rng.normal(0.0, 1.0, n)
            if lp_sos is not None:
                raw = sps.sosfilt(lp_sos, raw)
            rms = float(np.sqrt(np.mean(np.square(raw))))
            if rms > 0:
                total = total + noise.lowfreq_amp / rms * raw
        out[ch] = total.astype(np.float32)

    return MultiChannelRecording(sample_rate=fs, channels=out)
