"""Software front-end: Butterworth bandpass filtering, ping onset detection,
cross-correlation delay estimation, and variance-based selection of a stable
analysis window.

Filtering is causal (forward only). The group delay is then identical on
every channel and cancels in every pairwise time difference, which is what
the delay estimates feed on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import signal as sps

from .recording import MultiChannelRecording
from .scene import HydrophoneArray

__all__ = [
    "BiquadCascade",
    "DelayEstimate",
    "TdoaSet",
    "WindowParams",
    "NoPingError",
    "UnstableWindowError",
    "DegenerateSignalError",
    "design_bandpass",
    "filter_signal",
    "detect_ping",
    "estimate_delay",
    "select_stable_window",
]


class NoPingError(RuntimeError):
    """No ping onset was found."""


class UnstableWindowError(RuntimeError):
    """Every candidate window shows too much delay variance."""


class DegenerateSignalError(ValueError):
    """Correlation input has no energy."""


@dataclass(frozen=True)
class BiquadCascade:
    """Cascade of second-order sections. ``sos`` is the (n_sections, 6)
    coefficient array, rows [b0, b1, b2, 1, a1, a2]."""

    sos: np.ndarray
    order: int
    f_lo: float
    f_hi: float
    fs: float

    def __post_init__(self):
        sos = np.asarray(self.sos, dtype=float)
        if sos.ndim != 2 or sos.shape[1] != 6:
            raise ValueError(f"sos must have shape (n_sections, 6), got {sos.shape}")
        sos.setflags(write=False)
        object.__setattr__(self, "sos", sos)

    @property
    def n_sections(self) -> int:
        return self.sos.shape[0]

    def pole_radii(self) -> np.ndarray:
        radii = []
        for row in self.sos:
            poles = np.roots([1.0, row[4], row[5]])
            radii.extend(np.abs(poles))
        return np.array(radii)

    def is_stable(self) -> bool:
        return bool(np.all(self.pole_radii() < 1.0))

    def frequency_response(self, freqs: np.ndarray) -> np.ndarray:
        """Complex response of the cascade at the given frequencies (Hz),
        evaluated section by section on the unit circle."""
        z_inv = np.exp(-2j * np.pi * np.asarray(freqs, dtype=float) / self.fs)
        h = np.ones_like(z_inv)
        for b0, b1, b2, _, a1, a2 in self.sos:
            h *= (b0 + b1 * z_inv + b2 * z_inv**2) / (1.0 + a1 * z_inv + a2 * z_inv**2)
        return h


@dataclass(frozen=True)
class DelayEstimate:
    """Arrival-time difference between two channels: positive delta_t means
    channel ``pair[0]`` receives later than ``pair[1]``."""

    pair: tuple[int, int]
    delta_t: float
    peak_correlation: float


@dataclass(frozen=True)
class TdoaSet:
    """Everything the position solver consumes: the reference channel's
    absolute onset, the six pairwise delays over the precise quad measured in
    the chosen window, and the coarse channels' absolute onsets."""

    reference_channel: int
    onset_time_abs: float
    pairwise: tuple[DelayEstimate, ...]
    coarse_arrivals: dict[int, float]
    window: tuple[int, int]


@dataclass(frozen=True)
class WindowParams:
    """Tuning for the stable-window search. ``max_variance`` is the cap on
    the summed (over pairs) delay variance across sub-windows, in seconds
    squared; None means half a sample period squared at the recording rate."""

    window_duration: float = 2e-3
    hop: float = 0.5e-3
    num_windows: int = 8
    num_subwindows: int = 4
    k_threshold: float = 5.0
    rms_window: float = 1e-3
    max_variance: float | None = None
    sound_speed: float = 1480.0
    # Extra correlation lags beyond the physical bound. Keep at 0: with
    # sub-half-wavelength spacing the physical bound excludes the correlation
    # peaks one carrier cycle off; widening the search re-admits them.
    lag_margin: int = 0


def design_bandpass(order: int, f_lo: float, f_hi: float, fs: float) -> BiquadCascade:
    """Butterworth bandpass of the given total order (even, >= 2): analog
    prototype, band transform, bilinear transform with prewarped edges,
    factored into order/2 biquads. Band edges land at 1/sqrt(2) of the
    passband peak."""
    if not (0 < f_lo < f_hi < fs / 2):
        raise ValueError(f"band must satisfy 0 < f_lo < f_hi < fs/2, got {f_lo}/{f_hi} at fs={fs}")
    if order < 2 or order % 2 != 0:
        raise ValueError(f"order must be even and >= 2, got {order}")
    sos = sps.butter(order // 2, [f_lo, f_hi], btype="bandpass", output="sos", fs=fs)
    return BiquadCascade(sos=sos, order=order, f_lo=f_lo, f_hi=f_hi, fs=fs)


def filter_signal(cascade: BiquadCascade, samples: np.ndarray) -> np.ndarray:
    """Causal forward filtering with zero initial state; output length equals
    input length."""
    # sosfilt wants a writable coefficient buffer; the cascade's is frozen.
    return sps.sosfilt(np.array(cascade.sos), np.asarray(samples, dtype=float))


def _moving_rms(samples: np.ndarray, window: int) -> np.ndarray:
    """Trailing RMS over the last ``window`` samples (shorter at the start)."""
    x2 = np.square(np.asarray(samples, dtype=float))
    csum = np.concatenate(([0.0], np.cumsum(x2)))
    n = len(x2)
    idx = np.arange(n)
    lo = np.maximum(idx - window + 1, 0)
    counts = idx - lo + 1
    sums = csum[idx + 1] - csum[lo]
    return np.sqrt(np.maximum(sums, 0.0) / counts)


def detect_ping(samples: np.ndarray, fs: float, k_threshold: float = 5.0,
                rms_window: float = 1e-3) -> int:
    """Index of the first sample whose trailing moving RMS exceeds
    ``k_threshold`` times the noise floor (the median moving RMS)."""
    if k_threshold <= 1:
        raise ValueError(f"k_threshold must be > 1, got {k_threshold}")
    w = max(1, int(round(rms_window * fs)))
    rms = _moving_rms(samples, w)
    floor = float(np.median(rms))
    above = rms > k_threshold * floor
    if not above.any():
        raise NoPingError("no ping detected")
    return int(np.argmax(above))


def estimate_delay(a: np.ndarray, b: np.ndarray, fs: float, max_lag_samples: int) -> DelayEstimate:
    """Normalized cross-correlation delay between two equal-length windows,
    searched over lags within +/- max_lag_samples and refined to sub-sample
    precision with a three-point parabolic fit of the correlation peak."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"inputs must be equal-length 1-D arrays, got {a.shape} and {b.shape}")
    norm = float(np.linalg.norm(a) * np.linalg.norm(b))
    if norm == 0.0:
        raise DegenerateSignalError("degenerate signal: zero energy")
    max_lag = int(max_lag_samples)
    if max_lag < 0 or max_lag > len(a) - 1:
        raise ValueError(f"max_lag_samples must be in [0, {len(a) - 1}], got {max_lag}")

    # corr[k] = sum_n a[n] b[n - lag] with lag = k - (len(b) - 1); a copy of a
    # delayed by d in b peaks at lag -d.
    corr = np.correlate(a, b, mode="full")
    center = len(b) - 1
    window = corr[center - max_lag : center + max_lag + 1]
    k = int(np.argmax(window))
    lag = float(k - max_lag)

    # Parabolic vertex through the peak and its immediate neighbors.
    j = center + int(lag)
    if 0 < j < len(corr) - 1:
        y_m, y_0, y_p = corr[j - 1], corr[j], corr[j + 1]
        denom = y_m - 2.0 * y_0 + y_p
        if denom < 0.0:
            offset = 0.5 * (y_m - y_p) / denom
            lag += float(np.clip(offset, -1.0, 1.0))
    lag = float(np.clip(lag, -max_lag, max_lag))

    peak = float(np.clip(window[k] / norm, -1.0, 1.0))
    return DelayEstimate(pair=(-1, -1), delta_t=lag / fs, peak_correlation=peak)


def _pair_indices() -> list[tuple[int, int]]:
    return [(i, j) for i in range(4) for j in range(i + 1, 4)]


def _window_pair_delays(filtered: list[np.ndarray], start: int, length: int,
                        fs: float, max_lag: int) -> np.ndarray | None:
    """Delays (seconds) for all six precise pairs over one slice, or None if
    any slice has no energy."""
    slices = [ch[start : start + length] for ch in filtered]
    delays = np.empty(6)
    for idx, (i, j) in enumerate(_pair_indices()):
        try:
            delays[idx] = estimate_delay(slices[i], slices[j], fs, max_lag).delta_t
        except DegenerateSignalError:
            return None
    return delays


def select_stable_window(recording: MultiChannelRecording, cascade: BiquadCascade,
                         array: HydrophoneArray, params: WindowParams | None = None,
                         start_sample: int = 0) -> TdoaSet:
    """Filter all channels, find the ping onset on the reference (first
    precise) channel, then slide overlapping candidate windows from the onset
    and keep the one whose six pairwise delays are most repeatable across
    sub-windows. Returns the TdoaSet measured over the winning window, plus
    per-channel coarse onsets.

    ``start_sample`` restricts the onset search to samples at or after it,
    which lets a caller step through successive ping repetitions.
    """
    params = params or WindowParams()
    fs = recording.sample_rate
    if recording.channel_count != 8:
        raise ValueError(f"expected 8 channels, got {recording.channel_count}")

    filtered_by_channel = {
        ch: filter_signal(cascade, recording.channels[ch])
        for ch in range(recording.channel_count)
    }
    return tdoa_from_filtered(filtered_by_channel, fs, array, params, start_sample)


def tdoa_from_filtered(filtered_by_channel: dict[int, np.ndarray], fs: float,
                       array: HydrophoneArray, params: WindowParams,
                       start_sample: int = 0, diagnostics: dict | None = None) -> TdoaSet:
    """Stable-window search on already-filtered channels; see
    select_stable_window. If ``diagnostics`` is a dict it is filled with the
    candidate window starts, their variance scores, and the chosen index."""
    ref_channel = array.precise_channels[0]
    n_total = len(filtered_by_channel[ref_channel])
    if start_sample >= n_total:
        raise NoPingError("no ping detected: search start beyond recording")

    ref = filtered_by_channel[ref_channel][start_sample:]
    try:
        onset_rel = detect_ping(ref, fs, params.k_threshold, params.rms_window)
    except NoPingError:
        raise NoPingError(f"no ping detected on reference channel {ref_channel}") from None
    onset = start_sample + onset_rel

    win_len = int(round(params.window_duration * fs))
    hop = max(1, int(round(params.hop * fs)))
    sub_len = win_len // params.num_subwindows
    if sub_len < 2:
        raise ValueError("window too short for the configured sub-window count")

    max_lag = int(math.ceil(array.max_precise_spacing() / params.sound_speed * fs)) + params.lag_margin
    max_lag = min(max_lag, sub_len - 1)

    precise = [filtered_by_channel[ch] for ch in array.precise_channels]
    starts = [onset + k * hop for k in range(params.num_windows)
              if onset + k * hop + win_len <= n_total]
    if not starts:
        raise NoPingError("no ping: recording too short for one analysis window after onset")

    # Score each candidate by the summed sample variance of the pairwise
    # delays across its sub-windows; a window overlapping a glitch or the
    # burst's tail scores high and loses.
    scores = np.full(len(starts), np.inf)
    for w, start in enumerate(starts):
        sub_delays = np.empty((params.num_subwindows, 6))
        ok = True
        for s in range(params.num_subwindows):
            delays = _window_pair_delays(precise, start + s * sub_len, sub_len, fs, max_lag)
            if delays is None:
                ok = False
                break
            sub_delays[s] = delays
        if ok:
            scores[w] = float(np.var(sub_delays, axis=0, ddof=1).sum())

    best = int(np.argmin(scores))
    best_var = float(scores[best])
    if diagnostics is not None:
        diagnostics["candidate_starts"] = list(starts)
        diagnostics["variance_scores"] = [float(s) for s in scores]
        diagnostics["chosen_candidate"] = best
    if not np.isfinite(best_var):
        raise UnstableWindowError("unstable window: no candidate produced usable delays")
    max_variance = params.max_variance if params.max_variance is not None else (0.5 / fs) ** 2
    if best_var > max_variance:
        raise UnstableWindowError(
            f"unstable window: best summed delay variance {best_var:.3e} s^2 "
            f"exceeds limit {max_variance:.3e} s^2"
        )

    chosen = starts[best]
    full_max_lag = min(
        int(math.ceil(array.max_precise_spacing() / params.sound_speed * fs)) + params.lag_margin,
        win_len - 1,
    )
    # No true delay can exceed the widest spacing over c; noise-pushed
    # estimates snap back to the feasible interval.
    bound = array.max_precise_spacing() / params.sound_speed
    pairwise = []
    channels = array.precise_channels
    for i, j in _pair_indices():
        est = estimate_delay(
            precise[i][chosen : chosen + win_len],
            precise[j][chosen : chosen + win_len],
            fs,
            full_max_lag,
        )
        pairwise.append(DelayEstimate(pair=(channels[i], channels[j]),
                                      delta_t=float(np.clip(est.delta_t, -bound, bound)),
                                      peak_correlation=est.peak_correlation))

    coarse_arrivals = {}
    for ch in array.coarse_channels:
        try:
            idx = detect_ping(filtered_by_channel[ch][start_sample:], fs,
                              params.k_threshold, params.rms_window)
        except NoPingError:
            raise NoPingError(f"no ping detected on coarse channel {ch}") from None
        coarse_arrivals[ch] = (start_sample + idx) / fs

    return TdoaSet(
        reference_channel=ref_channel,
        onset_time_abs=onset / fs,
        pairwise=tuple(pairwise),
        coarse_arrivals=coarse_arrivals,
        window=(chosen, win_len),
    )
