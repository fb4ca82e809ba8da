"""Scene description: coordinate frame, hydrophone array geometry, pinger and
recording configuration, plus the exact geometric helpers (propagation delay,
bearing angles, octant classification).

Body frame convention used throughout this package: +x forward, +y left,
+z up, positions in meters. Azimuth is measured counterclockwise from +x,
reported in degrees [0, 360); elevation is the angle above the horizontal
plane, in degrees [-90, 90].
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

__all__ = [
    "ConfigError",
    "Vec3",
    "OctantId",
    "HydrophoneArray",
    "PingerSource",
    "NoiseSpec",
    "ChannelModel",
    "Scenario",
    "ValidationReport",
    "validate_array",
    "propagation_delay",
    "true_azimuth_elevation",
    "octant_of",
    "default_array",
    "default_scenario",
    "scenario_from_dict",
    "scenario_to_dict",
    "load_scenario",
]

DEFAULT_SOUND_SPEED = 1480.0  # m/s, freshwater pool around 20 C
DEFAULT_SAMPLE_RATE = 500_000.0  # Hz, 12.5 samples per 40 kHz carrier cycle

# Hydrophones closer than this are considered coincident.
MIN_HYDROPHONE_SEPARATION = 1e-6


class ConfigError(ValueError):
    """Invalid or incomplete scene/scenario configuration."""


@dataclass(frozen=True)
class Vec3:
    """Point or direction in the body frame, meters."""

    x: float
    y: float
    z: float

    def __post_init__(self):
        for name in ("x", "y", "z"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ConfigError(f"Vec3.{name} must be finite, got {v!r}")
            object.__setattr__(self, name, float(v))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    @classmethod
    def from_array(cls, a: Iterable[float]) -> "Vec3":
        ax, ay, az = (float(v) for v in a)
        return cls(ax, ay, az)


@dataclass(frozen=True)
class OctantId:
    """Octant as three sign bits, one per body axis (True = positive side)."""

    sx: bool
    sy: bool
    sz: bool

    def as_string(self) -> str:
        return "".join("+" if s else "-" for s in (self.sx, self.sy, self.sz))

    @classmethod
    def from_string(cls, s: str) -> "OctantId":
        if len(s) != 3 or any(ch not in "+-" for ch in s):
            raise ConfigError(f"octant string must be three of '+'/'-', got {s!r}")
        return cls(*(ch == "+" for ch in s))

    def signs(self) -> np.ndarray:
        """Unit signs per axis as floats (+1.0 or -1.0)."""
        return np.array([1.0 if s else -1.0 for s in (self.sx, self.sy, self.sz)])

    def negated(self) -> "OctantId":
        return OctantId(not self.sx, not self.sy, not self.sz)

    def __str__(self) -> str:
        return self.as_string()


@dataclass(frozen=True)
class HydrophoneArray:
    """Eight hydrophones: a tight 4-element quad used for correlation delays
    and a widely separated 4-element quad used for coarse arrival-order
    guessing.

    ``labels`` maps hydrophones to recording channel indices: the first four
    entries label the precise quad, the last four the coarse quad.
    """

    precise: tuple[Vec3, ...]
    coarse: tuple[Vec3, ...]
    labels: tuple[int, ...] = (0, 1, 2, 3, 4, 5, 6, 7)

    def __post_init__(self):
        object.__setattr__(self, "precise", tuple(self.precise))
        object.__setattr__(self, "coarse", tuple(self.coarse))
        object.__setattr__(self, "labels", tuple(int(v) for v in self.labels))
        if len(self.precise) != 4:
            raise ConfigError(f"precise quad must have 4 hydrophones, got {len(self.precise)}")
        if len(self.coarse) != 4:
            raise ConfigError(f"coarse quad must have 4 hydrophones, got {len(self.coarse)}")
        if len(self.labels) != 8:
            raise ConfigError(f"labels must list 8 channel indices, got {len(self.labels)}")

    @property
    def precise_channels(self) -> tuple[int, ...]:
        return self.labels[:4]

    @property
    def coarse_channels(self) -> tuple[int, ...]:
        return self.labels[4:]

    def all_positions(self) -> tuple[Vec3, ...]:
        return self.precise + self.coarse

    def channel_position(self, channel: int) -> Vec3:
        try:
            idx = self.labels.index(channel)
        except ValueError:
            raise ConfigError(f"no hydrophone labeled channel {channel}") from None
        return self.all_positions()[idx]

    def precise_positions_array(self) -> np.ndarray:
        """Precise-quad positions as a (4, 3) array, quad order."""
        return np.array([p.as_array() for p in self.precise])

    def coarse_positions_array(self) -> np.ndarray:
        return np.array([p.as_array() for p in self.coarse])

    def precise_centroid(self) -> Vec3:
        return Vec3.from_array(self.precise_positions_array().mean(axis=0))

    def coarse_centroid(self) -> Vec3:
        return Vec3.from_array(self.coarse_positions_array().mean(axis=0))

    def max_precise_spacing(self) -> float:
        pos = self.precise_positions_array()
        dists = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
        return float(dists.max())


@dataclass(frozen=True)
class PingerSource:
    """Periodic sinusoidal-burst source. ``amplitude`` is the source strength
    referenced to 1 m (pressure at distance r falls off as amplitude/r)."""

    position: Vec3
    frequency: float = 40_000.0
    ping_duration: float = 4e-3
    repetition_interval: float = 2.0
    amplitude: float = 1.0

    def __post_init__(self):
        if self.frequency <= 0:
            raise ConfigError(f"pinger frequency must be > 0, got {self.frequency}")
        if not (0 < self.ping_duration < self.repetition_interval):
            raise ConfigError(
                "ping_duration must satisfy 0 < ping_duration < repetition_interval, "
                f"got {self.ping_duration} / {self.repetition_interval}"
            )
        if self.amplitude <= 0:
            raise ConfigError(f"pinger amplitude must be > 0, got {self.amplitude}")


@dataclass(frozen=True)
class NoiseSpec:
    """Additive noise: white Gaussian, a narrowband interferer, and
    low-passed broadband noise in the thruster band."""

    white_sigma: float = 0.01
    interferer_amp: float = 0.02
    interferer_freq: float = 18_000.0
    lowfreq_amp: float = 0.02
    lowfreq_cutoff: float = 8_000.0

    def __post_init__(self):
        for name in ("white_sigma", "interferer_amp", "lowfreq_amp"):
            if getattr(self, name) < 0:
                raise ConfigError(f"NoiseSpec.{name} must be >= 0")
        for name in ("interferer_freq", "lowfreq_cutoff"):
            if getattr(self, name) < 0:
                raise ConfigError(f"NoiseSpec.{name} must be >= 0")

    def is_silent(self) -> bool:
        return self.white_sigma == 0 and self.interferer_amp == 0 and self.lowfreq_amp == 0

    @classmethod
    def silent(cls) -> "NoiseSpec":
        return cls(white_sigma=0.0, interferer_amp=0.0, lowfreq_amp=0.0)


@dataclass(frozen=True)
class ChannelModel:
    """Analog front-end per channel: fixed voltage gain followed by a
    Butterworth bandpass, emulated digitally at the recording rate."""

    gain: float = 10.0
    analog_band_low: float = 30_000.0
    analog_band_high: float = 50_000.0
    analog_order: int = 4

    def __post_init__(self):
        if self.gain <= 0:
            raise ConfigError(f"front-end gain must be > 0, got {self.gain}")
        if not (0 < self.analog_band_low < self.analog_band_high):
            raise ConfigError(
                f"analog band must satisfy 0 < low < high, got "
                f"{self.analog_band_low} / {self.analog_band_high}"
            )
        if self.analog_order < 2 or self.analog_order % 2 != 0:
            raise ConfigError(f"analog_order must be even and >= 2, got {self.analog_order}")


@dataclass(frozen=True)
class Scenario:
    """Full description of one simulated capture."""

    array: HydrophoneArray
    pinger: PingerSource
    sound_speed: float = DEFAULT_SOUND_SPEED
    sample_rate: float = DEFAULT_SAMPLE_RATE
    record_duration: float = 2.0
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    front_end: ChannelModel = field(default_factory=ChannelModel)
    seed: int = 0

    def __post_init__(self):
        if self.sound_speed <= 0:
            raise ConfigError(f"sound_speed must be > 0, got {self.sound_speed}")
        if self.sample_rate <= 2 * self.pinger.frequency:
            raise ConfigError(
                f"sample_rate {self.sample_rate} violates Nyquist for carrier "
                f"{self.pinger.frequency}"
            )
        if self.record_duration < self.pinger.repetition_interval:
            raise ConfigError(
                f"record_duration {self.record_duration} shorter than repetition "
                f"interval {self.pinger.repetition_interval}"
            )
        if self.front_end.analog_band_high >= self.sample_rate / 2:
            raise ConfigError(
                f"front-end band edge {self.front_end.analog_band_high} must be "
                f"below Nyquist {self.sample_rate / 2}"
            )
        if self.seed < 0:
            raise ConfigError(f"seed must be a non-negative integer, got {self.seed}")


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    violations: tuple[str, ...]


def propagation_delay(source: Vec3, hydrophone: Vec3, sound_speed: float) -> float:
    """Straight-path travel time from source to hydrophone, seconds."""
    if sound_speed <= 0:
        raise ConfigError(f"sound_speed must be > 0, got {sound_speed}")
    return float(np.linalg.norm(source.as_array() - hydrophone.as_array())) / sound_speed


def true_azimuth_elevation(direction: Vec3) -> tuple[float, float]:
    """Bearing of ``direction``: (azimuth degrees in [0, 360), elevation
    degrees in [-90, 90]). Raises on a zero-length direction."""
    d = direction.as_array()
    n = np.linalg.norm(d)
    if n == 0:
        raise ValueError("undefined bearing: direction has zero length")
    azimuth = math.degrees(math.atan2(d[1], d[0])) % 360.0
    elevation = math.degrees(math.atan2(d[2], math.hypot(d[0], d[1])))
    return azimuth, elevation


def octant_of(direction: Vec3) -> OctantId:
    """Sign pattern of the direction's components; exact zeros classify as
    positive so the result is a total function."""
    return OctantId(direction.x >= 0, direction.y >= 0, direction.z >= 0)


def validate_array(array: HydrophoneArray, frequency: float, sound_speed: float) -> ValidationReport:
    """Check array geometry against the carrier: every precise-quad pairwise
    spacing at most half a wavelength (keeps inter-channel delays within half
    a carrier period, so correlation peaks are unambiguous), coarse quad
    straddling the origin on every axis, channel labels unique, and no two
    hydrophones coincident. Violations are reported as data, never raised.
    """
    if frequency <= 0 or sound_speed <= 0:
        raise ConfigError("frequency and sound_speed must be > 0")

    violations: list[str] = []

    labels = array.labels
    if sorted(labels) != list(range(8)):
        violations.append(f"channel labels must be a permutation of 0..7, got {labels}")

    positions = np.array([p.as_array() for p in array.all_positions()])
    for i in range(8):
        for j in range(i + 1, 8):
            d = float(np.linalg.norm(positions[i] - positions[j]))
            if d <= MIN_HYDROPHONE_SEPARATION:
                violations.append(f"hydrophones {i} and {j} coincide (distance {d:.3e} m)")

    half_wavelength = sound_speed / (2.0 * frequency)
    precise = array.precise_positions_array()
    for i in range(4):
        for j in range(i + 1, 4):
            d = float(np.linalg.norm(precise[i] - precise[j]))
            if d > half_wavelength:
                violations.append(
                    f"precise pair ({i},{j}) spaced {d:.4f} m, exceeds "
                    f"half wavelength {half_wavelength:.4f} m"
                )

    coarse = array.coarse_positions_array()
    for axis, name in enumerate("xyz"):
        coords = coarse[:, axis]
        if not (coords.min() < 0 < coords.max()):
            violations.append(f"coarse quad does not span {name}-axis")

    return ValidationReport(ok=not violations, violations=tuple(violations))


def default_array() -> HydrophoneArray:
    """Stand-in geometry: the precise quad is a regular tetrahedron of edge
    15 mm (all six pairs under the 40 kHz half-wavelength, and non-coplanar
    so a single bearing fits the pairwise delays), centered forward and below
    deck at (0.2, 0, -0.1). The coarse quad shares a corner and offsets one
    axis at a time, so the widest pair along each axis differs on that axis
    only and straddles the origin there.
    """
    s = 0.015 / (2.0 * math.sqrt(2.0))  # tetrahedron edge 15 mm
    center = np.array([0.2, 0.0, -0.1])
    tetra = np.array(
        [[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float
    ) * s + center
    precise = tuple(Vec3.from_array(row) for row in tetra)
    coarse = (
        Vec3(0.3, 0.2, 0.15),
        Vec3(-0.3, 0.2, 0.15),
        Vec3(0.3, -0.2, 0.15),
        Vec3(0.3, 0.2, -0.15),
    )
    return HydrophoneArray(precise=precise, coarse=coarse)


def default_scenario(pinger_position: Vec3, **overrides) -> Scenario:
    """Scenario with the default array, carrier, and front end. Keyword
    overrides map onto Scenario fields; ``pinger`` overrides win over
    ``pinger_position``."""
    pinger = overrides.pop("pinger", PingerSource(position=pinger_position))
    return Scenario(array=default_array(), pinger=pinger, **overrides)


# --- JSON configuration -----------------------------------------------------
#
# A scenario serializes as one JSON document whose keys mirror the dataclass
# fields. This file is the single input to the CLI.


def _require(mapping: dict, key: str, context: str):
    if key not in mapping:
        raise ConfigError(f"{context} missing required field '{key}'")
    return mapping[key]


def _vec3_from_dict(d: dict, context: str) -> Vec3:
    if not isinstance(d, dict):
        raise ConfigError(f"{context} must be an object with x, y, z")
    return Vec3(
        float(_require(d, "x", context)),
        float(_require(d, "y", context)),
        float(_require(d, "z", context)),
    )


def _vec3_to_dict(v: Vec3) -> dict:
    return {"x": v.x, "y": v.y, "z": v.z}


def _array_from_dict(d: dict) -> HydrophoneArray:
    precise = [_vec3_from_dict(p, "array.precise entry") for p in _require(d, "precise", "array")]
    coarse = [_vec3_from_dict(p, "array.coarse entry") for p in _require(d, "coarse", "array")]
    labels = d.get("labels", list(range(8)))
    return HydrophoneArray(precise=tuple(precise), coarse=tuple(coarse), labels=tuple(labels))


def _pinger_from_dict(d: dict) -> PingerSource:
    pos = _vec3_from_dict(_require(d, "position", "pinger"), "pinger.position")
    kwargs = {}
    for name in ("frequency", "ping_duration", "repetition_interval", "amplitude"):
        if name in d:
            kwargs[name] = float(d[name])
    return PingerSource(position=pos, **kwargs)


def _noise_from_dict(d: dict) -> NoiseSpec:
    kwargs = {}
    for name in ("white_sigma", "interferer_amp", "interferer_freq", "lowfreq_amp", "lowfreq_cutoff"):
        if name in d:
            kwargs[name] = float(d[name])
    return NoiseSpec(**kwargs)


def _front_end_from_dict(d: dict) -> ChannelModel:
    kwargs = {}
    for name in ("gain", "analog_band_low", "analog_band_high"):
        if name in d:
            kwargs[name] = float(d[name])
    if "analog_order" in d:
        kwargs["analog_order"] = int(d["analog_order"])
    return ChannelModel(**kwargs)


def scenario_from_dict(d: dict) -> Scenario:
    if not isinstance(d, dict):
        raise ConfigError("scenario must be a JSON object")
    pinger = _pinger_from_dict(_require(d, "pinger", "scenario"))
    array = _array_from_dict(d["array"]) if "array" in d else default_array()
    kwargs = {}
    for name in ("sound_speed", "sample_rate", "record_duration"):
        if name in d:
            kwargs[name] = float(d[name])
    if "noise" in d:
        kwargs["noise"] = _noise_from_dict(d["noise"])
    if "front_end" in d:
        kwargs["front_end"] = _front_end_from_dict(d["front_end"])
    if "seed" in d:
        kwargs["seed"] = int(d["seed"])
    return Scenario(array=array, pinger=pinger, **kwargs)


def scenario_to_dict(s: Scenario) -> dict:
    return {
        "array": {
            "precise": [_vec3_to_dict(p) for p in s.array.precise],
            "coarse": [_vec3_to_dict(p) for p in s.array.coarse],
            "labels": list(s.array.labels),
        },
        "pinger": {
            "position": _vec3_to_dict(s.pinger.position),
            "frequency": s.pinger.frequency,
            "ping_duration": s.pinger.ping_duration,
            "repetition_interval": s.pinger.repetition_interval,
            "amplitude": s.pinger.amplitude,
        },
        "sound_speed": s.sound_speed,
        "sample_rate": s.sample_rate,
        "record_duration": s.record_duration,
        "noise": {
            "white_sigma": s.noise.white_sigma,
            "interferer_amp": s.noise.interferer_amp,
            "interferer_freq": s.noise.interferer_freq,
            "lowfreq_amp": s.noise.lowfreq_amp,
            "lowfreq_cutoff": s.noise.lowfreq_cutoff,
        },
        "front_end": {
            "gain": s.front_end.gain,
            "analog_band_low": s.front_end.analog_band_low,
            "analog_band_high": s.front_end.analog_band_high,
            "analog_order": s.front_end.analog_order,
        },
        "seed": s.seed,
    }


def load_scenario(path: str | Path) -> Scenario:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read scenario file {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"scenario file {path} is not valid JSON: {exc}") from exc
    return scenario_from_dict(doc)
