"""Underwater acoustic pinger localization: an 8-hydrophone simulator, a
bandpass/cross-correlation DSP front-end, a coarse octant guess, and a
4-dimensional arrival-time gradient-descent solver that reports the pinger's
azimuth."""

from .scene import (
    ChannelModel,
    ConfigError,
    HydrophoneArray,
    NoiseSpec,
    OctantId,
    PingerSource,
    Scenario,
    ValidationReport,
    Vec3,
    default_array,
    default_scenario,
    load_scenario,
    octant_of,
    propagation_delay,
    scenario_from_dict,
    scenario_to_dict,
    true_azimuth_elevation,
    validate_array,
)
from .recording import (
    BadMagicError,
    MultiChannelRecording,
    RecordingFormatError,
    TruncatedPayloadError,
    VersionMismatchError,
    read_recording,
    write_recording,
)
from .simulator import add_noise, ping_waveform, render_scene, synthesize_ping
from .dsp import (
    BiquadCascade,
    DegenerateSignalError,
    DelayEstimate,
    NoPingError,
    TdoaSet,
    UnstableWindowError,
    WindowParams,
    design_bandpass,
    detect_ping,
    estimate_delay,
    filter_signal,
    select_stable_window,
)
from .solver import (
    DivergedError,
    SingularGeometryError,
    SolverParams,
    SolverResult,
    Theta,
    gradient_descent,
    objective_and_gradient,
    residuals,
)
from .guess import OctantGuess, UnresolvableAxisError, initial_point, octant_guess
from .pipeline import (
    AzimuthReport,
    MonteCarloConfig,
    MonteCarloSummary,
    monte_carlo,
    run_localization,
    write_monte_carlo_csv,
)

__version__ = "0.1.0"
