"""Correlative channel sounding: CIR, PDP, CFR, and stationarity metrics.

A received capture is folded into sounding frames, coherently averaged,
and circularly correlated against the ideal bipolar replica of the PN
sequence.  Dividing by the replica autocorrelation peak R_xx(0) makes an
identity channel produce a single tap of exactly 1.0, so taps read as
dimensionless voltage ratios.

The frame layout (samples per chip, zero-pad tail) comes from the
transmitted capture and the sounding sequence; the transmitted capture is
expected to hold exactly one frame as written by the generator.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    FrameMismatch,
    FrequencyOutOfRange,
    InsufficientLength,
    LengthMismatch,
    NoPeakFound,
    NonPositiveVoltage,
    SampleRateMismatch,
)
from .signals import PnSequence, Waveform, _circular_correlate, resample_hold, to_bipolar

__all__ = [
    "ChannelEstimate",
    "PowerDelayProfile",
    "FrequencyResponse",
    "StationarityReport",
    "SounderConfig",
    "estimate_cir",
    "estimate_cir_per_frame",
    "average_estimates",
    "power_delay_profile",
    "cfr_from_cir",
    "scalar_gain_db",
    "stationarity_check",
]

# Samples on each side of the peak that the off-peak metric ignores; at two
# samples per chip the correlation mainlobe leaks into immediate neighbors.
_MAINLOBE_GUARD = 3


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ChannelEstimate:
    """Estimated impulse response on a uniform delay axis.

    Attributes:
        taps: dimensionless voltage-ratio taps.
        delay_axis: seconds, uniformly spaced from 0.
        normalization: scale factor applied to the raw correlation
            (1 / R_xx(0)), so an identity channel peaks at exactly 1.
        peak_index: index of max |tap|.
        peak_to_offpeak_db: peak magnitude over the largest magnitude more
            than 3 samples away from the peak, in dB.
        frames_averaged: number of frames coherently averaged.
        meta: free-form provenance (alignment mode, discretization, ...).
    """

    taps: np.ndarray
    delay_axis: np.ndarray
    normalization: float
    peak_index: int
    peak_to_offpeak_db: float
    frames_averaged: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.taps) != len(self.delay_axis):
            raise ValueError("taps and delay_axis must have equal length")
        object.__setattr__(self, "taps", _readonly(np.asarray(self.taps, dtype=np.float64)))
        object.__setattr__(self, "delay_axis", _readonly(np.asarray(self.delay_axis, dtype=np.float64)))

    @property
    def sample_rate(self) -> float:
        if len(self.delay_axis) < 2:
            raise ValueError("need at least two taps to infer a sample rate")
        return 1.0 / (self.delay_axis[1] - self.delay_axis[0])


@dataclass(frozen=True)
class PowerDelayProfile:
    """P(tau) = |h(tau)|^2 on the estimate's delay axis."""

    power: np.ndarray
    delay_axis: np.ndarray

    def __post_init__(self):
        if len(self.power) != len(self.delay_axis):
            raise ValueError("power and delay_axis must have equal length")
        object.__setattr__(self, "power", _readonly(np.asarray(self.power)))
        object.__setattr__(self, "delay_axis", _readonly(np.asarray(self.delay_axis)))

    @property
    def total_power(self) -> float:
        return float(np.sum(self.power))


@dataclass(frozen=True)
class FrequencyResponse:
    """Complex gains over a strictly increasing frequency grid."""

    freqs: np.ndarray
    gains: np.ndarray

    def __post_init__(self):
        freqs = np.asarray(self.freqs, dtype=np.float64)
        gains = np.asarray(self.gains, dtype=np.complex128)
        if len(freqs) != len(gains):
            raise ValueError("freqs and gains must have equal length")
        if len(freqs) > 1 and not np.all(np.diff(freqs) > 0):
            raise ValueError("freqs must be strictly increasing")
        object.__setattr__(self, "freqs", _readonly(freqs))
        object.__setattr__(self, "gains", _readonly(gains))

    @property
    def gain_db(self) -> np.ndarray:
        # |gain| == 0 maps to -inf by convention.
        with np.errstate(divide="ignore"):
            return 20.0 * np.log10(np.abs(self.gains))


@dataclass(frozen=True)
class StationarityReport:
    """Frame-to-frame variation of the dominant path."""

    peak_amplitudes: np.ndarray
    peak_delays_samples: np.ndarray
    amplitude_cv: float
    max_delay_drift_samples: int
    time_invariant: bool
    cv_threshold: float

    def __post_init__(self):
        object.__setattr__(self, "peak_amplitudes", _readonly(np.asarray(self.peak_amplitudes)))
        object.__setattr__(self, "peak_delays_samples",
                           _readonly(np.asarray(self.peak_delays_samples)))


@dataclass
class SounderConfig:
    """Estimator knobs.

    Attributes:
        samples_per_chip: replica upsampling factor (zero-order hold).
        pad_samples: zero-pad tail per frame; None infers it from the
            transmitted capture (len(tx) - period * samples_per_chip).
        amplitude_vpp: replica peak-to-peak amplitude; None infers the
            transmitted capture's peak-to-peak swing.
        dc_removal: subtract the capture mean before correlating
            (common-mode rejection).
        detection_threshold_db: minimum peak-to-offpeak ratio before the
            estimate is considered to contain a path at all.
        alignment: "peak" rotates the CIR so the dominant path sits at
            delay 0 (arbitrary-trigger captures); "origin" keeps delays
            absolute relative to the frame start (shared-trigger captures).
        skip_transient: drop the first frame before averaging when more
            than one frame is available (it carries the channel warm-up).
        window: CIR length in samples; None keeps the pad window when a
            pad exists, otherwise the full frame.
        cv_threshold: stationarity amplitude-variation threshold.
        delay_drift_tolerance: allowed peak-delay drift in samples.
    """

    samples_per_chip: int = 1
    pad_samples: int | None = None
    amplitude_vpp: float | None = None
    dc_removal: bool = True
    detection_threshold_db: float = 3.0
    alignment: str = "peak"
    skip_transient: bool = True
    window: int | None = None
    cv_threshold: float = 0.05
    delay_drift_tolerance: int = 0


def _peak_metrics(taps: np.ndarray) -> tuple[int, float]:
    """Peak index and peak-to-offpeak ratio (dB), guarding the mainlobe."""
    mags = np.abs(taps)
    peak = int(np.argmax(mags))
    mask = np.abs(np.arange(len(taps)) - peak) > _MAINLOBE_GUARD
    if not np.any(mask):
        return peak, float("inf")
    offpeak = float(np.max(mags[mask]))
    if offpeak == 0.0:
        return peak, float("inf")
    if mags[peak] == 0.0:
        return peak, float("-inf")
    return peak, float(20.0 * np.log10(mags[peak] / offpeak))


def _frame_layout(tx: Waveform, sounding: PnSequence,
                  config: SounderConfig) -> tuple[np.ndarray, int, int]:
    """Build the replica and resolve (frame_len, period_samples)."""
    spc = int(config.samples_per_chip)
    if spc < 1:
        raise ValueError(f"samples_per_chip must be >= 1, got {spc}")
    period_samples = sounding.period * spc

    amplitude = config.amplitude_vpp
    if amplitude is None:
        swing = float(np.max(tx.samples) - np.min(tx.samples))
        if swing <= 0:
            raise ValueError("cannot infer amplitude from a flat transmitted capture")
        amplitude = swing

    chip_wave = to_bipolar(sounding, amplitude_vpp=amplitude, chip_rate=tx.sample_rate / spc)
    replica = resample_hold(chip_wave, tx.sample_rate).samples

    pad = config.pad_samples
    if pad is None:
        pad = len(tx.samples) - period_samples
        if pad < 0:
            raise LengthMismatch(
                f"transmitted capture ({len(tx.samples)} samples) is shorter than "
                f"one sequence period ({period_samples} samples)"
            )
    if pad < 0:
        raise ValueError(f"pad_samples must be >= 0, got {pad}")
    return replica, period_samples + int(pad), period_samples


def _check_rates(tx: Waveform, rx: Waveform):
    if abs(tx.sample_rate - rx.sample_rate) > 1e-6 * max(tx.sample_rate, rx.sample_rate):
        raise SampleRateMismatch(
            f"tx rate {tx.sample_rate} Hz != rx rate {rx.sample_rate} Hz"
        )


def _split_frames(x: np.ndarray, frame_len: int, period_samples: int) -> np.ndarray:
    """Return (n, frame_len-or-period) array of complete frames."""
    n_frames = len(x) // frame_len
    if n_frames >= 1:
        return x[: n_frames * frame_len].reshape(n_frames, frame_len)
    if len(x) >= period_samples:
        # Partial frame: fall back to a single bare period.
        return x[:period_samples].reshape(1, period_samples)
    raise InsufficientLength(
        f"capture has {len(x)} samples; one sequence period needs {period_samples}"
    )


def _estimate_from_frame(frame: np.ndarray, replica: np.ndarray, sample_rate: float,
                         frames_averaged: int, config: SounderConfig) -> ChannelEstimate:
    rep = np.zeros(len(frame))
    rep[: len(replica)] = replica
    r0 = float(np.dot(replica, replica))
    taps_full = _circular_correlate(frame, rep) / r0

    rotation = 0
    if config.alignment == "peak":
        rotation = int(np.argmax(np.abs(taps_full)))
        taps_full = np.roll(taps_full, -rotation)
    elif config.alignment != "origin":
        raise ValueError(f"alignment must be 'peak' or 'origin', got {config.alignment!r}")

    window = config.window
    if window is None:
        pad = len(frame) - len(replica)
        window = pad if pad > 0 else len(frame)
    window = min(int(window), len(frame))
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    taps = taps_full[:window]

    peak, ratio_db = _peak_metrics(taps)
    if ratio_db < config.detection_threshold_db:
        raise NoPeakFound(
            f"peak-to-offpeak ratio {ratio_db:.2f} dB below "
            f"threshold {config.detection_threshold_db:.2f} dB"
        )
    delay_axis = np.arange(window) / sample_rate
    return ChannelEstimate(
        taps=taps,
        delay_axis=delay_axis,
        normalization=1.0 / r0,
        peak_index=peak,
        peak_to_offpeak_db=ratio_db,
        frames_averaged=frames_averaged,
        meta={"alignment": config.alignment, "rotation_samples": rotation},
    )


def estimate_cir(tx: Waveform, rx: Waveform, sounding: PnSequence,
                 config: SounderConfig | None = None) -> ChannelEstimate:
    """Estimate the channel impulse response from a sounding capture.

    The capture is folded into frames of one sequence period plus pad,
    the first frame is dropped as warm-up when others exist, the rest are
    coherently averaged, and the average is circularly correlated against
    the ideal replica and scaled by 1 / R_xx(0).

    Args:
        tx: transmitted capture (one frame; defines layout and amplitude).
        rx: received capture, at the same sample rate, at least one
            sequence period long.
        sounding: the PN sequence that was replayed.
        config: estimator knobs; defaults are suitable for clean captures.

    Raises:
        SampleRateMismatch, InsufficientLength, NoPeakFound.
    """
    config = config or SounderConfig()
    _check_rates(tx, rx)
    replica, frame_len, period_samples = _frame_layout(tx, sounding, config)

    x = np.asarray(rx.samples, dtype=np.float64)
    if config.dc_removal:
        x = x - np.mean(x)

    frames = _split_frames(x, frame_len, period_samples)
    if config.skip_transient and len(frames) >= 2:
        frames = frames[1:]
    folded = frames.mean(axis=0)
    return _estimate_from_frame(folded, replica, rx.sample_rate,
                                frames_averaged=len(frames), config=config)


def estimate_cir_per_frame(tx: Waveform, rx: Waveform, sounding: PnSequence,
                           config: SounderConfig | None = None) -> list[ChannelEstimate]:
    """Estimate one CIR per complete frame (no averaging).

    Feed the result to stationarity_check to quantify frame-to-frame
    variation.  The transient-skip setting is honored here too.
    """
    config = config or SounderConfig()
    _check_rates(tx, rx)
    replica, frame_len, period_samples = _frame_layout(tx, sounding, config)

    x = np.asarray(rx.samples, dtype=np.float64)
    if config.dc_removal:
        x = x - np.mean(x)

    frames = _split_frames(x, frame_len, period_samples)
    if config.skip_transient and len(frames) >= 2:
        frames = frames[1:]
    return [
        _estimate_from_frame(frame, replica, rx.sample_rate,
                             frames_averaged=1, config=config)
        for frame in frames
    ]


def average_estimates(estimates) -> ChannelEstimate:
    """Coherently average aligned estimates (e.g. one per capture).

    All inputs must share a delay axis; peak metrics are recomputed on the
    averaged taps and frames_averaged accumulates.

    Raises:
        FrameMismatch: empty input or inconsistent delay axes.
    """
    estimates = list(estimates)
    if not estimates:
        raise FrameMismatch("no estimates to average")
    if len(estimates) == 1:
        return estimates[0]
    axis = estimates[0].delay_axis
    for e in estimates[1:]:
        if len(e.delay_axis) != len(axis) or not np.array_equal(e.delay_axis, axis):
            raise FrameMismatch("estimates disagree on the delay axis")
    taps = np.mean([e.taps for e in estimates], axis=0)
    peak, ratio_db = _peak_metrics(taps)
    return ChannelEstimate(
        taps=taps,
        delay_axis=axis,
        normalization=estimates[0].normalization,
        peak_index=peak,
        peak_to_offpeak_db=ratio_db,
        frames_averaged=sum(e.frames_averaged for e in estimates),
        meta=dict(estimates[0].meta),
    )


def power_delay_profile(estimate: ChannelEstimate) -> PowerDelayProfile:
    """P(tau) = h(tau)^2 on the estimate's delay axis."""
    return PowerDelayProfile(power=estimate.taps ** 2,
                             delay_axis=estimate.delay_axis)


def cfr_from_cir(estimate: ChannelEstimate, freqs: np.ndarray) -> FrequencyResponse:
    """Evaluate the channel frequency response of an estimated CIR.

    gains[i] = sum_k taps[k] * exp(-2j pi freqs[i] delay[k]).

    Raises:
        FrequencyOutOfRange: any frequency outside [0, sample_rate / 2].
    """
    freqs = np.asarray(freqs, dtype=np.float64)
    nyquist = estimate.sample_rate / 2.0
    if np.any(freqs < 0) or np.any(freqs > nyquist * (1 + 1e-12)):
        raise FrequencyOutOfRange(
            f"frequencies must lie in [0, {nyquist:.6g}] Hz"
        )
    phases = np.exp(-2j * np.pi * np.outer(freqs, estimate.delay_axis))
    gains = phases @ estimate.taps.astype(np.complex128)
    return FrequencyResponse(freqs=freqs, gains=gains)


def scalar_gain_db(v_rx: float, v_tx: float) -> float:
    """20 log10(V_rx / V_tx) for positive voltage magnitudes."""
    if not (v_rx > 0 and v_tx > 0):
        raise NonPositiveVoltage(
            f"voltage magnitudes must be positive, got v_rx={v_rx}, v_tx={v_tx}"
        )
    return float(20.0 * np.log10(v_rx / v_tx))


def stationarity_check(frames: list[ChannelEstimate],
                       cv_threshold: float = 0.05,
                       delay_drift_tolerance: int = 0) -> StationarityReport:
    """Quantify frame-to-frame drift of the dominant path.

    The coefficient of variation uses the population standard deviation,
    so identical frames give exactly 0.

    Raises:
        FrameMismatch: empty input, inconsistent frame shapes, or frames
            with no signal at all.
    """
    if len(frames) < 2:
        raise FrameMismatch(f"need at least 2 frames to compare, got {len(frames)}")
    lengths = {len(f.taps) for f in frames}
    if len(lengths) != 1:
        raise FrameMismatch(f"frames disagree in length: {sorted(lengths)}")

    amps = np.array([float(np.abs(f.taps[f.peak_index])) for f in frames])
    delays = np.array([f.peak_index for f in frames], dtype=np.int64)
    mean_amp = float(np.mean(amps))
    if mean_amp <= 0:
        raise FrameMismatch("frames contain no signal (zero peak amplitudes)")
    cv = float(np.std(amps) / mean_amp)
    drift = int(np.max(delays) - np.min(delays))
    return StationarityReport(
        peak_amplitudes=amps,
        peak_delays_samples=delays,
        amplitude_cv=cv,
        max_delay_drift_samples=drift,
        time_invariant=(cv <= cv_threshold and drift <= delay_drift_tolerance),
        cv_threshold=cv_threshold,
    )
