"""Parametric high-pass channel: fitting, evaluation, and simulation.

The model family is a stable rational transfer function with all zeros at
the origin,

    H(s) = gain * s^n / prod_k (s - p_k),      Re(p_k) < 0,

which rises monotonically toward a flat passband of 20 log10(gain) dB.
Fitting minimizes the sum of squared dB-magnitude errors: a deterministic
coarse grid over cutoff candidates (all poles coincident) seeds a local
least-squares refinement over (log10 pole frequencies, passband dB).

Discretization to sample-rate taps uses the bilinear transform, stated in
the output metadata.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize, signal

from .errors import (
    FitDiverged,
    InsufficientSamples,
    UnstableAfterDiscretization,
)
from .signals import Waveform
from .sounder import ChannelEstimate, FrequencyResponse, _peak_metrics

__all__ = [
    "HighPassModel",
    "ChannelSimConfig",
    "fit_gain_model",
    "model_frequency_response",
    "model_impulse_response",
    "apply_channel",
    "model_to_text",
    "model_from_text",
]


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class HighPassModel:
    """Stable rational high-pass model with zeros at the origin.

    Attributes:
        order: number of pole/zero pairs (0 means a pure gain).
        gain: linear passband gain (response magnitude as f -> inf).
        poles: complex pole frequencies in rad/s, strictly stable and
            closed under conjugation.
        zeros: complex zero frequencies in rad/s (all at 0 here).
        residual_db: per-sample dB residuals from the fit, or None for
            hand-constructed models.
        degenerate: True when the fitted cutoff fell far outside the
            sampled band (zero/pole near-cancellation; flat data).
    """

    order: int
    gain: float
    poles: np.ndarray
    zeros: np.ndarray
    residual_db: np.ndarray | None = None
    degenerate: bool = False

    def __post_init__(self):
        poles = np.asarray(self.poles, dtype=np.complex128)
        zeros = np.asarray(self.zeros, dtype=np.complex128)
        if self.order != len(poles) or self.order != len(zeros):
            raise ValueError(
                f"order {self.order} != {len(poles)} poles / {len(zeros)} zeros"
            )
        if self.order < 0:
            raise ValueError(f"order must be >= 0, got {self.order}")
        if not self.gain > 0:
            raise ValueError(f"gain must be positive, got {self.gain}")
        if np.any(poles.real >= 0):
            raise ValueError(f"unstable poles: {poles}")
        # Conjugate closure keeps the impulse response real.
        if not np.allclose(np.sort_complex(poles), np.sort_complex(np.conj(poles))):
            raise ValueError("poles must be closed under conjugation")
        object.__setattr__(self, "poles", _readonly(poles))
        object.__setattr__(self, "zeros", _readonly(zeros))
        if self.residual_db is not None:
            object.__setattr__(self, "residual_db",
                               _readonly(np.asarray(self.residual_db, dtype=np.float64)))

    @classmethod
    def identity(cls, gain: float = 1.0) -> "HighPassModel":
        return cls(order=0, gain=gain, poles=np.array([], dtype=complex),
                   zeros=np.array([], dtype=complex))

    @classmethod
    def from_pole_freqs(cls, pole_freqs_hz, gain: float) -> "HighPassModel":
        """Build from positive pole frequencies in Hz (real poles)."""
        fcs = np.atleast_1d(np.asarray(pole_freqs_hz, dtype=np.float64))
        if np.any(fcs <= 0):
            raise ValueError("pole frequencies must be positive")
        poles = -2.0 * np.pi * fcs.astype(np.complex128)
        zeros = np.zeros(len(fcs), dtype=np.complex128)
        return cls(order=len(fcs), gain=gain, poles=poles, zeros=zeros)

    @property
    def passband_gain_db(self) -> float:
        return float(20.0 * np.log10(self.gain))

    @property
    def cutoff_hz(self) -> float | None:
        """-3 dB frequency relative to the passband gain (None if order 0)."""
        if self.order == 0:
            return None
        target = self.passband_gain_db - 20.0 * np.log10(np.sqrt(2.0))
        fcs = np.abs(self.poles) / (2.0 * np.pi)
        lo = float(np.min(fcs)) * 1e-4
        hi = float(np.max(fcs)) * 1e4

        def deficit(f):
            h = _evaluate(self, np.array([f]))[0]
            return 20.0 * np.log10(np.abs(h)) - target

        return float(optimize.brentq(deficit, lo, hi, xtol=1e-6, rtol=1e-12))


def _evaluate(model: HighPassModel, freqs: np.ndarray) -> np.ndarray:
    s = 2j * np.pi * np.asarray(freqs, dtype=np.float64)
    num = np.ones_like(s, dtype=np.complex128) * model.gain
    for z in model.zeros:
        num = num * (s - z)
    den = np.ones_like(s, dtype=np.complex128)
    for p in model.poles:
        den = den * (s - p)
    return num / den


def model_frequency_response(model: HighPassModel, freq_grid) -> FrequencyResponse:
    """Evaluate H(j 2 pi f) exactly on a grid of nonnegative frequencies.

    At f = 0 a model with zeros at the origin returns exactly 0
    (gain_db reports -inf by convention).
    """
    freqs = np.asarray(freq_grid, dtype=np.float64)
    if np.any(freqs < 0):
        raise ValueError("frequencies must be >= 0")
    return FrequencyResponse(freqs=freqs, gains=_evaluate(model, freqs))


def _model_db(log10_fcs: np.ndarray, gain_db: float, freqs: np.ndarray) -> np.ndarray:
    """dB magnitude of the real-pole model at the given frequencies."""
    db = np.full(len(freqs), gain_db, dtype=np.float64)
    f2 = freqs ** 2
    for lfc in log10_fcs:
        fc2 = (10.0 ** lfc) ** 2
        db += 10.0 * np.log10(f2 / (f2 + fc2))
    return db


def fit_gain_model(samples, order: int = 2) -> HighPassModel:
    """Fit a stable order-n high-pass to (frequency, gain_db) samples.

    Deterministic initialization: a coarse log-spaced grid of coincident
    pole candidates, each with its closed-form optimal passband gain; the
    best seed is refined by Levenberg-Marquardt on
    (log10 pole frequencies, passband dB).

    Args:
        samples: FrequencyResponse, or a sequence of (freq_hz, gain_db)
            pairs.
        order: number of real poles (>= 1).

    Raises:
        InsufficientSamples: fewer than order + 1 samples.
        FitDiverged: the optimizer failed outright.
    """
    if order < 1:
        raise ValueError(f"fit order must be >= 1, got {order}")
    if isinstance(samples, FrequencyResponse):
        freqs = np.asarray(samples.freqs, dtype=np.float64)
        target_db = samples.gain_db
    else:
        pairs = [(float(f), float(g)) for f, g in samples]
        pairs.sort()
        freqs = np.array([p[0] for p in pairs])
        target_db = np.array([p[1] for p in pairs])
    if len(freqs) < order + 1:
        raise InsufficientSamples(
            f"order {order} needs at least {order + 1} samples, got {len(freqs)}"
        )
    if np.any(freqs <= 0):
        raise ValueError("sample frequencies must be positive")
    if not np.all(np.isfinite(target_db)):
        raise ValueError("sample gains must be finite dB values")

    # Coarse deterministic grid: coincident poles, closed-form gain.
    candidates = np.logspace(math.log10(freqs.min()) - 1.5,
                             math.log10(freqs.max()) + 0.5, 61)
    best = None
    for fc in candidates:
        base = _model_db(np.full(order, math.log10(fc)), 0.0, freqs)
        g = float(np.mean(target_db - base))
        ssr = float(np.sum((target_db - base - g) ** 2))
        if best is None or ssr < best[0]:
            best = (ssr, fc, g)
    _, fc0, g0 = best

    def residuals(x):
        return _model_db(x[:order], x[order], freqs) - target_db

    x0 = np.concatenate([np.full(order, math.log10(fc0)), [g0]])
    result = optimize.least_squares(residuals, x0, method="lm", max_nfev=200 * (order + 1))
    if not result.success:
        raise FitDiverged(f"optimizer stopped without convergence: {result.message}")

    log10_fcs = np.sort(result.x[:order])
    gain_db = float(result.x[order])
    fcs = 10.0 ** log10_fcs
    residual_db = _model_db(log10_fcs, gain_db, freqs) - target_db
    degenerate = bool(fcs.min() < freqs.min() / 100.0 or fcs.max() > freqs.max() * 100.0)

    model = HighPassModel(
        order=order,
        gain=float(10.0 ** (gain_db / 20.0)),
        poles=-2.0 * np.pi * fcs.astype(np.complex128),
        zeros=np.zeros(order, dtype=np.complex128),
        residual_db=residual_db,
        degenerate=degenerate,
    )
    return model


def _analog_coeffs(model: HighPassModel) -> tuple[np.ndarray, np.ndarray]:
    num = model.gain * np.real_if_close(np.poly(model.zeros), tol=1e6)
    den = np.real_if_close(np.poly(model.poles), tol=1e6)
    return np.atleast_1d(num).astype(np.float64), np.atleast_1d(den).astype(np.float64)


def model_impulse_response(model: HighPassModel, sample_rate: float,
                           length: int) -> ChannelEstimate:
    """Discretize the model (bilinear transform) and return its taps.

    The metadata records the discretization choice and the truncation
    energy loss, the tail energy fraction beyond ``length`` relative to
    the (numerically converged) total.

    Raises:
        UnstableAfterDiscretization: discrete poles on/outside the unit
            circle.
    """
    if length < 1:
        raise ValueError(f"length must be >= 1, got {length}")
    if sample_rate <= 0:
        raise ValueError(f"sample_rate must be positive, got {sample_rate}")
    num, den = _analog_coeffs(model)
    b, a = signal.bilinear(num, den, fs=sample_rate)
    if len(a) > 1:
        radius = float(np.max(np.abs(np.roots(a))))
        if radius >= 1.0 - 1e-12:
            raise UnstableAfterDiscretization(
                f"discrete pole radius {radius:.12f} at {sample_rate} Hz"
            )

    # Extend until the tail adds nothing, so the reported loss is computed
    # against a converged total energy (and stays monotone in length).
    n_ref = max(4 * length, 256)
    while True:
        ir = signal.lfilter(b, a, np.eye(1, n_ref, 0, dtype=np.float64).ravel())
        total = float(np.sum(ir ** 2))
        tail = float(np.sum(ir[n_ref // 2:] ** 2))
        if total == 0.0 or tail <= 1e-15 * total or n_ref >= (1 << 22):
            break
        n_ref *= 2

    taps = ir[:length]
    kept = float(np.sum(taps ** 2))
    loss = 0.0 if total == 0.0 else max(0.0, 1.0 - kept / total)
    peak, ratio_db = _peak_metrics(taps)
    return ChannelEstimate(
        taps=taps,
        delay_axis=np.arange(length) / sample_rate,
        normalization=1.0,
        peak_index=peak,
        peak_to_offpeak_db=ratio_db,
        frames_averaged=1,
        meta={"discretization": "bilinear", "truncation_energy_loss": loss},
    )


@dataclass
class ChannelSimConfig:
    """Channel simulation knobs.

    Attributes:
        noise_snr_db: white-noise level relative to the convolved signal
            power; inf disables noise.  A zero-power signal injects zero
            noise by convention.
        cm_tone_hz: common-mode fundamental frequency.
        cm_amplitude_v: fundamental amplitude; harmonics are scaled by
            cm_harmonics weights.  0 disables the tone.
        cm_harmonics: (multiple, relative amplitude) pairs.
        rng_seed: seed for the noise generator (never the global RNG).
        ir_samples: discretized impulse-response length used for the
            convolution.
    """

    noise_snr_db: float = float("inf")
    cm_tone_hz: float = 50.0
    cm_amplitude_v: float = 0.0
    cm_harmonics: tuple = ((1, 1.0), (3, 1.0 / 3.0), (5, 1.0 / 5.0))
    rng_seed: int = 0
    ir_samples: int = 1024

    def __post_init__(self):
        if self.cm_amplitude_v < 0:
            raise ValueError("cm_amplitude_v must be >= 0")
        if self.cm_tone_hz <= 0:
            raise ValueError("cm_tone_hz must be positive")
        if self.ir_samples < 1:
            raise ValueError("ir_samples must be >= 1")


def apply_channel(tx: Waveform, model: HighPassModel,
                  cfg: ChannelSimConfig | None = None) -> Waveform:
    """Pass a waveform through the model, then add noise and a mains tone.

    output = conv(tx, taps)[: len(tx)] + white noise at cfg.noise_snr_db
    relative to the convolved signal power + the common-mode tone.
    Deterministic for a fixed rng_seed.
    """
    cfg = cfg or ChannelSimConfig()
    ir = model_impulse_response(model, tx.sample_rate, cfg.ir_samples)
    y = np.convolve(tx.samples, ir.taps)[: len(tx.samples)]

    if np.isfinite(cfg.noise_snr_db):
        sig_power = float(np.mean(y ** 2))
        if sig_power > 0.0:
            noise_power = sig_power / (10.0 ** (cfg.noise_snr_db / 10.0))
            rng = np.random.default_rng(cfg.rng_seed)
            y = y + rng.normal(0.0, math.sqrt(noise_power), size=len(y))

    if cfg.cm_amplitude_v > 0.0:
        t = tx.t0 + np.arange(len(y)) / tx.sample_rate
        for mult, weight in cfg.cm_harmonics:
            y = y + cfg.cm_amplitude_v * weight * np.sin(
                2.0 * np.pi * cfg.cm_tone_hz * mult * t)

    return Waveform(samples=y, sample_rate=tx.sample_rate, t0=tx.t0)


# --- serialization ----------------------------------------------------------

def model_to_text(model: HighPassModel) -> str:
    """Serialize a model so model_from_text reloads it bit-exactly."""
    lines = [
        "# high-pass channel model v1",
        f"order = {model.order}",
        f"gain = {float(model.gain)!r}",
        "discretization = bilinear",
        f"degenerate = {str(model.degenerate).lower()}",
    ]
    for p in model.poles:
        lines.append(f"pole = {float(p.real)!r} {float(p.imag)!r}")
    for z in model.zeros:
        lines.append(f"zero = {float(z.real)!r} {float(z.imag)!r}")
    if model.residual_db is not None:
        lines.append("residual_db = " + " ".join(repr(float(r)) for r in model.residual_db))
    return "\n".join(lines) + "\n"


def model_from_text(text: str) -> HighPassModel:
    """Parse the output of model_to_text."""
    order = None
    gain = None
    degenerate = False
    poles: list[complex] = []
    zeros: list[complex] = []
    residual = None
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key == "order":
            order = int(value)
        elif key == "gain":
            gain = float(value)
        elif key == "degenerate":
            degenerate = value == "true"
        elif key == "pole":
            re_s, im_s = value.split()
            poles.append(complex(float(re_s), float(im_s)))
        elif key == "zero":
            re_s, im_s = value.split()
            zeros.append(complex(float(re_s), float(im_s)))
        elif key == "residual_db":
            residual = np.array([float(v) for v in value.split()])
        elif key == "discretization":
            pass
        else:
            raise ValueError(f"unknown model key: {key!r}")
    if order is None or gain is None:
        raise ValueError("model text missing order or gain")
    return HighPassModel(
        order=order, gain=gain,
        poles=np.array(poles, dtype=np.complex128),
        zeros=np.array(zeros, dtype=np.complex128),
        residual_db=residual, degenerate=degenerate,
    )
