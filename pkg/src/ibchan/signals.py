"""Maximal-length PN sequences and the waveform/correlation primitives.

The sounding signal is a maximal-length sequence from a Fibonacci LFSR,
mapped to a bipolar waveform and optionally zero-padded and replayed at a
higher sample rate with a zero-order hold.  Cross-correlation is the
workhorse for channel estimation; it follows the convention

    values[k] = sum_n x[n + k] * y[n]

so that correlating a received signal (x) against a reference (y) puts a
peak at positive lag k when x is a delayed copy of y.  Linear mode spans
lags -(len(y) - 1) .. +(len(x) - 1); circular mode spans 0 .. N - 1 with
indices taken mod N.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    LengthMismatch,
    NonPrimitivePolynomial,
    SampleRateMismatch,
    ZeroSeed,
)

__all__ = [
    "PRIMITIVE_TAPS",
    "PnSequence",
    "Waveform",
    "CorrelationResult",
    "generate_mseq",
    "to_bipolar",
    "resample_hold",
    "zero_pad",
    "cross_correlate",
]

# One primitive feedback polynomial per degree.  Tap sets list the nonzero
# exponents of the polynomial (the constant term is implicit), so degree 3
# with taps {3, 2} means x^3 + x^2 + 1.  Each entry is validated by the
# full-period check in generate_mseq, and the test suite exercises all of
# them.
PRIMITIVE_TAPS: dict[int, frozenset[int]] = {
    2: frozenset({2, 1}),
    3: frozenset({3, 2}),
    4: frozenset({4, 3}),
    5: frozenset({5, 3}),
    6: frozenset({6, 5}),
    7: frozenset({7, 6}),
    8: frozenset({8, 6, 5, 4}),
    9: frozenset({9, 5}),
    10: frozenset({10, 7}),
    11: frozenset({11, 9}),
    12: frozenset({12, 11, 10, 4}),
    13: frozenset({13, 12, 11, 8}),
    14: frozenset({14, 13, 12, 2}),
    15: frozenset({15, 14}),
    16: frozenset({16, 14, 13, 11}),
}


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class PnSequence:
    """One period of a maximal-length sequence plus its generator state.

    Attributes:
        degree: LFSR register length m.
        taps: exponents of the feedback polynomial (degree included).
        seed: initial register state, 1 .. 2**m - 1.
        chips: one full period of {0, 1} chips, length 2**m - 1.
    """

    degree: int
    taps: frozenset[int]
    seed: int
    chips: np.ndarray

    def __post_init__(self):
        period = 2 ** self.degree - 1
        if len(self.chips) != period:
            raise ValueError(
                f"chips length {len(self.chips)} != 2**{self.degree} - 1"
            )
        ones = int(np.sum(self.chips))
        if ones != 2 ** (self.degree - 1):
            raise ValueError(
                f"balance violated: {ones} ones in a degree-{self.degree} sequence"
            )
        object.__setattr__(self, "chips", _readonly(np.asarray(self.chips)))

    @property
    def period(self) -> int:
        return 2 ** self.degree - 1


@dataclass(frozen=True)
class Waveform:
    """Uniformly sampled real signal.  Samples are immutable.

    Attributes:
        samples: float64 sample values in volts.
        sample_rate: Hz, > 0.
        t0: capture start time in seconds.
    """

    samples: np.ndarray
    sample_rate: float
    t0: float = 0.0

    def __post_init__(self):
        samples = np.array(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples must be finite")
        if not (self.sample_rate > 0 and np.isfinite(self.sample_rate)):
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", _readonly(samples))

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    def time_axis(self) -> np.ndarray:
        return self.t0 + np.arange(len(self.samples)) / self.sample_rate


@dataclass(frozen=True)
class CorrelationResult:
    """Cross-correlation values on an explicit lag axis.

    Attributes:
        values: correlation sums.
        lags: lag axis in samples (divide by sample_rate for seconds).
        mode: "linear" or "circular".
        sample_rate: shared input rate in Hz.
    """

    values: np.ndarray
    lags: np.ndarray
    mode: str
    sample_rate: float

    def __post_init__(self):
        if len(self.values) != len(self.lags):
            raise ValueError("values and lags must have equal length")
        object.__setattr__(self, "values", _readonly(np.asarray(self.values)))
        object.__setattr__(self, "lags", _readonly(np.asarray(self.lags)))


def _lfsr_chips(degree: int, taps: frozenset[int], seed: int, count: int) -> tuple[np.ndarray, int]:
    """Step a Fibonacci LFSR ``count`` times; return chips and final state.

    Feedback is the parity of the register bits selected by the polynomial
    exponents; the register shifts toward the output end (bit 0).
    """
    tap_shifts = [degree - t for t in sorted(taps)]
    state = seed
    chips = np.empty(count, dtype=np.uint8)
    for i in range(count):
        chips[i] = state & 1
        fb = 0
        for s in tap_shifts:
            fb ^= (state >> s) & 1
        state = (state >> 1) | (fb << (degree - 1))
    return chips, state


def generate_mseq(degree: int, taps=None, seed: int | None = None) -> PnSequence:
    """Generate one period of a maximal-length sequence.

    Args:
        degree: register length m, 2 .. 16.
        taps: feedback polynomial exponents including the degree itself.
            Defaults to the bundled primitive polynomial for ``degree``.
        seed: initial register state in 1 .. 2**m - 1.  Defaults to all ones.

    Returns:
        PnSequence with 2**m - 1 chips.

    Raises:
        ZeroSeed: seed == 0.
        NonPrimitivePolynomial: the tap set does not produce a full-period
            sequence (the register revisits the seed early).
    """
    if not 2 <= degree <= 16:
        raise ValueError(f"degree must be in 2..16, got {degree}")
    if taps is None:
        taps = PRIMITIVE_TAPS[degree]
    taps = frozenset(int(t) for t in taps)
    if not taps or max(taps) > degree or min(taps) < 1:
        raise ValueError(f"tap exponents must lie in 1..{degree}, got {sorted(taps)}")
    if degree not in taps:
        raise ValueError(f"tap set must include the degree itself, got {sorted(taps)}")
    if seed is None:
        seed = (1 << degree) - 1
    seed = int(seed)
    if seed == 0:
        raise ZeroSeed("LFSR seed must be nonzero")
    if not 0 < seed < (1 << degree):
        raise ValueError(f"seed must fit in {degree} bits, got {seed}")

    period = 2 ** degree - 1
    tap_shifts = [degree - t for t in sorted(taps)]
    state = seed
    chips = np.empty(period, dtype=np.uint8)
    for i in range(period):
        chips[i] = state & 1
        fb = 0
        for s in tap_shifts:
            fb ^= (state >> s) & 1
        state = (state >> 1) | (fb << (degree - 1))
        if state == seed and i < period - 1:
            raise NonPrimitivePolynomial(
                f"taps {sorted(taps)} cycle after {i + 1} steps; "
                f"full period for degree {degree} is {period}"
            )
    if state != seed:
        # Never reached seed again: the state sequence is degenerate.
        raise NonPrimitivePolynomial(
            f"taps {sorted(taps)} do not return to the seed within {period} steps"
        )
    return PnSequence(degree=degree, taps=taps, seed=seed, chips=chips)


def to_bipolar(seq: PnSequence, amplitude_vpp: float = 1.0,
               chip_rate: float = 2.5e6) -> Waveform:
    """Map chips to a bipolar waveform at one sample per chip.

    Chip 1 maps to +amplitude_vpp / 2, chip 0 to -amplitude_vpp / 2.
    """
    if amplitude_vpp <= 0:
        raise ValueError(f"amplitude_vpp must be positive, got {amplitude_vpp}")
    half = amplitude_vpp / 2.0
    samples = np.where(seq.chips.astype(np.int8) == 1, half, -half)
    return Waveform(samples=samples, sample_rate=chip_rate)


def resample_hold(w: Waveform, sample_rate: float) -> Waveform:
    """Replay a waveform at an integer multiple of its rate (zero-order hold)."""
    ratio = sample_rate / w.sample_rate
    factor = int(round(ratio))
    if factor < 1 or abs(ratio - factor) > 1e-9 * factor:
        raise SampleRateMismatch(
            f"target rate {sample_rate} is not an integer multiple of {w.sample_rate}"
        )
    if factor == 1:
        return w
    return Waveform(samples=np.repeat(w.samples, factor),
                    sample_rate=sample_rate, t0=w.t0)


def zero_pad(w: Waveform, n_samples: int) -> Waveform:
    """Append n_samples zeros (a silent tail for unambiguous echoes)."""
    if n_samples < 0:
        raise ValueError(f"pad length must be >= 0, got {n_samples}")
    if n_samples == 0:
        return w
    samples = np.concatenate([w.samples, np.zeros(n_samples)])
    return Waveform(samples=samples, sample_rate=w.sample_rate, t0=w.t0)


def _circular_correlate(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """c[k] = sum_n x[(n + k) mod N] * y[n] via the correlation theorem."""
    fx = np.fft.rfft(x)
    fy = np.fft.rfft(y)
    return np.fft.irfft(fx * np.conj(fy), n=len(x))


def cross_correlate(x: Waveform, y: Waveform, mode: str = "linear") -> CorrelationResult:
    """Cross-correlate two waveforms sharing a sample rate.

    values[k] = sum_n x[n + k] * y[n].  Uses FFT fast paths; results match
    the direct sum to within 1e-9 relative error.

    Args:
        x: the signal being searched (e.g. a received capture).
        y: the reference.
        mode: "linear" (lags -(len(y)-1) .. len(x)-1) or "circular"
            (equal lengths required, lags 0 .. N-1, indices mod N).

    Raises:
        SampleRateMismatch: rates differ by more than 1 ppm.
        LengthMismatch: circular mode with unequal lengths.
    """
    if abs(x.sample_rate - y.sample_rate) > 1e-6 * max(x.sample_rate, y.sample_rate):
        raise SampleRateMismatch(
            f"sample rates differ: {x.sample_rate} vs {y.sample_rate}"
        )
    if mode == "linear":
        # np.correlate's "full" output follows the same sum convention but
        # is ordered from the most negative lag.
        n = len(x.samples) + len(y.samples) - 1
        fx = np.fft.rfft(x.samples, n)
        fy = np.fft.rfft(y.samples, n)
        full = np.fft.irfft(fx * np.conj(fy), n=n)
        # Lags -(len(y)-1) .. -1 wrap to the tail of the FFT product.
        lags = np.arange(-(len(y.samples) - 1), len(x.samples))
        values = np.concatenate([full[-(len(y.samples) - 1):], full[: len(x.samples)]]) \
            if len(y.samples) > 1 else full[: len(x.samples)]
        return CorrelationResult(values=values, lags=lags, mode="linear",
                                 sample_rate=x.sample_rate)
    if mode == "circular":
        if len(x.samples) != len(y.samples):
            raise LengthMismatch(
                f"circular mode needs equal lengths, got {len(x.samples)} and {len(y.samples)}"
            )
        values = _circular_correlate(x.samples, y.samples)
        lags = np.arange(len(x.samples))
        return CorrelationResult(values=values, lags=lags, mode="circular",
                                 sample_rate=x.sample_rate)
    raise ValueError(f"mode must be 'linear' or 'circular', got {mode!r}")
