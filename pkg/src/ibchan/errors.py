"""Exception types raised across the toolkit.

Every hard failure maps to one of these classes so callers (and the CLI)
can distinguish bad inputs from internal faults.  All inherit from
:class:`IbchanError`.
"""

from __future__ import annotations


class IbchanError(Exception):
    """Base class for all toolkit errors."""


# --- sequence generation ---------------------------------------------------

class NonPrimitivePolynomial(IbchanError):
    """LFSR tap set failed the full-period check for its degree."""


class ZeroSeed(IbchanError):
    """LFSR seed was zero (the all-zero state never leaves itself)."""


# --- waveform / correlation ------------------------------------------------

class SampleRateMismatch(IbchanError):
    """Two waveforms that must share a sample rate do not."""


class LengthMismatch(IbchanError):
    """Circular correlation requires equal-length inputs."""


# --- sounding --------------------------------------------------------------

class InsufficientLength(IbchanError):
    """Received capture is shorter than one sounding-sequence period."""


class NoPeakFound(IbchanError):
    """Correlation peak does not clear the detection threshold."""


class FrameMismatch(IbchanError):
    """Frame collection is empty or frames disagree in shape/rate."""


class FrequencyOutOfRange(IbchanError):
    """Requested frequency lies outside [0, sample_rate / 2]."""


class NonPositiveVoltage(IbchanError):
    """Scalar gain is undefined for non-positive voltage magnitudes."""


# --- model fitting ---------------------------------------------------------

class InsufficientSamples(IbchanError):
    """Too few gain samples for the requested model order."""


class FitDiverged(IbchanError):
    """Optimizer failed to reduce the fit residual to a usable state."""


class UnstableAfterDiscretization(IbchanError):
    """Discretized filter has poles on or outside the unit circle."""


# --- field solver ----------------------------------------------------------

class ResolutionTooCoarse(IbchanError):
    """Grid does not resolve the thinnest tissue layer with enough cells."""


class EmptyElectrode(IbchanError):
    """An electrode maps to zero grid cells at the requested resolution."""


class SolverDidNotConverge(IbchanError):
    """Linear solve residual exceeded tolerance."""


# --- ingest ----------------------------------------------------------------

class UnparseableFile(IbchanError):
    """Capture file structure could not be understood."""


class NoNumericData(IbchanError):
    """Capture file contained no parseable numeric rows."""


class AmbiguousDelimiter(IbchanError):
    """More than one candidate delimiter fits the numeric rows."""


class SchemaViolation(IbchanError):
    """Session manifest is missing fields or has wrong types."""


class MissingCapture(IbchanError):
    """One or more capture files named by a manifest do not exist.

    Attributes:
        missing: paths that could not be read.
        loaded: paths that were read successfully before the failure surfaced.
    """

    def __init__(self, message: str, missing=None, loaded=None):
        super().__init__(message)
        self.missing = list(missing or [])
        self.loaded = list(loaded or [])


class RateMismatch(IbchanError):
    """Captures in one session disagree on sample rate.

    Attributes:
        rates: mapping of path -> detected sample rate in Hz.
    """

    def __init__(self, message: str, rates=None):
        super().__init__(message)
        self.rates = dict(rates or {})
