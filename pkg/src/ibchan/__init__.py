"""Galvanic-coupled intrabody channel characterization toolkit.

Four pillars, composable from Python or the ``ibchan`` CLI:

- :mod:`ibchan.signals` / :mod:`ibchan.sounder`: PN sounding waveforms and
  correlative CIR/PDP/CFR estimation with stationarity checks.
- :mod:`ibchan.channel_model`: high-pass rational gain models, fitting,
  discretization, and a seeded channel simulator.
- :mod:`ibchan.tissue` / :mod:`ibchan.fem`: dispersive tissue data and a
  quasi-static 2D field solver for the layered arm geometry.
- :mod:`ibchan.ingest_io`: tolerant capture parsing, exact writing, and
  session manifests.
"""

from .channel_model import (
    ChannelSimConfig,
    HighPassModel,
    apply_channel,
    fit_gain_model,
    model_frequency_response,
    model_from_text,
    model_impulse_response,
    model_to_text,
)
from .errors import IbchanError
from .fem import (
    FieldSolution,
    assemble_system,
    gain_sweep,
    receive_voltage,
    solve_potential,
    transfer_gain_db,
)
from .ingest_io import (
    CaptureFile,
    FormatOptions,
    LoadedSession,
    SessionManifest,
    SoundingParams,
    load_session,
    parse_capture,
    write_capture,
    write_session_manifest,
)
from .signals import (
    PnSequence,
    Waveform,
    cross_correlate,
    generate_mseq,
    to_bipolar,
)
from .sounder import (
    ChannelEstimate,
    FrequencyResponse,
    PowerDelayProfile,
    SounderConfig,
    StationarityReport,
    average_estimates,
    cfr_from_cir,
    estimate_cir,
    estimate_cir_per_frame,
    power_delay_profile,
    scalar_gain_db,
    stationarity_check,
)
from .tissue import ArmModel, DielectricTable, default_arm_model, load_dielectric_table

__version__ = "0.1.0"

__all__ = [
    "ArmModel",
    "CaptureFile",
    "ChannelEstimate",
    "ChannelSimConfig",
    "DielectricTable",
    "FieldSolution",
    "FormatOptions",
    "FrequencyResponse",
    "HighPassModel",
    "IbchanError",
    "LoadedSession",
    "PnSequence",
    "PowerDelayProfile",
    "SessionManifest",
    "SounderConfig",
    "SoundingParams",
    "StationarityReport",
    "Waveform",
    "apply_channel",
    "assemble_system",
    "average_estimates",
    "cfr_from_cir",
    "cross_correlate",
    "default_arm_model",
    "estimate_cir",
    "estimate_cir_per_frame",
    "fit_gain_model",
    "gain_sweep",
    "generate_mseq",
    "load_dielectric_table",
    "load_session",
    "model_frequency_response",
    "model_from_text",
    "model_impulse_response",
    "model_to_text",
    "parse_capture",
    "power_delay_profile",
    "receive_voltage",
    "scalar_gain_db",
    "solve_potential",
    "stationarity_check",
    "to_bipolar",
    "transfer_gain_db",
    "write_capture",
    "write_session_manifest",
    "__version__",
]
