"""Deterministic capture parsing/writing and session manifests.

Real oscilloscope exports and simulated captures flow through the same
code paths: a tolerant CSV reader (auto header skip, comma or semicolon
delimiter detection), an exact writer whose output reparses bit-identically,
and a JSON session manifest tying a set of rx captures to the sounding
parameters that produced them.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AmbiguousDelimiter,
    MissingCapture,
    NoNumericData,
    RateMismatch,
    SchemaViolation,
    UnparseableFile,
)
from .signals import Waveform

__all__ = [
    "FormatOptions",
    "CaptureFile",
    "SoundingParams",
    "SessionManifest",
    "LoadedSession",
    "parse_capture",
    "write_capture",
    "load_session",
    "write_session_manifest",
    "write_columns",
    "read_columns",
]

_RATE_TOLERANCE = 1e-6  # 1 ppm


@dataclass(frozen=True)
class FormatOptions:
    """Parser controls.

    Attributes:
        delimiter: force ',' or ';' instead of auto-detection.
        strict: require a declared sample_rate header and refuse any file
            that would attach warnings (CI mode).
    """

    delimiter: str | None = None
    strict: bool = False

    def __post_init__(self):
        if self.delimiter is not None and self.delimiter not in (",", ";"):
            raise ValueError(f"delimiter must be ',' or ';', got {self.delimiter!r}")


@dataclass(frozen=True)
class CaptureFile:
    """One parsed waveform capture.

    Attributes:
        source: instrument or generator label from the header, if any.
        sample_rate: Hz, declared in the header or inferred from the
            time column.
        waveform: the samples with rate and start time attached.
        warnings: non-fatal findings (non-uniform timestamps, clipping).
        path: origin file, empty for in-memory captures.
    """

    source: str
    sample_rate: float
    waveform: Waveform
    warnings: tuple = ()
    path: str = ""


def _parse_float(token: str) -> float:
    token = token.strip()
    if not token:
        raise ValueError("empty field")
    value = float(token)  # locale-independent: '.' decimal only
    return value


def _looks_like_comma_decimal(line: str) -> bool:
    parts = [p.strip() for p in line.split(";")]
    for p in parts:
        head, comma, tail = p.partition(",")
        if comma and head.replace("-", "", 1).replace("+", "", 1).isdigit() \
                and tail and tail[0].isdigit():
            return True
    return False


def _try_delimiter(lines, delim):
    """Indices and values of rows that parse as >= 2 numeric fields."""
    parsed = {}
    for k, line in lines:
        fields = [f for f in line.split(delim)]
        if len(fields) < 2:
            continue
        try:
            values = [_parse_float(f) for f in fields[:2]]
        except ValueError:
            continue
        parsed[k] = values
    return parsed


def parse_capture(path, format_options: FormatOptions | None = None) -> CaptureFile:
    """Parse a two-column (time_s, voltage_V) capture CSV.

    Tolerates any number of leading header lines (the first row whose
    fields are numeric starts the data), '#' comment lines carrying
    declared metadata (sample_rate_hz, t0_s, source), and either ',' or
    ';' as delimiter.  Comma decimal separators are rejected with a
    pointed message.

    Raises:
        UnparseableFile: unreadable, corrupt, or comma-decimal content.
        NoNumericData: no numeric rows at all.
        AmbiguousDelimiter: rows disagree about the delimiter.
    """
    opts = format_options or FormatOptions()
    try:
        with open(path, encoding="utf-8-sig") as fh:
            raw_lines = fh.read().splitlines()
    except OSError as exc:
        raise UnparseableFile(f"{path}: {exc}") from exc

    declared = {}
    body = []
    for line in raw_lines:
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            key, eq, value = stripped.lstrip("#").partition("=")
            if eq:
                declared[key.strip()] = value.strip()
            continue
        body.append((len(body), stripped))

    if opts.delimiter is not None:
        delim = opts.delimiter
        rows = _try_delimiter(body, delim)
    else:
        by_comma = _try_delimiter(body, ",")
        by_semi = _try_delimiter(body, ";")
        if not by_comma and not by_semi:
            rows = {}
            delim = ","
        elif by_comma and by_semi:
            raise AmbiguousDelimiter(
                f"{path}: {len(by_comma)} rows parse with ',' and "
                f"{len(by_semi)} with ';'"
            )
        elif by_comma:
            rows, delim = by_comma, ","
        else:
            rows, delim = by_semi, ";"

    if not rows:
        for _, line in body:
            if _looks_like_comma_decimal(line):
                raise UnparseableFile(
                    f"{path}: comma decimal separators are not supported; "
                    "use '.' as the decimal mark"
                )
        if body:
            raise NoNumericData(f"{path}: no rows with two numeric columns")
        raise NoNumericData(f"{path}: file contains no data rows")

    # Data must be one contiguous block: header rows before, nothing after.
    first = min(rows)
    last = max(rows)
    if len(rows) != last - first + 1:
        missing = sorted(set(range(first, last + 1)) - set(rows))
        raise UnparseableFile(
            f"{path}: non-numeric row inside the data block "
            f"(data row index {missing[0]})"
        )

    data = np.array([rows[k] for k in range(first, last + 1)], dtype=np.float64)
    times, volts = data[:, 0], data[:, 1]
    warnings = []

    declared_rate = None
    if "sample_rate_hz" in declared:
        try:
            declared_rate = float(declared["sample_rate_hz"])
        except ValueError as exc:
            raise UnparseableFile(
                f"{path}: bad sample_rate_hz header: {declared['sample_rate_hz']!r}"
            ) from exc

    if len(times) >= 2:
        deltas = np.diff(times)
        if np.any(deltas <= 0):
            warnings.append(
                "NonUniformSampling: time column not strictly increasing; "
                "rate taken from median period"
            )
        med = float(np.median(np.abs(deltas)))
        if med <= 0:
            raise UnparseableFile(f"{path}: degenerate time column")
        if not warnings:
            worst = float(np.max(np.abs(deltas - med)))
            if worst > _RATE_TOLERANCE * med:
                warnings.append(
                    "NonUniformSampling: sample period varies by more than "
                    f"1 ppm (max deviation {worst:.3e} s); using median period"
                )
        inferred_rate = 1.0 / med
    else:
        inferred_rate = None

    if declared_rate is not None:
        rate = declared_rate
    elif inferred_rate is not None:
        rate = inferred_rate
    else:
        raise UnparseableFile(
            f"{path}: cannot determine sample rate from a single row "
            "without a sample_rate_hz header"
        )

    # Few-valued waveforms (clean logic/PN drives) sit at their levels by
    # construction; only analog-looking captures can be meaningfully clipped.
    if len(np.unique(volts)) > 16 and _clipping_run(volts) >= 3:
        warnings.append("ClippedSamples: 3+ consecutive samples at the extreme value")

    if "t0_s" in declared:
        try:
            t0 = float(declared["t0_s"])
        except ValueError as exc:
            raise UnparseableFile(
                f"{path}: bad t0_s header: {declared['t0_s']!r}") from exc
    else:
        t0 = float(times[0])

    if opts.strict:
        if declared_rate is None:
            raise UnparseableFile(
                f"{path}: strict mode requires a sample_rate_hz header")
        if warnings:
            raise UnparseableFile(f"{path}: strict mode: {warnings[0]}")

    waveform = Waveform(samples=volts, sample_rate=rate, t0=t0)
    return CaptureFile(source=declared.get("source", ""), sample_rate=rate,
                       waveform=waveform, warnings=tuple(warnings),
                       path=str(path))


def _clipping_run(volts: np.ndarray) -> int:
    """Longest run of consecutive samples pinned at the min or max value."""
    longest = 0
    for extreme in (volts.max(), volts.min()):
        at = volts == extreme
        run = 0
        for flag in at:
            run = run + 1 if flag else 0
            longest = max(longest, run)
    return longest


def write_capture(path, waveform: Waveform, source: str = "ibchan") -> None:
    """Write a capture that parse_capture reloads bit-identically.

    The declared header carries the exact sample rate and start time
    (repr round-trip); the time column is informational.
    """
    lines = [
        "# ibchan capture v1",
        f"# source = {source}",
        f"# sample_rate_hz = {float(waveform.sample_rate)!r}",
        f"# t0_s = {float(waveform.t0)!r}",
        "time_s,voltage_v",
    ]
    period = 1.0 / waveform.sample_rate
    for k, v in enumerate(waveform.samples):
        t = waveform.t0 + k * period
        lines.append(f"{t!r},{float(v)!r}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


# --- session manifests -------------------------------------------------------

@dataclass(frozen=True)
class SoundingParams:
    """PN sounding description stored in a session manifest."""

    degree: int
    chip_rate_hz: float
    amplitude_vpp: float = 1.0
    taps: tuple | None = None
    seed: int | None = None
    pad_chips: int = 0
    samples_per_chip: int = 1

    def __post_init__(self):
        if not 2 <= self.degree <= 16:
            raise SchemaViolation(f"sounding degree {self.degree} outside [2, 16]")
        if self.chip_rate_hz <= 0:
            raise SchemaViolation("chip_rate_hz must be positive")
        if self.amplitude_vpp <= 0:
            raise SchemaViolation("amplitude_vpp must be positive")
        if self.pad_chips < 0:
            raise SchemaViolation("pad_chips must be >= 0")
        if self.samples_per_chip < 1:
            raise SchemaViolation("samples_per_chip must be >= 1")
        if self.taps is not None:
            object.__setattr__(self, "taps", tuple(int(t) for t in self.taps))


@dataclass(frozen=True)
class SessionManifest:
    """Description of one measurement session on disk."""

    session_id: str
    rx: tuple
    sounding: SoundingParams
    tx: str | None = None
    shared_trigger: bool = True
    notes: str = ""

    def __post_init__(self):
        object.__setattr__(self, "rx", tuple(str(p) for p in self.rx))
        if not self.session_id:
            raise SchemaViolation("session_id must be non-empty")
        if not self.rx:
            raise SchemaViolation("manifest lists no rx captures")


@dataclass(frozen=True)
class LoadedSession:
    """Manifest plus every capture it references, fully loaded."""

    manifest: SessionManifest
    rx_captures: tuple
    tx_capture: CaptureFile | None = None

    @property
    def frames_available(self) -> int:
        return len(self.rx_captures)

    @property
    def sample_rate(self) -> float:
        return self.rx_captures[0].sample_rate


def _require(mapping, key, kind, where):
    if key not in mapping:
        raise SchemaViolation(f"{where}: missing required key {key!r}")
    value = mapping[key]
    if kind is float:
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise SchemaViolation(f"{where}: {key!r} must be a number")
        return float(value)
    if not isinstance(value, kind):
        raise SchemaViolation(f"{where}: {key!r} must be {kind.__name__}")
    return value


def _manifest_from_dict(doc: dict, where: str) -> SessionManifest:
    if not isinstance(doc, dict):
        raise SchemaViolation(f"{where}: manifest root must be an object")
    session_id = _require(doc, "session_id", str, where)
    rx = _require(doc, "rx", list, where)
    if not rx or not all(isinstance(p, str) for p in rx):
        raise SchemaViolation(f"{where}: 'rx' must be a non-empty list of paths")
    snd = _require(doc, "sounding", dict, where)
    degree = snd.get("degree")
    if not isinstance(degree, int) or isinstance(degree, bool):
        raise SchemaViolation(f"{where}: sounding.degree must be an integer")
    kwargs = {
        "degree": degree,
        "chip_rate_hz": _require(snd, "chip_rate_hz", float, where),
    }
    if "amplitude_vpp" in snd:
        kwargs["amplitude_vpp"] = _require(snd, "amplitude_vpp", float, where)
    for opt, kind in (("pad_chips", int), ("samples_per_chip", int),
                      ("seed", int)):
        if opt in snd:
            value = snd[opt]
            if not isinstance(value, int) or isinstance(value, bool):
                raise SchemaViolation(f"{where}: sounding.{opt} must be an integer")
            kwargs[opt] = value
    if "taps" in snd:
        taps = snd["taps"]
        if not isinstance(taps, list) or not all(isinstance(t, int) for t in taps):
            raise SchemaViolation(f"{where}: sounding.taps must be a list of integers")
        kwargs["taps"] = tuple(taps)
    sounding = SoundingParams(**kwargs)

    tx = doc.get("tx")
    if tx is not None and not isinstance(tx, str):
        raise SchemaViolation(f"{where}: 'tx' must be a path string")
    shared = doc.get("shared_trigger", True)
    if not isinstance(shared, bool):
        raise SchemaViolation(f"{where}: 'shared_trigger' must be a boolean")
    notes = doc.get("notes", "")
    if not isinstance(notes, str):
        raise SchemaViolation(f"{where}: 'notes' must be a string")
    return SessionManifest(session_id=session_id, rx=tuple(rx),
                           sounding=sounding, tx=tx,
                           shared_trigger=shared, notes=notes)


def load_session(manifest_path,
                 format_options: FormatOptions | None = None) -> LoadedSession:
    """Load a manifest and every capture it references.

    All captures are attempted before failing, so a MissingCapture error
    still names what did load; rates must agree across captures.

    Raises:
        SchemaViolation: malformed manifest.
        MissingCapture: one or more referenced files absent/unreadable.
        RateMismatch: captures disagree about the sample rate.
    """
    where = str(manifest_path)
    try:
        with open(manifest_path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise MissingCapture(f"{where}: {exc}", missing=[where], loaded=[]) from exc
    except json.JSONDecodeError as exc:
        raise SchemaViolation(f"{where}: not valid JSON: {exc}") from exc

    manifest = _manifest_from_dict(doc, where)
    base = os.path.dirname(os.path.abspath(manifest_path))

    def resolve(p):
        return p if os.path.isabs(p) else os.path.join(base, p)

    missing, loaded, captures = [], [], {}
    paths = ([manifest.tx] if manifest.tx else []) + list(manifest.rx)
    for p in paths:
        full = resolve(p)
        if not os.path.exists(full):
            missing.append(p)
            continue
        try:
            captures[p] = parse_capture(full, format_options)
            loaded.append(p)
        except (UnparseableFile, NoNumericData, AmbiguousDelimiter) as exc:
            raise UnparseableFile(f"{where}: capture {p}: {exc}") from exc
    if missing:
        raise MissingCapture(
            f"{where}: {len(missing)} capture(s) missing: "
            + ", ".join(missing)
            + (f" ({len(loaded)} other(s) loaded fine)" if loaded else ""),
            missing=missing, loaded=loaded,
        )

    rates = {p: captures[p].sample_rate for p in paths}
    reference = rates[manifest.rx[0]]
    offenders = {p: r for p, r in rates.items()
                 if abs(r - reference) > _RATE_TOLERANCE * reference}
    if offenders:
        raise RateMismatch(
            f"{where}: sample rates disagree: reference {reference} Hz, "
            f"offenders {offenders}", rates=rates,
        )

    return LoadedSession(
        manifest=manifest,
        rx_captures=tuple(captures[p] for p in manifest.rx),
        tx_capture=captures[manifest.tx] if manifest.tx else None,
    )


def write_session_manifest(path, manifest: SessionManifest) -> None:
    """Write a manifest that load_session accepts."""
    snd = {
        "degree": manifest.sounding.degree,
        "chip_rate_hz": manifest.sounding.chip_rate_hz,
        "amplitude_vpp": manifest.sounding.amplitude_vpp,
        "pad_chips": manifest.sounding.pad_chips,
        "samples_per_chip": manifest.sounding.samples_per_chip,
    }
    if manifest.sounding.taps is not None:
        snd["taps"] = list(manifest.sounding.taps)
    if manifest.sounding.seed is not None:
        snd["seed"] = manifest.sounding.seed
    doc = {
        "session_id": manifest.session_id,
        "rx": list(manifest.rx),
        "sounding": snd,
        "shared_trigger": manifest.shared_trigger,
        "notes": manifest.notes,
    }
    if manifest.tx:
        doc["tx"] = manifest.tx
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


# --- generic delimited tables ------------------------------------------------

def write_columns(path, header, columns) -> None:
    """Write named float columns with exact (repr) formatting."""
    columns = [np.asarray(c) for c in columns]
    if len(header) != len(columns):
        raise ValueError("header and column counts differ")
    n = len(columns[0])
    if any(len(c) != n for c in columns):
        raise ValueError("columns must share a length")
    lines = [",".join(header)]
    for k in range(n):
        lines.append(",".join(repr(float(c[k])) for c in columns))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_columns(path) -> tuple[list[str], np.ndarray]:
    """Read a write_columns file back: (header, array of shape (n, cols))."""
    try:
        with open(path, encoding="utf-8") as fh:
            lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    except OSError as exc:
        raise UnparseableFile(f"{path}: {exc}") from exc
    if not lines:
        raise NoNumericData(f"{path}: empty table")
    header = lines[0].split(",")
    data = np.array([[float(tok) for tok in ln.split(",")] for ln in lines[1:]],
                    dtype=np.float64)
    return header, data
