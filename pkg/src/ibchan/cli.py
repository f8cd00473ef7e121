"""Command-line front end for the channel toolkit.

Subcommands compose the library: generate sounding waveforms, simulate
channels, solve the tissue model, estimate CIR/CFR from capture sessions,
and re-render reports.  Every subcommand is deterministic given its inputs
and seed; data files rerun byte-identically (plot images are exempt).

Option values resolve as CLI flag > config file > built-in default, and
the effective configuration is echoed into the output directory.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import plotting
from .channel_model import (
    ChannelSimConfig,
    apply_channel,
    fit_gain_model,
    model_frequency_response,
    model_from_text,
    model_to_text,
)
from .errors import IbchanError, SchemaViolation
from .fem import (
    assemble_system,
    custom_system,
    field_table,
    gain_sweep,
    solve_potential,
    uniform_layer_grid,
)
from .ingest_io import (
    FormatOptions,
    SessionManifest,
    SoundingParams,
    load_session,
    read_columns,
    write_capture,
    write_columns,
    write_session_manifest,
)
from .signals import (
    Waveform,
    cross_correlate,
    generate_mseq,
    resample_hold,
    to_bipolar,
    zero_pad,
)
from .sounder import (
    ChannelEstimate,
    SounderConfig,
    average_estimates,
    cfr_from_cir,
    estimate_cir,
    estimate_cir_per_frame,
    power_delay_profile,
    stationarity_check,
)
from .tissue import ArmModel, Electrode, TissueLayer, default_arm_model, load_dielectric_table

__all__ = ["main"]


# --- option plumbing ---------------------------------------------------------

def _freq(text):
    """Parse a frequency with optional k/M/G suffix: '2.5M' -> 2.5e6."""
    if isinstance(text, (int, float)):
        return float(text)
    s = text.strip()
    scale = 1.0
    if s and s[-1] in "kMG":
        scale = {"k": 1e3, "M": 1e6, "G": 1e9}[s[-1]]
        s = s[:-1]
    try:
        return float(s) * scale
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"not a frequency: {text!r} (use e.g. 100k, 2.5M, 1e6)") from None


def _freq_list(text):
    if isinstance(text, (list, tuple)):
        return [_freq(t) for t in text]
    return [_freq(tok) for tok in str(text).split(",") if tok.strip()]


def _int_list(text):
    if isinstance(text, (list, tuple)):
        return [int(t) for t in text]
    return [int(tok) for tok in str(text).split(",") if tok.strip()]


def _float_or_inf(text):
    if isinstance(text, (int, float)):
        return float(text)
    return math.inf if text.strip().lower() in ("inf", "+inf") else float(text)


class Opt:
    """One resolvable option: CLI flag > config-file entry > default."""

    def __init__(self, name, conv, default, help, flag=False, required=False):
        self.name = name
        self.conv = conv
        self.default = default
        self.help = help
        self.flag = flag
        self.required = required

    @property
    def dest(self):
        return self.name.replace("-", "_")


def _add_options(sub, opts):
    sub.add_argument("--config", type=str, default=None,
                     help="JSON file of option values (flags override it)")
    for o in opts:
        if o.flag:
            sub.add_argument(f"--{o.name}", action="store_const", const=True,
                             default=None, help=f"{o.help} (default: off)")
        else:
            shown = "required" if o.required else f"default: {o.default}"
            sub.add_argument(f"--{o.name}", type=str, default=None,
                             help=f"{o.help} ({shown})")


def _resolve(args, opts, sub):
    """Merge flag, config-file, and default values; echo-ready dict."""
    doc = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                doc = json.load(fh)
        except OSError as exc:
            sub.error(f"cannot read --config: {exc}")
        except json.JSONDecodeError as exc:
            sub.error(f"--config is not valid JSON: {exc}")
        if not isinstance(doc, dict):
            sub.error("--config must contain a JSON object")
        unknown = set(doc) - {o.name for o in opts}
        if unknown:
            sub.error(f"--config has unknown keys: {sorted(unknown)}")
    eff = {}
    for o in opts:
        raw = getattr(args, o.dest)
        if raw is None and o.name in doc:
            raw = doc[o.name]
        if raw is None:
            if o.required:
                sub.error(f"--{o.name} is required")
            eff[o.name] = o.default
        elif o.flag:
            eff[o.name] = bool(raw)
        else:
            try:
                eff[o.name] = o.conv(raw)
            except (ValueError, TypeError, argparse.ArgumentTypeError) as exc:
                sub.error(f"--{o.name}: {exc}")
    return eff


def _jsonable(value):
    if isinstance(value, float) and not math.isfinite(value):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def _echo_config(outdir, subcommand, eff):
    # The destination path itself carries no reproduction value and would
    # make otherwise-identical runs into different directories diverge.
    doc = {"subcommand": subcommand}
    doc.update({k: _jsonable(v) for k, v in eff.items() if k != "out"})
    with open(os.path.join(outdir, "config.json"), "w", encoding="utf-8",
              newline="\n") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _ensure_outdir(eff):
    outdir = eff["out"]
    os.makedirs(outdir, exist_ok=True)
    return outdir


def _write_text(path, lines):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


# --- generate ----------------------------------------------------------------

GENERATE_OPTS = [
    Opt("degree", int, 13, "LFSR register length (2..16)"),
    Opt("taps", _int_list, None, "feedback polynomial exponents, e.g. 13,4,3,1"),
    Opt("seed-state", int, None, "initial LFSR register state (nonzero)"),
    Opt("chip-rate", _freq, 2.5e6, "chip rate in Hz (k/M suffixes ok)"),
    Opt("amplitude", float, 1.0, "peak-to-peak amplitude in volts"),
    Opt("pad", int, 0, "zero-pad chips appended after the sequence"),
    Opt("samples-per-chip", int, 1, "zero-order-hold samples per chip"),
    Opt("out", str, None, "output directory", required=True),
]


def _build_frame(degree, taps, seed_state, chip_rate, amplitude, pad,
                 samples_per_chip):
    """One frame of the padded bipolar sounding waveform plus its sequence."""
    seq = generate_mseq(degree, taps=taps, seed=seed_state)
    w = to_bipolar(seq, amplitude_vpp=amplitude, chip_rate=chip_rate)
    if samples_per_chip > 1:
        w = resample_hold(w, chip_rate * samples_per_chip)
    if pad > 0:
        w = zero_pad(w, pad * samples_per_chip)
    return seq, w


def _validate_sounding(eff, sub):
    if not 2 <= eff["degree"] <= 16:
        sub.error(f"--degree must be in 2..16, got {eff['degree']}")
    if eff["chip-rate"] <= 0:
        sub.error("--chip-rate must be positive")
    if eff["amplitude"] <= 0:
        sub.error("--amplitude must be positive")
    if eff["pad"] < 0:
        sub.error("--pad must be >= 0")
    if eff["samples-per-chip"] < 1:
        sub.error("--samples-per-chip must be >= 1")


def cmd_generate(args, sub):
    eff = _resolve(args, GENERATE_OPTS, sub)
    _validate_sounding(eff, sub)
    outdir = _ensure_outdir(eff)

    seq, w = _build_frame(eff["degree"], eff["taps"], eff["seed-state"],
                          eff["chip-rate"], eff["amplitude"], eff["pad"],
                          eff["samples-per-chip"])
    write_capture(os.path.join(outdir, "waveform.csv"), w,
                  source=f"generate degree={eff['degree']}")

    unit = to_bipolar(seq, amplitude_vpp=2.0, chip_rate=eff["chip-rate"])
    auto = cross_correlate(unit, unit, mode="circular")
    vals = np.rint(auto.values).astype(np.int64)
    ones = int(np.sum(seq.chips))
    stats = [
        f"period = {seq.period}",
        f"taps = {','.join(str(t) for t in sorted(seq.taps))}",
        f"ones = {ones}",
        f"zeros = {seq.period - ones}",
        f"balance = {2 * ones - seq.period}",
        f"autocorr_peak = {vals[0]}",
        f"autocorr_offpeak_min = {vals[1:].min()}",
        f"autocorr_offpeak_max = {vals[1:].max()}",
        f"samples_written = {len(w.samples)}",
        f"sample_rate_hz = {float(w.sample_rate)!r}",
    ]
    _write_text(os.path.join(outdir, "stats.txt"), stats)
    _echo_config(outdir, "generate", eff)
    print("\n".join(stats))
    return 0


# --- simulate ----------------------------------------------------------------

SIMULATE_OPTS = [
    Opt("model", str, None, "channel model text file to replay"),
    Opt("fit-from", str, None,
        "CSV of frequency_hz,gain_db samples to fit a model from"),
    Opt("order", int, 2, "model order when fitting from samples"),
    Opt("degree", int, 13, "LFSR register length (2..16)"),
    Opt("taps", _int_list, None, "feedback polynomial exponents"),
    Opt("seed-state", int, None, "initial LFSR register state"),
    Opt("chip-rate", _freq, 2.5e6, "chip rate in Hz"),
    Opt("amplitude", float, 1.0, "peak-to-peak amplitude in volts"),
    Opt("pad", int, 0, "zero-pad chips per frame"),
    Opt("samples-per-chip", int, 1, "zero-order-hold samples per chip"),
    Opt("frames", int, 4, "sequence repetitions per capture"),
    Opt("captures", int, 1, "independent rx captures to synthesize"),
    Opt("snr-db", _float_or_inf, math.inf, "AWGN level; inf disables noise"),
    Opt("cm-amplitude", float, 0.0, "mains interference amplitude in volts"),
    Opt("cm-freq", _freq, 50.0, "mains fundamental in Hz"),
    Opt("ir-samples", int, 2048, "discretized impulse-response length"),
    Opt("seed", int, 0, "noise RNG seed"),
    Opt("session-id", str, "sim", "session identifier in the manifest"),
    Opt("out", str, None, "output directory", required=True),
]


def cmd_simulate(args, sub):
    eff = _resolve(args, SIMULATE_OPTS, sub)
    _validate_sounding(eff, sub)
    if (eff["model"] is None) == (eff["fit-from"] is None):
        sub.error("exactly one of --model / --fit-from is required")
    if eff["frames"] < 1 or eff["captures"] < 1:
        sub.error("--frames and --captures must be >= 1")
    outdir = _ensure_outdir(eff)

    if eff["model"] is not None:
        with open(eff["model"], encoding="utf-8") as fh:
            model = model_from_text(fh.read())
    else:
        header, data = read_columns(eff["fit-from"])
        model = fit_gain_model(list(zip(data[:, 0], data[:, 1])),
                               order=eff["order"])

    _, frame = _build_frame(eff["degree"], eff["taps"], eff["seed-state"],
                            eff["chip-rate"], eff["amplitude"], eff["pad"],
                            eff["samples-per-chip"])
    drive = Waveform(samples=np.tile(frame.samples, eff["frames"]),
                     sample_rate=frame.sample_rate, t0=frame.t0)

    write_capture(os.path.join(outdir, "tx.csv"), frame, source="simulate tx")
    rx_names = []
    for k in range(eff["captures"]):
        cfg = ChannelSimConfig(noise_snr_db=eff["snr-db"],
                               cm_tone_hz=eff["cm-freq"],
                               cm_amplitude_v=eff["cm-amplitude"],
                               rng_seed=eff["seed"] + k,
                               ir_samples=eff["ir-samples"])
        rx = apply_channel(drive, model, cfg)
        name = f"rx_{k:03d}.csv"
        write_capture(os.path.join(outdir, name), rx, source="simulate rx")
        rx_names.append(name)

    manifest = SessionManifest(
        session_id=eff["session-id"],
        rx=tuple(rx_names),
        sounding=SoundingParams(
            degree=eff["degree"], chip_rate_hz=eff["chip-rate"],
            amplitude_vpp=eff["amplitude"],
            taps=tuple(eff["taps"]) if eff["taps"] else None,
            seed=eff["seed-state"], pad_chips=eff["pad"],
            samples_per_chip=eff["samples-per-chip"]),
        tx="tx.csv",
        notes=f"synthetic session, model order {model.order}")
    write_session_manifest(os.path.join(outdir, "session.json"), manifest)
    with open(os.path.join(outdir, "model_used.txt"), "w", encoding="utf-8",
              newline="\n") as fh:
        fh.write(model_to_text(model))
    _echo_config(outdir, "simulate", eff)
    print(f"wrote {eff['captures']} capture(s) of {eff['frames']} frame(s) "
          f"to {outdir}")
    return 0


# --- sound -------------------------------------------------------------------

SOUND_OPTS = [
    Opt("manifest", str, None, "session manifest JSON", required=True),
    Opt("model", str, None, "reference channel model for comparison"),
    Opt("sweep", str, None, "reference gain CSV (frequency_hz,gain_db)"),
    Opt("alignment", str, "origin", "CIR alignment: origin or peak"),
    Opt("strict", None, False, "strict capture parsing (declared rate, no warnings)",
        flag=True),
    Opt("cfr-freqs", _freq_list, None,
        "explicit CFR frequencies, e.g. 100k,1M,2.5M"),
    Opt("cfr-points", int, 97, "CFR grid size when --cfr-freqs is absent"),
    Opt("out", str, None, "output directory", required=True),
]


def _load_reference(eff):
    """Optional (label, freqs, gain_db) traces from --model / --sweep."""
    refs = []
    model = None
    if eff["model"] is not None:
        with open(eff["model"], encoding="utf-8") as fh:
            model = model_from_text(fh.read())
    if eff["sweep"] is not None:
        header, data = read_columns(eff["sweep"])
        refs.append(("solver sweep", data[:, 0], data[:, 1]))
    return model, refs


def cmd_sound(args, sub):
    eff = _resolve(args, SOUND_OPTS, sub)
    if eff["alignment"] not in ("origin", "peak"):
        sub.error("--alignment must be origin or peak")
    outdir = _ensure_outdir(eff)

    sess = load_session(eff["manifest"], FormatOptions(strict=eff["strict"]))
    snd = sess.manifest.sounding
    seq = generate_mseq(snd.degree, taps=snd.taps, seed=snd.seed)
    if sess.tx_capture is not None:
        tx = sess.tx_capture.waveform
    else:
        _, tx = _build_frame(snd.degree, snd.taps, snd.seed, snd.chip_rate_hz,
                             snd.amplitude_vpp, snd.pad_chips,
                             snd.samples_per_chip)
    config = SounderConfig(samples_per_chip=snd.samples_per_chip,
                           alignment=eff["alignment"])

    per_capture, frames = [], []
    for cap in sess.rx_captures:
        per_capture.append(estimate_cir(tx, cap.waveform, seq, config))
        frames.extend(estimate_cir_per_frame(tx, cap.waveform, seq, config))
    estimate = average_estimates(per_capture)
    pdp = power_delay_profile(estimate)
    stationarity = stationarity_check(frames) if len(frames) >= 2 else None

    fs = sess.sample_rate
    if eff["cfr-freqs"] is not None:
        cfr_grid = np.asarray(sorted(eff["cfr-freqs"]), dtype=np.float64)
    else:
        lo = max(snd.chip_rate_hz / 100.0, 1.0)
        cfr_grid = np.geomspace(lo, fs / 2.0, eff["cfr-points"])
    cfr = cfr_from_cir(estimate, cfr_grid)

    write_columns(os.path.join(outdir, "cir.csv"), ["delay_s", "tap"],
                  [estimate.delay_axis, estimate.taps])
    write_columns(os.path.join(outdir, "pdp.csv"), ["delay_s", "power"],
                  [pdp.delay_axis, pdp.power])
    write_columns(os.path.join(outdir, "cfr.csv"),
                  ["frequency_hz", "re", "im", "gain_db"],
                  [cfr.freqs, cfr.gains.real, cfr.gains.imag, cfr.gain_db])

    model, refs = _load_reference(eff)
    if model is not None:
        ref = model_frequency_response(model, cfr.freqs)
        refs.insert(0, ("model", ref.freqs, ref.gain_db))
        write_columns(os.path.join(outdir, "comparison.csv"),
                      ["frequency_hz", "measured_db", "model_db", "delta_db"],
                      [cfr.freqs, cfr.gain_db, ref.gain_db,
                       cfr.gain_db - ref.gain_db])

    warnings = [w for cap in sess.rx_captures for w in cap.warnings]
    if sess.tx_capture is not None:
        warnings = list(sess.tx_capture.warnings) + warnings
    report = [
        "# channel estimate report",
        f"session_id = {sess.manifest.session_id}",
        f"captures = {sess.frames_available}",
        f"frames_averaged = {estimate.frames_averaged}",
        f"sample_rate_hz = {float(fs)!r}",
        f"alignment = {eff['alignment']}",
        f"peak_index = {estimate.peak_index}",
        f"peak_delay_s = {float(estimate.delay_axis[estimate.peak_index])!r}",
        f"peak_amplitude = {float(estimate.taps[estimate.peak_index])!r}",
        f"peak_to_offpeak_db = {float(estimate.peak_to_offpeak_db)!r}",
        f"normalization = {float(estimate.normalization)!r}",
    ]
    if stationarity is not None:
        report += [
            f"stationarity_cv = {float(stationarity.amplitude_cv)!r}",
            f"stationarity_max_drift_samples = {stationarity.max_delay_drift_samples}",
            f"time_invariant = {str(stationarity.time_invariant).lower()}",
        ]
    else:
        report.append("stationarity = not_applicable (single frame)")
    report.append("warnings = " + ("; ".join(warnings) if warnings else "none"))
    _write_text(os.path.join(outdir, "report.txt"), report)

    plotting.plot_cir(estimate, os.path.join(outdir, "cir.png"))
    plotting.plot_pdp(pdp, os.path.join(outdir, "pdp.png"))
    plotting.plot_gain(os.path.join(outdir, "cfr.png"),
                       [("measured", cfr.freqs, cfr.gain_db)] + refs,
                       title="channel frequency response")
    _echo_config(outdir, "sound", eff)
    for w in warnings:
        print(f"warning: {w}")
    print(f"estimated CIR from {sess.frames_available} capture(s), "
          f"{estimate.frames_averaged} frame(s) averaged; "
          f"peak at {estimate.peak_index} "
          f"({estimate.peak_to_offpeak_db:.1f} dB over off-peak)")
    return 0


# --- solve -------------------------------------------------------------------

SOLVE_OPTS = [
    Opt("freqs", _freq_list, None, "frequencies to solve, e.g. 100k,1M,2.5M"),
    Opt("tissue-csv", str, None, "dielectric table CSV (default: bundled)"),
    Opt("arm-config", str, None, "arm geometry JSON (default: built-in model)"),
    Opt("hx", float, 4.0, "horizontal cell size in mm"),
    Opt("hy", float, 0.5, "vertical cell size in mm"),
    Opt("drive", str, "tx", "driven pair: tx or rx"),
    Opt("fields", None, False, "export field tables and maps per frequency",
        flag=True),
    Opt("validate", None, False,
        "solve homogeneous oracles and report analytic-vs-numeric error",
        flag=True),
    Opt("out", str, None, "output directory", required=True),
]


def _arm_from_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise SchemaViolation(f"cannot read arm config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SchemaViolation(f"arm config is not valid JSON: {exc}") from exc
    try:
        layers = tuple(TissueLayer(name=str(n), thickness_mm=float(t))
                       for n, t in doc["layers"])
        electrodes = tuple(
            Electrode(role=e["role"], x_mm=float(e["x_mm"]),
                      y_center_mm=float(e["y_center_mm"]),
                      height_mm=float(e.get("height_mm", 20.0)),
                      radius_mm=float(e.get("radius_mm", 1.0)))
            for e in doc["electrodes"])
        return ArmModel(layers=layers, electrodes=electrodes,
                        length_mm=float(doc.get("length_mm", 600.0)))
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaViolation(f"bad arm config {path}: {exc}") from exc


def _run_validation(outdir):
    """Homogeneous ramp and two-layer divider against closed forms."""
    L, H, sigma = 0.1, 0.04, 0.36
    grid = uniform_layer_grid(L, [H], [40], 25, [sigma])
    sol = solve_potential(custom_system(grid, plates={"top": 1.0, "bottom": 0.0}))
    ramp_err = float(np.max(np.abs(sol.potential.real
                                   - (1.0 - grid.y_centers / H)[:, None])))

    s1, s2, d1, d2 = 0.36, 0.02, 0.01, 0.03
    grid2 = uniform_layer_grid(L, [d1, d2], [10, 30], 25, [s1, s2])
    sol2 = solve_potential(custom_system(grid2, plates={"top": 1.0, "bottom": 0.0}))
    r1, r2 = d1 / s1, d2 / s2
    y = grid2.y_centers
    exact = np.where(y <= d1, 1.0 - (y / s1) / (r1 + r2),
                     1.0 - (r1 + (y - d1) / s2) / (r1 + r2))
    divider_err = float(np.max(np.abs(sol2.potential.real - exact[:, None])))

    worst = max(ramp_err, divider_err)
    ok = worst <= 1e-6
    lines = [
        f"ramp_max_error = {ramp_err!r}",
        f"divider_max_error = {divider_err!r}",
        f"validation_max_error = {worst!r}",
        f"validation_pass = {str(ok).lower()}",
    ]
    _write_text(os.path.join(outdir, "validation.txt"), lines)
    print("\n".join(lines))
    return ok


def cmd_solve(args, sub):
    eff = _resolve(args, SOLVE_OPTS, sub)
    if eff["drive"] not in ("tx", "rx"):
        sub.error("--drive must be tx or rx")
    if not eff["validate"] and not eff["freqs"]:
        sub.error("--freqs is required unless --validate is given")
    outdir = _ensure_outdir(eff)
    _echo_config(outdir, "solve", eff)

    status = 0
    if eff["validate"]:
        if not _run_validation(outdir):
            status = 1

    if eff["freqs"]:
        table = load_dielectric_table(eff["tissue-csv"]) \
            if eff["tissue-csv"] else load_dielectric_table()
        arm = _arm_from_json(eff["arm-config"]) if eff["arm-config"] \
            else default_arm_model()
        drive = (eff["drive"] + "+", eff["drive"] + "-")
        receive = ("rx+", "rx-") if eff["drive"] == "tx" else ("tx+", "tx-")
        sweep = gain_sweep(arm, eff["freqs"], table, hx_mm=eff["hx"],
                           hy_mm=eff["hy"], drive=drive, receive=receive)
        write_columns(os.path.join(outdir, "gains.csv"),
                      ["frequency_hz", "gain_db", "v_re", "v_im"],
                      [sweep.freqs, sweep.gain_db,
                       sweep.gains.real, sweep.gains.imag])
        gain_db = sweep.gain_db
        monotone = bool(np.all(np.diff(gain_db) >= 0)) if len(gain_db) > 1 else True
        lines = [
            f"points = {len(gain_db)}",
            f"gain_db_first = {float(gain_db[0])!r} at {float(sweep.freqs[0])!r} Hz",
            f"gain_db_last = {float(gain_db[-1])!r} at {float(sweep.freqs[-1])!r} Hz",
            f"monotone_nondecreasing = {str(monotone).lower()}",
        ]
        _write_text(os.path.join(outdir, "gains_report.txt"), lines)
        print("\n".join(lines))
        plotting.plot_gain(os.path.join(outdir, "gain.png"),
                           [("solved", sweep.freqs, gain_db)],
                           title="tissue transfer gain")

        if eff["fields"]:
            for k, f in enumerate(sweep.freqs):
                sol = solve_potential(assemble_system(arm, float(f), table,
                                                      hx_mm=eff["hx"],
                                                      hy_mm=eff["hy"],
                                                      drive=drive))
                rows = field_table(sol)
                write_columns(os.path.join(outdir, f"field_{k:03d}.csv"),
                              ["x_m", "y_m", "re_v", "im_v", "abs_e"],
                              [rows[:, j] for j in range(5)])
                plotting.plot_field_maps(
                    sol, os.path.join(outdir, f"potential_{k:03d}.png"),
                    os.path.join(outdir, f"efield_{k:03d}.png"))
    return status


# --- report ------------------------------------------------------------------

REPORT_OPTS = [
    Opt("estimate-dir", str, None, "output directory of a sound run",
        required=True),
    Opt("model", str, None, "channel model text file to overlay"),
    Opt("sweep", str, None, "solver gain CSV to overlay"),
    Opt("out", str, None, "output directory", required=True),
]


def cmd_report(args, sub):
    eff = _resolve(args, REPORT_OPTS, sub)
    outdir = _ensure_outdir(eff)
    est_dir = eff["estimate-dir"]

    header, cfr_data = read_columns(os.path.join(est_dir, "cfr.csv"))
    freqs, gain_db = cfr_data[:, 0], cfr_data[:, 3]
    curves = [("measured", freqs, gain_db)]
    summary = [f"cfr_points = {len(freqs)}"]
    columns = {"frequency_hz": freqs, "measured_db": gain_db}

    model, refs = _load_reference(eff)
    if model is not None:
        ref = model_frequency_response(model, freqs)
        curves.append(("model", freqs, ref.gain_db))
        columns["model_db"] = ref.gain_db
        columns["model_delta_db"] = gain_db - ref.gain_db
        summary.append(
            f"model_max_abs_delta_db = {float(np.max(np.abs(columns['model_delta_db'])))!r}")
    for label, rf, rg in refs:
        curves.append((label, rf, rg))
        order = np.argsort(rf)
        rf_sorted, rg_sorted = rf[order], rg[order]
        inside = (freqs >= rf_sorted[0]) & (freqs <= rf_sorted[-1])
        sweep_db = np.full(len(freqs), np.nan)
        sweep_db[inside] = np.interp(np.log10(freqs[inside]),
                                     np.log10(rf_sorted), rg_sorted)
        columns["sweep_db"] = sweep_db
        columns["sweep_delta_db"] = gain_db - sweep_db
        if np.any(inside):
            summary.append(
                "sweep_max_abs_delta_db = "
                f"{float(np.nanmax(np.abs(gain_db - sweep_db)))!r}")

    write_columns(os.path.join(outdir, "comparison.csv"),
                  list(columns), list(columns.values()))
    plotting.plot_gain(os.path.join(outdir, "gain_overlay.png"), curves,
                       title="measured vs reference gain")

    cir_path = os.path.join(est_dir, "cir.csv")
    if os.path.exists(cir_path):
        _, cir = read_columns(cir_path)
        n = len(cir)
        est = ChannelEstimate(
            taps=cir[:, 1], delay_axis=cir[:, 0], normalization=1.0,
            peak_index=int(np.argmax(np.abs(cir[:, 1]))),
            peak_to_offpeak_db=0.0, frames_averaged=1)
        plotting.plot_cir(est, os.path.join(outdir, "cir.png"))
        summary.append(f"cir_taps = {n}")

    _write_text(os.path.join(outdir, "summary.txt"), summary)
    _echo_config(outdir, "report", eff)
    print("\n".join(summary))
    return 0


# --- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ibchan",
        description="Galvanic intrabody channel toolkit: sounding waveforms, "
                    "channel simulation, tissue field solves, and CIR/CFR "
                    "estimation from capture sessions.")
    subs = parser.add_subparsers(dest="subcommand", required=True)

    specs = [
        ("generate", "write a PN sounding waveform and its statistics",
         GENERATE_OPTS, cmd_generate),
        ("simulate", "synthesize a capture session through a channel model",
         SIMULATE_OPTS, cmd_simulate),
        ("sound", "estimate CIR/PDP/CFR from a capture session",
         SOUND_OPTS, cmd_sound),
        ("solve", "solve the tissue model for transfer gain and fields",
         SOLVE_OPTS, cmd_solve),
        ("report", "re-render figures and comparisons from a sound run",
         REPORT_OPTS, cmd_report),
    ]
    for name, help_text, opts, func in specs:
        sub = subs.add_parser(name, help=help_text, description=help_text)
        _add_options(sub, opts)
        sub.set_defaults(func=func, _sub=sub)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, args._sub)
    except IbchanError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
