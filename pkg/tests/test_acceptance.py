"""Acceptance suite: eight pass/fail criteria with stated tolerances.

Each criterion is one test named test_criterion_<n>_<label>; the pytest
verdict line is the pass/fail record, and each test also prints a
one-line summary with the measured numbers (visible with -s or -rA).
Oracles here are independent of the implementation paths they check:
integer arithmetic for sequence properties, direct convolution for the
sounder, closed-form solutions for the field solver.
"""

import os
import time

import numpy as np
import pytest

from ibchan.channel_model import (
    ChannelSimConfig,
    apply_channel,
    fit_gain_model,
    model_frequency_response,
)
from ibchan.cli import main
from ibchan.fem import custom_system, gain_sweep, solve_potential, uniform_layer_grid
from ibchan.ingest_io import parse_capture, write_capture
from ibchan.signals import Waveform, generate_mseq, to_bipolar
from ibchan.sounder import (
    ChannelEstimate,
    SounderConfig,
    cfr_from_cir,
    estimate_cir,
    stationarity_check,
)
from ibchan.tissue import default_arm_model

MEASURED_GAINS = [(100e3, -52.2), (1e6, -43.75), (2.5e6, -43.2)]
ORIGIN = SounderConfig(alignment="origin")


def report(line):
    print(f"\n{line}")


def test_criterion_1_msequence_suite():
    t0 = time.perf_counter()
    for m in range(3, 14):
        seq = generate_mseq(m)
        n = 2 ** m - 1
        assert seq.period == n
        chips = seq.chips.astype(np.int64)
        ones = int(chips.sum())
        assert ones - (n - ones) == 1  # balance

        bipolar = 2 * chips - 1
        # Independent oracle: exact integer circular autocorrelation.
        for lag in range(n):
            r = int(np.dot(np.roll(bipolar, -lag), bipolar))
            assert r == (n if lag == 0 else -1), (m, lag, r)
    elapsed = time.perf_counter() - t0
    assert elapsed < 5.0
    report(f"criterion 1 (m-sequence suite): PASS -- m=3..13 exact in {elapsed:.1f} s")


def test_criterion_2_sounder_oracle():
    t0 = time.perf_counter()
    seq = generate_mseq(13)
    n = seq.period
    tx = to_bipolar(seq, amplitude_vpp=1.0, chip_rate=5e6)
    rng = np.random.default_rng(12345)

    worst = 0.0
    for _ in range(200):
        n_taps = int(rng.integers(1, 11))
        h = np.zeros(n_taps)
        h[0] = rng.uniform(0.5, 1.5) * rng.choice([-1.0, 1.0])
        if n_taps > 1:
            echoes = rng.uniform(-1.0, 1.0, size=n_taps - 1)
            mass = np.sum(np.abs(echoes))
            budget = 0.5 * abs(h[0])
            if mass > budget:
                echoes *= budget / mass
            h[1:] = echoes
        stream = np.tile(tx.samples, 2)
        rx = Waveform(samples=np.convolve(stream, h)[: len(stream)],
                      sample_rate=tx.sample_rate)
        est = estimate_cir(tx, rx, seq, ORIGIN)
        h_full = np.zeros(n)
        h_full[:n_taps] = h
        err = float(np.max(np.abs(est.taps - h_full)))
        bound = 2.0 * float(np.max(np.abs(h))) / n
        assert err <= bound, (err, bound)
        worst = max(worst, err / bound)

    correct = 0
    for trial in range(100):
        trial_rng = np.random.default_rng(1000 + trial)
        d = int(trial_rng.integers(0, 50))
        h = np.zeros(d + 4)
        h[d] = 1.0
        h[d + 3] = 0.3
        stream = np.tile(tx.samples, 2)
        clean = np.convolve(stream, h)[: len(stream)]
        sigma = float(np.sqrt(np.mean(clean ** 2))) * 10 ** (-20 / 20)
        rx = Waveform(samples=clean + trial_rng.normal(scale=sigma,
                                                       size=len(clean)),
                      sample_rate=tx.sample_rate)
        est = estimate_cir(tx, rx, seq, ORIGIN)
        if est.peak_index == d:
            correct += 1
    assert correct >= 99, correct
    elapsed = time.perf_counter() - t0
    assert elapsed < 60.0
    report("criterion 2 (sounder oracle): PASS -- 200 channels within bound "
           f"(worst {worst:.2f} of budget), delay correct {correct}/100, "
           f"{elapsed:.1f} s")


def test_criterion_3_measured_gain_round_trip():
    t0 = time.perf_counter()
    model = fit_gain_model(MEASURED_GAINS, order=2)
    seq = generate_mseq(13)
    frame = to_bipolar(seq, amplitude_vpp=1.0, chip_rate=5e6)
    drive = Waveform(samples=np.tile(frame.samples, 4), sample_rate=5e6)
    rx = apply_channel(drive, model,
                       ChannelSimConfig(noise_snr_db=30.0, rng_seed=7,
                                        ir_samples=2048))
    est = estimate_cir(frame, rx, seq, ORIGIN)

    freqs = np.array([f for f, _ in MEASURED_GAINS])
    measured = cfr_from_cir(est, freqs).gain_db
    fitted = model_frequency_response(model, freqs).gain_db
    deltas = measured - fitted
    assert np.max(np.abs(deltas)) <= 1.5, deltas
    elapsed = time.perf_counter() - t0
    assert elapsed < 30.0
    report("criterion 3 (measured gain round-trip): PASS -- deltas at "
           f"100k/1M/2.5M = {deltas[0]:+.2f}/{deltas[1]:+.2f}/"
           f"{deltas[2]:+.2f} dB (budget 1.5), {elapsed:.1f} s")


def _cosine_two_layer_error(refine):
    """Relative L2 error of a separable two-layer closed-form solution."""
    s1, s2 = 0.36, 0.02
    d, height, length = 0.012, 0.040, 0.100
    grid = uniform_layer_grid(length, [d, height - d],
                              [6 * refine, 14 * refine], 25 * refine,
                              [s1, s2])
    k = np.pi / length
    lhs = np.array([[np.sinh(k * d), -np.sinh(k * (height - d))],
                    [s1 * np.cosh(k * d), s2 * np.cosh(k * (height - d))]])
    rhs = np.array([-np.cosh(k * d), -s1 * np.sinh(k * d)])
    b_coef, c_coef = np.linalg.solve(lhs, rhs)

    def u(y):
        return np.where(y <= d, np.cosh(k * y) + b_coef * np.sinh(k * y),
                        c_coef * np.sinh(k * (height - y)))

    top = np.cos(k * grid.x_centers)
    sol = solve_potential(custom_system(grid, plates={"top": top,
                                                      "bottom": 0.0}))
    exact = np.cos(k * grid.x_centers)[None, :] * u(grid.y_centers)[:, None]
    return float(np.sqrt(np.mean((sol.potential.real - exact) ** 2))
                 / np.sqrt(np.mean(exact ** 2)))


def test_criterion_4_pde_oracles():
    t0 = time.perf_counter()
    # Homogeneous ramp: V spans 1 V, so absolute error is relative error.
    height = 0.04
    grid = uniform_layer_grid(0.1, [height], [40], 25, [0.36])
    sol = solve_potential(custom_system(grid, plates={"top": 1.0,
                                                      "bottom": 0.0}))
    ramp_err = float(np.max(np.abs(sol.potential.real
                                   - (1.0 - grid.y_centers / height)[:, None])))
    assert ramp_err <= 1e-6

    # Two-layer series divider at the baseline grid.
    s1, s2, d1, d2 = 0.36, 0.02, 0.01, 0.03
    grid2 = uniform_layer_grid(0.1, [d1, d2], [8, 12], 10, [s1, s2])
    sol2 = solve_potential(custom_system(grid2, plates={"top": 1.0,
                                                        "bottom": 0.0}))
    r1, r2 = d1 / s1, d2 / s2
    y = grid2.y_centers
    exact = np.where(y <= d1, 1.0 - (y / s1) / (r1 + r2),
                     1.0 - (r1 + (y - d1) / s2) / (r1 + r2))
    divider_err = float(np.max(np.abs(sol2.potential.real - exact[:, None])))
    assert divider_err <= 0.01

    # Observed order under two refinements, measured on a solution with
    # curvature (the flat divider is exact in this scheme).
    e1 = _cosine_two_layer_error(1)
    e2 = _cosine_two_layer_error(2)
    e4 = _cosine_two_layer_error(4)
    order_a = float(np.log2(e1 / e2))
    order_b = float(np.log2(e2 / e4))
    assert order_a >= 1.8 and order_b >= 1.8, (order_a, order_b)

    # Reciprocity on the arm model: swap drive and sense pairs.
    from ibchan.fem import assemble_system, receive_voltage
    arm = default_arm_model()
    fwd = receive_voltage(solve_potential(assemble_system(arm, 100e3)),
                          "rx+", "rx-")
    rev = receive_voltage(
        solve_potential(assemble_system(arm, 100e3, drive=("rx+", "rx-"))),
        "tx+", "tx-")
    recip = abs(fwd - rev) / abs(fwd)
    assert recip <= 1e-6

    elapsed = time.perf_counter() - t0
    assert elapsed < 120.0
    report("criterion 4 (PDE oracles): PASS -- ramp "
           f"{ramp_err:.1e}, divider {divider_err:.1e}, orders "
           f"{order_a:.2f}/{order_b:.2f}, reciprocity {recip:.1e}, "
           f"{elapsed:.0f} s")


def test_criterion_5_high_pass_trend():
    sweep = gain_sweep(default_arm_model(), [100e3, 2.5e6])
    g_lo, g_hi = float(sweep.gain_db[0]), float(sweep.gain_db[1])
    assert g_hi > g_lo, (g_lo, g_hi)
    # Magnitudes are reported, not asserted: a 2D slice cannot reproduce
    # the full 3D geometry's absolute levels.
    report("criterion 5 (high-pass trend): PASS -- gain(2.5 MHz) "
           f"{g_hi:.2f} dB > gain(100 kHz) {g_lo:.2f} dB; gap to published "
           f"levels: {g_lo - (-52.2):+.1f} dB at 100 kHz, "
           f"{g_hi - (-43.2):+.1f} dB at 2.5 MHz (reported only)")


def test_criterion_6_stationarity():
    seq = generate_mseq(10)
    tx = to_bipolar(seq, amplitude_vpp=1.0, chip_rate=2.5e6)
    rx = Waveform(samples=0.7 * np.asarray(tx.samples), sample_rate=2.5e6)
    frames = [estimate_cir(tx, rx, seq, ORIGIN) for _ in range(2)]
    rep = stationarity_check(frames)
    assert rep.amplitude_cv == 0.0
    assert rep.time_invariant is True
    report("criterion 6 (stationarity): PASS -- identical frames give "
           "CV = 0.0 exactly and time_invariant = true")


def test_criterion_7_common_mode_robustness():
    model = fit_gain_model(MEASURED_GAINS, order=2)
    seq = generate_mseq(13)
    frame = to_bipolar(seq, amplitude_vpp=1.0, chip_rate=5e6)
    drive = Waveform(samples=np.tile(frame.samples, 40), sample_rate=5e6)

    clean = apply_channel(drive, model, ChannelSimConfig(rng_seed=7,
                                                         ir_samples=2048))
    rms = float(np.sqrt(np.mean(np.asarray(clean.samples) ** 2)))
    tone_amp = 10.0 * np.sqrt(2.0) * rms  # tone RMS = 10x signal RMS

    base_cfg = ChannelSimConfig(noise_snr_db=30.0, rng_seed=7,
                                ir_samples=2048)
    tone_cfg = ChannelSimConfig(noise_snr_db=30.0, cm_amplitude_v=tone_amp,
                                rng_seed=7, ir_samples=2048)
    freqs = np.geomspace(100e3, 2.5e6, 49)
    gains = []
    for cfg in (base_cfg, tone_cfg):
        rx = apply_channel(drive, model, cfg)
        est = estimate_cir(frame, rx, seq, ORIGIN)
        gains.append(cfr_from_cir(est, freqs).gain_db)
    shift = float(np.max(np.abs(gains[1] - gains[0])))
    assert shift <= 0.2, shift
    report("criterion 7 (common-mode robustness): PASS -- 50 Hz tone at "
           f"10x RMS shifts in-band CFR by {shift:.3f} dB (budget 0.2)")


def test_criterion_8_io_determinism(tmp_path):
    rng = np.random.default_rng(77)
    for trial in range(100):
        n = int(rng.integers(1, 300))
        w = Waveform(samples=rng.normal(scale=10 ** rng.uniform(-6, 3),
                                        size=n),
                     sample_rate=float(10 ** rng.uniform(1, 9)),
                     t0=float(rng.normal(scale=1e-3)))
        p = tmp_path / f"cap_{trial}.csv"
        write_capture(p, w)
        cap = parse_capture(p)
        assert cap.sample_rate == w.sample_rate
        assert cap.waveform.t0 == w.t0
        np.testing.assert_array_equal(cap.waveform.samples, w.samples)

    pts = tmp_path / "points.csv"
    pts.write_text("frequency_hz,gain_db\n100000.0,-52.2\n"
                   "1000000.0,-43.75\n2500000.0,-43.2\n", encoding="utf-8")

    def snapshot(outdir):
        blobs = {}
        for name in sorted(os.listdir(outdir)):
            if name.endswith(".png"):
                continue
            with open(os.path.join(outdir, name), "rb") as fh:
                blobs[name] = fh.read()
        return blobs

    # True reruns: identical flags and input paths, fresh output directory.
    runs = {
        "generate": ["generate", "--degree", "8"],
        "simulate": ["simulate", "--fit-from", str(pts), "--degree", "8",
                     "--chip-rate", "1M", "--frames", "3", "--snr-db", "25",
                     "--seed", "11"],
    }
    sim_dir = None
    checked = 0
    for label, argv in runs.items():
        a, b = str(tmp_path / f"{label}_a"), str(tmp_path / f"{label}_b")
        assert main(argv + ["--out", a]) == 0
        assert main(argv + ["--out", b]) == 0
        snap_a, snap_b = snapshot(a), snapshot(b)
        assert list(snap_a) == list(snap_b)
        for key in snap_a:
            assert snap_a[key] == snap_b[key], f"{label}/{key} differs"
        checked += len(snap_a)
        if label == "simulate":
            sim_dir = a
    sound_argv = ["sound", "--manifest", os.path.join(sim_dir, "session.json")]
    a, b = str(tmp_path / "sound_a"), str(tmp_path / "sound_b")
    assert main(sound_argv + ["--out", a]) == 0
    assert main(sound_argv + ["--out", b]) == 0
    snap_a, snap_b = snapshot(a), snapshot(b)
    assert list(snap_a) == list(snap_b)
    for key in snap_a:
        assert snap_a[key] == snap_b[key], f"sound/{key} differs"
    checked += len(snap_a)
    report("criterion 8 (I/O determinism): PASS -- 100 round trips "
           f"bit-identical; {checked} CLI data files byte-identical "
           "across reruns")
