"""Tests for capture parsing, writing, and session manifests."""

import json

import numpy as np
import pytest

from ibchan.errors import (
    AmbiguousDelimiter,
    MissingCapture,
    NoNumericData,
    RateMismatch,
    SchemaViolation,
    UnparseableFile,
)
from ibchan.ingest_io import (
    CaptureFile,
    FormatOptions,
    SessionManifest,
    SoundingParams,
    load_session,
    parse_capture,
    read_columns,
    write_capture,
    write_columns,
    write_session_manifest,
)
from ibchan.signals import Waveform


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


class TestParseCapture:
    def test_two_row_comma_file(self, tmp_path):
        p = _write(tmp_path, "c.csv", "time,volt\n0,0.1\n2e-7,0.2\n")
        cap = parse_capture(p)
        assert cap.sample_rate == pytest.approx(5e6)
        np.testing.assert_array_equal(cap.waveform.samples, [0.1, 0.2])
        assert cap.waveform.t0 == 0.0
        assert cap.warnings == ()

    def test_headerless_numeric_file(self, tmp_path):
        p = _write(tmp_path, "c.csv", "0.0,1.0\n1.0,2.0\n2.0,3.0\n")
        cap = parse_capture(p)
        assert cap.sample_rate == pytest.approx(1.0)
        np.testing.assert_array_equal(cap.waveform.samples, [1.0, 2.0, 3.0])

    def test_many_header_lines_skipped(self, tmp_path):
        text = ("Oscilloscope export\nModel XYZ-123\nCH1, high-Z\n"
                "time_s,voltage_v\n0.0,5.0\n0.5,6.0\n1.0,7.0\n")
        cap = parse_capture(_write(tmp_path, "c.csv", text))
        assert cap.sample_rate == pytest.approx(2.0)
        np.testing.assert_array_equal(cap.waveform.samples, [5.0, 6.0, 7.0])

    def test_semicolon_delimiter(self, tmp_path):
        p = _write(tmp_path, "c.csv", "0.0;1.5\n0.25;2.5\n")
        cap = parse_capture(p)
        assert cap.sample_rate == pytest.approx(4.0)
        np.testing.assert_array_equal(cap.waveform.samples, [1.5, 2.5])

    def test_mixed_delimiters_ambiguous(self, tmp_path):
        p = _write(tmp_path, "c.csv", "0.0,1.0\n1.0;2.0\n")
        with pytest.raises(AmbiguousDelimiter):
            parse_capture(p)

    def test_comma_decimals_rejected_clearly(self, tmp_path):
        p = _write(tmp_path, "c.csv", "0,0;1,5\n0,5;2,5\n")
        with pytest.raises(UnparseableFile, match="decimal"):
            parse_capture(p)

    def test_empty_file(self, tmp_path):
        with pytest.raises(NoNumericData):
            parse_capture(_write(tmp_path, "c.csv", ""))

    def test_text_only_file(self, tmp_path):
        with pytest.raises(NoNumericData):
            parse_capture(_write(tmp_path, "c.csv", "hello\nworld\n"))

    def test_missing_file(self, tmp_path):
        with pytest.raises(UnparseableFile):
            parse_capture(tmp_path / "nope.csv")

    def test_corrupt_row_inside_data(self, tmp_path):
        p = _write(tmp_path, "c.csv", "0.0,1.0\n1.0,2.0\nGLITCH,x\n3.0,4.0\n")
        with pytest.raises((UnparseableFile, NoNumericData)):
            parse_capture(p)

    def test_single_column_is_not_enough(self, tmp_path):
        with pytest.raises(NoNumericData):
            parse_capture(_write(tmp_path, "c.csv", "1.0\n2.0\n3.0\n"))

    def test_nonmonotone_time_warns_and_uses_median(self, tmp_path):
        p = _write(tmp_path, "c.csv", "0.0,1.0\n0.5,2.0\n0.25,3.0\n0.75,4.0\n")
        cap = parse_capture(p)
        assert any(w.startswith("NonUniformSampling") for w in cap.warnings)
        # |diffs| = [0.5, 0.25, 0.5]; median 0.5 -> 2 Hz
        assert cap.sample_rate == pytest.approx(2.0)

    def test_jitter_beyond_1ppm_warns(self, tmp_path):
        times = [0.0, 1.0, 2.0, 3.0001, 4.0]
        rows = "\n".join(f"{t},{i}.0" for i, t in enumerate(times))
        cap = parse_capture(_write(tmp_path, "c.csv", rows + "\n"))
        assert any("NonUniformSampling" in w for w in cap.warnings)

    def test_jitter_below_1ppm_is_clean(self, tmp_path):
        times = [0.0, 1.0, 2.0 + 1e-8, 3.0, 4.0]
        rows = "\n".join(f"{t!r},{i}.0" for i, t in enumerate(times))
        cap = parse_capture(_write(tmp_path, "c.csv", rows + "\n"))
        assert cap.warnings == ()

    def test_declared_rate_wins_over_time_column(self, tmp_path):
        text = "# sample_rate_hz = 1000.0\n0.0,1.0\n1.0,2.0\n"
        cap = parse_capture(_write(tmp_path, "c.csv", text))
        assert cap.sample_rate == 1000.0

    def test_declared_source_and_t0(self, tmp_path):
        text = ("# source = scope-7\n# t0_s = 0.125\n# sample_rate_hz = 8.0\n"
                "0.125,1.0\n0.25,2.0\n")
        cap = parse_capture(_write(tmp_path, "c.csv", text))
        assert cap.source == "scope-7"
        assert cap.waveform.t0 == 0.125

    def test_single_row_needs_declared_rate(self, tmp_path):
        with pytest.raises(UnparseableFile):
            parse_capture(_write(tmp_path, "c.csv", "0.0,1.0\n"))
        cap = parse_capture(_write(
            tmp_path, "c2.csv", "# sample_rate_hz = 10.0\n0.0,1.0\n"))
        assert cap.sample_rate == 10.0
        assert len(cap.waveform.samples) == 1

    def test_clipping_warning_on_pinned_run(self, tmp_path):
        rng = np.random.default_rng(0)
        volts = rng.uniform(-0.8, 0.8, size=40).tolist()
        volts[10:14] = [1.0, 1.0, 1.0, 1.0]
        rows = "\n".join(f"{i / 10},{v!r}" for i, v in enumerate(volts))
        cap = parse_capture(_write(tmp_path, "c.csv", rows + "\n"))
        assert any(w.startswith("ClippedSamples") for w in cap.warnings)

    def test_no_clipping_warning_on_short_run(self, tmp_path):
        rng = np.random.default_rng(1)
        volts = rng.uniform(-0.8, 0.8, size=40).tolist()
        volts[10:12] = [1.0, 1.0]
        rows = "\n".join(f"{i / 10},{v!r}" for i, v in enumerate(volts))
        cap = parse_capture(_write(tmp_path, "c.csv", rows + "\n"))
        assert not any(w.startswith("ClippedSamples") for w in cap.warnings)

    def test_no_clipping_warning_on_two_level_drive(self, tmp_path):
        volts = [0.5, 0.5, 0.5, -0.5, 0.5, -0.5, -0.5, -0.5, 0.5, 0.5]
        rows = "\n".join(f"{i / 10},{v}" for i, v in enumerate(volts))
        cap = parse_capture(_write(tmp_path, "c.csv", rows + "\n"))
        assert cap.warnings == ()

    def test_strict_mode_requires_declared_rate(self, tmp_path):
        p = _write(tmp_path, "c.csv", "0.0,1.0\n1.0,2.0\n")
        with pytest.raises(UnparseableFile, match="strict"):
            parse_capture(p, FormatOptions(strict=True))

    def test_strict_mode_rejects_warnings(self, tmp_path):
        text = "# sample_rate_hz = 2.0\n0.0,1.0\n0.5,2.0\n0.25,3.0\n"
        with pytest.raises(UnparseableFile, match="strict"):
            parse_capture(_write(tmp_path, "c.csv", text), FormatOptions(strict=True))

    def test_strict_mode_accepts_clean_declared_file(self, tmp_path):
        text = "# sample_rate_hz = 4.0\n0.0,1.0\n0.25,2.0\n"
        cap = parse_capture(_write(tmp_path, "c.csv", text), FormatOptions(strict=True))
        assert cap.sample_rate == 4.0

    def test_forced_delimiter_skips_autodetect(self, tmp_path):
        p = _write(tmp_path, "c.csv", "0.0;1.0\n1.0;2.0\n")
        cap = parse_capture(p, FormatOptions(delimiter=";"))
        assert cap.sample_rate == pytest.approx(1.0)
        with pytest.raises(NoNumericData):
            parse_capture(p, FormatOptions(delimiter=","))

    def test_bad_format_options(self):
        with pytest.raises(ValueError):
            FormatOptions(delimiter="|")

    def test_bom_tolerated(self, tmp_path):
        p = tmp_path / "c.csv"
        p.write_bytes("﻿0.0,1.0\n1.0,2.0\n".encode("utf-8"))
        cap = parse_capture(p)
        assert len(cap.waveform.samples) == 2


class TestWriteCapture:
    def test_round_trip_bit_identical(self, tmp_path):
        rng = np.random.default_rng(11)
        w = Waveform(samples=rng.normal(size=257), sample_rate=5e6, t0=1.25e-3)
        p = tmp_path / "cap.csv"
        write_capture(p, w, source="unit")
        cap = parse_capture(p)
        assert cap.source == "unit"
        assert cap.sample_rate == w.sample_rate
        assert cap.waveform.t0 == w.t0
        np.testing.assert_array_equal(cap.waveform.samples, w.samples)

    def test_round_trip_property_random(self, tmp_path):
        rng = np.random.default_rng(202)
        for trial in range(25):
            n = int(rng.integers(1, 400))
            rate = float(10 ** rng.uniform(0, 9))
            t0 = float(rng.normal(scale=1e-3))
            scale = float(10 ** rng.uniform(-6, 3))
            w = Waveform(samples=rng.normal(scale=scale, size=n),
                         sample_rate=rate, t0=t0)
            p = tmp_path / f"cap_{trial}.csv"
            write_capture(p, w)
            cap = parse_capture(p)
            assert cap.sample_rate == rate
            assert cap.waveform.t0 == t0
            np.testing.assert_array_equal(cap.waveform.samples, w.samples)

    def test_written_file_is_strict_clean(self, tmp_path):
        w = Waveform(samples=np.array([0.5, -0.5, 0.25]), sample_rate=123.0)
        p = tmp_path / "cap.csv"
        write_capture(p, w)
        cap = parse_capture(p, FormatOptions(strict=True))
        np.testing.assert_array_equal(cap.waveform.samples, w.samples)

    def test_rewrite_is_byte_identical(self, tmp_path):
        w = Waveform(samples=np.linspace(-1, 1, 64), sample_rate=2.5e6)
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        write_capture(a, w)
        write_capture(b, w)
        assert a.read_bytes() == b.read_bytes()


def _make_session(tmp_path, n_rx=3, rate=5e6, with_tx=True, session_id="s01"):
    rng = np.random.default_rng(7)
    rx_names = []
    for k in range(n_rx):
        name = f"rx_{k:03d}.csv"
        write_capture(tmp_path / name,
                      Waveform(samples=rng.normal(size=32), sample_rate=rate))
        rx_names.append(name)
    tx_name = None
    if with_tx:
        tx_name = "tx.csv"
        write_capture(tmp_path / tx_name,
                      Waveform(samples=rng.normal(size=32), sample_rate=rate))
    manifest = SessionManifest(
        session_id=session_id, rx=tuple(rx_names),
        sounding=SoundingParams(degree=13, chip_rate_hz=2.5e6,
                                amplitude_vpp=1.0, seed=1),
        tx=tx_name, notes="bench run")
    mpath = tmp_path / "session.json"
    write_session_manifest(mpath, manifest)
    return mpath, manifest


class TestManifest:
    def test_round_trip(self, tmp_path):
        mpath, manifest = _make_session(tmp_path, n_rx=4)
        sess = load_session(mpath)
        assert sess.manifest == manifest
        assert sess.frames_available == 4
        assert sess.tx_capture is not None
        assert sess.sample_rate == pytest.approx(5e6)

    def test_forty_rx_captures(self, tmp_path):
        mpath, _ = _make_session(tmp_path, n_rx=40, with_tx=False)
        sess = load_session(mpath)
        assert sess.frames_available == 40
        assert sess.tx_capture is None

    def test_missing_capture_lists_missing_and_loaded(self, tmp_path):
        mpath, manifest = _make_session(tmp_path, n_rx=3)
        (tmp_path / "rx_001.csv").unlink()
        with pytest.raises(MissingCapture) as err:
            load_session(mpath)
        assert err.value.missing == ["rx_001.csv"]
        assert "rx_001.csv" in str(err.value)
        assert set(err.value.loaded) == {"tx.csv", "rx_000.csv", "rx_002.csv"}

    def test_rate_mismatch_lists_rates(self, tmp_path):
        mpath, _ = _make_session(tmp_path, n_rx=3)
        write_capture(tmp_path / "rx_002.csv",
                      Waveform(samples=np.zeros(8) + 0.5, sample_rate=1e6))
        with pytest.raises(RateMismatch) as err:
            load_session(mpath)
        assert err.value.rates["rx_002.csv"] == pytest.approx(1e6)
        assert err.value.rates["rx_000.csv"] == pytest.approx(5e6)

    def test_unparseable_capture_named(self, tmp_path):
        mpath, _ = _make_session(tmp_path, n_rx=2)
        (tmp_path / "rx_001.csv").write_text("not,numbers\nat,all\n")
        with pytest.raises((UnparseableFile, NoNumericData), match="rx_001"):
            load_session(mpath)

    def test_bad_json(self, tmp_path):
        p = _write(tmp_path, "m.json", "{not json")
        with pytest.raises(SchemaViolation):
            load_session(p)

    def test_root_must_be_object(self, tmp_path):
        p = _write(tmp_path, "m.json", "[1, 2]")
        with pytest.raises(SchemaViolation):
            load_session(p)

    def test_missing_manifest_file(self, tmp_path):
        with pytest.raises(MissingCapture):
            load_session(tmp_path / "absent.json")

    @pytest.mark.parametrize("mutate", [
        lambda d: d.pop("session_id"),
        lambda d: d.pop("rx"),
        lambda d: d.pop("sounding"),
        lambda d: d.update(rx=[]),
        lambda d: d.update(rx="rx.csv"),
        lambda d: d["sounding"].pop("degree"),
        lambda d: d["sounding"].update(degree=1),
        lambda d: d["sounding"].update(degree=17),
        lambda d: d["sounding"].update(degree=True),
        lambda d: d["sounding"].update(chip_rate_hz=0.0),
        lambda d: d["sounding"].update(taps=[13, "12"]),
        lambda d: d.update(tx=42),
        lambda d: d.update(shared_trigger="yes"),
        lambda d: d.update(notes=3),
    ])
    def test_schema_violations(self, tmp_path, mutate):
        mpath, _ = _make_session(tmp_path)
        doc = json.loads(mpath.read_text())
        mutate(doc)
        mpath.write_text(json.dumps(doc))
        with pytest.raises(SchemaViolation):
            load_session(mpath)

    def test_extra_keys_tolerated(self, tmp_path):
        mpath, _ = _make_session(tmp_path)
        doc = json.loads(mpath.read_text())
        doc["operator"] = "someone"
        mpath.write_text(json.dumps(doc))
        assert load_session(mpath).manifest.session_id == "s01"

    def test_degree_bounds_enforced_at_build_time(self):
        with pytest.raises(SchemaViolation):
            SoundingParams(degree=1, chip_rate_hz=1e6)
        with pytest.raises(SchemaViolation):
            SoundingParams(degree=17, chip_rate_hz=1e6)

    def test_manifest_requires_rx(self):
        with pytest.raises(SchemaViolation):
            SessionManifest(session_id="x", rx=(),
                            sounding=SoundingParams(degree=5, chip_rate_hz=1e6))

    def test_manifest_rewrite_is_byte_identical(self, tmp_path):
        mpath, manifest = _make_session(tmp_path)
        other = tmp_path / "again.json"
        write_session_manifest(other, manifest)
        assert mpath.read_bytes() == other.read_bytes()

    def test_absolute_rx_paths(self, tmp_path):
        sub = tmp_path / "elsewhere"
        sub.mkdir()
        write_capture(sub / "rx.csv",
                      Waveform(samples=np.arange(4.0), sample_rate=1e3))
        manifest = SessionManifest(
            session_id="abs", rx=(str(sub / "rx.csv"),),
            sounding=SoundingParams(degree=7, chip_rate_hz=1e6))
        mpath = tmp_path / "m.json"
        write_session_manifest(mpath, manifest)
        assert load_session(mpath).frames_available == 1


class TestColumns:
    def test_round_trip_exact(self, tmp_path):
        rng = np.random.default_rng(5)
        a, b = rng.normal(size=50), 10 ** rng.uniform(-9, 9, size=50)
        p = tmp_path / "t.csv"
        write_columns(p, ["alpha", "beta"], [a, b])
        header, data = read_columns(p)
        assert header == ["alpha", "beta"]
        np.testing.assert_array_equal(data[:, 0], a)
        np.testing.assert_array_equal(data[:, 1], b)

    def test_shape_validation(self, tmp_path):
        with pytest.raises(ValueError):
            write_columns(tmp_path / "t.csv", ["a"], [np.arange(3), np.arange(3)])
        with pytest.raises(ValueError):
            write_columns(tmp_path / "t.csv", ["a", "b"],
                          [np.arange(3), np.arange(4)])

    def test_empty_table_rejected_on_read(self, tmp_path):
        p = _write(tmp_path, "t.csv", "")
        with pytest.raises(NoNumericData):
            read_columns(p)
