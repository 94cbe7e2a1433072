import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import silence, tone
from syncsteg.analysis import (
    STAGES, ReportConfig, alignment_check, byte_entropy_bits, byte_entropy_norm, compare_energy,
    entropy_profile, export_features, feature_columns, feature_matrix, full_report, load_magic_table,
    magic_match, text_plausibility,
)
from syncsteg.embed import EmbedSpec, embed_message, generate_carrier
from syncsteg.protocol import SYNC_PATTERN
from syncsteg.spectral import WindowConfig, band_energy_profile, dominant_track

SEVEN_ONE = -(7 / 8 * math.log2(7 / 8) + 1 / 8 * math.log2(1 / 8)) / 8


def test_entropy_examples():
    assert byte_entropy_norm(b"\xff" * 32) == 0.0
    assert byte_entropy_norm(bytes(range(256))) == 1.0
    assert abs(byte_entropy_norm(SYNC_PATTERN * 50) - 0.0680) <= 1e-4
    assert byte_entropy_norm(SYNC_PATTERN * 50) == pytest.approx(SEVEN_ONE, abs=1e-12)
    assert byte_entropy_bits(SYNC_PATTERN) == pytest.approx(0.5436, abs=1e-4)
    with pytest.raises(ValueError):
        byte_entropy_norm(b"")


@given(st.binary(min_size=1, max_size=300), st.randoms())
def test_entropy_bounds_and_permutation_invariance(data, r):
    h = byte_entropy_norm(data)
    assert 0.0 <= h <= 1.0
    shuffled = bytearray(data)
    r.shuffle(shuffled)
    assert byte_entropy_norm(bytes(shuffled)) == h


def test_entropy_profile_contrast():
    rng = np.random.default_rng(7)
    data = rng.integers(0, 256, 512, dtype=np.uint8).tobytes() + SYNC_PATTERN * 64
    prof = entropy_profile(data, 256, 0.2)
    vals = [s.entropy_norm for s in prof.segments]
    assert len(vals) == 4
    assert vals[0] > 0.85 and vals[1] > 0.85
    assert vals[2] < 0.2 and vals[3] < 0.2
    assert min(vals[:2]) - 0.2 >= 0.1 and 0.2 - max(vals[2:]) >= 0.1
    assert prof.flagged == [2, 3]


@pytest.mark.xfail(strict=True, reason="256 uniform random bytes average 0.897 normalized entropy, "
                                       "so a 0.9 floor per segment fails for most seeds")
def test_entropy_profile_random_segments_exceed_0_9():
    rng = np.random.default_rng(7)
    data = rng.integers(0, 256, 512, dtype=np.uint8).tobytes() + SYNC_PATTERN * 64
    vals = [s.entropy_norm for s in entropy_profile(data, 256, 0.2).segments]
    assert vals[0] > 0.9 and vals[1] > 0.9


def test_random_segment_entropy_distribution():
    vals = [byte_entropy_norm(np.random.default_rng(s).integers(0, 256, 256, dtype=np.uint8).tobytes())
            for s in range(300)]
    assert 0.89 < np.mean(vals) < 0.905
    assert min(vals) > 0.85


def test_entropy_profile_trivial_cases():
    prof = entropy_profile(bytes(1000), 100, 0.2)
    assert prof.flagged == list(range(10)) and all(s.entropy_norm == 0.0 for s in prof.segments)
    assert entropy_profile(bytes(1000), 100, 0.0).flagged == []
    with pytest.raises(ValueError):
        entropy_profile(bytes(100), 8)


def test_entropy_profile_partial_tail():
    assert len(entropy_profile(bytes(150), 100).segments) == 2
    assert len(entropy_profile(bytes(140), 100).segments) == 1
    segs = entropy_profile(bytes(300), 100).segments
    assert all(a.stop == b.start for a, b in zip(segs, segs[1:]))


def test_magic_examples():
    assert magic_match(SYNC_PATTERN + bytes(32)) is None
    assert magic_match(bytes.fromhex("89504E470D0A1A0A") + bytes(8)) == "PNG"
    assert magic_match(b"RIFF" + bytes(4) + b"WAVE") == "WAV"
    assert magic_match(b"PK\x03\x04....") == "ZIP"
    assert magic_match(bytes(4) + b"ftypisom") == "MP4"
    assert magic_match(b"\x1f\x8b\x08") == "GZIP"
    assert magic_match(b"%PDF-1.4") == "PDF"
    assert magic_match(b"\xff\xd8\xff\xe0") == "JPEG"


def test_magic_ff_ff_never_jpeg():
    assert magic_match(b"\xff\xff\xff\x80") is None


@given(st.binary(max_size=40))
def test_magic_ff_ff_prefix_never_matches(tail):
    assert magic_match(b"\xff\xff" + tail) is None


def test_magic_table_from_json(tmp_path):
    p = tmp_path / "magic.json"
    p.write_text(json.dumps([{"name": "SYNC", "signature": [[0, "ffffffffffffff80"]]}]))
    table = load_magic_table(p)
    assert magic_match(SYNC_PATTERN, table) == "SYNC"


def test_text_examples():
    assert text_plausibility(b"Hello") == {"ascii_printable_ratio": 1.0, "utf8_valid": True,
                                           "base64_decodable": False}
    t = text_plausibility(b"\xff\xff\xff\x80")
    assert t == {"ascii_printable_ratio": 0.0, "utf8_valid": False, "base64_decodable": False}
    assert text_plausibility(b"QUJD")["base64_decodable"] is True
    assert text_plausibility(b" QUJD\n")["base64_decodable"] is True
    assert text_plausibility(b"QUI=")["base64_decodable"] is True
    assert text_plausibility(b"QUJ=")["base64_decodable"] is False
    assert text_plausibility(b"QU=D")["base64_decodable"] is False
    assert text_plausibility(b"a\tb\n")["ascii_printable_ratio"] == 1.0


def test_alignment_examples():
    assert alignment_check(bytes(31) + b"\x80") == {"aligned_32": True, "terminator_80": True}
    assert alignment_check(bytes(31))["aligned_32"] is False
    assert alignment_check(bytes(31) + b"\xff" + bytes(31) + b"\x80") == {"aligned_32": True,
                                                                          "terminator_80": True}
    assert alignment_check(bytes(32))["terminator_80"] is False


def clean_report():
    # low-entropy payload without a seven-FF run, so it holds no second sync frame
    payload = b"\xff\xff\xff\x80" * 8
    buf = embed_message(generate_carrier("white_noise", 3.0, level_db=-40.0, seed=1), EmbedSpec(payload, 1.0))
    return buf, full_report(buf)


def test_full_report_clean_embedding():
    buf, rep = clean_report()
    assert all(rep.stages[s] == "ok" for s in STAGES)
    assert len(rep.detections) == 1 and len(rep.messages) == 1
    assert rep.messages[0].sync is rep.detections[0]
    assert rep.magic is None
    assert rep.entropy.flagged
    assert rep.text["base64_decodable"] is False
    assert rep.alignment == {"aligned_32": True, "terminator_80": True}
    assert rep.energy.normal_range_s == (0.0, 1.5) and rep.energy.anomalous_range_s == (1.5, 3.0)


def test_full_report_noise_and_silence():
    rep = full_report(generate_carrier("white_noise", 4.0, level_db=-20.0, seed=11))
    assert rep.detections == [] and rep.messages == []
    assert rep.entropy.flagged == []
    rep = full_report(silence(2.0))
    assert rep.detections == [] and rep.magic is None and rep.text is None
    json.loads(rep.to_json())


def test_full_report_records_stage_errors():
    rep = full_report(silence(2.0), ReportConfig(normal_s=(1.0, 1.0)))
    assert rep.stages["energy"].startswith("error")
    assert rep.stages["detection"] == "ok"


def test_full_report_deterministic_json():
    _, a = clean_report()
    _, b = clean_report()
    assert a.to_json() == b.to_json()
    assert list(json.loads(a.to_json())["stages"]) == list(STAGES)


def test_energy_comparison_signature():
    buf = embed_message(generate_carrier("white_noise", 3.0, level_db=-20.0, seed=4),
                        EmbedSpec(b"\xff" * 32, 1.8))
    e = compare_energy(buf, WindowConfig(), (0.0, 1.5), (1.8, 2.8))
    assert abs(e.peak_excess_freq_hz - 3230.0) <= 10.0
    assert e.peak_excess_db_over_normal(3000, 3500) >= 10.0


def test_energy_csv(tmp_path):
    buf, rep = clean_report()
    p = tmp_path / "e.csv"
    rep.energy.write_csv(p)
    rows = list(csv.reader(open(p)))
    assert rows[0] == ["freq_hz", "normal_energy", "anomalous_energy", "excess"]
    assert len(rows) - 1 == len(rep.energy.freqs_hz)


def test_features_match_spectral_outputs(tmp_path):
    buf = tone(3000.0, 1.0, amp=0.5)
    cfg = WindowConfig()
    mat = feature_matrix(buf, cfg)
    track = dominant_track(buf, cfg)
    assert mat.shape == (98, len(feature_columns()))
    assert np.array_equal(mat[:, 0], track.times)
    assert np.array_equal(mat[:, 1], track.freqs)
    assert np.array_equal(mat[:, 2], track.powers_db)
    assert np.array_equal(mat[:, 5], band_energy_profile(buf, cfg, 3000, 3500)[:, 1])
    assert np.all(mat[:, -1] == 0.0)
    p = tmp_path / "f.csv"
    assert export_features(buf, p, cfg) == 98
    rows = list(csv.reader(open(p)))
    assert rows[0] == ["time_s", "dominant_freq_hz", "dominant_power_db", "energy_2000_2500",
                       "energy_2500_3000", "energy_3000_3500", "energy_3500_4000", "local_entropy"]
    assert np.array_equal(np.array(rows[1:], dtype=float), mat)
