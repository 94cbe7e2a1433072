import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import SR, silence, tone
from syncsteg.audio_io import AudioBuffer
from syncsteg.embed import EmbedSpec, embed_message, generate_carrier, mix_at, render_symbols
from syncsteg.protocol import SYNC_PATTERN, ProtocolConfig, byte_to_freq, is_sync_symbols
from syncsteg.spectral import WindowConfig, dominant_track
from syncsteg.sync_detect import coarse_candidates, dedupe, detect, scan, symbolize, SyncEvent

CFG = ProtocolConfig()


def embedded(at, duration=3.0, payload=bytes(range(32)), carrier=None, **kw):
    base = carrier if carrier is not None else silence(duration)
    return embed_message(base, EmbedSpec(payload, at, **kw), CFG)


def test_single_embedding_at_two_seconds():
    buf = embedded(2.0, 4.0)
    ev = scan(dominant_track(buf), buf, CFG)
    assert len(ev) == 1
    assert abs(ev[0].start_time_s - 2.0) <= 0.005
    assert ev[0].confidence >= 0.9
    assert is_sync_symbols(ev[0].symbol_freqs_hz, CFG)
    assert ev[0].hop_index == 200


@settings(max_examples=10, deadline=None)
@given(st.floats(0.0, 1.0), st.floats(0.05, 0.8))
def test_translation_equivariance(t, delta):
    a = detect(embedded(t, 2.9))
    b = detect(embedded(t + delta, 2.9))
    assert len(a) == len(b) == 1
    assert abs((b[0].start_time_s - a[0].start_time_s) - delta) <= 0.005


@pytest.mark.parametrize("seed", range(3))
def test_white_noise_gives_no_events(seed):
    assert detect(generate_carrier("white_noise", 20.0, level_db=-20.0, seed=seed)) == []


def test_pure_ff_tone_without_terminator():
    assert detect(tone(3230.0, 10.0, amp=0.5)) == []


def test_wrong_terminator_rejected():
    buf = mix_at(silence(2.0), render_symbols(b"\xff" * 7 + bytes([0x86]) + bytes(32), CFG), 0.5)
    assert detect(buf) == []


def test_short_ff_run_rejected():
    buf = mix_at(silence(2.0), render_symbols(b"\x10" * 4 + b"\xff" * 4 + b"\x80" + bytes(32), CFG), 0.5)
    assert detect(buf) == []


def test_two_messages_sorted_and_separate():
    buf = embed_message(embedded(0.3, 3.0), EmbedSpec(bytes(32), 1.6), CFG)
    ev = detect(buf)
    assert [round(e.start_time_s, 2) for e in ev] == [0.3, 1.6]


def test_back_to_back_messages():
    buf = embed_message(embedded(0.2, 3.0), EmbedSpec(bytes(range(32, 64)), 1.2), CFG)
    assert len(detect(buf)) == 2


def test_ff_heavy_payload_single_event():
    # a payload that itself begins with FF bytes must not spawn extra events
    buf = embedded(0.5, 2.5, payload=b"\xff" * 32)
    assert len(detect(buf)) == 1


def test_embedding_at_file_start():
    ev = detect(embedded(0.0, 1.5))
    assert len(ev) == 1 and ev[0].start_time_s <= 0.005


def test_symbolize_examples():
    buf = mix_at(silence(0.5), render_symbols(b"\x80", CFG), 0.0)
    (f, p), = symbolize(buf, 0.0, 1, CFG)
    assert abs(f - 2045.0) <= 2.0 and p >= -6.5
    buf = mix_at(silence(0.5), render_symbols(b"\x00\xff", CFG), 0.0)
    out = symbolize(buf, 0.0, 2, CFG)
    assert abs(out[0, 0] - byte_to_freq(0x00)) <= 2.0
    assert abs(out[1, 0] - 3230.0) <= 2.0


def test_symbolize_silence_and_span():
    out = symbolize(silence(0.5), 0.0, 4, CFG)
    assert np.all(np.isnan(out[:, 0])) and np.all(out[:, 1] == -np.inf)
    with pytest.raises(ValueError):
        symbolize(silence(0.5), 0.4, 8, CFG)


def test_scan_rejects_mismatched_track():
    a = silence(1.0)
    with pytest.raises(ValueError):
        scan(dominant_track(silence(2.0)), a, CFG)


def test_scan_rejects_coarse_hop():
    a = silence(1.0)
    with pytest.raises(ValueError):
        scan(dominant_track(a, WindowConfig(hop_ms=20.0)), a, CFG)


def test_coarse_stage_flags_candidate_near_start():
    buf = embedded(1.0)
    cands = coarse_candidates(dominant_track(buf), CFG)
    assert len(cands) == 1 and abs(cands[0] - 1.0) <= 0.025


def test_dedupe_keeps_most_confident():
    f = tuple([3230.0] * 7 + [2045.0])
    evs = [SyncEvent(1.0, f, 0.8, 100), SyncEvent(1.05, f, 0.95, 105), SyncEvent(1.5, f, 0.5, 150)]
    kept = dedupe(evs, 0.2)
    assert [e.start_time_s for e in kept] == [1.05, 1.5]


def test_event_json_shape():
    ev = detect(embedded(0.5, 2.0))[0]
    d = ev.to_dict()
    assert list(d) == ["start_time_s", "confidence", "symbol_freqs_hz"]
    assert len(d["symbol_freqs_hz"]) == 8


@pytest.mark.parametrize("delta, expected", [(-15, 1), (-5, 1), (5, 1), (15, 1), (-40, 0), (40, 0), (55, 0)])
def test_jitter_bands(delta, expected):
    assert len(detect(embedded(0.5, 2.0, freq_offset_hz=delta))) == expected


def test_tight_tolerance_config():
    cfg = ProtocolConfig(tolerance_hz=5.0)
    buf = embedded(0.5, 2.0, freq_offset_hz=10.0)
    assert detect(buf, cfg) == []
    assert len(detect(buf)) == 1
