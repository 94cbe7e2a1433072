import json
import math
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from syncsteg.protocol import (
    SYNC_PATTERN, ByteFreqMap, ProtocolConfig, ProtocolError, byte_to_freq, freq_to_byte,
    is_sync_symbols, nominal_sync_freqs, sync_confidence,
)

FF, TERM = 3230.0, 2045.0


def test_anchor_bytes_are_exact():
    assert byte_to_freq(0x80) == 2045.0
    assert byte_to_freq(0xFF) == 3230.0


def test_byte_zero_matches_rational_evaluation():
    oracle = Fraction(2045) - 128 * Fraction(1185, 127)
    assert byte_to_freq(0x00) == pytest.approx(float(oracle), abs=1e-9)
    assert round(byte_to_freq(0x00), 4) == 850.6693


def test_map_is_strictly_increasing_with_exact_step():
    m = ByteFreqMap()
    assert m.step == Fraction(1185, 127)
    for b in range(255):
        assert m.exact(b + 1) - m.exact(b) == Fraction(1185, 127)
        assert byte_to_freq(b + 1) > byte_to_freq(b)


def test_quantizer_inverts_map_for_every_byte():
    assert [freq_to_byte(byte_to_freq(b)) for b in range(256)] == list(range(256))


def test_quantizer_examples():
    assert freq_to_byte(2045.0) == 0x80
    assert freq_to_byte(3234.0) == 0xFF
    assert freq_to_byte(100.0) == 0x00
    assert freq_to_byte(1e6) == 0xFF


def test_quantizer_boundary_brute_force():
    half = 1185 / 127 / 2
    for tenth in range(-50, 51):
        off = tenth / 10
        got = freq_to_byte(3230.0 + off)
        # above 0xFF everything clamps; below, crossing half a step moves to 0xFE
        assert got == (0xFE if off < -half else 0xFF), off


def test_exact_midpoint_rounds_down():
    m = ByteFreqMap()
    mid = float((m.exact(0x40) + m.exact(0x41)) / 2)
    assert freq_to_byte(mid) == 0x40


def test_sync_bytes_requantize_to_pattern():
    assert bytes(freq_to_byte(f) for f in nominal_sync_freqs()) == SYNC_PATTERN
    assert SYNC_PATTERN == b"\xff" * 7 + b"\x80"


def test_sync_predicate_examples():
    assert is_sync_symbols([FF] * 7 + [TERM])
    assert not is_sync_symbols([FF] * 7 + [2100.0])
    assert not is_sync_symbols([FF, FF, FF, 3100.0, FF, FF, FF, TERM])


def test_sync_predicate_single_symbol_perturbations():
    for pos in range(8):
        for d in range(-60, 61):
            f = [FF] * 7 + [TERM]
            f[pos] += d
            assert is_sync_symbols(f) == (abs(d) <= 20), (pos, d)


def test_sync_predicate_spread_limit():
    # each symbol is in band but the zig-zag spread is 30 Hz
    assert not is_sync_symbols([FF - 15, FF + 15] * 3 + [FF, TERM])
    assert is_sync_symbols([FF - 10, FF + 10] * 3 + [FF, TERM])


def test_sync_predicate_nan_never_matches():
    assert not is_sync_symbols([FF] * 7 + [math.nan])
    assert not is_sync_symbols([math.nan] + [FF] * 6 + [TERM])


def test_sync_predicate_needs_eight_values():
    with pytest.raises(ValueError):
        is_sync_symbols([FF] * 7)


@given(st.floats(min_value=-20, max_value=20))
def test_common_offset_within_tolerance_accepted(d):
    assert is_sync_symbols([FF + d] * 7 + [TERM + d])


def test_confidence_is_one_at_nominal_and_clipped():
    assert sync_confidence(nominal_sync_freqs()) == 1.0
    assert sync_confidence([FF + 10] * 7 + [TERM + 10]) == pytest.approx(0.5)
    assert sync_confidence([FF + 50] * 7 + [TERM + 50]) == 0.0


def test_config_validation():
    with pytest.raises(ProtocolError):
        ProtocolConfig(tolerance_hz=0)
    with pytest.raises(ProtocolError):
        ProtocolConfig(ff_freq_hz=2000.0, sync_terminator_hz=2045.0)
    cfg = ProtocolConfig()
    assert cfg.sync_pattern == SYNC_PATTERN and cfg.payload_len == 32


def test_config_json_round_trip(tmp_path):
    cfg = ProtocolConfig(tolerance_hz=15.0)
    p = tmp_path / "proto.json"
    p.write_text(json.dumps(cfg.to_dict()))
    assert ProtocolConfig.load(p) == cfg
    assert set(cfg.to_dict()) == {"sync_terminator_hz", "tolerance_hz", "ff_freq_hz", "symbol_ms"}
    with pytest.raises(ProtocolError):
        ProtocolConfig.from_dict({"bogus": 1})
    assert cfg.with_overrides(tolerance_hz=None).tolerance_hz == 15.0
