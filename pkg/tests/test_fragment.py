import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import silence
from syncsteg.embed import EmbedSpec, embed_message, generate_carrier
from syncsteg.fragment import (
    ConflictingTotal, DuplicateConflict, Fragment, MissingIndex, ReassemblyError, detect_fragments,
    embed_fragment, fragment_bytes, fragment_message, pack_header, read_fragments, reassemble, unpack_header,
)

RAW = bytes(range(32))


def test_partition():
    frags = fragment_message(RAW)
    assert [f.block_bytes for f in frags] == [bytes(range(8 * i, 8 * i + 8)) for i in range(4)]
    assert [(f.seq_index, f.total) for f in frags] == [(0, 4), (1, 4), (2, 4), (3, 4)]
    with pytest.raises(ValueError):
        fragment_message(bytes(31))


def test_header_packing_examples():
    assert Fragment(2, 4, bytes(8)).header == 0x24
    assert Fragment(0, 1, bytes(8)).header == 0x01
    assert pack_header(2, 4) == 0x24


def test_header_packing_lossless():
    for total in range(1, 16):
        for i in range(total):
            assert unpack_header(pack_header(i, total)) == (i, total)


def test_fragment_invariants():
    for args in [(4, 4, bytes(8)), (0, 0, bytes(8)), (0, 16, bytes(8)), (0, 4, bytes(7))]:
        with pytest.raises(ValueError):
            Fragment(*args)


@settings(max_examples=50)
@given(st.binary(min_size=32, max_size=32), st.permutations(range(4)))
def test_reassemble_any_order(raw, order):
    frags = fragment_message(raw)
    assert reassemble([frags[i] for i in order]) == raw


def test_shuffled_example_and_identical_duplicate():
    f = fragment_message(RAW)
    assert reassemble([f[3], f[0], f[2], f[1]]) == RAW
    assert reassemble([f[3], f[0], f[0], f[2], f[1]]) == RAW


def test_missing_index():
    f = fragment_message(RAW)
    with pytest.raises(MissingIndex) as info:
        reassemble([f[0], f[1], f[3]])
    assert info.value.missing == [2]


def test_conflicting_duplicate():
    f = fragment_message(RAW)
    other = Fragment(1, 4, b"\xaa" * 8)
    with pytest.raises(DuplicateConflict):
        reassemble(f + [other])


def test_conflicting_total_and_empty():
    with pytest.raises(ConflictingTotal):
        reassemble([Fragment(0, 4, bytes(8)), Fragment(1, 2, bytes(8))])
    with pytest.raises(ReassemblyError):
        reassemble([])


def test_other_totals_return_total_blocks():
    raw = bytes(range(24))
    frags = fragment_bytes(raw)
    assert len(frags) == 3 and reassemble(frags[::-1]) == raw
    single = fragment_bytes(bytes(8))
    assert single[0].header == 0x01 and reassemble(single) == bytes(8)


def test_embed_and_read_single_fragment():
    frag = Fragment(2, 4, bytes.fromhex("0102030405060708"))
    buf = embed_fragment(generate_carrier("white_noise", 1.5, level_db=-20.0, seed=3), frag, 0.4)
    frags, errors = read_fragments(buf)
    assert errors == []
    assert len(frags) == 1
    got = frags[0]
    assert (got.seq_index, got.total, got.block_bytes) == (2, 4, frag.block_bytes)
    assert abs(got.start_time_s - 0.4) <= 0.005


def test_embed_fragment_too_short():
    with pytest.raises(ValueError):
        embed_fragment(silence(0.3), Fragment(0, 1, bytes(8)), 0.0)


def test_cross_carrier_round_trip_all_orders():
    frags = fragment_message(RAW)
    carriers = [embed_fragment(generate_carrier("white_noise", 1.2, level_db=-20.0, seed=s), f, 0.1 + 0.2 * s)
                for s, f in enumerate(frags)]
    found, errors = detect_fragments(carriers, sources=[f"c{i}" for i in range(4)])
    assert errors == [] and sorted(f.seq_index for f in found) == [0, 1, 2, 3]
    assert {f.source_file for f in found} == {"c0", "c1", "c2", "c3"}
    for order in itertools.permutations(range(4)):
        assert reassemble([found[i] for i in order]) == RAW


def test_clean_carrier_contributes_nothing():
    frags, errors = detect_fragments([generate_carrier("white_noise", 2.0, seed=1)])
    assert frags == [] and errors == []


def test_full_message_read_as_fragment_is_ambiguous():
    # first payload byte 0x30 has total nibble 0
    raw = bytes([0x30]) + bytes(range(1, 32))
    buf = embed_message(silence(2.0), EmbedSpec(raw, 0.5))
    frags, errors = read_fragments(buf)
    assert frags == []
    assert len(errors) == 1 and "reserved total 0" in errors[0]


def test_fragment_json_round_trip():
    f = Fragment(1, 4, bytes(range(8)), "a.wav", 0.25)
    d = f.to_dict()
    assert list(d) == ["seq_index", "total", "block_hex", "source_file", "start_time_s"]
    assert Fragment.from_dict(d) == f
