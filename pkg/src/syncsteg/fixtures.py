"""Deterministic golden WAVs with ground truth for the acceptance suite."""

from __future__ import annotations

import hashlib
import json
import warnings
from pathlib import Path

import numpy as np

from .audio_io import AudioBuffer, write_wav
from .embed import EmbedSpec, embed_message, generate_carrier, mix_at, render_symbols
from .fragment import embed_fragment, fragment_message
from .protocol import SYNC_PATTERN, ProtocolConfig

CASES = (
    "clean-single",
    "noisy-6dB",
    "jitter-10hz",
    "two-messages",
    "truncated-payload",
    "four-fragments",
    "pseudo-sync",
    "speech-like",
)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _payload(rng: np.random.Generator) -> bytes:
    return rng.integers(0, 256, 32, dtype=np.uint8).tobytes()


def _pseudo_sync(rng: np.random.Generator, cfg: ProtocolConfig) -> AudioBuffer:
    """FF runs with a wrong terminator, short runs with the right one, a long FF tone."""
    buf = generate_carrier("white_noise", 6.0, level_db=-30.0, seed=int(rng.integers(1 << 31)))
    wrong_term = bytes([0x86])  # ~2101 Hz, outside +/-20 Hz of the terminator
    pieces = [
        (0.3, SYNC_PATTERN[:7] + wrong_term + _payload(rng)),
        (1.6, bytes(rng.integers(0, 256, 8, dtype=np.uint8)) + b"\xff" * 4 + b"\x80" + _payload(rng)),
        (3.0, b"\xff" * 80),
        (5.2, b"\xff" * 7 + bytes([0x7A]) + bytes(8)),  # terminator ~1989 Hz
    ]
    for at, data in pieces:
        buf = mix_at(buf, render_symbols(data, cfg), at)
    return buf


def _build(name: str, rng: np.random.Generator, cfg: ProtocolConfig):
    """Returns a list of (suffix, buffer, carrier dict, embed specs, expected)."""
    seed = int(rng.integers(1 << 31))
    if name == "clean-single":
        spec = EmbedSpec(_payload(rng), 1.0)
        carrier = {"kind": "silence", "duration_s": 3.0}
        buf = embed_message(generate_carrier("silence", 3.0), spec, cfg)
        return [("", buf, carrier, [spec], {"detections": 1, "payloads_hex": [spec.payload.hex()]})]
    if name == "noisy-6dB":
        spec = EmbedSpec(_payload(rng), 1.0, gain_db=-6.0)
        carrier = {"kind": "white_noise", "level_db": -12.0, "seed": seed, "duration_s": 3.0}
        base = generate_carrier("white_noise", 3.0, level_db=-12.0, seed=seed)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            buf = embed_message(base, spec, cfg)
        return [("", buf, carrier, [spec], {"detections": 1, "payloads_hex": [spec.payload.hex()]})]
    if name == "jitter-10hz":
        spec = EmbedSpec(_payload(rng), 1.0, freq_offset_hz=10.0)
        carrier = {"kind": "silence", "duration_s": 3.0}
        buf = embed_message(generate_carrier("silence", 3.0), spec, cfg)
        # a 10 Hz offset exceeds half a byte step, so payload bytes are not expected to survive
        return [("", buf, carrier, [spec], {"detections": 1})]
    if name == "two-messages":
        specs = [EmbedSpec(_payload(rng), 0.5), EmbedSpec(_payload(rng), 1.5)]
        carrier = {"kind": "silence", "duration_s": 3.0}
        buf = generate_carrier("silence", 3.0)
        for s in specs:
            buf = embed_message(buf, s, cfg)
        return [("", buf, carrier, specs, {"detections": 2, "payloads_hex": [s.payload.hex() for s in specs]})]
    if name == "truncated-payload":
        spec = EmbedSpec(_payload(rng), 1.0)
        full = embed_message(generate_carrier("silence", 3.0), spec, cfg)
        buf = full.slice_time(0.0, 1.7)
        carrier = {"kind": "silence", "duration_s": 1.7, "note": "cut 0.5 s into the payload"}
        return [("", buf, carrier, [spec], {"detections": 1, "payloads_hex": []})]
    if name == "four-fragments":
        raw = _payload(rng)
        out = []
        for frag in fragment_message(raw):
            s = int(rng.integers(1 << 31))
            at = float(np.round(rng.uniform(0.2, 1.2), 3))
            base = generate_carrier("white_noise", 2.0, level_db=-20.0, seed=s)
            buf = embed_fragment(base, frag, at, cfg)
            carrier = {"kind": "white_noise", "level_db": -20.0, "seed": s, "duration_s": 2.0}
            exp = {"detections": 1, "fragment": frag.to_dict() | {"start_time_s": at},
                   "reassembled_hex": raw.hex()}
            out.append((f"-{frag.seq_index}", buf, carrier, [], exp))
        # arrival order on disk is shuffled
        order = rng.permutation(len(out))
        return [out[i] for i in order]
    if name == "pseudo-sync":
        buf = _pseudo_sync(rng, cfg)
        carrier = {"kind": "white_noise", "level_db": -30.0, "duration_s": 6.0, "note": "adversarial FF runs"}
        return [("", buf, carrier, [], {"detections": 0})]
    if name == "speech-like":
        spec = EmbedSpec(_payload(rng), 2.0)
        # syllabic peaks sit ~17 dB over RMS; -26 dB leaves headroom for -6 dB tones
        carrier = {"kind": "speech_like", "level_db": -26.0, "seed": seed, "duration_s": 5.0}
        base = generate_carrier("speech_like", 5.0, level_db=-26.0, seed=seed)
        buf = embed_message(base, spec, cfg)
        return [("", buf, carrier, [spec], {"detections": 1, "payloads_hex": [spec.payload.hex()]})]
    raise ValueError(f"unknown fixture case {name!r}")


def generate_suite(out_dir, seed: int = 0, cfg: ProtocolConfig = ProtocolConfig()) -> list[dict]:
    """Write every fixture WAV plus ``manifest.json``; returns the manifest entries."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = []
    for i, name in enumerate(CASES):
        case_seed = seed * 1000 + i
        rng = np.random.default_rng(case_seed)
        for suffix, buf, carrier, specs, expected in _build(name, rng, cfg):
            fname = f"{name}{suffix}.wav"
            write_wav(buf, out / fname)
            manifest.append({
                "case": name,
                "file": fname,
                "sha256": _sha256(out / fname),
                "seed": case_seed,
                "carrier": carrier,
                "embed_specs": [s.to_dict() for s in specs],
                "expected": expected,
            })
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest
