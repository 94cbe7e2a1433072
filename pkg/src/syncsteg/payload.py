"""Payload extraction and guidance-block decoding.

Block layout (8 bytes)::

    0     target_id
    1-2   coord_x   (big-endian)
    3-4   coord_y   (big-endian)
    5     speed
    6     heading   (raw; heading_deg = heading * 360 / 256)
    7     command_code
"""

from __future__ import annotations

import enum
import math
import numbers
import struct
from dataclasses import dataclass

import numpy as np

from .audio_io import AudioBuffer
from .protocol import (
    BLOCK_LEN,
    PAYLOAD_LEN,
    SYNC_LEN,
    ProtocolConfig,
    byte_to_freq,
    freq_to_byte,
    is_sync_symbols,
    sync_confidence,
)
from .spectral import WindowConfig
from .sync_detect import SYMBOL_FLOOR_DB, SyncEvent, symbolize

_BLOCK = struct.Struct(">BHHBBB")


class MissingSymbol(ValueError):
    def __init__(self, index: int, power_db: float):
        super().__init__(f"payload symbol {index} is below the power floor ({power_db:.1f} dB)")
        self.index = index
        self.power_db = power_db


@dataclass(frozen=True)
class GuidanceBlock:
    target_id: int
    coord_x: int
    coord_y: int
    speed: int
    heading: int
    command_code: int

    def __post_init__(self):
        for name, top in (("target_id", 0xFF), ("coord_x", 0xFFFF), ("coord_y", 0xFFFF),
                          ("speed", 0xFF), ("heading", 0xFF), ("command_code", 0xFF)):
            v = getattr(self, name)
            if not isinstance(v, numbers.Integral) or not 0 <= v <= top:
                raise ValueError(f"{name} must be an integer in 0..{top}, got {v!r}")

    @property
    def heading_deg(self) -> float:
        return self.heading * 360.0 / 256.0

    def to_dict(self) -> dict:
        return {
            "target_id": self.target_id,
            "coord_x": self.coord_x,
            "coord_y": self.coord_y,
            "speed": self.speed,
            "heading": self.heading,
            "heading_deg": self.heading_deg,
            "command_code": self.command_code,
        }


def decode_block(block: bytes) -> GuidanceBlock:
    if len(block) != BLOCK_LEN:
        raise ValueError(f"block must be {BLOCK_LEN} bytes, got {len(block)}")
    return GuidanceBlock(*_BLOCK.unpack(bytes(block)))


def encode_block(block: GuidanceBlock) -> bytes:
    return _BLOCK.pack(block.target_id, block.coord_x, block.coord_y,
                       block.speed, block.heading, block.command_code)


def decode_message(raw: bytes) -> list[GuidanceBlock]:
    if len(raw) != PAYLOAD_LEN:
        raise ValueError(f"payload must be {PAYLOAD_LEN} bytes, got {len(raw)}")
    return [decode_block(raw[i:i + BLOCK_LEN]) for i in range(0, PAYLOAD_LEN, BLOCK_LEN)]


def encode_message(blocks) -> bytes:
    blocks = list(blocks)
    if len(blocks) != PAYLOAD_LEN // BLOCK_LEN:
        raise ValueError("a message holds exactly 4 blocks")
    return b"".join(encode_block(b) for b in blocks)


@dataclass(frozen=True)
class StegoMessage:
    sync: SyncEvent
    raw_payload: bytes
    blocks: tuple
    symbol_confidences: tuple

    def to_dict(self) -> dict:
        return {
            "start_time_s": round(self.sync.start_time_s, 6),
            "raw_payload_hex": self.raw_payload.hex(),
            "blocks": [b.to_dict() for b in self.blocks],
        }


def _quantize(freqs, powers, cfg: ProtocolConfig, first_index: int = 0):
    fmap = cfg.byte_map
    half_step = fmap.step_hz / 2
    out = bytearray()
    conf = []
    for i, (f, p) in enumerate(zip(freqs, powers)):
        if math.isnan(f):
            raise MissingSymbol(first_index + i, p)
        b = freq_to_byte(f, fmap)
        out.append(b)
        conf.append(1.0 - min(abs(f - byte_to_freq(b, fmap)) / half_step, 1.0))
    return bytes(out), conf


def extract_payload(audio: AudioBuffer, sync: SyncEvent, cfg: ProtocolConfig = ProtocolConfig(),
                    wcfg: WindowConfig = WindowConfig()) -> tuple[bytes, list[float]]:
    """Read the 32 symbols after ``sync``; returns bytes and per-symbol confidences."""
    need = sync.start_time_s + (SYNC_LEN + PAYLOAD_LEN) * cfg.symbol_s
    if need > audio.duration_s + 0.5 / audio.sample_rate_hz:
        raise ValueError(f"payload needs audio up to {need:.3f} s; buffer is {audio.duration_s:.3f} s")
    sym = symbolize(audio, sync.start_time_s + SYNC_LEN * cfg.symbol_s, PAYLOAD_LEN, cfg, wcfg)
    return _quantize(sym[:, 0], sym[:, 1], cfg)


def build_message(sync: SyncEvent, raw: bytes, confidences) -> StegoMessage:
    return StegoMessage(sync, bytes(raw), tuple(decode_message(raw)), tuple(confidences))


class DecoderState(enum.Enum):
    SEARCH = "search"
    SYNC_VERIFY = "sync_verify"
    PAYLOAD = "payload"
    COMPLETE = "complete"
    ABORT = "abort"


class FrameDecoder:
    """Symbol-synchronous framing FSM.

    :meth:`run` walks a ``(freq_hz, power_db)`` stream. ``state`` and ``k``
    (payload symbols collected) expose the machine; ``transitions`` logs every
    state change.
    """

    def __init__(self, cfg: ProtocolConfig = ProtocolConfig(), t0_s: float = 0.0):
        self.cfg = cfg
        self.t0_s = t0_s
        self.state = DecoderState.SEARCH
        self.history: list[tuple[float, float]] = []
        self.sync_start = 0
        self.k = 0
        self.transitions: list[tuple[DecoderState, DecoderState]] = []

    def _goto(self, state: DecoderState) -> None:
        self.transitions.append((self.state, state))
        self.state = state

    def run(self, stream) -> list[StegoMessage]:
        self.history = [(float(f), float(p)) for f, p in stream]
        out = []
        i = 0
        n = len(self.history)
        while i < n:
            msg, i = self._step(i)
            if msg is not None:
                out.append(msg)
        return out

    def _step(self, i: int):
        cfg = self.cfg
        hist = self.history
        # SEARCH: slide one symbol at a time until 8 symbols form a sync frame
        if i + SYNC_LEN > len(hist):
            return None, len(hist)
        freqs = [f for f, _ in hist[i:i + SYNC_LEN]]
        if not is_sync_symbols(freqs, cfg):
            return None, i + 1
        self._goto(DecoderState.SYNC_VERIFY)
        self.sync_start = i
        sync = SyncEvent(self.t0_s + i * cfg.symbol_s, tuple(freqs), sync_confidence(freqs, cfg), i)
        self._goto(DecoderState.PAYLOAD)
        raw = bytearray()
        conf = []
        for k in range(PAYLOAD_LEN):
            self.k = k
            j = i + SYNC_LEN + k
            if j >= len(hist) or math.isnan(hist[j][0]) or not hist[j][1] >= SYMBOL_FLOOR_DB:
                self._goto(DecoderState.ABORT)
                self._goto(DecoderState.SEARCH)
                return None, i + 1
            b, c = _quantize([hist[j][0]], [hist[j][1]], cfg, k)
            raw += b
            conf += c
        self._goto(DecoderState.COMPLETE)
        assert is_sync_symbols(sync.symbol_freqs_hz, cfg)
        msg = build_message(sync, bytes(raw), conf)
        self._goto(DecoderState.SEARCH)
        return msg, i + SYNC_LEN + PAYLOAD_LEN


def run_fsm(symbol_stream, cfg: ProtocolConfig = ProtocolConfig(), t0_s: float = 0.0) -> list[StegoMessage]:
    """Decode every complete sync+payload frame in a symbol stream; never raises on bad input."""
    try:
        stream = np.asarray(symbol_stream, dtype=float).reshape(-1, 2)
    except (TypeError, ValueError):
        return []
    return FrameDecoder(cfg, t0_s).run(stream)


def decode_events(audio: AudioBuffer, events, cfg: ProtocolConfig = ProtocolConfig(),
                  wcfg: WindowConfig = WindowConfig()):
    """Messages for each detection plus ``(event, error)`` pairs for the failures."""
    messages, failures = [], []
    for ev in events:
        try:
            raw, conf = extract_payload(audio, ev, cfg, wcfg)
        except ValueError as exc:
            failures.append((ev, exc))
            continue
        messages.append(build_message(ev, raw, conf))
    return messages, failures
