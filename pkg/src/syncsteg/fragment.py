"""Splitting one message across several carriers and putting it back together.

Each carrier holds one fragment: the 8-byte sync frame, a header byte
(high nibble = sequence index, low nibble = fragment total) and 8 block bytes.
A total of 0 is reserved so accidental reads of ordinary messages can be
told apart.
"""

from __future__ import annotations

from dataclasses import dataclass

from .audio_io import AudioBuffer
from .embed import mix_at, render_symbols
from .protocol import BLOCK_LEN, PAYLOAD_LEN, SYNC_LEN, SYNC_PATTERN, ProtocolConfig
from .spectral import WindowConfig
from .payload import _quantize
from .sync_detect import detect, symbolize

MAX_TOTAL = 15
FRAGMENT_SYMBOLS = SYNC_LEN + 1 + BLOCK_LEN


class ReassemblyError(ValueError):
    pass


class MissingIndex(ReassemblyError):
    def __init__(self, missing):
        self.missing = sorted(missing)
        super().__init__(f"missing fragment indices {self.missing}")


class ConflictingTotal(ReassemblyError):
    def __init__(self, totals):
        self.totals = sorted(totals)
        super().__init__(f"fragments disagree on total: {self.totals}")


class DuplicateConflict(ReassemblyError):
    def __init__(self, index):
        self.index = index
        super().__init__(f"two different fragments claim index {index}")


class AmbiguousFragment(ValueError):
    pass


@dataclass(frozen=True)
class Fragment:
    seq_index: int
    total: int
    block_bytes: bytes
    source_file: str | None = None
    start_time_s: float | None = None

    def __post_init__(self):
        if not 1 <= self.total <= MAX_TOTAL:
            raise ValueError(f"total must be in 1..{MAX_TOTAL}, got {self.total}")
        if not 0 <= self.seq_index < self.total:
            raise ValueError(f"seq_index {self.seq_index} outside 0..{self.total - 1}")
        if len(self.block_bytes) != BLOCK_LEN:
            raise ValueError(f"fragment carries exactly {BLOCK_LEN} bytes")
        object.__setattr__(self, "block_bytes", bytes(self.block_bytes))

    @property
    def header(self) -> int:
        return pack_header(self.seq_index, self.total)

    def to_dict(self) -> dict:
        return {
            "seq_index": self.seq_index,
            "total": self.total,
            "block_hex": self.block_bytes.hex(),
            "source_file": self.source_file,
            "start_time_s": None if self.start_time_s is None else round(self.start_time_s, 6),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Fragment":
        return cls(int(d["seq_index"]), int(d["total"]), bytes.fromhex(d["block_hex"]),
                   d.get("source_file"), d.get("start_time_s"))


def pack_header(seq_index: int, total: int) -> int:
    if not (0 <= seq_index <= 15 and 0 <= total <= 15):
        raise ValueError("header fields are 4-bit")
    return (seq_index << 4) | total


def unpack_header(b: int) -> tuple[int, int]:
    return b >> 4, b & 0x0F


def fragment_bytes(raw: bytes) -> list[Fragment]:
    """Split any multiple of 8 bytes (up to 15 blocks) into indexed fragments."""
    if len(raw) == 0 or len(raw) % BLOCK_LEN:
        raise ValueError(f"length must be a positive multiple of {BLOCK_LEN}, got {len(raw)}")
    total = len(raw) // BLOCK_LEN
    if total > MAX_TOTAL:
        raise ValueError(f"at most {MAX_TOTAL} fragments")
    return [Fragment(i, total, raw[i * BLOCK_LEN:(i + 1) * BLOCK_LEN]) for i in range(total)]


def fragment_message(raw: bytes) -> list[Fragment]:
    if len(raw) != PAYLOAD_LEN:
        raise ValueError(f"message must be {PAYLOAD_LEN} bytes, got {len(raw)}")
    return fragment_bytes(raw)


def embed_fragment(carrier: AudioBuffer, frag: Fragment, at_time_s: float,
                   cfg: ProtocolConfig = ProtocolConfig(), gain_db: float = -6.0,
                   ramp_ms: float = 2.0) -> AudioBuffer:
    data = SYNC_PATTERN + bytes([frag.header]) + frag.block_bytes
    sig = render_symbols(data, cfg, carrier.sample_rate_hz, gain_db, ramp_ms)
    return mix_at(carrier, sig, at_time_s)


def read_fragments(audio: AudioBuffer, cfg: ProtocolConfig = ProtocolConfig(),
                   wcfg: WindowConfig = WindowConfig(), source: str | None = None):
    """Fragments in one carrier plus a list of per-detection error strings."""
    frags, errors = [], []
    for ev in detect(audio, cfg, wcfg):
        t = ev.start_time_s + SYNC_LEN * cfg.symbol_s
        try:
            sym = symbolize(audio, t, 1 + BLOCK_LEN, cfg, wcfg)
            data, _ = _quantize(sym[:, 0], sym[:, 1], cfg)
            seq, total = unpack_header(data[0])
            if total == 0:
                raise AmbiguousFragment(f"header {data[0]:#04x} has reserved total 0")
            frags.append(Fragment(seq, total, data[1:], source, ev.start_time_s))
        except ValueError as exc:
            errors.append(f"{source or '<buffer>'} @ {ev.start_time_s:.3f}s: {exc}")
    return frags, errors


def detect_fragments(audios, cfg: ProtocolConfig = ProtocolConfig(),
                     wcfg: WindowConfig = WindowConfig(), sources=None):
    """Pool fragments over carriers; returns ``(fragments, errors)``."""
    sources = list(sources) if sources is not None else [None] * len(audios)
    pooled, errors = [], []
    for audio, src in zip(audios, sources):
        f, e = read_fragments(audio, cfg, wcfg, src)
        pooled += f
        errors += e
    return pooled, errors


def reassemble(frags) -> bytes:
    frags = list(frags)
    if not frags:
        raise ReassemblyError("no fragments to reassemble")
    totals = {f.total for f in frags}
    if len(totals) != 1:
        raise ConflictingTotal(totals)
    total = totals.pop()
    slots: dict[int, bytes] = {}
    for f in frags:
        prev = slots.setdefault(f.seq_index, f.block_bytes)
        if prev != f.block_bytes:
            raise DuplicateConflict(f.seq_index)
    missing = [i for i in range(total) if i not in slots]
    if missing:
        raise MissingIndex(missing)
    return b"".join(slots[i] for i in range(total))
