"""Wire format shared by the encoder and the decoders.

Every byte is carried by one tone of ``symbol_ms`` duration. Tone frequency is
an affine function of the byte value, pinned so that ``0x80`` sits on the sync
terminator frequency and ``0xFF`` on the sync "all ones" frequency.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, replace
from fractions import Fraction
from pathlib import Path
from typing import Sequence

SYNC_PATTERN = bytes([0xFF] * 7 + [0x80])
SYNC_LEN = len(SYNC_PATTERN)
PAYLOAD_LEN = 32
BLOCK_LEN = 8

_JSON_KEYS = ("sync_terminator_hz", "tolerance_hz", "ff_freq_hz", "symbol_ms")


class ProtocolError(ValueError):
    pass


@dataclass(frozen=True)
class ProtocolConfig:
    sync_terminator_hz: float = 2045.0
    tolerance_hz: float = 20.0
    ff_freq_hz: float = 3230.0
    symbol_ms: float = 25.0

    def __post_init__(self):
        for key in _JSON_KEYS:
            value = getattr(self, key)
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                raise ProtocolError(f"{key} must be a finite number, got {value!r}")
        if self.tolerance_hz <= 0:
            raise ProtocolError("tolerance_hz must be positive")
        if self.symbol_ms <= 0:
            raise ProtocolError("symbol_ms must be positive")
        if self.ff_freq_hz <= self.sync_terminator_hz:
            raise ProtocolError("ff_freq_hz must exceed sync_terminator_hz")

    @property
    def sync_pattern(self) -> bytes:
        return SYNC_PATTERN

    @property
    def payload_len(self) -> int:
        return PAYLOAD_LEN

    @property
    def symbol_s(self) -> float:
        return self.symbol_ms / 1000.0

    @property
    def byte_map(self) -> "ByteFreqMap":
        return ByteFreqMap(self.sync_terminator_hz, self.ff_freq_hz)

    def with_overrides(self, **kwargs) -> "ProtocolConfig":
        kwargs = {k: v for k, v in kwargs.items() if v is not None}
        return replace(self, **kwargs)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ProtocolConfig":
        unknown = set(data) - set(_JSON_KEYS)
        if unknown:
            raise ProtocolError(f"unknown protocol keys: {sorted(unknown)}")
        return cls(**{k: float(data[k]) for k in _JSON_KEYS if k in data})

    @classmethod
    def load(cls, path) -> "ProtocolConfig":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(data, dict):
            raise ProtocolError(f"{path}: expected a JSON object")
        return cls.from_dict(data)


class ByteFreqMap:
    """Affine byte -> tone map with an exact rational step.

    ``f(b) = anchor_mid + (b - 128) * step`` where
    ``step = (anchor_top - anchor_mid) / 127``.
    """

    def __init__(self, anchor_mid_hz: float = 2045.0, anchor_top_hz: float = 3230.0):
        self.anchor_mid = Fraction(anchor_mid_hz)
        self.anchor_top = Fraction(anchor_top_hz)
        self.step = (self.anchor_top - self.anchor_mid) / 127
        if self.step <= 0:
            raise ProtocolError("anchor_top_hz must exceed anchor_mid_hz")

    @property
    def anchor_mid_hz(self) -> float:
        return float(self.anchor_mid)

    @property
    def anchor_top_hz(self) -> float:
        return float(self.anchor_top)

    @property
    def step_hz(self) -> float:
        return float(self.step)

    def exact(self, b: int) -> Fraction:
        return self.anchor_mid + (int(b) - 128) * self.step

    def __repr__(self):
        return f"ByteFreqMap(anchor_mid_hz={self.anchor_mid_hz}, anchor_top_hz={self.anchor_top_hz})"


DEFAULT_MAP = ByteFreqMap()


def byte_to_freq(b: int, fmap: ByteFreqMap = DEFAULT_MAP) -> float:
    if not 0 <= b <= 255:
        raise ProtocolError(f"byte value out of range: {b}")
    return float(fmap.exact(b))


def freq_to_byte(f: float, fmap: ByteFreqMap = DEFAULT_MAP) -> int:
    """Nearest-byte quantizer; exact midpoints go to the lower byte."""
    x = (Fraction(f) - fmap.anchor_mid) / fmap.step
    # ceil(x - 1/2) rounds half down
    return max(0, min(255, math.ceil(x - Fraction(1, 2)) + 128))


def is_sync_symbols(freqs: Sequence[float], cfg: ProtocolConfig = ProtocolConfig()) -> bool:
    """Sync predicate over eight measured symbol frequencies.

    The first seven must sit within ``tolerance_hz`` of the FF tone and agree
    with each other to within ``tolerance_hz``; the eighth must sit within
    ``tolerance_hz`` of the terminator tone. NaN (absent symbol) never matches.
    """
    if len(freqs) != SYNC_LEN:
        raise ProtocolError(f"expected {SYNC_LEN} frequencies, got {len(freqs)}")
    eps = cfg.tolerance_hz
    head = [float(f) for f in freqs[:7]]
    last = float(freqs[7])
    if not all(abs(f - cfg.ff_freq_hz) <= eps for f in head):
        return False
    if max(head) - min(head) > eps:
        return False
    return abs(last - cfg.sync_terminator_hz) <= eps


def nominal_sync_freqs(cfg: ProtocolConfig = ProtocolConfig()) -> list[float]:
    return [cfg.ff_freq_hz] * 7 + [cfg.sync_terminator_hz]


def sync_confidence(freqs: Sequence[float], cfg: ProtocolConfig = ProtocolConfig()) -> float:
    """1 at nominal frequencies, falling linearly with mean absolute deviation."""
    dev = [abs(float(f) - n) for f, n in zip(freqs, nominal_sync_freqs(cfg))]
    if any(math.isnan(d) for d in dev):
        return 0.0
    return max(0.0, min(1.0, 1.0 - (sum(dev) / len(dev)) / cfg.tolerance_hz))
