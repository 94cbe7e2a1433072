"""Protocol-conformant encoder and synthetic carriers."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .audio_io import TARGET_RATE, AudioBuffer, bandpass_kernel
from .protocol import PAYLOAD_LEN, SYNC_PATTERN, ProtocolConfig, byte_to_freq


class ClippingWarning(UserWarning):
    pass


class CarrierTooShort(ValueError):
    pass


@dataclass(frozen=True)
class EmbedSpec:
    payload: bytes
    at_time_s: float = 0.0
    gain_db: float = -6.0
    ramp_ms: float = 2.0
    freq_offset_hz: float = 0.0
    # payload indices rendered silent (fixture support)
    muted_payload: tuple = field(default=())

    def __post_init__(self):
        payload = self.payload
        if not isinstance(payload, (bytes, bytearray)):
            # four GuidanceBlocks
            from .payload import encode_message
            payload = encode_message(payload)
        object.__setattr__(self, "payload", bytes(payload))
        if len(self.payload) != PAYLOAD_LEN:
            raise ValueError(f"payload must be exactly {PAYLOAD_LEN} bytes, got {len(self.payload)}")
        if self.at_time_s < 0:
            raise ValueError("at_time_s must be >= 0")
        if self.gain_db > 0:
            raise ValueError("gain_db must be <= 0")
        object.__setattr__(self, "muted_payload", tuple(int(i) for i in self.muted_payload))

    def to_dict(self) -> dict:
        return {
            "payload_hex": self.payload.hex(),
            "at_time_s": self.at_time_s,
            "gain_db": self.gain_db,
            "ramp_ms": self.ramp_ms,
            "freq_offset_hz": self.freq_offset_hz,
            "muted_payload": list(self.muted_payload),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EmbedSpec":
        return cls(
            payload=bytes.fromhex(data["payload_hex"]),
            at_time_s=float(data.get("at_time_s", 0.0)),
            gain_db=float(data.get("gain_db", -6.0)),
            ramp_ms=float(data.get("ramp_ms", 2.0)),
            freq_offset_hz=float(data.get("freq_offset_hz", 0.0)),
            muted_payload=tuple(data.get("muted_payload", ())),
        )


def symbol_bounds(start_sample: int, k: int, symbol_s: float, sample_rate_hz: int) -> tuple[int, int]:
    """Sample span of symbol ``k`` on the grid anchored at ``start_sample``."""
    return (start_sample + int(round(k * symbol_s * sample_rate_hz)),
            start_sample + int(round((k + 1) * symbol_s * sample_rate_hz)))


def _ramp_envelope(n: int, ramp: int) -> np.ndarray:
    env = np.ones(n)
    ramp = min(ramp, n // 2)
    if ramp > 0:
        r = 0.5 - 0.5 * np.cos(np.pi * (np.arange(ramp) + 0.5) / ramp)
        env[:ramp] = r
        env[n - ramp:] = r[::-1]
    return env


def _tone(freq_hz: float, n: int, amp: float, ramp: int, sample_rate_hz: int, phase: float = 0.0) -> np.ndarray:
    if amp == 0.0:
        return np.zeros(n)
    t = np.arange(n) / sample_rate_hz
    return amp * np.sin(2 * np.pi * freq_hz * t + phase) * _ramp_envelope(n, ramp)


def _check_ramp(ramp_ms: float, cfg: ProtocolConfig) -> None:
    if not 0 <= ramp_ms < cfg.symbol_ms / 2:
        raise ValueError("ramp_ms must lie in [0, symbol_ms/2)")


def synth_symbol(b: int, cfg: ProtocolConfig = ProtocolConfig(), gain_db: float = -6.0,
                 ramp_ms: float = 2.0, freq_offset_hz: float = 0.0,
                 sample_rate_hz: int = TARGET_RATE) -> AudioBuffer:
    """One ``symbol_ms`` tone for byte ``b``; ``gain_db=-inf`` gives silence."""
    _check_ramp(ramp_ms, cfg)
    n = int(round(cfg.symbol_s * sample_rate_hz))
    amp = 0.0 if gain_db == -math.inf else 10 ** (gain_db / 20)
    ramp = int(round(ramp_ms * sample_rate_hz / 1000))
    f = byte_to_freq(b, cfg.byte_map) + freq_offset_hz
    return AudioBuffer(_tone(f, n, amp, ramp, sample_rate_hz), sample_rate_hz)


def render_symbols(data: bytes, cfg: ProtocolConfig, sample_rate_hz: int = TARGET_RATE,
                   gain_db: float = -6.0, ramp_ms: float = 2.0, freq_offset_hz: float = 0.0,
                   muted=()) -> np.ndarray:
    """Concatenated symbol tones on the sample grid used by the decoder.

    Phase carries over from symbol to symbol; restarting it would smear the
    spectrum of windows that straddle two identical symbols.
    """
    _check_ramp(ramp_ms, cfg)
    amp = 0.0 if gain_db == -math.inf else 10 ** (gain_db / 20)
    ramp = int(round(ramp_ms * sample_rate_hz / 1000))
    total = symbol_bounds(0, len(data) - 1, cfg.symbol_s, sample_rate_hz)[1] if data else 0
    out = np.zeros(total)
    fmap = cfg.byte_map
    muted = set(muted)
    phase = 0.0
    for k, b in enumerate(data):
        i0, i1 = symbol_bounds(0, k, cfg.symbol_s, sample_rate_hz)
        a = 0.0 if k in muted else amp
        f = byte_to_freq(b, fmap) + freq_offset_hz
        out[i0:i1] = _tone(f, i1 - i0, a, ramp, sample_rate_hz, phase)
        phase = math.fmod(phase + 2 * np.pi * f * (i1 - i0) / sample_rate_hz, 2 * np.pi)
    return out


def mix_at(carrier: AudioBuffer, signal: np.ndarray, at_time_s: float) -> AudioBuffer:
    sr = carrier.sample_rate_hz
    n0 = int(round(at_time_s * sr))
    if n0 + len(signal) > len(carrier):
        raise CarrierTooShort(
            f"carrier is {carrier.duration_s:.3f} s; embedding needs {(n0 + len(signal)) / sr:.3f} s"
        )
    out = np.array(carrier.samples)
    out[n0:n0 + len(signal)] += signal
    clipped = bool(np.any(np.abs(out) > 1.0))
    if clipped:
        warnings.warn("embedding exceeded full scale; output hard-clamped", ClippingWarning, stacklevel=3)
        np.clip(out, -1.0, 1.0, out=out)
    return AudioBuffer(out, sr, meta={"clipped": clipped})


def embed_message(carrier: AudioBuffer, spec: EmbedSpec, cfg: ProtocolConfig = ProtocolConfig()) -> AudioBuffer:
    """Mix sync + 32 payload symbols additively into ``carrier`` at ``spec.at_time_s``."""
    muted = [len(SYNC_PATTERN) + i for i in spec.muted_payload]
    sig = render_symbols(SYNC_PATTERN + spec.payload, cfg, carrier.sample_rate_hz, spec.gain_db,
                         spec.ramp_ms, spec.freq_offset_hz, muted)
    return mix_at(carrier, sig, spec.at_time_s)


def generate_carrier(kind: str, duration_s: float, *, level_db: float = -20.0, freqs=(),
                     seed: int = 0, sample_rate_hz: int = TARGET_RATE) -> AudioBuffer:
    """Synthetic carrier: ``silence``, ``white_noise``, ``tone_mix`` or ``speech_like``.

    ``level_db`` is the RMS level (dBFS) for the noise kinds and the per-tone
    peak amplitude for ``tone_mix``. Noise kinds are deterministic in ``seed``.
    """
    if duration_s <= 0:
        raise ValueError("duration must be positive")
    n = int(round(duration_s * sample_rate_hz))
    level = 10 ** (level_db / 20)
    if kind == "silence":
        x = np.zeros(n)
    elif kind == "white_noise":
        x = np.random.default_rng(seed).standard_normal(n) * level
    elif kind == "tone_mix":
        if not freqs:
            raise ValueError("tone_mix needs at least one frequency")
        t = np.arange(n) / sample_rate_hz
        x = sum(level * np.sin(2 * np.pi * f * t) for f in freqs)
    elif kind == "speech_like":
        x = _speech_like(n, sample_rate_hz, np.random.default_rng(seed))
        x *= level / np.sqrt(np.mean(x ** 2))
    else:
        raise ValueError(f"unknown carrier kind {kind!r}")
    return AudioBuffer(np.clip(x, -1.0, 1.0), sample_rate_hz)


_FORMANTS = ((300.0, 900.0, 1.0), (1000.0, 1800.0, 0.5), (2200.0, 3000.0, 0.25))


def _speech_like(n: int, sr: int, rng: np.random.Generator) -> np.ndarray:
    """Formant-band noise under a ~4 Hz syllabic envelope with pauses."""
    src = rng.standard_normal(n)
    x = np.zeros(n)
    for lo, hi, g in _FORMANTS:
        x += g * np.convolve(src, bandpass_kernel(lo, hi, sr), mode="same")
    t = np.arange(n) / sr
    rate = rng.uniform(3.0, 5.0)
    env = np.clip(np.sin(2 * np.pi * rate * t + rng.uniform(0, 2 * np.pi)), 0.0, None) ** 0.7
    return x * (0.05 + env)
