"""Audio loading, conditioning and writing.

Downstream analysis always sees a mono float64 signal at 44.1 kHz with every
sample in [-1, 1].
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

TARGET_RATE = 44100

WAVE_FORMAT_PCM = 0x0001
WAVE_FORMAT_IEEE_FLOAT = 0x0003
WAVE_FORMAT_EXTENSIBLE = 0xFFFE

RESAMPLE_TAPS = 32
BANDPASS_TAPS = 255


class WavFormatError(ValueError):
    """Raised for malformed or unsupported RIFF/WAVE input."""


@dataclass(frozen=True)
class AudioBuffer:
    samples: np.ndarray
    sample_rate_hz: int = TARGET_RATE
    meta: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        samples = np.array(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError("AudioBuffer holds mono samples only")
        if int(self.sample_rate_hz) <= 0:
            raise ValueError("sample_rate_hz must be positive")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate_hz", int(self.sample_rate_hz))

    def __len__(self):
        return len(self.samples)

    def __eq__(self, other):
        if not isinstance(other, AudioBuffer):
            return NotImplemented
        return self.sample_rate_hz == other.sample_rate_hz and np.array_equal(self.samples, other.samples)

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate_hz

    def slice_time(self, t0_s: float, t1_s: float) -> "AudioBuffer":
        i0 = max(0, int(round(t0_s * self.sample_rate_hz)))
        i1 = min(len(self), int(round(t1_s * self.sample_rate_hz)))
        return AudioBuffer(self.samples[i0:i1], self.sample_rate_hz)


def peak_normalize(buffer: AudioBuffer) -> AudioBuffer:
    peak = float(np.max(np.abs(buffer.samples))) if len(buffer) else 0.0
    if peak == 0.0:
        return buffer
    return AudioBuffer(buffer.samples / peak, buffer.sample_rate_hz)


def _read_chunks(data: bytes):
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise WavFormatError("not a RIFF/WAVE file")
    pos = 12
    while pos + 8 <= len(data):
        cid = data[pos:pos + 4]
        (size,) = struct.unpack_from("<I", data, pos + 4)
        body = data[pos + 8:pos + 8 + size]
        if len(body) < size and cid != b"data":
            raise WavFormatError(f"truncated {cid!r} chunk")
        yield cid, body
        pos += 8 + size + (size & 1)


def _decode_pcm(data: bytes) -> tuple[np.ndarray, int]:
    fmt = None
    frames = None
    for cid, body in _read_chunks(data):
        if cid == b"fmt ":
            if len(body) < 16:
                raise WavFormatError("fmt chunk too short")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
            if fmt[0] == WAVE_FORMAT_EXTENSIBLE:
                if len(body) < 26:
                    raise WavFormatError("extensible fmt chunk too short")
                (sub,) = struct.unpack_from("<H", body, 24)
                fmt = (sub,) + fmt[1:]
        elif cid == b"data":
            if fmt is None:
                raise WavFormatError("data chunk before fmt chunk")
            frames = body
            break
    if fmt is None:
        raise WavFormatError("missing fmt chunk")
    if frames is None:
        raise WavFormatError("missing data chunk")

    code, channels, rate, _, block_align, bits = fmt
    if channels not in (1, 2):
        raise WavFormatError(f"unsupported channel count {channels}")
    if rate <= 0:
        raise WavFormatError("sample rate must be positive")
    if code == WAVE_FORMAT_PCM and bits == 16:
        dtype, scale = np.dtype("<i2"), 1.0 / 32768.0
    elif code == WAVE_FORMAT_IEEE_FLOAT and bits == 32:
        dtype, scale = np.dtype("<f4"), 1.0
    else:
        raise WavFormatError(f"unsupported codec (format {code:#06x}, {bits} bits)")
    if block_align != channels * dtype.itemsize:
        raise WavFormatError("inconsistent block alignment")

    n = len(frames) // block_align
    if n == 0:
        raise WavFormatError("zero-length data chunk")
    raw = np.frombuffer(frames[:n * block_align], dtype=dtype).astype(np.float64) * scale
    raw = raw.reshape(n, channels)
    if channels == 2:
        # (a + b) / 2 is symmetric in a and b, so channel order cannot matter
        mono = (raw[:, 0] + raw[:, 1]) * 0.5
    else:
        mono = raw[:, 0]
    return mono, rate


def load_wav(path) -> AudioBuffer:
    """Read a PCM16 or float32 WAV as a canonical mono 44.1 kHz buffer."""
    data = Path(path).read_bytes()
    samples, rate = _decode_pcm(data)
    if rate != TARGET_RATE:
        samples = resample(samples, rate, TARGET_RATE)
    buf = AudioBuffer(samples, TARGET_RATE)
    if len(buf) and np.max(np.abs(buf.samples)) > 1.0:
        buf = peak_normalize(buf)
    return buf


def write_wav(buffer: AudioBuffer, path) -> None:
    """Write 16-bit PCM mono; samples are clamped to [-1, 1] first."""
    if len(buffer) == 0:
        raise WavFormatError("refusing to write zero-length data chunk")
    q = np.round(np.clip(buffer.samples, -1.0, 1.0) * 32768.0)
    pcm = np.clip(q, -32768, 32767).astype("<i2").tobytes()
    rate = buffer.sample_rate_hz
    header = b"RIFF" + struct.pack("<I", 36 + len(pcm)) + b"WAVE"
    header += b"fmt " + struct.pack("<IHHIIHH", 16, WAVE_FORMAT_PCM, 1, rate, rate * 2, 2, 16)
    header += b"data" + struct.pack("<I", len(pcm))
    Path(path).write_bytes(header + pcm)


def resample(samples: np.ndarray, rate_in: int, rate_out: int, taps: int = RESAMPLE_TAPS) -> np.ndarray:
    """Windowed-sinc (Hann) interpolation with a ``taps``-point kernel.

    When downsampling the sinc cutoff drops to the output Nyquist.
    """
    x = np.asarray(samples, dtype=np.float64)
    if rate_in == rate_out or len(x) == 0:
        return x.copy()
    n_out = int(round(len(x) * rate_out / rate_in))
    ratio = rate_in / rate_out
    cutoff = min(1.0, rate_out / rate_in)
    half = taps // 2
    out = np.empty(n_out)
    offsets = np.arange(-half + 1, half + 1)
    chunk = 1 << 14
    for s in range(0, n_out, chunk):
        t = np.arange(s, min(s + chunk, n_out)) * ratio
        base = np.floor(t).astype(np.int64)
        idx = base[:, None] + offsets[None, :]
        d = t[:, None] - idx
        w = 0.5 + 0.5 * np.cos(np.pi * d / (half + 1))
        k = cutoff * np.sinc(cutoff * d) * w
        valid = (idx >= 0) & (idx < len(x))
        vals = np.where(valid, x[np.clip(idx, 0, len(x) - 1)], 0.0)
        out[s:s + len(t)] = np.sum(vals * k, axis=1)
    return out


def bandpass_kernel(low_hz: float, high_hz: float, sample_rate_hz: int, taps: int = BANDPASS_TAPS) -> np.ndarray:
    """Hamming-windowed sinc band-pass, unity gain at the band centre."""
    n = np.arange(taps) - (taps - 1) / 2
    lo = low_hz / sample_rate_hz
    hi = high_hz / sample_rate_hz
    h = 2 * hi * np.sinc(2 * hi * n) - 2 * lo * np.sinc(2 * lo * n)
    h *= np.hamming(taps)
    centre = (lo + hi) / 2
    gain = abs(np.sum(h * np.exp(-2j * np.pi * centre * n)))
    return h / gain


def bandpass(buffer: AudioBuffer, low_hz: float, high_hz: float) -> AudioBuffer:
    nyq = buffer.sample_rate_hz / 2
    if not 0 < low_hz < high_hz < nyq:
        raise ValueError(f"band edges must satisfy 0 < low < high < {nyq}, got [{low_hz}, {high_hz}]")
    h = bandpass_kernel(low_hz, high_hz, buffer.sample_rate_hz)
    # odd-length symmetric kernel + mode="same" cancels the (taps-1)/2 group delay
    y = np.convolve(buffer.samples, h, mode="same")
    if len(y) != len(buffer):
        # numpy returns max(len) for "same"; trim back for very short inputs
        start = (len(y) - len(buffer)) // 2
        y = y[start:start + len(buffer)]
    return AudioBuffer(y, buffer.sample_rate_hz)
