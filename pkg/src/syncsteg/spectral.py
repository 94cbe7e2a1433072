"""Sliding-window spectral analysis.

Power convention: a unit-amplitude sine reads ~0 dB both as dominant power and
as total band power, independent of window length and FFT size.
"""

from __future__ import annotations

import csv
import functools
import math
from dataclasses import dataclass, field

import numpy as np

from .audio_io import AudioBuffer

SILENCE_DB = -90.0
FLOOR_DB = -200.0
_CHUNK = 256


@dataclass(frozen=True)
class WindowConfig:
    window_ms: float = 25.0
    hop_ms: float = 10.0
    fft_size: int = 8192
    search_band_hz: tuple[float, float] = (500.0, 5000.0)

    def __post_init__(self):
        if self.window_ms <= 0 or self.hop_ms <= 0:
            raise ValueError("window_ms and hop_ms must be positive")
        n = int(self.fft_size)
        if n <= 0 or n & (n - 1):
            raise ValueError("fft_size must be a power of two")
        lo, hi = self.search_band_hz
        if not 0 <= lo < hi:
            raise ValueError("search band must satisfy 0 <= lo < hi")
        object.__setattr__(self, "search_band_hz", (float(lo), float(hi)))

    def window_samples(self, sample_rate_hz: int) -> int:
        return int(round(self.window_ms * sample_rate_hz / 1000.0))

    def hop_samples(self, sample_rate_hz: int) -> int:
        return int(round(self.hop_ms * sample_rate_hz / 1000.0))

    def validate_for(self, sample_rate_hz: int) -> None:
        if self.fft_size < self.window_samples(sample_rate_hz):
            raise ValueError("fft_size must be at least the window length")
        if self.search_band_hz[1] > sample_rate_hz / 2:
            raise ValueError("search band exceeds Nyquist")


@dataclass(frozen=True)
class SpectralFrame:
    index: int
    start_time_s: float
    dominant_freq_hz: float  # NaN when the frame is silent
    dominant_power_db: float  # -inf when the frame is silent
    total_power_db: float

    @property
    def silent(self) -> bool:
        return math.isnan(self.dominant_freq_hz)


@dataclass(frozen=True)
class DominantTrack:
    frames: tuple
    config: WindowConfig
    source_duration_s: float
    # column views for vectorised consumers
    times: np.ndarray = field(repr=False, compare=False, default=None)
    freqs: np.ndarray = field(repr=False, compare=False, default=None)
    powers_db: np.ndarray = field(repr=False, compare=False, default=None)

    def __len__(self):
        return len(self.frames)


@functools.lru_cache(maxsize=32)
def hann(n: int) -> np.ndarray:
    """Symmetric Hann window (endpoints zero); cached and read-only."""
    w = np.ones(1) if n == 1 else 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(n) / (n - 1))
    w.setflags(write=False)
    return w


def frame_count(n_samples: int, win: int, hop: int) -> int:
    if n_samples < win:
        return 0
    return (n_samples - win) // hop + 1


def _frames(x: np.ndarray, win: int, hop: int, start: int, count: int) -> np.ndarray:
    idx = (start + np.arange(count))[:, None] * hop + np.arange(win)[None, :]
    return x[idx]


def _band_slice(fft_size: int, sample_rate_hz: int, lo: float, hi: float) -> slice:
    df = sample_rate_hz / fft_size
    k0 = int(math.ceil(lo / df - 1e-9))
    k1 = int(math.floor(hi / df + 1e-9))
    return slice(max(k0, 0), min(k1, fft_size // 2) + 1)


def _power_spectrum(frames: np.ndarray, window: np.ndarray, fft_size: int) -> np.ndarray:
    """Per-bin power scaled so a unit sine's bins sum to ~1 over one side."""
    spec = np.fft.rfft(frames * window[None, :], n=fft_size, axis=1)
    return (np.abs(spec) ** 2) * (4.0 / (fft_size * np.sum(window ** 2)))


def peak_estimate(mag: np.ndarray, band: slice, sample_rate_hz: int, fft_size: int, window_sum: float,
                  limits_hz: tuple | None = None):
    """Parabolic (log-magnitude) peak refinement inside ``band``.

    ``mag`` is a 2-D array (frames x bins) of |FFT|. Returns frequency (Hz) and
    peak amplitude in dB re. a unit sine, interpolated at the vertex. Estimates
    are clamped to ``limits_hz`` (default: half a bin beyond the edge bins).
    """
    sub = mag[:, band]
    k = np.argmax(sub, axis=1)
    rows = np.arange(sub.shape[0])
    full_k = k + band.start
    left = np.maximum(full_k - 1, 0)
    right = np.minimum(full_k + 1, mag.shape[1] - 1)
    tiny = 1e-300
    a = np.log(np.maximum(mag[rows, left], tiny))
    b = np.log(np.maximum(mag[rows, full_k], tiny))
    c = np.log(np.maximum(mag[rows, right], tiny))
    denom = a - 2 * b + c
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(denom < 0, 0.5 * (a - c) / denom, 0.0)
    p = np.clip(p, -0.5, 0.5)
    log_peak = b - 0.25 * (a - c) * p
    freq = (full_k + p) * sample_rate_hz / fft_size
    if limits_hz is None:
        df = sample_rate_hz / fft_size
        limits_hz = ((band.start - 0.5) * df, (band.stop - 0.5) * df)
    freq = np.clip(freq, *limits_hz)
    with np.errstate(divide="ignore"):
        power_db = 20 * (log_peak / np.log(10)) + 20 * np.log10(2.0 / window_sum)
    return freq, power_db


def analyze_frames(frames: np.ndarray, sample_rate_hz: int, cfg: WindowConfig):
    """Dominant frequency, dominant power and total band power for raw frames."""
    win = frames.shape[1]
    w = hann(win)
    spec = np.fft.rfft(frames * w[None, :], n=cfg.fft_size, axis=1)
    mag = np.abs(spec)
    band = _band_slice(cfg.fft_size, sample_rate_hz, *cfg.search_band_hz)
    freq, dom_db = peak_estimate(mag, band, sample_rate_hz, cfg.fft_size, float(np.sum(w)),
                                 limits_hz=cfg.search_band_hz)
    band_pow = np.sum(mag[:, band] ** 2, axis=1) * (4.0 / (cfg.fft_size * np.sum(w ** 2)))
    with np.errstate(divide="ignore"):
        total_db = 10 * np.log10(band_pow)
    silent = ~(total_db >= SILENCE_DB)
    freq = np.where(silent, np.nan, freq)
    dom_db = np.where(silent, -np.inf, dom_db)
    return freq, dom_db, total_db


def dominant_track(buffer: AudioBuffer, cfg: WindowConfig = WindowConfig()) -> DominantTrack:
    sr = buffer.sample_rate_hz
    cfg.validate_for(sr)
    win, hop = cfg.window_samples(sr), cfg.hop_samples(sr)
    n = frame_count(len(buffer), win, hop)
    if n == 0:
        raise ValueError(f"buffer ({buffer.duration_s:.4f} s) shorter than one {cfg.window_ms} ms window")
    x = buffer.samples
    freqs, doms, tots = [], [], []
    for s in range(0, n, _CHUNK):
        fr = _frames(x, win, hop, s, min(_CHUNK, n - s))
        f, d, t = analyze_frames(fr, sr, cfg)
        freqs.append(f)
        doms.append(d)
        tots.append(t)
    freqs = np.concatenate(freqs)
    doms = np.concatenate(doms)
    tots = np.concatenate(tots)
    times = np.arange(n) * hop / sr
    frames = tuple(
        SpectralFrame(i, float(times[i]), float(freqs[i]), float(doms[i]), float(tots[i]))
        for i in range(n)
    )
    for arr in (times, freqs, doms):
        arr.setflags(write=False)
    return DominantTrack(frames, cfg, buffer.duration_s, times, freqs, doms)


def _iter_power(buffer: AudioBuffer, cfg: WindowConfig, first: int = 0, last: int | None = None):
    sr = buffer.sample_rate_hz
    cfg.validate_for(sr)
    win, hop = cfg.window_samples(sr), cfg.hop_samples(sr)
    n = frame_count(len(buffer), win, hop)
    last = n if last is None else min(last, n)
    w = hann(win)
    for s in range(first, last, _CHUNK):
        count = min(_CHUNK, last - s)
        yield s, _power_spectrum(_frames(buffer.samples, win, hop, s, count), w, cfg.fft_size)


def _check_band(buffer: AudioBuffer, f_lo: float, f_hi: float) -> None:
    if not 0 <= f_lo < f_hi <= buffer.sample_rate_hz / 2:
        raise ValueError(f"invalid band [{f_lo}, {f_hi}]")


def band_energy_profile(buffer: AudioBuffer, cfg: WindowConfig, f_lo: float, f_hi: float):
    """Per-window energy inside [f_lo, f_hi] as an (n, 2) array of (time_s, energy)."""
    _check_band(buffer, f_lo, f_hi)
    sr = buffer.sample_rate_hz
    band = _band_slice(cfg.fft_size, sr, f_lo, f_hi)
    hop = cfg.hop_samples(sr)
    rows = []
    for s, pw in _iter_power(buffer, cfg):
        e = np.sum(pw[:, band], axis=1)
        t = (s + np.arange(len(e))) * hop / sr
        rows.append(np.column_stack([t, e]))
    if not rows:
        return np.empty((0, 2))
    return np.vstack(rows)


def mean_spectrum(buffer: AudioBuffer, cfg: WindowConfig, t0_s: float, t1_s: float,
                  f_lo: float | None = None, f_hi: float | None = None):
    """Mean per-bin energy over windows whose start lies in [t0_s, t1_s).

    Returns an (n_bins, 2) array of (freq_hz, mean_energy) restricted to the
    band (search band by default).
    """
    if not 0 <= t0_s < t1_s <= buffer.duration_s + 1e-9:
        raise ValueError(f"empty or invalid time range [{t0_s}, {t1_s})")
    lo, hi = cfg.search_band_hz if f_lo is None else (f_lo, f_hi)
    _check_band(buffer, lo, hi)
    sr = buffer.sample_rate_hz
    hop = cfg.hop_samples(sr)
    first = int(math.ceil(t0_s * sr / hop - 1e-9))
    last = int(math.ceil(t1_s * sr / hop - 1e-9))
    band = _band_slice(cfg.fft_size, sr, lo, hi)
    total = None
    count = 0
    for _, pw in _iter_power(buffer, cfg, first, last):
        part = np.sum(pw[:, band], axis=0)
        total = part if total is None else total + part
        count += pw.shape[0]
    if count == 0:
        raise ValueError(f"no analysis windows start in [{t0_s}, {t1_s})")
    freqs = np.arange(band.start, band.stop) * sr / cfg.fft_size
    return np.column_stack([freqs, total / count])


def excess_energy(normal: np.ndarray, anomalous: np.ndarray) -> np.ndarray:
    """Per-bin max(anomalous - normal, 0) as (freq_hz, excess)."""
    if normal.shape != anomalous.shape or not np.allclose(normal[:, 0], anomalous[:, 0]):
        raise ValueError("spectra cover different bins")
    return np.column_stack([normal[:, 0], np.maximum(anomalous[:, 1] - normal[:, 1], 0.0)])


def export_spectrogram_csv(buffer: AudioBuffer, cfg: WindowConfig, path) -> int:
    """Write time_s,freq_hz,power_db rows for search-band bins; returns row count."""
    sr = buffer.sample_rate_hz
    hop = cfg.hop_samples(sr)
    band = _band_slice(cfg.fft_size, sr, *cfg.search_band_hz)
    freqs = np.arange(band.start, band.stop) * sr / cfg.fft_size
    rows = 0
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["time_s", "freq_hz", "power_db"])
        for s, pw in _iter_power(buffer, cfg):
            with np.errstate(divide="ignore"):
                db = np.maximum(10 * np.log10(pw[:, band]), FLOOR_DB)
            for j in range(db.shape[0]):
                t = (s + j) * hop / sr
                out.writerows(
                    (f"{t:.6f}", f"{f:.4f}", f"{p:.3f}") for f, p in zip(freqs, db[j])
                )
                rows += len(freqs)
    return rows
