"""Sync-frame detection over a dominant-frequency track.

Stage 1 finds runs of FF-band frames followed closely by terminator-band
frames. Stage 2 re-measures the eight sync symbols directly from the audio at
1 ms offsets around each candidate and keeps the best-aligned passing offset.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .audio_io import AudioBuffer
from .embed import symbol_bounds
from .protocol import SYNC_LEN, ProtocolConfig, is_sync_symbols, sync_confidence
from .spectral import SILENCE_DB, DominantTrack, WindowConfig, _band_slice, dominant_track, hann, peak_estimate

SYMBOL_FLOOR_DB = -60.0
REFINE_STEP_MS = 1.0


@dataclass(frozen=True)
class SyncEvent:
    start_time_s: float
    symbol_freqs_hz: tuple
    confidence: float
    hop_index: int

    def to_dict(self) -> dict:
        return {
            "start_time_s": round(self.start_time_s, 6),
            "confidence": round(self.confidence, 6),
            "symbol_freqs_hz": [round(f, 4) for f in self.symbol_freqs_hz],
        }


def _spans(start_sample: int, n_symbols: int, cfg: ProtocolConfig, sr: int):
    return [symbol_bounds(start_sample, k, cfg.symbol_s, sr) for k in range(n_symbols)]


def measure_spans(x: np.ndarray, spans, sr: int, wcfg: WindowConfig = WindowConfig()):
    """Hann-windowed FFT peak per sample span.

    Returns ``(freqs, powers_db)``; spans whose peak is below the symbol power
    floor (or silent) get NaN frequency.
    """
    m = len(spans)
    if m == 0:
        return np.empty(0), np.empty(0)
    lengths = [b - a for a, b in spans]
    if max(lengths) > wcfg.fft_size:
        raise ValueError("symbol longer than fft_size")
    rows = np.zeros((m, wcfg.fft_size))
    wsum = np.empty(m)
    wsq = np.empty(m)
    for i, (a, b) in enumerate(spans):
        w = hann(b - a)
        rows[i, :b - a] = x[a:b] * w
        wsum[i] = w.sum()
        wsq[i] = np.sum(w ** 2)
    mag = np.abs(np.fft.rfft(rows, axis=1))
    band = _band_slice(wcfg.fft_size, sr, *wcfg.search_band_hz)
    freqs, power_db = peak_estimate(mag, band, sr, wcfg.fft_size, wsum, limits_hz=wcfg.search_band_hz)
    with np.errstate(divide="ignore"):
        total_db = 10 * np.log10(np.sum(mag[:, band] ** 2, axis=1) * 4.0 / (wcfg.fft_size * wsq))
    absent = ~(power_db >= SYMBOL_FLOOR_DB) | ~(total_db >= SILENCE_DB)
    freqs = np.where(absent, np.nan, freqs)
    power_db = np.where(~(total_db >= SILENCE_DB), -np.inf, power_db)
    return freqs, power_db


def symbolize(audio: AudioBuffer, start_time_s: float, n_symbols: int,
              cfg: ProtocolConfig = ProtocolConfig(), wcfg: WindowConfig = WindowConfig()) -> np.ndarray:
    """Measure ``n_symbols`` consecutive symbols; returns an (n, 2) array of (freq_hz, power_db)."""
    sr = audio.sample_rate_hz
    start = int(round(start_time_s * sr))
    spans = _spans(start, n_symbols, cfg, sr)
    if start < 0 or (spans and spans[-1][1] > len(audio)):
        raise ValueError(
            f"{n_symbols} symbols from {start_time_s:.4f} s exceed the {audio.duration_s:.4f} s buffer"
        )
    f, p = measure_spans(audio.samples, spans, sr, wcfg)
    return np.column_stack([f, p]) if n_symbols else np.empty((0, 2))


def _alignment_scores(x: np.ndarray, starts, freqs: np.ndarray, cfg: ProtocolConfig, sr: int) -> np.ndarray:
    """Mean rectangular-window tone amplitude per candidate start.

    ``freqs`` is (n_starts, 8), or (8,) when shared by every start. The score
    falls linearly with misalignment at every tone boundary, so it peaks
    sharply on the true symbol grid where the Hann-based frequency estimates
    are nearly flat.
    """
    starts = np.asarray(starts, dtype=np.int64)
    freqs = np.asarray(freqs, dtype=float)
    total = np.zeros(len(starts))
    if len(starts) == 0:
        return total
    lo = int(starts.min())
    for k in range(SYNC_LEN):
        a, b = symbol_bounds(0, k, cfg.symbol_s, sr)
        if freqs.ndim == 1:
            # shared tone: window sums are differences of one running sum
            seg = x[lo + a:int(starts.max()) + b]
            demod = seg * np.exp(-2j * np.pi * freqs[k] * np.arange(len(seg)) / sr)
            run = np.concatenate([[0.0], np.cumsum(demod)])
            amp = np.abs(run[starts - lo + (b - a)] - run[starts - lo])
        else:
            n = np.arange(b - a)
            seg = x[starts[:, None] + a + n[None, :]]
            phasor = np.exp(-2j * np.pi * freqs[:, k:k + 1] * n[None, :] / sr)
            amp = np.abs(np.sum(seg * phasor, axis=1))
        total += amp * 2 / (b - a)
    return total / SYNC_LEN


def _runs(mask: np.ndarray):
    padded = np.concatenate([[False], mask, [False]])
    edges = np.flatnonzero(padded[1:] != padded[:-1])
    return list(zip(edges[::2], edges[1::2] - 1))


def coarse_candidates(track: DominantTrack, cfg: ProtocolConfig) -> list[float]:
    """Estimated sync start times from FF-band runs followed by a terminator frame."""
    wc = track.config
    eps = cfg.tolerance_hz
    freqs = np.asarray(track.freqs)
    with np.errstate(invalid="ignore"):
        in_ff = np.abs(freqs - cfg.ff_freq_hz) <= eps
        in_term = np.abs(freqs - cfg.sync_terminator_hz) <= eps
    # windows guaranteed to fall wholly inside seven FF symbols
    min_run = max(1, int(math.floor((7 * cfg.symbol_ms - wc.window_ms) / wc.hop_ms + 1e-9)))
    lookahead = int(math.ceil(2 * cfg.symbol_ms / wc.hop_ms))
    half_win = wc.window_ms / 2000.0
    out = []
    for i0, i1 in _runs(in_ff):
        if i1 - i0 + 1 < min_run:
            continue
        after = np.flatnonzero(in_term[i1 + 1:i1 + 1 + lookahead])
        if len(after) == 0:
            continue
        j = i1 + 1 + int(after[0])
        boundary = (track.times[i1] + track.times[j]) / 2 + half_win
        out.append(boundary - 7 * cfg.symbol_s)
    return out


def refine(audio: AudioBuffer, t_est: float, cfg: ProtocolConfig,
           wcfg: WindowConfig = WindowConfig(), hop_s: float = 0.01):
    """Best passing sync alignment within ±symbol_ms of ``t_est``, or None."""
    sr = audio.sample_rate_hz
    x = audio.samples
    step = REFINE_STEP_MS / 1000.0
    k = int(round(cfg.symbol_s / step))
    frame_len = symbol_bounds(0, SYNC_LEN - 1, cfg.symbol_s, sr)[1]
    starts = []
    for d in range(-k, k + 1):
        s = int(round((t_est + d * step) * sr))
        if s >= 0 and s + frame_len <= len(x):
            starts.append(s)
    if not starts:
        return None
    spans = [sp for s in starts for sp in _spans(s, SYNC_LEN, cfg, sr)]
    freqs, _ = measure_spans(x, spans, sr, wcfg)
    freqs = freqs.reshape(len(starts), SYNC_LEN)
    passing = [i for i, fr in enumerate(freqs) if is_sync_symbols(fr, cfg)]
    if not passing:
        return None
    scores = _alignment_scores(x, [starts[i] for i in passing], freqs[passing], cfg, sr)
    i_best = passing[int(np.argmax(scores))]
    s, fr = starts[i_best], freqs[i_best]
    # sample-resolution polish inside one grid step, frequencies held fixed
    half = int(round(step * sr))
    fine = np.arange(max(0, s - half), min(len(x) - frame_len, s + half) + 1)
    s_fine = int(fine[int(np.argmax(_alignment_scores(x, fine, fr, cfg, sr)))])
    fr_fine, _ = measure_spans(x, _spans(s_fine, SYNC_LEN, cfg, sr), sr, wcfg)
    if is_sync_symbols(fr_fine, cfg):
        s, fr = s_fine, fr_fine
    t = s / sr
    return SyncEvent(t, tuple(float(f) for f in fr), sync_confidence(fr, cfg), int(round(t / hop_s)))


def scan(track: DominantTrack, audio: AudioBuffer, cfg: ProtocolConfig = ProtocolConfig()) -> list[SyncEvent]:
    wc = track.config
    if abs(track.source_duration_s - audio.duration_s) > 1.0 / audio.sample_rate_hz:
        raise ValueError("track and audio durations differ")
    if wc.hop_ms > cfg.symbol_ms / 2:
        raise ValueError("track hop must be at most half a symbol")
    found = []
    for t in coarse_candidates(track, cfg):
        ev = refine(audio, t, cfg, wc, wc.hop_ms / 1000.0)
        if ev is not None:
            found.append(ev)
    return dedupe(found, SYNC_LEN * cfg.symbol_s)


def dedupe(events, window_s: float) -> list[SyncEvent]:
    """Keep the most confident event among any within ``window_s`` of each other."""
    kept: list[SyncEvent] = []
    for ev in sorted(events, key=lambda e: (-e.confidence, e.start_time_s)):
        if all(abs(ev.start_time_s - k.start_time_s) >= window_s - 1e-9 for k in kept):
            kept.append(ev)
    return sorted(kept, key=lambda e: e.start_time_s)


def detect(audio: AudioBuffer, cfg: ProtocolConfig = ProtocolConfig(),
           wcfg: WindowConfig = WindowConfig()) -> list[SyncEvent]:
    """Dominant track + scan in one call."""
    if audio.duration_s * 1000 < wcfg.window_ms:
        return []
    return scan(dominant_track(audio, wcfg), audio, cfg)
