"""Forensic checks over extracted bytes and the consolidated report."""

from __future__ import annotations

import base64
import binascii
import csv
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio_io import AudioBuffer
from .payload import decode_events
from .protocol import PAYLOAD_LEN, SYNC_LEN, SYNC_PATTERN, ProtocolConfig, freq_to_byte
from .spectral import WindowConfig, band_energy_profile, dominant_track, excess_energy, mean_spectrum
from .sync_detect import scan

ENTROPY_THRESHOLD = 0.2
MIN_SEGMENT_LEN = 16
ENERGY_BAND_HZ = (2000.0, 4000.0)
CONCENTRATION_BAND_HZ = (3000.0, 3500.0)

# name -> [(offset, signature bytes), ...]; every part must match
DEFAULT_MAGIC = (
    ("PNG", ((0, bytes.fromhex("89504E470D0A1A0A")),)),
    ("ZIP", ((0, b"PK\x03\x04"),)),
    ("WAV", ((0, b"RIFF"), (8, b"WAVE"))),
    ("MP4", ((4, b"ftyp"),)),
    ("GZIP", ((0, b"\x1f\x8b"),)),
    ("PDF", ((0, b"%PDF"),)),
    ("JPEG", ((0, b"\xff\xd8\xff"),)),
)


def byte_entropy_bits(data: bytes) -> float:
    if len(data) == 0:
        raise ValueError("entropy of an empty byte sequence is undefined")
    n = len(data)
    h = 0.0
    # sorted counts make the float sum independent of byte order
    for c in sorted(Counter(data).values()):
        p = c / n
        h -= p * math.log2(p)
    return max(h, 0.0)


def byte_entropy_norm(data: bytes) -> float:
    """Shannon entropy of the byte histogram divided by 8 bits."""
    return min(byte_entropy_bits(data) / 8.0, 1.0)


@dataclass(frozen=True)
class EntropySegment:
    start: int
    stop: int
    t0_s: float
    t1_s: float
    entropy_norm: float

    @property
    def entropy_bits(self) -> float:
        return self.entropy_norm * 8.0


@dataclass(frozen=True)
class EntropyProfile:
    segments: tuple
    threshold: float = ENTROPY_THRESHOLD

    @property
    def flagged(self) -> list[int]:
        return [i for i, s in enumerate(self.segments) if s.entropy_norm < self.threshold]

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "segments": [
                {"t0_s": round(s.t0_s, 6), "t1_s": round(s.t1_s, 6),
                 "entropy_norm": round(s.entropy_norm, 6), "entropy_bits": round(s.entropy_bits, 6)}
                for s in self.segments
            ],
            "flagged": self.flagged,
        }


def entropy_profile(data: bytes, segment_len: int = 256, threshold: float = ENTROPY_THRESHOLD,
                    byte_times=None, byte_duration_s: float = 0.025) -> EntropyProfile:
    """Normalized entropy over disjoint consecutive segments.

    A trailing partial segment is kept when it holds at least half a segment.
    ``byte_times`` (one start time per byte) sets segment times; otherwise byte
    ``i`` is taken to start at ``i * byte_duration_s``.
    """
    if segment_len < MIN_SEGMENT_LEN:
        raise ValueError(f"segment_len must be >= {MIN_SEGMENT_LEN}")
    data = bytes(data)
    if byte_times is not None and len(byte_times) != len(data):
        raise ValueError("byte_times must match data length")
    segs = []
    for start in range(0, len(data), segment_len):
        stop = min(start + segment_len, len(data))
        if stop - start < segment_len and stop - start < segment_len / 2:
            break
        if byte_times is None:
            t0, t1 = start * byte_duration_s, stop * byte_duration_s
        else:
            t0, t1 = float(byte_times[start]), float(byte_times[stop - 1]) + byte_duration_s
        segs.append(EntropySegment(start, stop, t0, t1, byte_entropy_norm(data[start:stop])))
    return EntropyProfile(tuple(segs), threshold)


def load_magic_table(path) -> tuple:
    """JSON list of ``{"name": str, "signature": [[offset, hex], ...]}``."""
    entries = json.loads(Path(path).read_text())
    return tuple(
        (e["name"], tuple((int(off), bytes.fromhex(sig)) for off, sig in e["signature"]))
        for e in entries
    )


def magic_match(data: bytes, table=DEFAULT_MAGIC) -> str | None:
    data = bytes(data)
    for name, parts in table:
        if all(data[off:off + len(sig)] == sig for off, sig in parts):
            return name
    return None


_TEXT_EXTRA = {0x09, 0x0A, 0x0D}


def text_plausibility(data: bytes) -> dict:
    data = bytes(data)
    if not data:
        raise ValueError("text plausibility needs at least one byte")
    printable = sum(1 for b in data if 0x20 <= b <= 0x7E or b in _TEXT_EXTRA)
    try:
        data.decode("utf-8", errors="strict")
        utf8 = True
    except UnicodeDecodeError:
        utf8 = False
    return {
        "ascii_printable_ratio": printable / len(data),
        "utf8_valid": utf8,
        "base64_decodable": _is_base64(data),
    }


def _is_base64(data: bytes) -> bool:
    s = b"".join(data.split())
    if not s or len(s) % 4:
        return False
    try:
        base64.b64decode(s, validate=True)
    except (binascii.Error, ValueError):
        return False
    # validate=True still accepts non-canonical trailing bits; demand a clean round trip
    return base64.b64encode(base64.b64decode(s)) == s


def alignment_check(data: bytes) -> dict:
    data = bytes(data)
    if not data:
        raise ValueError("alignment check needs at least one byte")
    aligned = len(data) % 32 == 0
    groups = [data[i:i + 32] for i in range(0, len(data), 32)]
    terminated = aligned and all(g[-1] in (0x80, 0xFF) for g in groups)
    return {"aligned_32": aligned, "terminator_80": terminated}


@dataclass(frozen=True)
class EnergyComparison:
    normal_range_s: tuple
    anomalous_range_s: tuple
    band_hz: tuple
    freqs_hz: np.ndarray
    normal: np.ndarray
    anomalous: np.ndarray
    excess: np.ndarray

    @property
    def peak_excess_freq_hz(self) -> float:
        return float(self.freqs_hz[int(np.argmax(self.excess))])

    def normal_mean(self, lo: float, hi: float) -> float:
        sel = (self.freqs_hz >= lo) & (self.freqs_hz <= hi)
        return float(np.mean(self.normal[sel]))

    def peak_excess_db_over_normal(self, lo: float = CONCENTRATION_BAND_HZ[0],
                                   hi: float = CONCENTRATION_BAND_HZ[1]) -> float:
        peak = float(np.max(self.excess))
        base = self.normal_mean(lo, hi)
        if peak <= 0:
            return -math.inf
        if base <= 0:
            return math.inf
        return 10 * math.log10(peak / base)

    def to_dict(self, include_spectra: bool = True) -> dict:
        d = {
            "normal_range_s": [round(x, 6) for x in self.normal_range_s],
            "anomalous_range_s": [round(x, 6) for x in self.anomalous_range_s],
            "band_hz": list(self.band_hz),
            "peak_excess_freq_hz": round(self.peak_excess_freq_hz, 4),
            "peak_excess_db_over_normal": _finite_or_none(self.peak_excess_db_over_normal(), 3),
        }
        if include_spectra:
            d["freqs_hz"] = [round(float(f), 4) for f in self.freqs_hz]
            d["normal_energy"] = [float(f"{v:.6e}") for v in self.normal]
            d["anomalous_energy"] = [float(f"{v:.6e}") for v in self.anomalous]
            d["excess_energy"] = [float(f"{v:.6e}") for v in self.excess]
        return d

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["freq_hz", "normal_energy", "anomalous_energy", "excess"])
            for row in zip(self.freqs_hz, self.normal, self.anomalous, self.excess):
                out.writerow([f"{row[0]:.4f}"] + [f"{v:.6e}" for v in row[1:]])


def _finite_or_none(x: float, digits: int):
    return round(x, digits) if math.isfinite(x) else None


def compare_energy(audio: AudioBuffer, wcfg: WindowConfig, normal_s, anomalous_s,
                   band_hz=ENERGY_BAND_HZ) -> EnergyComparison:
    normal = mean_spectrum(audio, wcfg, *normal_s, *band_hz)
    anomalous = mean_spectrum(audio, wcfg, *anomalous_s, *band_hz)
    excess = excess_energy(normal, anomalous)
    return EnergyComparison(tuple(normal_s), tuple(anomalous_s), tuple(band_hz),
                            normal[:, 0], normal[:, 1], anomalous[:, 1], excess[:, 1])


@dataclass
class ReportConfig:
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)
    window: WindowConfig = field(default_factory=WindowConfig)
    normal_s: tuple | None = None
    anomalous_s: tuple | None = None
    energy_band_hz: tuple = ENERGY_BAND_HZ
    # one message is 40 bytes, so the 256-byte stream default would see nothing
    entropy_segment_len: int = 32
    entropy_threshold: float = ENTROPY_THRESHOLD
    magic_table: tuple = DEFAULT_MAGIC


STAGES = ("track", "detection", "decoding", "entropy", "forensics", "energy")


@dataclass
class ForensicReport:
    duration_s: float
    detections: list = field(default_factory=list)
    messages: list = field(default_factory=list)
    decode_failures: list = field(default_factory=list)
    entropy: EntropyProfile | None = None
    magic: str | None = None
    text: dict | None = None
    alignment: dict | None = None
    energy: EnergyComparison | None = None
    stages: dict = field(default_factory=dict)
    track: object = field(default=None, repr=False)

    @property
    def extracted_bytes(self) -> bytes:
        return b"".join(SYNC_PATTERN + m.raw_payload for m in self.messages)

    def to_dict(self) -> dict:
        return {
            "duration_s": round(self.duration_s, 6),
            "stages": {k: self.stages.get(k, "skipped") for k in STAGES},
            "detections": [d.to_dict() for d in self.detections],
            "messages": [m.to_dict() for m in self.messages],
            "decode_failures": [
                {"start_time_s": round(ev.start_time_s, 6), "error": str(err)} for ev, err in self.decode_failures
            ],
            "extracted_hex": self.extracted_bytes.hex(),
            "entropy": None if self.entropy is None else self.entropy.to_dict(),
            "magic": self.magic,
            "text": self.text,
            "alignment": self.alignment,
            "energy": None if self.energy is None else self.energy.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, allow_nan=False)


def full_report(audio: AudioBuffer, rcfg: ReportConfig | None = None) -> ForensicReport:
    """Run every analysis stage in order; a failing stage is recorded, not raised."""
    rcfg = rcfg or ReportConfig()
    cfg, wcfg = rcfg.protocol, rcfg.window
    rep = ForensicReport(duration_s=audio.duration_s)

    def stage(name, fn):
        try:
            fn()
        except (ValueError, ArithmeticError) as exc:
            rep.stages[name] = f"error: {exc}"
        else:
            rep.stages[name] = "ok"

    def do_track():
        rep.track = dominant_track(audio, wcfg)

    def do_detect():
        if rep.track is None:
            raise ValueError("no dominant track")
        rep.detections = scan(rep.track, audio, cfg)

    def do_decode():
        rep.messages, rep.decode_failures = decode_events(audio, rep.detections, cfg, wcfg)

    def do_entropy():
        data = rep.extracted_bytes
        times = []
        for m in rep.messages:
            times += [m.sync.start_time_s + k * cfg.symbol_s for k in range(SYNC_LEN + PAYLOAD_LEN)]
        rep.entropy = entropy_profile(data, rcfg.entropy_segment_len, rcfg.entropy_threshold,
                                      byte_times=times, byte_duration_s=cfg.symbol_s)

    def do_forensics():
        data = rep.extracted_bytes
        if not data:
            return
        rep.magic = magic_match(data, rcfg.magic_table)
        rep.text = text_plausibility(data)
        rep.alignment = alignment_check(b"".join(m.raw_payload for m in rep.messages))

    def do_energy():
        half = audio.duration_s / 2
        normal = rcfg.normal_s or (0.0, half)
        anomalous = rcfg.anomalous_s or (half, audio.duration_s)
        rep.energy = compare_energy(audio, wcfg, normal, anomalous, rcfg.energy_band_hz)

    for name, fn in zip(STAGES, (do_track, do_detect, do_decode, do_entropy, do_forensics, do_energy)):
        stage(name, fn)
    return rep


DEFAULT_FEATURE_BANDS = ((2000.0, 2500.0), (2500.0, 3000.0), (3000.0, 3500.0), (3500.0, 4000.0))
LOCAL_ENTROPY_FRAMES = 16


def feature_columns(bands=DEFAULT_FEATURE_BANDS) -> list[str]:
    return (["time_s", "dominant_freq_hz", "dominant_power_db"]
            + [f"energy_{int(lo)}_{int(hi)}" for lo, hi in bands]
            + ["local_entropy"])


def feature_matrix(audio: AudioBuffer, wcfg: WindowConfig = WindowConfig(),
                   cfg: ProtocolConfig = ProtocolConfig(), bands=DEFAULT_FEATURE_BANDS) -> np.ndarray:
    """Per-window features (rows = windows, columns = :func:`feature_columns`).

    ``local_entropy`` is the normalized entropy of the bytes quantized from the
    dominant frequencies of the trailing ``LOCAL_ENTROPY_FRAMES`` non-silent
    windows (NaN when there are none).
    """
    track = dominant_track(audio, wcfg)
    cols = [track.times, track.freqs, track.powers_db]
    for lo, hi in bands:
        cols.append(band_energy_profile(audio, wcfg, lo, hi)[:, 1])
    fmap = cfg.byte_map
    qbytes = [None if math.isnan(f) else freq_to_byte(f, fmap) for f in track.freqs]
    ent = np.full(len(track), np.nan)
    for i in range(len(track)):
        local = [b for b in qbytes[max(0, i - LOCAL_ENTROPY_FRAMES + 1):i + 1] if b is not None]
        if local:
            ent[i] = byte_entropy_norm(bytes(local))
    cols.append(ent)
    return np.column_stack(cols)


def export_features(audio: AudioBuffer, path, wcfg: WindowConfig = WindowConfig(),
                    cfg: ProtocolConfig = ProtocolConfig(), bands=DEFAULT_FEATURE_BANDS) -> int:
    mat = feature_matrix(audio, wcfg, cfg, bands)
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(feature_columns(bands))
        for row in mat:
            out.writerow([repr(float(v)) for v in row])
    return len(mat)
