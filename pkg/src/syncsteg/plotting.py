"""Report figures rendered to files (Agg backend, no display needed)."""

from __future__ import annotations

from contextlib import contextmanager
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .spectral import FLOOR_DB, _iter_power, _band_slice  # noqa: E402

REPORT_RC = {
    "figure.figsize": (8.0, 4.5),
    "figure.dpi": 100,
    "savefig.dpi": 120,
    "font.size": 10,
    "axes.titlesize": 11,
    "axes.labelsize": 10,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "legend.frameon": False,
}


@contextmanager
def report_style():
    with plt.rc_context(REPORT_RC):
        yield


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_spectrogram(audio, wcfg, path, band_hz=(2000.0, 4000.0), detections=(), symbol_s=0.025):
    """Time-frequency power map over ``band_hz``; detected frames boxed in red."""
    sr = audio.sample_rate_hz
    band = _band_slice(wcfg.fft_size, sr, *band_hz)
    rows = [pw[:, band] for _, pw in _iter_power(audio, wcfg)]
    with np.errstate(divide="ignore"):
        db = np.maximum(10 * np.log10(np.vstack(rows)), FLOOR_DB) if rows else np.zeros((1, 1))
    finite = db[db > FLOOR_DB]
    vmin = max(float(np.percentile(finite, 5)), float(finite.max()) - 90) if finite.size else FLOOR_DB
    hop = wcfg.hop_samples(sr) / sr
    with report_style():
        fig, ax = plt.subplots()
        extent = (0, db.shape[0] * hop, band.start * sr / wcfg.fft_size, (band.stop - 1) * sr / wcfg.fft_size)
        im = ax.imshow(db.T, origin="lower", aspect="auto", extent=extent, cmap="viridis", vmin=vmin)
        for ev in detections:
            t0 = ev.start_time_s
            ax.add_patch(plt.Rectangle((t0, band_hz[0]), 40 * symbol_s, band_hz[1] - band_hz[0],
                                       fill=False, ec="red", ls="--", lw=1.2))
        ax.set_xlabel("time (s)")
        ax.set_ylabel("frequency (Hz)")
        ax.set_title("Spectrogram")
        ax.grid(False)
        fig.colorbar(im, ax=ax, label="power (dB)")
        return _save(fig, path)


def plot_energy_comparison(energy, path):
    """Normal vs anomalous mean spectra with the excess shaded."""
    with report_style():
        fig, ax = plt.subplots()
        f = energy.freqs_hz
        n0, n1 = energy.normal_range_s
        a0, a1 = energy.anomalous_range_s
        ax.plot(f, energy.normal, color="0.5", lw=1, label=f"normal {n0:.1f}-{n1:.1f} s")
        ax.plot(f, energy.anomalous, color="tab:blue", lw=1, label=f"anomalous {a0:.1f}-{a1:.1f} s")
        ax.fill_between(f, energy.normal, energy.normal + energy.excess, color="gold", alpha=0.5,
                        label="excess")
        ax.axvline(energy.peak_excess_freq_hz, color="red", ls=":", lw=1)
        ax.set_xlabel("frequency (Hz)")
        ax.set_ylabel("mean energy")
        ax.set_title(f"Energy comparison, peak excess at {energy.peak_excess_freq_hz:.0f} Hz")
        ax.legend()
        return _save(fig, path)


def plot_entropy(profile, path):
    with report_style():
        fig, ax = plt.subplots()
        segs = profile.segments
        vals = [s.entropy_norm for s in segs]
        flagged = set(profile.flagged)
        colors = ["goldenrod" if i in flagged else "steelblue" for i in range(len(segs))]
        ax.bar(range(len(segs)), vals, color=colors)
        ax.axhline(profile.threshold, color="red", ls="--", lw=1, label=f"threshold {profile.threshold}")
        ax.set_xticks(range(len(segs)), [f"{s.t0_s:.2f}-{s.t1_s:.2f}" for s in segs], rotation=30)
        ax.set_ylim(0, 1)
        ax.set_xlabel("segment (s)")
        ax.set_ylabel("normalized entropy")
        ax.set_title("Byte entropy per segment")
        ax.legend()
        return _save(fig, path)


def plot_dominant_track(track, path, detections=(), protocol=None):
    with report_style():
        fig, ax = plt.subplots()
        ax.plot(track.times, track.freqs, ".", ms=2, color="tab:blue")
        if protocol is not None:
            for f in (protocol.ff_freq_hz, protocol.sync_terminator_hz):
                ax.axhspan(f - protocol.tolerance_hz, f + protocol.tolerance_hz, color="orange", alpha=0.3)
        for ev in detections:
            ax.axvline(ev.start_time_s, color="red", lw=1)
        ax.set_xlabel("time (s)")
        ax.set_ylabel("dominant frequency (Hz)")
        ax.set_title("Dominant frequency track")
        return _save(fig, path)


def render_report(report, audio, wcfg, out_dir, protocol=None) -> list[Path]:
    """Write every figure the report supports into ``out_dir``; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [plot_spectrogram(audio, wcfg, out / "spectrogram.png", detections=report.detections,
                              symbol_s=(protocol.symbol_s if protocol else 0.025))]
    if report.track is not None:
        paths.append(plot_dominant_track(report.track, out / "dominant_track.png", report.detections, protocol))
    if report.energy is not None:
        paths.append(plot_energy_comparison(report.energy, out / "energy_comparison.png"))
    if report.entropy is not None and report.entropy.segments:
        paths.append(plot_entropy(report.entropy, out / "entropy.png"))
    return paths
