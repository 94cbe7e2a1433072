"""Detection and structural decoding of tone-coded sync-frame steganography in audio."""

__version__ = "0.1.0"

from .audio_io import AudioBuffer, bandpass, load_wav, peak_normalize, write_wav
from .embed import EmbedSpec, embed_message, generate_carrier, synth_symbol
from .protocol import ProtocolConfig, byte_to_freq, freq_to_byte, is_sync_symbols
from .spectral import WindowConfig, dominant_track
from .sync_detect import SyncEvent, detect, scan, symbolize
from .payload import GuidanceBlock, StegoMessage, decode_block, decode_message, extract_payload, run_fsm

__all__ = [
    "AudioBuffer", "bandpass", "load_wav", "peak_normalize", "write_wav",
    "EmbedSpec", "embed_message", "generate_carrier", "synth_symbol",
    "ProtocolConfig", "byte_to_freq", "freq_to_byte", "is_sync_symbols",
    "WindowConfig", "dominant_track",
    "SyncEvent", "detect", "scan", "symbolize",
    "GuidanceBlock", "StegoMessage", "decode_block", "decode_message", "extract_payload", "run_fsm",
]
