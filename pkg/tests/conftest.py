import numpy as np
import pytest

from syncsteg.audio_io import AudioBuffer

SR = 44100


def tone(freq_hz, duration_s=1.0, amp=1.0, sr=SR, phase=0.0):
    n = int(round(duration_s * sr))
    t = np.arange(n) / sr
    return AudioBuffer(amp * np.sin(2 * np.pi * freq_hz * t + phase), sr)


def silence(duration_s=1.0, sr=SR):
    return AudioBuffer(np.zeros(int(round(duration_s * sr))), sr)


def rms_db(x):
    return 10 * np.log10(np.mean(np.asarray(x) ** 2))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for line in sorted(results, key=lambda s: int(s.split()[1][2:])):
            terminalreporter.write_line(line)
