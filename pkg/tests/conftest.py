import numpy as np
import pytest

from spectral_mind.eegio import Marker, Recording, SampleMeta, SpectrogramSet


def make_recording(n_channels=3, seconds=60.0, fs=200.0, onsets=(10.0, 30.0), seed=0):
    rng = np.random.default_rng(seed)
    data = rng.standard_normal((n_channels, int(seconds * fs))).astype(np.float32)
    labels = ["MA", "BL"]
    markers = [Marker(t, labels[i % 2]) for i, t in enumerate(onsets)]
    names = [f"C{i}" for i in range(n_channels)]
    return Recording(fs, names, data, markers, "S01")


def make_spectrogram_set(subjects=2, channels=2, epochs_per_label=5, grid=(4, 4), seed=0, signal=0.0):
    """Random images; MA images are shifted by ``signal`` so the classes separate."""
    rng = np.random.default_rng(seed)
    meta, images = [], []
    for s in range(subjects):
        for e in range(2 * epochs_per_label):
            label = "MA" if e % 2 == 0 else "BL"
            for c in range(channels):
                meta.append(SampleMeta(f"S{s + 1:02d}", f"C{c}", e, label))
                img = rng.standard_normal(grid) + (signal if label == "MA" else 0.0)
                images.append(img)
    return SpectrogramSet(np.array(images, dtype=np.float32), meta, (0.5, 50.0), (-1.5, 9.5))


@pytest.fixture
def recording():
    return make_recording()


# Median per-channel accuracy (%) of the reference study's channel table.
TABLE_IV = {
    "F7": 89.1, "AFF5h": 91.3, "F3": 91.7, "AFp1": 92.2, "AFp2": 88.1, "AFF6h": 89.3, "F4": 91.4, "F8": 88.8,
    "AFF1h": 93.3, "AFF2h": 91.3, "Cz": 89.7, "Pz": 90.5, "T7": 88.5, "C3": 86.9, "P7": 91.5, "P3": 92.3,
    "POO1": 92.6, "POO2": 89.1, "P4": 89.2, "P8": 91.4, "C4": 90.0, "T8": 91.4,
}


ACCEPTANCE_LINES: list[str] = []


def report_criterion(name: str, passed: bool, detail: str) -> bool:
    line = f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
