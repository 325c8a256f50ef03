"""Synthetic EEG with a known class-separating spectral signature.

Every recording carries band-limited Gaussian noise plus a continuous
oscillation at the centre of the signature band.  During the 10 s task
period of an MA trial the oscillation amplitude is multiplied by
``signature_gain``; BL trials leave it untouched, so a gain of 1 makes the
classes indistinguishable.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dsp import design_butterworth_bandpass, filter_zero_phase
from .eegio import Marker, Recording, SpectrogramSet
from .topomap import MONTAGE_CHANNELS

PRE_REST_S = 15.0
INSTRUCTION_S = 2.0
TASK_S = 10.0
REST_RANGE_S = (15.0, 17.0)
POST_REST_S = 15.0


@dataclass
class SynthConfig:
    n_subjects: int = 2
    n_channels: int = 4
    n_trials_per_class: int = 20
    fs_hz: float = 200.0
    noise_std: float = 10.0  # µV
    signature_band_hz: tuple[float, float] = (8.0, 12.0)
    signature_gain: float = 3.0
    signature_amp: float = 20.0  # µV, amplitude outside MA task periods
    seed: int = 0

    def validate(self) -> None:
        lo, hi = self.signature_band_hz
        if not 0 < lo < hi < self.fs_hz / 2:
            raise ValueError(f"signature_band_hz: {self.signature_band_hz} must lie in (0, {self.fs_hz / 2})")
        if self.n_trials_per_class < 1:
            raise ValueError("n_trials_per_class: must be >= 1")
        if self.n_subjects < 1:
            raise ValueError("n_subjects: must be >= 1")
        if not 1 <= self.n_channels <= len(MONTAGE_CHANNELS):
            raise ValueError(f"n_channels: must lie in [1, {len(MONTAGE_CHANNELS)}]")
        if self.signature_gain < 1:
            raise ValueError("signature_gain: must be >= 1")
        if self.noise_std < 0 or self.signature_amp < 0:
            raise ValueError("noise_std/signature_amp: must be >= 0")
        if self.fs_hz <= 100.0:
            raise ValueError("fs_hz: must exceed 100 Hz so the 0.5-50 Hz noise band fits")

    @property
    def signature_hz(self) -> float:
        return 0.5 * (self.signature_band_hz[0] + self.signature_band_hz[1])


def _subject(cfg: SynthConfig, index: int, rng: np.random.Generator) -> Recording:
    fs = cfg.fs_hz
    labels = np.array(["MA"] * cfg.n_trials_per_class + ["BL"] * cfg.n_trials_per_class)
    labels = labels[rng.permutation(len(labels))]
    onsets = []
    t = PRE_REST_S
    for _ in labels:
        t += INSTRUCTION_S
        onsets.append(t)
        t += TASK_S + rng.uniform(*REST_RANGE_S)
    n = int(round((t + POST_REST_S) * fs))
    names = list(MONTAGE_CHANNELS[: cfg.n_channels])

    noise = rng.standard_normal((len(names), n))
    band = design_butterworth_bandpass(3, 0.5, 50.0, fs)
    noise = filter_zero_phase(noise, band, axis=1)
    noise *= cfg.noise_std / noise.std(axis=1, keepdims=True).clip(min=1e-12)

    envelope = np.ones(n)
    for onset, lab in zip(onsets, labels):
        if lab == "MA":
            a = int(round(onset * fs))
            envelope[a : a + int(round(TASK_S * fs))] = cfg.signature_gain
    times = np.arange(n) / fs
    phases = rng.uniform(0, 2 * np.pi, size=(len(names), 1))
    osc = cfg.signature_amp * np.sin(2 * np.pi * cfg.signature_hz * times[None, :] + phases)
    data = noise + osc * envelope[None, :]
    markers = [Marker(float(o), str(lab)) for o, lab in zip(onsets, labels)]
    return Recording(fs, names, data, markers, f"S{index + 1:02d}")


def generate(cfg: SynthConfig | None = None) -> list[Recording]:
    cfg = cfg or SynthConfig()
    cfg.validate()
    children = np.random.SeedSequence(cfg.seed).spawn(cfg.n_subjects)
    return [_subject(cfg, i, np.random.default_rng(ss)) for i, ss in enumerate(children)]


def band_power_scores(ds: SpectrogramSet, band_hz: tuple[float, float], t_min_s: float = 0.5) -> np.ndarray:
    """Mean image value over the band rows and the columns at or after ``t_min_s``.

    Images are assumed to span ``ds.freq_range_hz`` x ``ds.time_range_s`` uniformly.
    """
    h, w = ds.grid
    freqs = np.linspace(*ds.freq_range_hz, h)
    times = np.linspace(*ds.time_range_s, w)
    rows = (freqs >= band_hz[0]) & (freqs <= band_hz[1])
    cols = times >= t_min_s
    return ds.images[:, rows][:, :, cols].mean(axis=(1, 2))


def band_power_oracle(ds: SpectrogramSet, band_hz: tuple[float, float], gain: float) -> np.ndarray:
    """Predict MA (1) where the band's post-onset ERSP exceeds half the expected elevation in dB."""
    threshold_db = 10.0 * np.log10(gain)
    return (band_power_scores(ds, band_hz) > threshold_db).astype(np.int64)
