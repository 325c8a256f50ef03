"""Event-related spectral power images on a fixed time-frequency grid."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .eegio import EpochSet, SampleMeta, SpectrogramSet

EPS_REL = 1e-12
ZSCORE_STD_FLOOR = 1e-6


@dataclass
class ErspConfig:
    window_len_s: float = 1.0
    fft_len: int = 512
    hop_samples: int | None = None  # None: derived from the grid width, see default_hop()
    freq_low_hz: float = 0.5
    freq_high_hz: float = 50.0
    baseline_window_s: tuple[float, float] = (-1.0, 0.0)
    grid: tuple[int, int] = (224, 224)  # (frequency rows, time columns)
    zscore: bool = True

    def validate(self, fs: float) -> None:
        if round(self.window_len_s * fs) > self.fft_len:
            raise ValueError(
                f"window_len_s: {self.window_len_s} s at {fs} Hz exceeds fft_len {self.fft_len}"
            )
        if round(self.window_len_s * fs) < 2:
            raise ValueError("window_len_s: window must span at least 2 samples")
        if not 0 <= self.freq_low_hz < self.freq_high_hz <= fs / 2:
            raise ValueError(f"freq_low_hz/freq_high_hz: need low < high <= {fs / 2}")
        if min(self.grid) < 2:
            raise ValueError(f"grid: both dimensions must be >= 2, got {self.grid}")
        if self.hop_samples is not None and self.hop_samples < 1:
            raise ValueError("hop_samples: must be >= 1")


@dataclass
class Spectrogram:
    values: np.ndarray  # [n_freqs, n_frames]
    freq_axis_hz: np.ndarray
    time_axis_s: np.ndarray


def default_hop(n_samples: int, win: int, n_frames_wanted: int) -> int:
    """Largest hop that still yields at least ``n_frames_wanted`` frames (minimum 1)."""
    span = n_samples - win
    if n_frames_wanted <= 1 or span <= 0:
        return max(span, 1)
    return max(span // (n_frames_wanted - 1), 1)


def _window_params(n_samples: int, fs: float, cfg: ErspConfig, t0: float) -> tuple[int, int]:
    win = int(round(cfg.window_len_s * fs))
    if cfg.hop_samples:
        return win, cfg.hop_samples
    hop = default_hop(n_samples, win, cfg.grid[1])
    # coarse grids: shrink the hop until some frame lands in the baseline window
    while hop > 1:
        n_frames = (n_samples - win) // hop + 1
        centers = t0 + (np.arange(max(n_frames, 0)) * hop + win / 2) / fs
        if baseline_frames(centers, cfg.window_len_s, *cfg.baseline_window_s).any():
            break
        hop -= 1
    return win, hop


def stft(x, fs: float, cfg: ErspConfig, t0: float = 0.0):
    """Hann-windowed one-sided STFT along the last axis.

    Returns ``(spectrum[..., n_freqs, n_frames], freqs_hz, frame_centers_s)``;
    frame times are window centres relative to ``t0`` (the time of sample 0).
    """
    x = np.asarray(x, dtype=np.float64)
    win, hop = _window_params(x.shape[-1], fs, cfg, t0)
    if x.shape[-1] < win:
        raise ValueError(f"signal of {x.shape[-1]} samples is shorter than one window ({win})")
    frames = sliding_window_view(x, win, axis=-1)[..., ::hop, :]
    spec = np.fft.rfft(frames * np.hanning(win), n=cfg.fft_len, axis=-1)
    spec = np.swapaxes(spec, -1, -2)
    freqs = np.fft.rfftfreq(cfg.fft_len, 1.0 / fs)
    centers = t0 + (np.arange(frames.shape[-2]) * hop + win / 2) / fs
    return spec, freqs, centers


def baseline_frames(centers: np.ndarray, window_len_s: float, b_start: float, b_end: float) -> np.ndarray:
    """Frames centred inside (b_start, b_end) whose window does not run past b_end."""
    tol = 1e-9
    return (centers > b_start + tol) & (centers < b_end - tol) & (centers + window_len_s / 2 <= b_end + tol)


def _ersp_from_power(power, freqs, centers, cfg: ErspConfig):
    mask = baseline_frames(centers, cfg.window_len_s, *cfg.baseline_window_s)
    if not mask.any():
        raise ValueError(
            f"no STFT frame centres fall inside the baseline window {cfg.baseline_window_s} s "
            f"with a {cfg.window_len_s} s window"
        )
    rows = (freqs >= cfg.freq_low_hz) & (freqs <= cfg.freq_high_hz)
    power = power[..., rows, :]
    eps = EPS_REL * power.max(axis=(-2, -1), keepdims=True)
    base = power[..., mask].mean(axis=-1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        values = 10.0 * np.log10((power + eps) / (base + eps))
    # all-zero input: eps is 0 and the ratio is 0/0; no change relative to baseline
    return np.where(np.isfinite(values), values, 0.0), freqs[rows]


def ersp_image(x, fs: float, cfg: ErspConfig | None = None, t0: float = -2.0) -> Spectrogram:
    """Baseline-normalised power in dB for one epoch/channel; ``t0`` is the time of sample 0."""
    cfg = cfg or ErspConfig()
    cfg.validate(fs)
    spec, freqs, centers = stft(x, fs, cfg, t0)
    values, f = _ersp_from_power(np.abs(spec) ** 2, freqs, centers, cfg)
    return Spectrogram(values, f, centers)


def resample_grid(spec: Spectrogram, h: int, w: int) -> np.ndarray:
    """Bilinear interpolation onto a uniform h x w grid over the spectrogram's axis ranges."""
    v = np.asarray(spec.values, dtype=np.float64)
    if v.shape[-2] < 2 or v.shape[-1] < 2:
        raise ValueError(f"degenerate axis: spectrogram shape {v.shape[-2:]} needs >= 2 rows and columns")
    if h < 2 or w < 2:
        raise ValueError("target grid must be at least 2 x 2")
    fa = np.asarray(spec.freq_axis_hz, dtype=np.float64)
    ta = np.asarray(spec.time_axis_s, dtype=np.float64)
    out = _interp_axis(v, fa, np.linspace(fa[0], fa[-1], h), axis=-2)
    return _interp_axis(out, ta, np.linspace(ta[0], ta[-1], w), axis=-1)


def _interp_axis(v: np.ndarray, src: np.ndarray, dst: np.ndarray, axis: int) -> np.ndarray:
    idx = np.clip(np.searchsorted(src, dst, side="right") - 1, 0, len(src) - 2)
    frac = np.clip((dst - src[idx]) / (src[idx + 1] - src[idx]), 0.0, 1.0)
    lo = np.take(v, idx, axis=axis)
    hi = np.take(v, idx + 1, axis=axis)
    shape = [1] * v.ndim
    shape[axis] = len(dst)
    frac = frac.reshape(shape)
    return lo * (1.0 - frac) + hi * frac


def zscore(images: np.ndarray) -> np.ndarray:
    mean = images.mean(axis=(-2, -1), keepdims=True)
    std = np.maximum(images.std(axis=(-2, -1), keepdims=True), ZSCORE_STD_FLOOR)
    return (images - mean) / std


def build_dataset(epochs: EpochSet, cfg: ErspConfig | None = None) -> SpectrogramSet:
    """One image per (epoch, channel), epoch-major, resampled to ``cfg.grid``."""
    cfg = cfg or ErspConfig()
    fs = epochs.sample_rate_hz
    cfg.validate(fs)
    h, w = cfg.grid
    n_e, n_c = epochs.data.shape[:2]
    meta = [
        SampleMeta(epochs.subject_id, ch, e, epochs.labels[e])
        for e in range(n_e)
        for ch in epochs.channel_names
    ]
    images = np.empty((n_e * n_c, h, w), dtype=np.float32)
    freq_range = (cfg.freq_low_hz, cfg.freq_high_hz)
    time_range = (epochs.t_start_s, epochs.t_end_s)
    for e in range(n_e):
        spec, freqs, centers = stft(epochs.data[e].astype(np.float64), fs, cfg, epochs.t_start_s)
        values, f = _ersp_from_power(np.abs(spec) ** 2, freqs, centers, cfg)
        img = resample_grid(Spectrogram(values, f, centers), h, w)
        if cfg.zscore:
            img = zscore(img)
        images[e * n_c : (e + 1) * n_c] = img
        freq_range = (float(f[0]), float(f[-1]))
        time_range = (float(centers[0]), float(centers[-1]))
    return SpectrogramSet(images, meta, freq_range, time_range)
