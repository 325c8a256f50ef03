"""Preprocessing: Butterworth design, zero-phase filtering, decimation, epoching."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import signal as _sig

from .eegio import EpochSet, Recording


@dataclass(frozen=True)
class BiquadCascade:
    """Second-order sections ``(b0, b1, b2, a1, a2)`` with ``a0 == 1``."""

    sections: np.ndarray  # [n_sections, 5]
    order: int
    low_hz: float | None
    high_hz: float | None
    fs_hz: float
    kind: str = "bandpass"

    @property
    def sos(self) -> np.ndarray:
        """Sections in the ``[b0, b1, b2, 1, a1, a2]`` layout used by scipy."""
        s = np.asarray(self.sections, dtype=np.float64)
        return np.column_stack([s[:, :3], np.ones(len(s)), s[:, 3:]])

    def poles(self) -> np.ndarray:
        return np.concatenate([np.roots([1.0, a1, a2]) for a1, a2 in self.sections[:, 3:]])

    def response(self, freqs_hz) -> np.ndarray:
        """Complex frequency response evaluated directly from the section polynomials."""
        z1 = np.exp(-2j * np.pi * np.asarray(freqs_hz, dtype=np.float64) / self.fs_hz)
        z2 = z1 * z1
        h = np.ones_like(z1)
        for b0, b1, b2, a1, a2 in self.sections:
            h = h * (b0 + b1 * z1 + b2 * z2) / (1.0 + a1 * z1 + a2 * z2)
        return h

    @property
    def pad_length(self) -> int:
        return 3 * (2 * self.order + 1)


def _prewarp(f_hz: float, fs_hz: float) -> float:
    return 2.0 * fs_hz * math.tan(math.pi * f_hz / fs_hz)


def _analog_prototype(order: int) -> np.ndarray:
    k = np.arange(1, order + 1)
    return np.exp(1j * np.pi * (2 * k + order - 1) / (2 * order))


def _pair_poles(poles: np.ndarray) -> list[tuple[complex, complex]]:
    """Group digital poles into conjugate pairs; leftover real poles are paired together."""
    tol = 1e-10
    complex_upper = sorted((p for p in poles if p.imag > tol), key=lambda p: abs(p))
    real = sorted((p.real for p in poles if abs(p.imag) <= tol), key=abs)
    pairs = [(p, p.conjugate()) for p in complex_upper]
    while len(real) >= 2:
        pairs.append((real.pop(), real.pop()))
    if real:
        pairs.append((real.pop(), None))
    return pairs


def _design(kind: str, order: int, fs_hz: float, low_hz=None, high_hz=None) -> BiquadCascade:
    fs2 = 2.0 * fs_hz
    proto = _analog_prototype(order)
    if kind == "bandpass":
        wl, wh = _prewarp(low_hz, fs_hz), _prewarp(high_hz, fs_hz)
        bw, w0sq = wh - wl, wl * wh
        # s -> (s^2 + w0^2) / (bw s): each prototype pole yields two band-pass poles
        disc = np.sqrt((proto * bw) ** 2 - 4.0 * w0sq + 0j)
        apoles = np.concatenate([(proto * bw + disc) / 2.0, (proto * bw - disc) / 2.0])
        n_zeros_origin = order  # n zeros at s=0 map to z=+1, n at infinity to z=-1
        gain = bw**order * np.real(fs2**n_zeros_origin / np.prod(fs2 - apoles))
        zero_pair = (1.0, -1.0)
    else:  # lowpass
        wc = _prewarp(high_hz, fs_hz)
        apoles = proto * wc
        gain = wc**order * np.real(1.0 / np.prod(fs2 - apoles))
        zero_pair = (-1.0, -1.0)
    dpoles = (fs2 + apoles) / (fs2 - apoles)

    sections = []
    for p1, p2 in _pair_poles(dpoles):
        if p2 is None:  # first-order section (odd low-pass order)
            sections.append([1.0, -zero_pair[0], 0.0, -np.real(p1), 0.0])
            continue
        a1 = -np.real(p1 + p2)
        a2 = np.real(p1 * p2)
        z1, z2 = zero_pair
        sections.append([1.0, -(z1 + z2), z1 * z2, a1, a2])
    sections = np.array(sections, dtype=np.float64)
    sections[0, :3] *= gain
    return BiquadCascade(sections, order, low_hz, high_hz, fs_hz, kind)


def design_butterworth_bandpass(order: int, low_hz: float, high_hz: float, fs_hz: float) -> BiquadCascade:
    """Digital Butterworth band-pass (2*order poles) via the prewarped bilinear transform.

    Both band edges are prewarped, so the -3 dB points land exactly on
    ``low_hz`` and ``high_hz``.
    """
    if not (isinstance(order, (int, np.integer)) and order >= 1):
        raise ValueError(f"order must be a positive integer, got {order!r}")
    if not 0 < low_hz < high_hz < fs_hz / 2:
        raise ValueError(
            f"band edges must satisfy 0 < low < high < Nyquist ({fs_hz / 2} Hz); "
            f"got low={low_hz}, high={high_hz}"
        )
    return _design("bandpass", int(order), float(fs_hz), float(low_hz), float(high_hz))


def design_butterworth_lowpass(order: int, cutoff_hz: float, fs_hz: float) -> BiquadCascade:
    if not (isinstance(order, (int, np.integer)) and order >= 1):
        raise ValueError(f"order must be a positive integer, got {order!r}")
    if not 0 < cutoff_hz < fs_hz / 2:
        raise ValueError(f"cutoff must lie in (0, {fs_hz / 2}) Hz, got {cutoff_hz}")
    return _design("lowpass", int(order), float(fs_hz), None, float(cutoff_hz))


def _steady_state(sections: np.ndarray) -> np.ndarray:
    """Transposed-direct-form-II states for a unit step already at steady state."""
    zi = np.zeros((len(sections), 2))
    x = 1.0
    for i, (b0, b1, b2, a1, a2) in enumerate(sections):
        y = x * (b0 + b1 + b2) / (1.0 + a1 + a2)
        s2 = b2 * x - a2 * y
        zi[i] = (b1 * x - a1 * y + s2, s2)
        x = y
    return zi


def filter_zero_phase(x, filt: BiquadCascade, axis: int = -1) -> np.ndarray:
    """Forward-backward filtering with reflect padding; the magnitude response is |H|^2.

    Padding length is ``3 * (2 * order + 1)`` samples per side; each pass starts
    from the steady-state response to its first padded sample.
    """
    x = np.asarray(x, dtype=np.float64)
    x = np.moveaxis(x, axis, -1)
    pad = filt.pad_length
    if x.shape[-1] <= pad:
        raise ValueError(
            f"signal too short for edge padding: length {x.shape[-1]} <= pad {pad}"
        )
    sos = filt.sos
    zi0 = _steady_state(filt.sections)
    zi0 = zi0.reshape((len(zi0),) + (1,) * (x.ndim - 1) + (2,))

    def initial_state(first):
        return zi0 * np.asarray(first)[None, ..., None]

    padded = np.pad(x, [(0, 0)] * (x.ndim - 1) + [(pad, pad)], mode="reflect")
    y, _ = _sig.sosfilt(sos, padded, axis=-1, zi=initial_state(padded[..., 0]))
    y = y[..., ::-1]
    y, _ = _sig.sosfilt(sos, y, axis=-1, zi=initial_state(y[..., 0]))
    y = y[..., ::-1][..., pad:-pad]
    return np.ascontiguousarray(np.moveaxis(y, -1, axis))


def antialias_filter(fs_in: float, fs_out: float) -> BiquadCascade:
    return design_butterworth_lowpass(8, 0.4 * fs_out, fs_in)


def decimate(x, fs_in: float, fs_out: float, antialias: BiquadCascade | None = None, axis: int = -1) -> np.ndarray:
    ratio = fs_in / fs_out
    r = int(round(ratio))
    if r < 1 or abs(ratio - r) > 1e-9:
        raise ValueError(f"fs_in / fs_out must be an integer, got {fs_in}/{fs_out} = {ratio}")
    x = np.asarray(x, dtype=np.float64)
    if r == 1:
        return x.copy()
    if antialias is None:
        antialias = antialias_filter(fs_in, fs_out)
    y = filter_zero_phase(x, antialias, axis=axis)
    n_out = x.shape[axis] // r
    return np.ascontiguousarray(np.take(y, np.arange(n_out) * r, axis=axis))


def segment_epochs(rec: Recording, t_start_s: float = -2.0, t_end_s: float = 10.0) -> EpochSet:
    fs = rec.sample_rate_hz
    n_times = round((t_end_s - t_start_s) * fs)
    epochs = np.empty((len(rec.markers), rec.n_channels, n_times), dtype=np.float32)
    for i, m in enumerate(rec.markers):
        start = round((m.onset_s + t_start_s) * fs)
        if start < 0 or start + n_times > rec.n_samples:
            raise ValueError(
                f"marker {i} (onset {m.onset_s} s, {m.label}): window "
                f"[{m.onset_s + t_start_s:.3f}, {m.onset_s + t_end_s:.3f}] s exceeds the recording "
                f"[0, {rec.n_samples / fs:.3f}] s"
            )
        epochs[i] = rec.data[:, start : start + n_times]
    return EpochSet(fs, t_start_s, t_end_s, epochs, [m.label for m in rec.markers],
                    rec.subject_id, rec.channel_names)


def baseline_slice(t_start_s: float, n_times: int, fs: float, b_start_s: float, b_end_s: float) -> slice:
    """Sample indices whose times fall in the closed interval [b_start, b_end]."""
    lo = math.ceil((b_start_s - t_start_s) * fs - 1e-9)
    hi = math.floor((b_end_s - t_start_s) * fs + 1e-9)
    return slice(max(lo, 0), min(hi, n_times - 1) + 1)


def remove_baseline_mean(epochs: EpochSet, b_start_s: float = -1.0, b_end_s: float = 0.0) -> EpochSet:
    tol = 1e-9
    if not (epochs.t_start_s - tol <= b_start_s < b_end_s <= epochs.t_end_s + tol):
        raise ValueError(
            f"baseline window [{b_start_s}, {b_end_s}] s is outside the epoch window "
            f"[{epochs.t_start_s}, {epochs.t_end_s}] s"
        )
    data = epochs.data.astype(np.float64)
    sl = baseline_slice(epochs.t_start_s, data.shape[2], epochs.sample_rate_hz, b_start_s, b_end_s)
    if data.shape[0]:
        data -= data[:, :, sl].mean(axis=2, keepdims=True)
    return EpochSet(epochs.sample_rate_hz, epochs.t_start_s, epochs.t_end_s, data,
                    epochs.labels, epochs.subject_id, epochs.channel_names)


@dataclass
class PreprocessConfig:
    target_fs_hz: float = 200.0
    band_hz: tuple[float, float] = (0.5, 50.0)
    filter_order: int = 3
    epoch_window_s: tuple[float, float] = (-2.0, 10.0)
    baseline_window_s: tuple[float, float] = (-1.0, 0.0)
    # "decimate_first" follows the order the protocol lists; "filter_first" band-passes at the native rate
    chain_order: str = "decimate_first"

    def validate(self) -> None:
        if self.chain_order not in ("decimate_first", "filter_first"):
            raise ValueError(f"chain_order: unknown value {self.chain_order!r}")
        lo, hi = self.band_hz
        if not 0 < lo < hi < self.target_fs_hz / 2:
            raise ValueError(f"band_hz: {self.band_hz} must lie inside (0, {self.target_fs_hz / 2})")
        if self.filter_order < 1:
            raise ValueError("filter_order: must be >= 1")
        if not self.epoch_window_s[0] <= self.baseline_window_s[0] < self.baseline_window_s[1] <= self.epoch_window_s[1]:
            raise ValueError("baseline_window_s: must lie inside epoch_window_s")


def preprocess(rec: Recording, cfg: PreprocessConfig | None = None) -> EpochSet:
    """Downsample, band-pass, epoch and baseline-correct one recording."""
    cfg = cfg or PreprocessConfig()
    cfg.validate()
    data = rec.data.astype(np.float64)
    fs = rec.sample_rate_hz

    def bandpass(d, rate):
        return filter_zero_phase(d, design_butterworth_bandpass(cfg.filter_order, *cfg.band_hz, rate), axis=1)

    if cfg.chain_order == "filter_first":
        data = bandpass(data, fs)
    if fs != cfg.target_fs_hz:
        data = decimate(data, fs, cfg.target_fs_hz, axis=1)
        fs = cfg.target_fs_hz
    if cfg.chain_order == "decimate_first":
        data = bandpass(data, fs)

    filtered = Recording(fs, rec.channel_names, data, rec.markers, rec.subject_id)
    epochs = segment_epochs(filtered, *cfg.epoch_window_s)
    return remove_baseline_mean(epochs, *cfg.baseline_window_s)
