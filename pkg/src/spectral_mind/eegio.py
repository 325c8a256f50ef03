"""Containers for recordings, epochs and spectrogram datasets, plus their file formats.

Every container is written as::

    8-byte magic | uint32 LE header length | UTF-8 JSON header | float32 LE payload

The payload is the row-major data array; everything else lives in the header.
"""
from __future__ import annotations

import csv
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1
LABELS = ("BL", "MA")  # index 1 (MA) is the positive class

RECORDING_MAGIC = b"SMEEGR01"
EPOCHS_MAGIC = b"SMEEGP01"
SPECTRO_MAGIC = b"SMEEGS01"
NETWORK_MAGIC = b"SMEEGN01"

_PAYLOAD_DTYPE = np.dtype("<f4")


class FormatError(ValueError):
    """Raised for malformed containers or values violating container invariants."""


def label_index(label: str) -> int:
    try:
        return LABELS.index(label)
    except ValueError:
        raise FormatError(f"unknown label {label!r} (expected one of {LABELS})") from None


def _as_payload(data) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(data, dtype=np.float32))


@dataclass(frozen=True)
class Marker:
    onset_s: float
    label: str

    def __post_init__(self):
        if self.label not in LABELS:
            raise FormatError(f"unknown label {self.label!r}")
        if not self.onset_s >= 0:
            raise FormatError(f"marker out of range: onset_s={self.onset_s}")


@dataclass
class Recording:
    sample_rate_hz: float
    channel_names: list[str]
    data: np.ndarray  # [n_channels, n_samples], float32 µV
    markers: list[Marker] = field(default_factory=list)
    subject_id: str = ""

    def __post_init__(self):
        self.sample_rate_hz = float(self.sample_rate_hz)
        self.channel_names = list(self.channel_names)
        self.data = _as_payload(self.data)
        if not self.sample_rate_hz > 0:
            raise FormatError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        if self.data.ndim != 2:
            raise FormatError(f"data must be 2-D [channels x samples], got shape {self.data.shape}")
        if self.data.shape[0] != len(self.channel_names):
            raise FormatError(
                f"channel count mismatch: {len(self.channel_names)} names for "
                f"{self.data.shape[0]} data rows"
            )
        if len(set(self.channel_names)) != len(self.channel_names):
            raise FormatError("channel names must be unique")
        duration = self.n_samples / self.sample_rate_hz
        for i, m in enumerate(self.markers):
            if not 0 <= m.onset_s <= duration:
                raise FormatError(
                    f"marker out of range: markers[{i}].onset_s={m.onset_s} "
                    f"outside [0, {duration}]"
                )

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]


@dataclass
class EpochSet:
    sample_rate_hz: float
    t_start_s: float
    t_end_s: float
    data: np.ndarray  # [n_epochs, n_channels, n_times]
    labels: list[str]
    subject_id: str
    channel_names: list[str]

    def __post_init__(self):
        self.sample_rate_hz = float(self.sample_rate_hz)
        self.t_start_s = float(self.t_start_s)
        self.t_end_s = float(self.t_end_s)
        self.labels = list(self.labels)
        self.channel_names = list(self.channel_names)
        n_times = round((self.t_end_s - self.t_start_s) * self.sample_rate_hz)
        data = np.asarray(self.data)
        if data.size == 0 and data.ndim != 3:
            data = np.zeros((0, len(self.channel_names), n_times))
        self.data = _as_payload(data)
        if self.data.ndim != 3:
            raise FormatError(f"epoch data must be 3-D, got shape {self.data.shape}")
        if self.data.shape[2] != n_times:
            raise FormatError(f"n_times {self.data.shape[2]} != round(window * fs) = {n_times}")
        if self.data.shape[1] != len(self.channel_names):
            raise FormatError("channel count mismatch between data and channel_names")
        if len(self.labels) != self.data.shape[0]:
            raise FormatError(f"{len(self.labels)} labels for {self.data.shape[0]} epochs")
        for lab in self.labels:
            label_index(lab)

    @property
    def n_epochs(self) -> int:
        return self.data.shape[0]

    @property
    def times(self) -> np.ndarray:
        return self.t_start_s + np.arange(self.data.shape[2]) / self.sample_rate_hz


@dataclass(frozen=True)
class SampleMeta:
    subject_id: str
    channel_name: str
    epoch_index: int
    label: str


@dataclass
class SpectrogramSet:
    images: np.ndarray  # [n_samples, H, W]; rows are frequency, columns time
    meta: list[SampleMeta]
    freq_range_hz: tuple[float, float]
    time_range_s: tuple[float, float]

    def __post_init__(self):
        self.images = _as_payload(self.images)
        self.meta = list(self.meta)
        self.freq_range_hz = (float(self.freq_range_hz[0]), float(self.freq_range_hz[1]))
        self.time_range_s = (float(self.time_range_s[0]), float(self.time_range_s[1]))
        if self.images.ndim != 3:
            raise FormatError(f"images must be 3-D, got shape {self.images.shape}")
        if len(self.meta) != self.images.shape[0]:
            raise FormatError(f"{len(self.meta)} meta entries for {self.images.shape[0]} images")
        if not np.all(np.isfinite(self.images)):
            raise FormatError("spectrogram images contain non-finite values")

    def __len__(self) -> int:
        return self.images.shape[0]

    @property
    def grid(self) -> tuple[int, int]:
        return self.images.shape[1], self.images.shape[2]

    @property
    def labels(self) -> np.ndarray:
        return np.array([label_index(m.label) for m in self.meta], dtype=np.int64)

    def subset(self, indices) -> SpectrogramSet:
        indices = np.asarray(indices, dtype=np.int64)
        return SpectrogramSet(
            self.images[indices],
            [self.meta[i] for i in indices],
            self.freq_range_hz,
            self.time_range_s,
        )

    @classmethod
    def concatenate(cls, sets: list[SpectrogramSet]) -> SpectrogramSet:
        if not sets:
            raise ValueError("nothing to concatenate")
        first = sets[0]
        for s in sets[1:]:
            if s.grid != first.grid:
                raise FormatError(f"grid mismatch: {s.grid} vs {first.grid}")
        return cls(
            np.concatenate([s.images for s in sets], axis=0),
            [m for s in sets for m in s.meta],
            first.freq_range_hz,
            first.time_range_s,
        )


# -- container envelope -------------------------------------------------------


def write_container(path, magic: bytes, header: dict, payload: np.ndarray) -> None:
    payload = np.ascontiguousarray(payload, dtype=_PAYLOAD_DTYPE)
    header = dict(header, schema=SCHEMA_VERSION, payload_shape=list(payload.shape))
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(payload.tobytes(order="C"))


def read_container(path, magic: bytes) -> tuple[dict, np.ndarray]:
    raw = Path(path).read_bytes()
    if len(raw) < 12:
        raise FormatError(f"{path}: truncated file ({len(raw)} bytes) at offset 0")
    if raw[:8] != magic:
        raise FormatError(f"{path}: bad magic {raw[:8]!r} at offset 0, expected {magic!r}")
    (hlen,) = struct.unpack("<I", raw[8:12])
    if 12 + hlen > len(raw):
        raise FormatError(f"{path}: header length {hlen} at offset 8 exceeds file size")
    try:
        header = json.loads(raw[12 : 12 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: malformed JSON header at offset 12: {exc}") from None
    if header.get("schema") != SCHEMA_VERSION:
        raise FormatError(f"{path}: unsupported schema {header.get('schema')!r} (field 'schema')")
    shape = tuple(header.get("payload_shape", ()))
    expected = math.prod(shape) * _PAYLOAD_DTYPE.itemsize
    body = raw[12 + hlen :]
    if len(body) != expected:
        raise FormatError(
            f"{path}: payload at offset {12 + hlen} has {len(body)} bytes, "
            f"header field 'payload_shape'={list(shape)} requires {expected}"
        )
    payload = np.frombuffer(body, dtype=_PAYLOAD_DTYPE).reshape(shape).astype(np.float32)
    return header, payload


def _field(header: dict, name: str, path):
    try:
        return header[name]
    except KeyError:
        raise FormatError(f"{path}: missing header field {name!r}") from None


# -- recordings ----------------------------------------------------------------


def save_recording(rec: Recording, path) -> None:
    header = {
        "kind": "recording",
        "sample_rate_hz": rec.sample_rate_hz,
        "channel_names": rec.channel_names,
        "subject_id": rec.subject_id,
        "markers": [{"onset_s": m.onset_s, "label": m.label} for m in rec.markers],
    }
    write_container(path, RECORDING_MAGIC, header, rec.data)


def load_recording(path) -> Recording:
    header, data = read_container(path, RECORDING_MAGIC)
    names = _field(header, "channel_names", path)
    if data.ndim != 2 or data.shape[0] != len(names):
        raise FormatError(
            f"{path}: channel count mismatch: field 'channel_names' lists {len(names)}, "
            f"payload shape is {list(data.shape)}"
        )
    markers = []
    for i, m in enumerate(_field(header, "markers", path)):
        try:
            markers.append(Marker(float(m["onset_s"]), m["label"]))
        except FormatError as exc:
            raise FormatError(f"{path}: field 'markers[{i}]': {exc}") from None
    try:
        return Recording(
            _field(header, "sample_rate_hz", path),
            names,
            data,
            markers,
            _field(header, "subject_id", path),
        )
    except FormatError as exc:
        raise FormatError(f"{path}: {exc}") from None


# -- epochs --------------------------------------------------------------------


def save_epochs(epochs: EpochSet, path) -> None:
    header = {
        "kind": "epochs",
        "sample_rate_hz": epochs.sample_rate_hz,
        "t_start_s": epochs.t_start_s,
        "t_end_s": epochs.t_end_s,
        "labels": epochs.labels,
        "subject_id": epochs.subject_id,
        "channel_names": epochs.channel_names,
    }
    write_container(path, EPOCHS_MAGIC, header, epochs.data)


def load_epochs(path) -> EpochSet:
    header, data = read_container(path, EPOCHS_MAGIC)
    try:
        return EpochSet(
            _field(header, "sample_rate_hz", path),
            _field(header, "t_start_s", path),
            _field(header, "t_end_s", path),
            data,
            _field(header, "labels", path),
            _field(header, "subject_id", path),
            _field(header, "channel_names", path),
        )
    except FormatError as exc:
        raise FormatError(f"{path}: {exc}") from None


# -- spectrogram datasets ------------------------------------------------------


def save_spectrograms(ds: SpectrogramSet, path) -> None:
    header = {
        "kind": "spectrograms",
        "freq_range_hz": list(ds.freq_range_hz),
        "time_range_s": list(ds.time_range_s),
        "subject_ids": [m.subject_id for m in ds.meta],
        "channel_names": [m.channel_name for m in ds.meta],
        "epoch_indices": [m.epoch_index for m in ds.meta],
        "labels": [m.label for m in ds.meta],
    }
    write_container(path, SPECTRO_MAGIC, header, ds.images)


def load_spectrograms(path) -> SpectrogramSet:
    header, images = read_container(path, SPECTRO_MAGIC)
    cols = [_field(header, k, path) for k in ("subject_ids", "channel_names", "epoch_indices", "labels")]
    if len({len(c) for c in cols}) != 1:
        raise FormatError(f"{path}: per-sample metadata columns have different lengths")
    meta = [SampleMeta(s, c, int(e), lab) for s, c, e, lab in zip(*cols)]
    if images.ndim == 1 and images.size == 0:
        images = images.reshape(0, 0, 0)
    try:
        return SpectrogramSet(
            images, meta, tuple(_field(header, "freq_range_hz", path)),
            tuple(_field(header, "time_range_s", path)),
        )
    except FormatError as exc:
        raise FormatError(f"{path}: {exc}") from None


# -- CSV import ----------------------------------------------------------------


def _read_markers(marker_path) -> list[Marker]:
    markers = []
    with open(marker_path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or not "".join(row).strip():
                continue
            if len(row) != 2:
                raise FormatError(f"{marker_path}:{lineno}: expected 'onset_s,label', got {row}")
            onset, label = row[0].strip(), row[1].strip()
            try:
                onset_s = float(onset)
            except ValueError:
                if lineno == 1:  # header row
                    continue
                raise FormatError(f"{marker_path}:{lineno}: bad onset {onset!r}") from None
            if label not in LABELS:
                raise FormatError(f"{marker_path}:{lineno}: unknown label {label!r}")
            markers.append(Marker(onset_s, label))
    return markers


def import_csv(path, sample_rate_hz: float, marker_path=None, subject_id: str = "") -> Recording:
    """Build a Recording from a CSV with one column per channel and a header row.

    The marker file, if given, holds ``onset_s,label`` rows (optional header).
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            names = [n.strip() for n in next(reader)]
        except StopIteration:
            raise FormatError(f"{path}: empty file, expected a header row") from None
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(names):
                raise FormatError(
                    f"{path}:{lineno}: ragged row with {len(row)} fields, header has {len(names)}"
                )
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
    data = np.array(rows, dtype=np.float64).reshape(len(rows), len(names)).T
    markers = _read_markers(marker_path) if marker_path is not None else []
    return Recording(sample_rate_hz, names, data, markers, subject_id or Path(path).stem)
