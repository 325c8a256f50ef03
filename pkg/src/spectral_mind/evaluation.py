"""Confusion-matrix metrics, multi-split evaluation and report files.

MA is the positive class throughout.  Metrics whose denominator is zero are
``None`` in memory and the string ``undef`` on disk.
"""
from __future__ import annotations

import csv
import logging
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import partial
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .eegio import LABELS, SpectrogramSet
from .nn.network import (Network, build_lstm_classifier, build_shallow_cnn, load_weights_into,
                         save_checkpoint)
from .train import TrainConfig, TrainHistory, predict_proba, rng_streams, split_dataset, train_model

log = logging.getLogger(__name__)

UNDEF = "undef"
METRIC_NAMES = ("acc", "sens", "spec", "f1")
GROUPINGS = ("overall", "by_subject", "by_channel")


def _as_positive(labels) -> np.ndarray:
    arr = np.asarray(list(labels), dtype=object)
    out = np.empty(len(arr), dtype=bool)
    for i, v in enumerate(arr):
        if isinstance(v, str):
            if v not in LABELS:
                raise ValueError(f"unknown label {v!r}")
            out[i] = v == "MA"
        else:
            if int(v) not in (0, 1):
                raise ValueError(f"label index {v!r} outside {{0, 1}}")
            out[i] = int(v) == 1
    return out


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def __add__(self, other: ConfusionMatrix) -> ConfusionMatrix:
        return ConfusionMatrix(self.tp + other.tp, self.fp + other.fp,
                               self.tn + other.tn, self.fn + other.fn)


def confusion(predictions, truths) -> ConfusionMatrix:
    p = _as_positive(predictions)
    t = _as_positive(truths)
    if len(p) != len(t):
        raise ValueError(f"length mismatch: {len(p)} predictions vs {len(t)} truths")
    return ConfusionMatrix(
        tp=int(np.sum(p & t)), fp=int(np.sum(p & ~t)),
        tn=int(np.sum(~p & ~t)), fn=int(np.sum(~p & t)),
    )


@dataclass(frozen=True)
class Metrics:
    acc: float | None
    sens: float | None
    spec: float | None
    f1: float | None

    def as_tuple(self):
        return (self.acc, self.sens, self.spec, self.f1)


def _ratio(num: int, den: int) -> float | None:
    return num / den if den else None


def metrics(cm: ConfusionMatrix) -> Metrics:
    if cm.total == 0:
        raise ValueError("cannot compute metrics of an empty confusion matrix")
    return Metrics(
        acc=(cm.tp + cm.tn) / cm.total,
        sens=_ratio(cm.tp, cm.tp + cm.fn),
        spec=_ratio(cm.tn, cm.tn + cm.fp),
        f1=_ratio(2 * cm.tp, 2 * cm.tp + cm.fp + cm.fn),
    )


def aggregate(values: Sequence[float], kind: str) -> float:
    """Median, or sample standard deviation (n - 1 denominator; 0 for a single value)."""
    values = list(values)
    if not values:
        raise ValueError("cannot aggregate an empty list")
    if kind == "median":
        return float(statistics.median(values))
    if kind == "std":
        return float(statistics.stdev(values)) if len(values) > 1 else 0.0
    raise ValueError(f"unknown aggregate kind {kind!r}")


def _aggregate_defined(values, kind):
    defined = [v for v in values if v is not None]
    return aggregate(defined, kind) if defined else None


@dataclass
class MetricsReport:
    grouping: str
    per_split: dict[str, list[Metrics]] = field(default_factory=dict)
    confusions: dict[str, list[ConfusionMatrix]] = field(default_factory=dict)

    @property
    def keys(self) -> list[str]:
        return list(self.per_split)

    def aggregate_row(self, key: str) -> dict[str, float | None]:
        out = {}
        for j, name in enumerate(METRIC_NAMES):
            vals = [m.as_tuple()[j] for m in self.per_split[key]]
            out[f"{name}_median"] = _aggregate_defined(vals, "median")
            out[f"{name}_std"] = _aggregate_defined(vals, "std")
        return out

    def median(self, key: str, metric: str = "acc") -> float | None:
        return self.aggregate_row(key)[f"{metric}_median"]


def _fmt(v) -> str:
    return UNDEF if v is None else f"{100.0 * v:.2f}"


def write_report_csv(report: MetricsReport, out_dir) -> tuple[Path, Path]:
    """Write ``<grouping>.csv`` (median/std per metric) and ``<grouping>_splits.csv``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    agg_path = out_dir / f"{report.grouping}.csv"
    cols = [f"{m}_{s}" for m in METRIC_NAMES for s in ("median", "std")]
    with open(agg_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["group", *cols])
        for key in report.keys:
            row = report.aggregate_row(key)
            w.writerow([key, *(_fmt(row[c]) for c in cols)])
    split_path = out_dir / f"{report.grouping}_splits.csv"
    with open(split_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["split", "group", *METRIC_NAMES])
        for key in report.keys:
            for i, m in enumerate(report.per_split[key]):
                w.writerow([i, key, *(_fmt(v) for v in m.as_tuple())])
    return agg_path, split_path


def read_report_csv(path) -> dict[str, dict[str, float | None]]:
    rows = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            key = row.pop("group")
            rows[key] = {k: None if v == UNDEF else float(v) / 100.0 for k, v in row.items()}
    return rows


def group_confusions(pred: np.ndarray, truth: np.ndarray, meta) -> dict[str, dict[str, ConfusionMatrix]]:
    out = {"overall": {"all": confusion(pred, truth)}, "by_subject": {}, "by_channel": {}}
    for grouping, attr in (("by_subject", "subject_id"), ("by_channel", "channel_name")):
        keys = [getattr(m, attr) for m in meta]
        for key in dict.fromkeys(keys):
            sel = np.array([k == key for k in keys])
            out[grouping][key] = confusion(pred[sel], truth[sel])
    return out


def model_builder_for(model: str, grid: tuple[int, int], n_classes: int = 2) -> Callable:
    """Picklable ``rng -> Network`` factory for ``cnn`` or ``lstm``."""
    h, w = grid
    if model == "cnn":
        return partial(_build, build_shallow_cnn, h, w, n_classes)
    if model == "lstm":
        return partial(_build, build_lstm_classifier, h, w, n_classes)
    raise ValueError(f"unknown model {model!r} (expected 'cnn' or 'lstm')")


def _build(fn, a, b, n_classes, rng):
    return fn(a, b, n_classes, rng=rng)


@dataclass
class SplitOutcome:
    index: int
    seed: int
    confusions: dict[str, dict[str, ConfusionMatrix]]
    history: TrainHistory
    network: Network


def run_split(model_builder, ds: SpectrogramSet, cfg: TrainConfig, seed: int, index: int,
              ratios=(0.70, 0.15, 0.15), init_checkpoint=None) -> SplitOutcome:
    split = split_dataset(ds, ratios, seed=seed)
    run_cfg = replace(cfg, seed=seed)
    streams = rng_streams(seed)
    net = model_builder(streams["init"])
    if init_checkpoint is not None:
        load_weights_into(net, init_checkpoint)
    net, history = train_model(net, ds, split, run_cfg,
                               dropout_rng=streams["dropout"], shuffle_rng=streams["shuffle"])
    probs = predict_proba(net, ds.images[split.test], cfg.batch_size)
    pred = probs.argmax(axis=1)
    truth = ds.labels[split.test]
    meta = [ds.meta[i] for i in split.test]
    log.info("split %d (seed %d): %s after %d iterations", index, seed, history.stop_reason,
             history.iterations)
    return SplitOutcome(index, seed, group_confusions(pred, truth, meta), history, net)


@dataclass
class Evaluation:
    reports: dict[str, MetricsReport]
    outcomes: list[SplitOutcome]

    def write(self, out_dir, checkpoints: bool = True) -> list[Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        written = []
        for grouping in GROUPINGS:
            written.extend(write_report_csv(self.reports[grouping], out_dir))
        for o in self.outcomes:
            p = out_dir / f"history_split{o.index:02d}.csv"
            o.history.to_csv(p)
            written.append(p)
            if checkpoints:
                p = out_dir / f"model_split{o.index:02d}.eegn"
                save_checkpoint(o.network, p)
                written.append(p)
        return written


def evaluate_splits(model_builder, ds: SpectrogramSet, n_splits: int = 20, cfg: TrainConfig | None = None,
                    base_seed: int = 0, jobs: int = 1) -> Evaluation:
    """Train and test on ``n_splits`` stratified splits seeded ``base_seed + i``."""
    if n_splits < 1:
        raise ValueError("n_splits must be >= 1")
    cfg = cfg or TrainConfig()
    seeds = [base_seed + i for i in range(n_splits)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(run_split, model_builder, ds, cfg, s, i) for i, s in enumerate(seeds)]
            outcomes = [f.result() for f in futures]
    else:
        outcomes = [run_split(model_builder, ds, cfg, s, i) for i, s in enumerate(seeds)]
    return Evaluation(collect_reports(outcomes, ds), outcomes)


def collect_reports(outcomes: list[SplitOutcome], ds: SpectrogramSet) -> dict[str, MetricsReport]:
    reports = {g: MetricsReport(g) for g in GROUPINGS}
    for o in outcomes:
        for grouping, rows in o.confusions.items():
            rep = reports[grouping]
            for key, cm in rows.items():
                rep.confusions.setdefault(key, []).append(cm)
                rep.per_split.setdefault(key, []).append(metrics(cm))
    orders = {"by_subject": sorted(reports["by_subject"].per_split),
              "by_channel": [c for c in dict.fromkeys(m.channel_name for m in ds.meta)
                             if c in reports["by_channel"].per_split]}
    for grouping, order in orders.items():
        rep = reports[grouping]
        rep.per_split = {k: rep.per_split[k] for k in order}
        rep.confusions = {k: rep.confusions[k] for k in order}
    return reports
