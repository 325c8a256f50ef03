import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_spectrogram_set
from spectral_mind.eegio import SpectrogramSet
from spectral_mind.evaluation import (GROUPINGS, ConfusionMatrix, Metrics, MetricsReport, aggregate, confusion,
                                      evaluate_splits, group_confusions, metrics, model_builder_for,
                                      read_report_csv, write_report_csv)
from spectral_mind.nn import Flatten, Network, Softmax
from spectral_mind.train import TrainConfig


def brute_force(preds, truths):
    tp = fp = tn = fn = 0
    for p, t in zip(preds, truths):
        if p == "MA" and t == "MA":
            tp += 1
        elif p == "MA":
            fp += 1
        elif t == "MA":
            fn += 1
        else:
            tn += 1
    n = tp + fp + tn + fn
    return (
        (tp + tn) / n,
        tp / (tp + fn) if tp + fn else None,
        tn / (tn + fp) if tn + fp else None,
        2 * tp / (2 * tp + fp + fn) if 2 * tp + fp + fn else None,
    )


def test_confusion_examples():
    truths = ["MA"] * 4 + ["BL"] * 6
    assert confusion(truths, truths) == ConfusionMatrix(tp=4, fp=0, tn=6, fn=0)
    truths = ["MA", "BL"] * 5
    assert confusion(["MA"] * 10, truths) == ConfusionMatrix(tp=5, fp=5, tn=0, fn=0)
    assert confusion([], []) == ConfusionMatrix()
    assert confusion([1, 0], [1, 1]) == ConfusionMatrix(tp=1, fn=1)
    with pytest.raises(ValueError, match="length mismatch"):
        confusion(["MA"], [])
    with pytest.raises(ValueError):
        confusion(["XX"], ["MA"])


def test_metrics_examples():
    m = metrics(ConfusionMatrix(tp=3, fn=1, tn=2, fp=2))
    assert m.acc == 0.625 and m.sens == 0.75 and m.spec == 0.5
    assert m.f1 == pytest.approx(6 / 9)
    assert metrics(ConfusionMatrix(tp=2, tn=3)).as_tuple() == (1.0, 1.0, 1.0, 1.0)
    assert metrics(ConfusionMatrix(tn=3, fp=1)).sens is None
    with pytest.raises(ValueError, match="empty"):
        metrics(ConfusionMatrix())


def test_metrics_brute_force_1000_cases():
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        n = int(rng.integers(1, 60))
        q = rng.random()
        preds = list(rng.choice(["MA", "BL"], n, p=[q, 1 - q]))
        truths = list(rng.choice(["MA", "BL"], n))
        assert metrics(confusion(preds, truths)).as_tuple() == brute_force(preds, truths)


@settings(max_examples=100, deadline=None)
@given(pairs=st.lists(st.tuples(st.sampled_from(["MA", "BL"]), st.sampled_from(["MA", "BL"])), min_size=1,
                      max_size=40), seed=st.integers(0, 1000))
def test_metrics_permutation_invariant(pairs, seed):
    p, t = zip(*pairs)
    perm = np.random.default_rng(seed).permutation(len(pairs))
    assert metrics(confusion(p, t)) == metrics(confusion([p[i] for i in perm], [t[i] for i in perm]))


@settings(max_examples=100, deadline=None)
@given(preds=st.lists(st.sampled_from(["MA", "BL"]), min_size=2, max_size=40).filter(lambda x: len(x) % 2 == 0))
def test_label_flip_swaps_sens_spec(preds):
    n = len(preds)
    truths = ["MA"] * (n // 2) + ["BL"] * (n // 2)
    flip = lambda xs: ["BL" if x == "MA" else "MA" for x in xs]  # noqa: E731
    a = metrics(confusion(preds, truths))
    # relabelling (the class roles swap) exchanges sensitivity and specificity
    b = metrics(confusion(flip(preds), flip(truths)))
    assert a.sens == b.spec and a.spec == b.sens and a.acc == b.acc
    # flipping the predictions alone complements them
    c = metrics(confusion(flip(preds), truths))
    assert c.sens == pytest.approx(1 - a.sens) and c.spec == pytest.approx(1 - a.spec)


def test_chance_level_random_model():
    rng = np.random.default_rng(9)
    n = 2000
    truths = ["MA"] * (n // 2) + ["BL"] * (n // 2)
    preds = list(rng.choice(["MA", "BL"], n))
    acc = metrics(confusion(preds, truths)).acc
    assert abs(acc - 0.5) <= 3 * math.sqrt(0.25 / n)


def test_aggregate():
    assert aggregate([1, 3, 2], "median") == 2
    assert aggregate([1, 2, 3, 4], "median") == 2.5
    assert aggregate([2, 4], "std") == pytest.approx(math.sqrt(2))
    assert aggregate([5.0], "std") == 0.0
    with pytest.raises(ValueError):
        aggregate([], "median")
    with pytest.raises(ValueError):
        aggregate([1.0], "mean")


@settings(max_examples=50, deadline=None)
@given(vals=st.lists(st.floats(0, 1), min_size=1, max_size=20), seed=st.integers(0, 100))
def test_median_order_invariant(vals, seed):
    perm = np.random.default_rng(seed).permutation(len(vals))
    assert aggregate(vals, "median") == aggregate([vals[i] for i in perm], "median")


def test_group_confusions_partition():
    ds = make_spectrogram_set(subjects=3, channels=4, epochs_per_label=3)
    rng = np.random.default_rng(0)
    pred = rng.integers(0, 2, len(ds))
    groups = group_confusions(pred, ds.labels, ds.meta)
    overall = groups["overall"]["all"]
    for grouping in ("by_subject", "by_channel"):
        total = ConfusionMatrix()
        for cm in groups[grouping].values():
            total = total + cm
        assert total == overall
    assert list(groups["by_channel"]) == ["C0", "C1", "C2", "C3"]


def test_report_csv_round_trip(tmp_path):
    rep = MetricsReport("by_subject")
    rep.per_split["S01"] = [Metrics(0.5, 0.25, 0.75, 1 / 3), Metrics(0.75, None, 0.5, 0.6)]
    rep.per_split["S02"] = [Metrics(1.0, 1.0, 1.0, 1.0), Metrics(1.0, 1.0, 1.0, 1.0)]
    agg, splits = write_report_csv(rep, tmp_path)
    lines = agg.read_text().splitlines()
    assert lines[0] == "group,acc_median,acc_std,sens_median,sens_std,spec_median,spec_std,f1_median,f1_std"
    assert lines[1].startswith("S01,62.50,17.68,25.00,0.00,62.50,17.68,46.67,")
    assert "undef" in splits.read_text()
    back = read_report_csv(agg)
    assert back["S02"]["acc_median"] == 1.0 and back["S02"]["acc_std"] == 0.0
    assert back["S01"]["sens_median"] == 0.25


def test_report_all_undefined(tmp_path):
    rep = MetricsReport("overall", {"all": [Metrics(1.0, None, 1.0, None)]})
    agg, _ = write_report_csv(rep, tmp_path)
    row = agg.read_text().splitlines()[1].split(",")
    assert row[3:5] == ["undef", "undef"]
    assert read_report_csv(agg)["all"]["sens_median"] is None


def constant_builder(rng):
    # no parameters: two equal logits, so every prediction is class 0 (BL)
    return Network([Flatten(), Softmax()], (1, 2))


def test_constant_model_is_chance():
    ds = make_spectrogram_set(subjects=2, channels=2, epochs_per_label=10, grid=(1, 2))
    ds = SpectrogramSet(np.zeros_like(ds.images), ds.meta, ds.freq_range_hz, ds.time_range_s)
    cfg = TrainConfig(batch_size=8, max_epochs=1, val_frequency_iters=1)
    ev = evaluate_splits(constant_builder, ds, n_splits=3, cfg=cfg)
    accs = [m.acc for m in ev.reports["overall"].per_split["all"]]
    assert accs == [0.5, 0.5, 0.5]
    row = ev.reports["overall"].aggregate_row("all")
    assert row["sens_median"] == 0.0 and row["spec_median"] == 1.0


def test_single_split_median_equals_values(tmp_path):
    ds = make_spectrogram_set(subjects=2, channels=2, epochs_per_label=6, grid=(4, 4), signal=2.0)
    cfg = TrainConfig(batch_size=8, max_epochs=2)
    ev = evaluate_splits(model_builder_for("cnn", ds.grid), ds, n_splits=1, cfg=cfg, base_seed=5)
    rep = ev.reports["overall"]
    row = rep.aggregate_row("all")
    assert row["acc_median"] == rep.per_split["all"][0].acc and row["acc_std"] == 0.0
    assert list(ev.reports["by_subject"].per_split) == ["S01", "S02"]
    written = ev.write(tmp_path)
    names = {p.name for p in written}
    for g in GROUPINGS:
        assert f"{g}.csv" in names and f"{g}_splits.csv" in names
    assert "history_split00.csv" in names and "model_split00.eegn" in names


def test_model_builder_for():
    net = model_builder_for("lstm", (6, 4))(np.random.default_rng(0))
    assert net.input_shape == (6, 4)
    assert model_builder_for("cnn", (6, 4))(np.random.default_rng(0)).input_shape == (1, 6, 4)
    with pytest.raises(ValueError):
        model_builder_for("resnet", (6, 4))
