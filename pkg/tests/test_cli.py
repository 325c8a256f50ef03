import json

import numpy as np
import pytest

from spectral_mind import eegio
from spectral_mind.cli import cli_main
from spectral_mind.config import SEED_ENV, ConfigError, PipelineConfig, load_config

TINY = """
[synth]
n_subjects = 2
n_channels = 2
n_trials_per_class = 4

[ersp]
grid = [16, 16]

[train]
max_epochs = 2
batch_size = 8

[run]
n_splits = 2
"""


@pytest.fixture
def tiny(tmp_path):
    path = tmp_path / "tiny.toml"
    path.write_text(TINY)
    return path


def run(argv, capsys):
    code = cli_main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def summary(out):
    lines = out.strip().splitlines()
    assert len(lines) == 1
    return json.loads(lines[0])


def export_csv(rec, csv_path, marker_path):
    header = ",".join(rec.channel_names)
    rows = "\n".join(",".join(repr(float(v)) for v in col) for col in rec.data.T)
    csv_path.write_text(header + "\n" + rows + "\n")
    marker_path.write_text("onset_s,label\n" + "".join(f"{m.onset_s!r},{m.label}\n" for m in rec.markers))


def test_synth(tmp_path, tiny, capsys):
    code, out, _ = run(["synth", "--config", tiny, "--out", tmp_path / "data"], capsys)
    assert code == 0
    s = summary(out)
    assert s["status"] == "ok" and len(s["files"]) == 2
    rec = eegio.load_recording(s["files"][0])
    assert rec.n_channels == 2 and len(rec.markers) == 8
    assert (tmp_path / "data" / "resolved_config.json").exists()


def test_usage_errors(capsys, tmp_path):
    assert run(["frobnicate"], capsys)[0] == 1
    assert run([], capsys)[0] == 1
    assert run(["synth"], capsys)[0] == 1
    assert run(["evaluate", "--input", "x", "--out", tmp_path, "--model", "resnet"], capsys)[0] == 1


def test_config_error_names_field(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("[train]\nbatch_size = 0\n")
    code, _, err = run(["synth", "--config", bad, "--out", tmp_path], capsys)
    assert code == 2 and "train.batch_size" in err
    bad.write_text("[train]\nbatchsize = 4\n")
    code, _, err = run(["synth", "--config", bad, "--out", tmp_path], capsys)
    assert code == 2 and "train.batchsize" in err


def test_missing_input_is_data_error(tmp_path, capsys):
    code, _, err = run(["features", "--out", tmp_path / "x.eegs", tmp_path / "missing.eegp"], capsys)
    assert code == 2 and "missing.eegp" in err


def staged(tmp_path, tiny, capsys, seed=None):
    """import -> preprocess -> features -> evaluate, starting from CSV exports of synthetic recordings."""
    run(["synth", "--config", tiny, "--out", tmp_path / "raw"], capsys)
    imported = []
    for rec_path in sorted((tmp_path / "raw").glob("*.eegr")):
        rec = eegio.load_recording(rec_path)
        csv, mk = tmp_path / f"{rec.subject_id}.csv", tmp_path / f"{rec.subject_id}_markers.csv"
        export_csv(rec, csv, mk)
        out = tmp_path / "imported" / f"{rec.subject_id}.eegr"
        code, _, _ = run(["import", "--csv", csv, "--markers", mk, "--fs", rec.sample_rate_hz,
                          "--subject", rec.subject_id, "--out", out], capsys)
        assert code == 0
        imported.append(out)
    seed_args = [] if seed is None else ["--seed", seed]
    assert run(["preprocess", "--config", tiny, "--out", tmp_path / "ep", *imported], capsys)[0] == 0
    eps = sorted((tmp_path / "ep").glob("*.eegp"))
    assert run(["features", "--config", tiny, "--out", tmp_path / "feat" / "ds.eegs", *eps], capsys)[0] == 0
    code, out, _ = run(["evaluate", "--config", tiny, "--input", tmp_path / "feat" / "ds.eegs",
                        "--out", tmp_path / "ev", *seed_args], capsys)
    assert code == 0
    return summary(out)


def test_subcommands_compose_to_single_shot(tmp_path, tiny, capsys):
    staged(tmp_path, tiny, capsys)
    raw = sorted((tmp_path / "raw").glob("*.eegr"))
    code, out, _ = run(["run", "--config", tiny, "--out", tmp_path / "single", *raw], capsys)
    assert code == 0
    s = summary(out)
    assert s["samples"] == 2 * 2 * 8
    single = tmp_path / "single" / "evaluation"
    names = sorted(p.name for p in (tmp_path / "ev").iterdir())
    assert names == sorted(p.name for p in single.iterdir())
    for name in names:
        assert (tmp_path / "ev" / name).read_bytes() == (single / name).read_bytes(), name


def test_resolved_config_reproduces(tmp_path, tiny, capsys):
    ds = tmp_path / "ds.eegs"
    run(["synth", "--config", tiny, "--out", tmp_path / "raw"], capsys)
    run(["preprocess", "--config", tiny, "--out", tmp_path / "ep", *sorted((tmp_path / "raw").glob("*.eegr"))], capsys)
    run(["features", "--config", tiny, "--out", ds, *sorted((tmp_path / "ep").glob("*.eegp"))], capsys)
    assert run(["evaluate", "--config", tiny, "--input", ds, "--out", tmp_path / "a", "--seed", 3], capsys)[0] == 0
    logged = tmp_path / "a" / "resolved_config.json"
    assert json.loads(logged.read_text())["run"]["base_seed"] == 3
    assert run(["evaluate", "--config", logged, "--input", ds, "--out", tmp_path / "b"], capsys)[0] == 0
    for p in sorted((tmp_path / "a").iterdir()):
        assert p.read_bytes() == (tmp_path / "b" / p.name).read_bytes(), p.name


def test_train_and_init_mismatch(tmp_path, tiny, capsys):
    staged(tmp_path, tiny, capsys)
    ds = tmp_path / "feat" / "ds.eegs"
    code, out, _ = run(["train", "--config", tiny, "--input", ds, "--out", tmp_path / "tr"], capsys)
    assert code == 0
    s = summary(out)
    ckpt = tmp_path / "tr" / "model_split00.eegn"
    assert ckpt.exists() and s["stop_reason"] in ("max_epochs", "patience_exhausted")
    code, _, _ = run(["train", "--config", tiny, "--input", ds, "--out", tmp_path / "tr2", "--init", ckpt], capsys)
    assert code == 0
    code, _, err = run(["train", "--config", tiny, "--model", "lstm", "--input", ds, "--out", tmp_path / "tr3",
                        "--init", ckpt], capsys)
    assert code == 2 and "shape mismatch" in err


def test_evaluate_and_report(tmp_path, tiny, capsys):
    s = staged(tmp_path, tiny, capsys)
    assert s["splits"] == 2 and s["model"] == "cnn"
    lines = (tmp_path / "ev" / "overall.csv").read_text().splitlines()
    assert lines[0].startswith("group,acc_median,acc_std,sens_median")
    assert lines[1].startswith("all,")
    subjects = (tmp_path / "ev" / "by_subject.csv").read_text().splitlines()
    assert [ln.split(",")[0] for ln in subjects[1:]] == ["S01", "S02"]
    channels = (tmp_path / "ev" / "by_channel.csv").read_text().splitlines()
    assert [ln.split(",")[0] for ln in channels[1:]] == ["F7", "AFF5h"]
    code, out, _ = run(["report", "--input", tmp_path / "ev", "--out", tmp_path / "rep"], capsys)
    assert code == 0
    md = (tmp_path / "rep" / "tables.md").read_text()
    assert "| Group | ACC | Sens | Spec | F1 |" in md and "| S02 |" in md
    svg = (tmp_path / "rep" / "topomap.svg").read_text()
    assert svg.count('class="electrode"') == 2


def test_report_missing_dir(tmp_path, capsys):
    assert run(["report", "--input", tmp_path / "nothing", "--out", tmp_path / "r"], capsys)[0] == 2


def test_env_seed(tmp_path, tiny, monkeypatch):
    monkeypatch.setenv(SEED_ENV, "17")
    assert load_config(tiny).run.base_seed == 17
    assert load_config(tiny, {"run.base_seed": 4}).run.base_seed == 4
    monkeypatch.setenv(SEED_ENV, "seventeen")
    with pytest.raises(ConfigError, match="run.base_seed"):
        load_config(tiny)


def test_config_formats(tmp_path, tiny):
    cfg = load_config(tiny)
    assert cfg.ersp.grid == (16, 16) and cfg.train.max_epochs == 2 and cfg.synth.n_channels == 2
    assert cfg.train.learning_rate == 0.001 and cfg.preprocess.band_hz == (0.5, 50.0)
    js = tmp_path / "c.json"
    cfg.dump(js)
    assert load_config(js) == cfg
    defaults = load_config()
    assert defaults == PipelineConfig()
    assert defaults.run.n_splits == 20 and defaults.ersp.grid == (224, 224)


def test_config_errors(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text("[bogus]\nx = 1\n")
    with pytest.raises(ConfigError, match="bogus"):
        load_config(p)
    p.write_text("[ersp\n")
    with pytest.raises(ConfigError):
        load_config(p)
    p.write_text('[preprocess]\nchain_order = "sideways"\n')
    with pytest.raises(ConfigError, match="preprocess.chain_order"):
        load_config(p)


def test_desk_config_loads():
    from pathlib import Path

    cfg = load_config(Path(__file__).parents[1] / "configs" / "desk.toml")
    assert cfg.ersp.grid == (56, 56) and cfg.run.n_splits == 5
    assert cfg.synth.n_subjects == 2 and cfg.synth.n_channels == 4 and cfg.synth.n_trials_per_class == 20
    assert cfg.synth.signature_gain == 3.0


def test_imported_csv_is_lossless(tmp_path, tiny, capsys):
    run(["synth", "--config", tiny, "--out", tmp_path / "raw"], capsys)
    rec = eegio.load_recording(tmp_path / "raw" / "S01.eegr")
    export_csv(rec, tmp_path / "a.csv", tmp_path / "m.csv")
    back = eegio.import_csv(tmp_path / "a.csv", rec.sample_rate_hz, tmp_path / "m.csv", "S01")
    assert back.data.tobytes() == rec.data.tobytes()
    assert back.markers == rec.markers
    np.testing.assert_array_equal(back.data, rec.data)
