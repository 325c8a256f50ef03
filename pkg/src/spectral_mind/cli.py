"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data or configuration error.  On
success a single JSON line summarising the outputs is printed to stdout.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import eegio
from .config import ConfigError, PipelineConfig, load_config
from .evaluation import (GROUPINGS, Evaluation, collect_reports, evaluate_splits, model_builder_for,
                         read_report_csv, run_split)
from .pipeline import epochs_from_recordings, features_from_epochs
from .synth import generate
from .topomap import CHANNEL_POSITIONS, render_topomap


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _common(p: argparse.ArgumentParser, out_help: str) -> None:
    p.add_argument("--config", type=Path, help="TOML or JSON pipeline configuration")
    p.add_argument("--out", type=Path, required=True, help=out_help)
    p.add_argument("--seed", type=int, help="base seed (overrides config and $SPECTRAL_MIND_SEED)")
    p.add_argument("--jobs", type=int, help="worker processes for independent splits (default 1)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="spectral-mind", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("synth", help="generate synthetic recordings")
    _common(p, "output directory for .eegr files")

    p = sub.add_parser("import", help="convert a CSV recording to .eegr")
    _common(p, "output .eegr file")
    p.add_argument("--csv", type=Path, required=True)
    p.add_argument("--markers", type=Path)
    p.add_argument("--fs", type=float, required=True, help="sample rate of the CSV in Hz")
    p.add_argument("--subject", default="")

    p = sub.add_parser("preprocess", help="filter, epoch and baseline-correct recordings")
    _common(p, "output directory for .eegp files")
    p.add_argument("inputs", nargs="+", type=Path)

    p = sub.add_parser("features", help="build the ERSP image dataset from epoch files")
    _common(p, "output .eegs file")
    p.add_argument("inputs", nargs="+", type=Path)

    for name, help_ in (("train", "train one model on one split"),
                        ("evaluate", "train and test over repeated random splits")):
        p = sub.add_parser(name, help=help_)
        _common(p, "output directory")
        p.add_argument("--input", type=Path, required=True, help=".eegs dataset")
        p.add_argument("--model", choices=("cnn", "lstm"))
        if name == "train":
            p.add_argument("--init", type=Path, help="checkpoint to initialise the weights from")
        else:
            p.add_argument("--splits", type=int)

    p = sub.add_parser("report", help="render tables and the channel topomap from evaluate output")
    p.add_argument("--input", type=Path, required=True, help="directory written by evaluate")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("-v", "--verbose", action="store_true")

    p = sub.add_parser("run", help="single-shot: recordings -> epochs -> features -> evaluate -> report")
    _common(p, "output directory")
    p.add_argument("inputs", nargs="*", type=Path, help=".eegr files (synthetic data if omitted)")
    p.add_argument("--model", choices=("cnn", "lstm"))
    p.add_argument("--splits", type=int)
    return parser


def _config(args) -> PipelineConfig:
    overrides = {
        "run.base_seed": getattr(args, "seed", None),
        "run.jobs": getattr(args, "jobs", None),
        "run.model": getattr(args, "model", None),
        "run.n_splits": getattr(args, "splits", None),
    }
    return load_config(getattr(args, "config", None), overrides)


def _log_config(cfg: PipelineConfig, out_dir: Path) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "resolved_config.json"
    cfg.dump(path)
    return path


def cmd_synth(args, cfg):
    args.out.mkdir(parents=True, exist_ok=True)
    if args.seed is not None:
        cfg.synth.seed = args.seed
    files = []
    for rec in generate(cfg.synth):
        path = args.out / f"{rec.subject_id}.eegr"
        eegio.save_recording(rec, path)
        files.append(str(path))
    return {"files": files, "config": str(_log_config(cfg, args.out))}


def cmd_import(args, cfg):
    rec = eegio.import_csv(args.csv, args.fs, args.markers, args.subject)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    eegio.save_recording(rec, args.out)
    return {"file": str(args.out), "channels": rec.n_channels, "samples": rec.n_samples,
            "markers": len(rec.markers)}


def _write_epochs(epochs, out_dir: Path) -> list[str]:
    out_dir.mkdir(parents=True, exist_ok=True)
    files = []
    for ep in epochs:
        path = out_dir / f"{ep.subject_id}.eegp"
        eegio.save_epochs(ep, path)
        files.append(str(path))
    return files


def cmd_preprocess(args, cfg):
    recs = [eegio.load_recording(p) for p in args.inputs]
    files = _write_epochs(epochs_from_recordings(recs, cfg.preprocess), args.out)
    return {"files": files, "config": str(_log_config(cfg, args.out))}


def cmd_features(args, cfg):
    ds = features_from_epochs([eegio.load_epochs(p) for p in args.inputs], cfg.ersp)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    eegio.save_spectrograms(ds, args.out)
    _log_config(cfg, args.out.parent)
    return {"file": str(args.out), "samples": len(ds), "grid": list(ds.grid)}


def _overall_summary(ev: Evaluation) -> dict:
    row = ev.reports["overall"].aggregate_row("all")
    return {k: (None if v is None else round(100 * v, 2)) for k, v in row.items()}


def cmd_train(args, cfg):
    ds = eegio.load_spectrograms(args.input)
    builder = model_builder_for(cfg.run.model, ds.grid)
    outcome = run_split(builder, ds, cfg.train, cfg.run.base_seed, 0, init_checkpoint=args.init)
    ev = Evaluation(collect_reports([outcome], ds), [outcome])
    ev.write(args.out)
    _log_config(cfg, args.out)
    h = outcome.history
    return {"checkpoint": str(args.out / "model_split00.eegn"), "iterations": h.iterations,
            "stop_reason": h.stop_reason, "best_iteration": h.best_iteration,
            "test": _overall_summary(ev)}


def _evaluate(ds, cfg: PipelineConfig, out: Path) -> dict:
    builder = model_builder_for(cfg.run.model, ds.grid)
    ev = evaluate_splits(builder, ds, cfg.run.n_splits, cfg.train, cfg.run.base_seed, cfg.run.jobs)
    ev.write(out)
    _log_config(cfg, out)
    return {"out": str(out), "model": cfg.run.model, "splits": cfg.run.n_splits,
            "median": _overall_summary(ev)}


def cmd_evaluate(args, cfg):
    return _evaluate(eegio.load_spectrograms(args.input), cfg, args.out)


def _table(rows: dict, title: str, key_name: str) -> list[str]:
    lines = [f"### {title}", "", f"| {key_name} | ACC | Sens | Spec | F1 |", "|---|---|---|---|---|"]

    def cell(r, m):
        med, sd = r[f"{m}_median"], r[f"{m}_std"]
        if med is None:
            return "undef"
        return f"{100 * med:.2f} ± {100 * sd:.2f}" if sd is not None else f"{100 * med:.2f}"

    for key, r in rows.items():
        lines.append(f"| {key} | " + " | ".join(cell(r, m) for m in ("acc", "sens", "spec", "f1")) + " |")
    return lines + [""]


def cmd_report(args, cfg=None):
    src = args.input
    tables = {g: read_report_csv(src / f"{g}.csv") for g in GROUPINGS}
    args.out.mkdir(parents=True, exist_ok=True)
    md = ["# Evaluation summary (median ± std across splits, %)", ""]
    md += _table(tables["overall"], "Overall", "Group")
    md += _table(tables["by_subject"], "By participant", "Participant")
    md += _table(tables["by_channel"], "By channel", "Channel")
    (args.out / "tables.md").write_text("\n".join(md))
    outputs = {"tables": str(args.out / "tables.md")}
    per_channel = {k: r["acc_median"] for k, r in tables["by_channel"].items()
                   if k in CHANNEL_POSITIONS and r["acc_median"] is not None}
    if per_channel:
        svg_path = args.out / "topomap.svg"
        svg_path.write_text(render_topomap(per_channel, title="Median test accuracy by channel"))
        outputs["topomap"] = str(svg_path)
    return outputs


def cmd_run(args, cfg):
    if args.inputs:
        recs = [eegio.load_recording(p) for p in args.inputs]
    else:
        recs = generate(cfg.synth)
    epochs = epochs_from_recordings(recs, cfg.preprocess)
    ds = features_from_epochs(epochs, cfg.ersp)
    eval_dir = args.out / "evaluation"
    summary = _evaluate(ds, cfg, eval_dir)
    report = cmd_report(argparse.Namespace(input=eval_dir, out=args.out / "report"))
    _log_config(cfg, args.out)
    return {**summary, "samples": len(ds), "report": report}


COMMANDS = {
    "synth": cmd_synth, "import": cmd_import, "preprocess": cmd_preprocess, "features": cmd_features,
    "train": cmd_train, "evaluate": cmd_evaluate, "report": cmd_report, "run": cmd_run,
}


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required")
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"spectral-mind: error: {exc}", file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args) if args.command != "report" else None
        result = COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"spectral-mind: config error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"spectral-mind: {args.command} failed: {exc}", file=sys.stderr)
        return 2
    print(json.dumps({"command": args.command, "status": "ok", **result}, sort_keys=True))
    return 0


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
