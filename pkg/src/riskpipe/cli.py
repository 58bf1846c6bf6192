"""``riskpipe`` command line: every pipeline stage on its own, or all of them via ``run``.

Stage outputs land in ``--out`` under fixed names, and each stage reads its
inputs from there unless a path flag points elsewhere, so running the six
stages one after another into the same directory reproduces ``run``.
"""

from __future__ import annotations

import argparse
import json
import sys
from importlib import resources
from pathlib import Path

from . import __version__
from .behavior import PROFILE_VERSION, build_profile, dumps_profile, loads_profile
from .config import load_config
from .errors import ModelError, RiskPipeError, ValidationError
from .labels import SkillLabel
from .riskgen import EXCHANGE_SCHEMA, load_risk_data, parse_model, serialize_model, transform
from .skills import (
    CHECKPOINT_VERSION,
    LABELS_VERSION,
    build_dataset,
    detect,
    dumps_labels,
    evaluate,
    init_model,
    load_model,
    loads_labels,
    mean_loss,
    predict,
    random_scenarios,
    save_model,
    smooth_labels,
    train,
)
from .solver import REPORT_VERSION, solve_hybrid
from .trajectory import LOG_SCHEMA, generate_episode, read_log, write_log

LOG_FILE = "log.jsonl"
TRUTH_FILE = "truth.json"
MODEL_FILE = "model.json"
METRICS_FILE = "train_metrics.json"
LABELS_FILE = "labels.json"
PROFILE_FILE = "profile.json"
EXCHANGE_FILE = "risk_model.json"
REPORT_JSON = "report.json"
REPORT_TEXT = "report.txt"
CONFIG_FILE = "config.json"

STAGES = ("simulate", "train", "detect", "analyze", "generate", "solve")


def _dump(obj):
    return (json.dumps(obj, indent=1) + "\n").encode("utf-8")


def _write(out, name, data):
    path = Path(out) / name
    path.write_bytes(data)
    return path


def _read(path, what):
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"{what} not found: {path}")
    return path.read_bytes()


def _risk_data(cfg, override=None):
    path = override or cfg.risk_data
    if path is None:
        return load_risk_data(resources.files("riskpipe.data").joinpath("sample_risk.json").read_bytes())
    return load_risk_data(_read(path, "risk data"))


def cmd_simulate(cfg, out):
    log, truth = generate_episode(cfg.episode_config())
    write_log(log, Path(out) / LOG_FILE)
    _write(out, TRUTH_FILE, _dump({"version": 1, "dt": log.dt, "labels": [str(SkillLabel(int(l))) for l in truth]}))
    return log, truth


def cmd_train(cfg, out):
    t = cfg.training
    _, corpus_seed, holdout_seed, _ = cfg.seeds()
    corpus = random_scenarios(t.episodes, corpus_seed, cfg.scenario, tuple(t.v_max_range), t.duration_jitter)
    data = build_dataset(corpus, cfg.window, cfg.stride)
    hyper = cfg.train_config()
    model = train(data, hyper)
    metrics = {
        "windows": len(data),
        "initial_loss": mean_loss(init_model(data, hyper), data.features, data.labels),
        "final_loss": mean_loss(model, data.features, data.labels),
        "train": evaluate(predict(model, data.features), data.labels).to_dict(),
    }
    if t.holdout:
        held = random_scenarios(t.holdout, holdout_seed, cfg.scenario, tuple(t.v_max_range), t.duration_jitter)
        hdata = build_dataset(held, cfg.window, cfg.stride)
        metrics["holdout"] = evaluate(predict(model, hdata.features), hdata.labels).to_dict()
    _write(out, MODEL_FILE, save_model(model))
    _write(out, METRICS_FILE, _dump(metrics))
    return model, metrics


def cmd_detect(cfg, out, log_path=None, model_path=None):
    log = read_log(log_path or Path(out) / LOG_FILE)
    model = load_model(_read(model_path or Path(out) / MODEL_FILE, "model checkpoint"))
    series = smooth_labels(detect(model, log), cfg.smooth)
    _write(out, LABELS_FILE, dumps_labels(series))
    return series


def cmd_analyze(cfg, out, log_path=None, labels_path=None):
    log = read_log(log_path or Path(out) / LOG_FILE)
    series = loads_labels(_read(labels_path or Path(out) / LABELS_FILE, "labels"))
    profile = build_profile(log, series, cfg.min_duration, cfg.activity)
    _write(out, PROFILE_FILE, dumps_profile(profile))
    return profile


def cmd_generate(cfg, out, profile_path=None, risk_path=None):
    profile = loads_profile(_read(profile_path or Path(out) / PROFILE_FILE, "profile"))
    model = transform(profile, _risk_data(cfg, risk_path))
    doc = serialize_model(model)
    parse_model(doc)  # the document we emit must be one we accept
    _write(out, EXCHANGE_FILE, doc)
    return model


def cmd_solve(cfg, out, model_path=None):
    model = parse_model(_read(model_path or Path(out) / EXCHANGE_FILE, "risk model"))
    report = solve_hybrid(model)
    _write(out, REPORT_JSON, report.to_json())
    _write(out, REPORT_TEXT, report.to_text().encode("utf-8"))
    return report


def cmd_run(cfg, out):
    result = None
    for name, fn in zip(STAGES, (cmd_simulate, cmd_train, cmd_detect, cmd_analyze, cmd_generate, cmd_solve)):
        try:
            result = fn(cfg, out)
        except RiskPipeError as exc:
            exc.stage = name
            raise
    return result


def schema_versions():
    return {
        "log": LOG_SCHEMA,
        "checkpoint": CHECKPOINT_VERSION,
        "labels": LABELS_VERSION,
        "profile": PROFILE_VERSION,
        "exchange": EXCHANGE_SCHEMA,
        "report": REPORT_VERSION,
    }


def build_parser():
    parser = argparse.ArgumentParser(prog="riskpipe", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="store_true", help="print program and file-format versions")
    sub = parser.add_subparsers(dest="command")
    for name in (*STAGES, "run"):
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="pipeline config JSON")
        p.add_argument("--out", type=Path, required=True, help="output directory")
        p.add_argument("--seed", type=int)
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
        p.add_argument("--format", choices=("json", "text"), default="text", help="report format on stdout")
        if name in ("detect", "analyze"):
            p.add_argument("--log", type=Path)
        if name == "detect":
            p.add_argument("--model", type=Path)
        if name == "analyze":
            p.add_argument("--labels", type=Path)
        if name == "generate":
            p.add_argument("--profile", type=Path)
            p.add_argument("--risk-data", type=Path)
        if name == "solve":
            p.add_argument("--risk-model", type=Path)
    return parser


def _execute(args):
    cfg = load_config(args.config, args.overrides, args.seed)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    _write(out, CONFIG_FILE, cfg.dumps())
    cmd = args.command
    if cmd == "simulate":
        log, _ = cmd_simulate(cfg, out)
        print(f"simulated {log.n_samples} samples -> {out / LOG_FILE}")
    elif cmd == "train":
        _, metrics = cmd_train(cfg, out)
        acc = metrics.get("holdout", metrics["train"])["accuracy"]
        print(f"trained on {metrics['windows']} windows, accuracy {acc:.4f} -> {out / MODEL_FILE}")
    elif cmd == "detect":
        series = cmd_detect(cfg, out, args.log, args.model)
        print(f"labeled {len(series)} windows -> {out / LABELS_FILE}")
    elif cmd == "analyze":
        profile = cmd_analyze(cfg, out, args.log, args.labels)
        print("segments: " + " ".join(str(s.skill) for s in profile.segments))
    elif cmd == "generate":
        model = cmd_generate(cfg, out, args.profile, args.risk_data)
        print(f"{len(model.fault_trees)} fault trees, {len(model.states)} states -> {out / EXCHANGE_FILE}")
    else:
        report = cmd_solve(cfg, out, args.risk_model) if cmd == "solve" else cmd_run(cfg, out)
        if args.format == "json":
            sys.stdout.write(report.to_json().decode())
        else:
            sys.stdout.write(report.to_text())


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.version:
        print(f"riskpipe {__version__}")
        for k, v in schema_versions().items():
            print(f"  {k}: {v}")
        return 0
    if args.command is None:
        parser.print_help(sys.stderr)
        return 1
    try:
        _execute(args)
    except (OSError, RiskPipeError) as exc:
        stage = getattr(exc, "stage", None)
        prefix = f"{args.command}[{stage}]" if stage else args.command
        print(f"riskpipe {prefix}: error: {exc}", file=sys.stderr)
        return 2 if isinstance(exc, ModelError) else 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
