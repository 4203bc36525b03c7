"""Command-line entry points for the experiment pipeline."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .data import (
    KUAIRAND_COLUMNS, ML1M_COLUMNS, kcore_filter, parse_log, save_dataset,
    segment_sessions, split_train_test, summarize_distributions, synth_generate,
)
from .harness import (
    ConfigError, EXIT_CONFIG, EXIT_OK, EXIT_STAGE, ExperimentConfig,
    build_agent, default_config, derive_seed, load_config, resolve_out_dir,
    run_experiment, run_sweep, stage_data, stage_retention, stage_uirm,
)
from .agents.persist import save_agent


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="path to a key = value config file")
    parser.add_argument("--seed", type=int, help="replace run.seeds with one seed")
    parser.add_argument("--mode", choices=("request", "whole_session", "cross_session"))
    parser.add_argument("--agent", help="agent name (random/cf/a2c/ddpg/td3/cem)")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--override", action="append", default=[],
                        metavar="KEY=VALUE", help="config override (repeatable)")


def _build_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else default_config()
    overrides: dict[str, str] = {}
    for item in args.override:
        if "=" not in item:
            raise ConfigError(f"--override expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    if args.seed is not None:
        overrides["run.seeds"] = str(args.seed)
    if args.mode:
        overrides["env.mode"] = args.mode
    if args.agent:
        overrides["agent.name"] = args.agent
    return cfg.with_overrides(overrides) if overrides else cfg


def _cmd_synth_data(cfg: ExperimentConfig, args) -> int:
    out = resolve_out_dir(args.out, "synth-data")
    out.mkdir(parents=True, exist_ok=True)
    dataset, _ = synth_generate(cfg.synth_config(derive_seed(cfg.seeds[0], "data", 0)))
    save_dataset(dataset, out / "dataset.bin")
    (out / "distributions.jsonl").write_text(
        summarize_distributions(dataset, cfg["env.max_return_day"]).to_jsonl())
    print(out / "dataset.bin")
    return EXIT_OK


def _cmd_preprocess(cfg: ExperimentConfig, args) -> int:
    source = cfg["data.source"]
    if source == "synthetic":
        raise ConfigError("preprocess needs data.source pointing at a log file")
    out = resolve_out_dir(args.out, "preprocess")
    out.mkdir(parents=True, exist_ok=True)
    columns = KUAIRAND_COLUMNS if cfg["data.format"] == "kuairand" else ML1M_COLUMNS
    result = parse_log(source, columns)
    dataset = result.dataset
    if cfg["data.kcore"] > 0:
        dataset = kcore_filter(dataset, cfg["data.kcore"])
    dataset = segment_sessions(dataset)
    train, test = split_train_test(dataset, cfg["data.split_ratio"])
    save_dataset(train, out / "train.bin")
    save_dataset(test, out / "test.bin")
    (out / "distributions.jsonl").write_text(
        summarize_distributions(dataset, cfg["env.max_return_day"]).to_jsonl())
    summary = {
        "skipped_rows": result.skipped_rows,
        "users": dataset.users.n_users,
        "items": dataset.items.n_items,
        "interactions": dataset.n_records,
        "sessions": dataset.sessions.n_sessions,
    }
    (out / "ingest.json").write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n")
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def _cmd_pretrain_sim(cfg: ExperimentConfig, args) -> int:
    out = resolve_out_dir(args.out, "pretrain-sim")
    out.mkdir(parents=True, exist_ok=True)
    master = cfg.seeds[0]
    train, test = stage_data(cfg, out, master)
    seed_dir = out / f"seed_{cfg.seeds[0]}"
    seed_dir.mkdir(exist_ok=True)
    _, aucs = stage_uirm(cfg, train, test, seed_dir, derive_seed(master, "uirm", 0))
    print(json.dumps({"checkpoint": str(seed_dir / "uirm.bin"), "auc": aucs},
                     sort_keys=True))
    return EXIT_OK


def _cmd_train_agent(cfg: ExperimentConfig, args) -> int:
    out = resolve_out_dir(args.out, "train-agent")
    out.mkdir(parents=True, exist_ok=True)
    master = cfg.seeds[0]
    train, test = stage_data(cfg, out, master)
    seed_dir = out / f"seed_{cfg.seeds[0]}"
    seed_dir.mkdir(exist_ok=True)
    model, _ = stage_uirm(cfg, train, test, seed_dir, derive_seed(master, "uirm", 0))
    retention = stage_retention(cfg, train, model, derive_seed(master, "retention", 0))
    agent, trace = build_agent(cfg, train, model, retention,
                               derive_seed(master, "agent", 0))
    save_agent(agent, seed_dir / "agent.bin")
    with open(seed_dir / "train_trace.jsonl", "w") as fh:
        for entry in trace:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")
    print(seed_dir / "agent.bin")
    return EXIT_OK


def _cmd_evaluate(cfg: ExperimentConfig, args) -> int:
    out = resolve_out_dir(args.out, "evaluate")
    result = run_experiment(cfg, out)
    if result.status != EXIT_OK:
        print(f"stage {result.failed_stage} failed: {result.error}", file=sys.stderr)
        return EXIT_STAGE
    print(out / "report.json")
    return EXIT_OK


def _cmd_sweep(cfg: ExperimentConfig, args) -> int:
    if not args.param or not args.values:
        raise ConfigError("sweep needs --param and --values")
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    out = resolve_out_dir(args.out, "sweep")
    results = run_sweep(cfg, args.param, values, out)
    failures = [r for r in results if r.status != EXIT_OK]
    for r in results:
        print(f"{r.out_dir}\t{'ok' if r.status == EXIT_OK else 'failed'}")
    return EXIT_STAGE if failures else EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="slatesim",
        description="Slate recommendation simulator: data, simulator pretraining, "
                    "agent training, and evaluation.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("synth-data", "generate a synthetic interaction log"),
        ("preprocess", "parse and filter a raw log into train/test containers"),
        ("pretrain-sim", "pretrain the immediate-response model"),
        ("train-agent", "train the configured agent against the simulator"),
        ("evaluate", "run the full multi-seed pipeline and aggregate metrics"),
        ("sweep", "repeat the pipeline over a list of values for one key"),
    ):
        p = sub.add_parser(name, help=help_text)
        _add_common(p)
        if name == "sweep":
            p.add_argument("--param", help="config key to sweep")
            p.add_argument("--values", help="comma-separated values")

    args = parser.parse_args(argv)
    handlers = {
        "synth-data": _cmd_synth_data,
        "preprocess": _cmd_preprocess,
        "pretrain-sim": _cmd_pretrain_sim,
        "train-agent": _cmd_train_agent,
        "evaluate": _cmd_evaluate,
        "sweep": _cmd_sweep,
    }
    try:
        cfg = _build_config(args)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return handlers[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"stage failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
