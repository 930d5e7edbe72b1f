"""Operator surface: train / eval / ablate / report subcommands.

Exit codes are fixed so study pipelines can be scripted: 0 success,
2 configuration error, 3 numerical blow-up, 4 checkpoint/config
fingerprint mismatch, 5 nothing to report. The environment variable
``FREEFLYER_DOCK_OUT_ROOT`` prefixes any relative output directory.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from . import evaluation, ppo
from .checkpoint import CheckpointError, load_checkpoint
from .config import (
    ABLATION_IDS,
    ConfigError,
    RunConfig,
    ablation_preset,
    config_fingerprint,
    dump_run_config,
    load_run_config,
    validate_run_config,
)
from .dynamics import NonFiniteState
from .evaluation import FingerprintMismatch
from .ppo import NonFiniteLoss

__all__ = ["main", "entrypoint"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_FINGERPRINT = 4
EXIT_EMPTY = 5

OUT_ROOT_ENV = "FREEFLYER_DOCK_OUT_ROOT"


def _resolve_out(path_str: str) -> Path:
    path = Path(path_str)
    root = os.environ.get(OUT_ROOT_ENV)
    if root and not path.is_absolute():
        return Path(root) / path
    return path


def _load_or_default(config_path: str | None) -> RunConfig:
    if config_path is None:
        cfg = RunConfig()
        validate_run_config(cfg)
        return cfg
    return load_run_config(config_path)


def _train_one(cfg: RunConfig, out_dir: Path, progress: bool) -> ppo.TrainedRun:
    resolved = cfg.resolved()
    fingerprint = config_fingerprint(resolved)
    out_dir.mkdir(parents=True, exist_ok=True)
    dump_run_config(resolved, out_dir / "config.yaml")
    (out_dir / "fingerprint.txt").write_text(fingerprint + "\n")
    return ppo.train(
        env_cfg=resolved.env,
        prop_cfg=resolved.propulsion.build(),
        reward_cfg=resolved.rewards,
        noise_cfg=resolved.noise,
        ppo_cfg=resolved.ppo,
        seed=resolved.seed,
        out_dir=out_dir,
        fingerprint=fingerprint,
        progress=progress,
    )


def cmd_train(args: argparse.Namespace) -> int:
    try:
        cfg = _load_or_default(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        out_dir = _resolve_out(args.out)
        _train_one(cfg, out_dir, progress=args.progress)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NonFiniteLoss, NonFiniteState) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def _find_config_for_checkpoint(ckpt_path: Path) -> Path | None:
    for candidate_dir in (ckpt_path.parent, ckpt_path.parent.parent):
        candidate = candidate_dir / "config.yaml"
        if candidate.exists():
            return candidate
    return None


def _eval_once(
    cfg: RunConfig, ckpt_path: Path, n_envs: int, seed: int, allow_mismatch: bool
) -> list[evaluation.EpisodeRecord]:
    resolved = cfg.resolved()
    checkpoint = load_checkpoint(ckpt_path)
    return evaluation.run_eval(
        checkpoint,
        env_cfg=resolved.env,
        prop_cfg=resolved.propulsion.build(),
        reward_cfg=resolved.rewards,
        noise_cfg=resolved.noise,
        n_envs=n_envs,
        seed=seed,
        expected_fingerprint=config_fingerprint(resolved),
        allow_mismatch=allow_mismatch,
    )


def _write_eval_outputs(out_dir: Path, label: str, records: list[evaluation.EpisodeRecord]) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    evaluation.write_records(out_dir / "records.jsonl", records)
    summary = evaluation.summarize(records)
    usage = evaluation.propeller_usage(records)
    (out_dir / "summary.csv").write_text(
        ",".join(evaluation.METRICS_COLUMNS) + "\n" + evaluation.summary_csv_row(label, summary) + "\n"
    )
    (out_dir / "usage.csv").write_text(
        ",".join(evaluation.USAGE_COLUMNS) + "\n" + evaluation.usage_csv_row(label, usage) + "\n"
    )


def cmd_eval(args: argparse.Namespace) -> int:
    ckpt_path = Path(args.checkpoint)
    try:
        config_path = args.config or _find_config_for_checkpoint(ckpt_path)
        if config_path is None:
            print(
                "config error: no --config given and no config.yaml found near the checkpoint",
                file=sys.stderr,
            )
            return EXIT_CONFIG
        cfg = load_run_config(config_path)
        records = _eval_once(cfg, ckpt_path, args.n_envs, args.seed, args.allow_mismatch)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FingerprintMismatch as exc:
        print(f"fingerprint mismatch: {exc} (use --allow-mismatch to override)", file=sys.stderr)
        return EXIT_FINGERPRINT
    except CheckpointError as exc:
        print(f"checkpoint error: {exc}", file=sys.stderr)
        return 1
    except NonFiniteState as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    _write_eval_outputs(_resolve_out(args.out), cfg.ablation.id, records)
    return EXIT_OK


def _write_combined_tables(out_dir: Path, per_config: dict[str, list]) -> None:
    """One metrics row and one usage row per config, pooled across seeds."""
    metric_lines = [",".join(evaluation.METRICS_COLUMNS)]
    usage_lines = [",".join(evaluation.USAGE_COLUMNS)]
    for label in sorted(per_config):
        records = per_config[label]
        metric_lines.append(evaluation.summary_csv_row(label, evaluation.summarize(records)))
        usage_lines.append(evaluation.usage_csv_row(label, evaluation.propeller_usage(records)))
    (out_dir / "metrics_summary.csv").write_text("\n".join(metric_lines) + "\n")
    (out_dir / "propeller_usage.csv").write_text("\n".join(usage_lines) + "\n")


def cmd_ablate(args: argparse.Namespace) -> int:
    try:
        config_ids = [c.strip() for c in args.configs.split(",") if c.strip()]
        seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
        for cid in config_ids:
            if cid not in ABLATION_IDS:
                raise ConfigError("ablation.id", f"must be one of {ABLATION_IDS}, got {cid!r}")
        base = _load_or_default(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out_dir = _resolve_out(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    per_config: dict[str, list] = {}
    failures: list[str] = []
    for cid in config_ids:
        for seed in seeds:
            run_dir = out_dir / cid / f"seed_{seed}"
            try:
                cfg = _load_or_default(args.config)
                cfg.ablation = ablation_preset(cid)
                cfg.seed = seed
                validate_run_config(cfg)
                trained = _train_one(cfg, run_dir, progress=args.progress)
                records = _eval_once(
                    cfg, trained.final_checkpoint, args.eval_envs, args.eval_seed, False
                )
                _write_eval_outputs(run_dir / "eval", cid, records)
                per_config.setdefault(cid, []).extend(records)
            except Exception as exc:  # record and keep going with remaining runs
                failures.append(f"{cid}/seed_{seed}: {type(exc).__name__}: {exc}")
                print(f"run {cid}/seed_{seed} failed: {exc}", file=sys.stderr)
    if per_config:
        _write_combined_tables(out_dir, per_config)
    if failures:
        (out_dir / "failures.txt").write_text("\n".join(failures) + "\n")
        return 1
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    runs_dir = _resolve_out(args.runs)
    per_config: dict[str, list] = {}
    incomplete: list[str] = []
    for config_path in sorted(runs_dir.rglob("config.yaml")):
        run_dir = config_path.parent
        records_path = run_dir / "eval" / "records.jsonl"
        try:
            cfg = load_run_config(config_path)
        except ConfigError as exc:
            incomplete.append(f"{run_dir}: bad config ({exc})")
            continue
        if not records_path.exists():
            incomplete.append(f"{run_dir}: no evaluation records")
            continue
        per_config.setdefault(cfg.ablation.id, []).extend(evaluation.read_records(records_path))
    for message in incomplete:
        print(f"warning: skipping {message}", file=sys.stderr)
    if not per_config:
        print(f"no completed runs with evaluation records under {runs_dir}", file=sys.stderr)
        return EXIT_EMPTY
    _write_combined_tables(runs_dir, per_config)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="freeflyer-dock", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train one policy")
    p_train.add_argument("--config", default=None, help="YAML run configuration")
    p_train.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_train.add_argument("--out", required=True, help="run directory to create")
    p_train.add_argument("--progress", action="store_true", help="print periodic progress")
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint deterministically")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--config", default=None, help="defaults to config.yaml near the checkpoint")
    p_eval.add_argument("--n-envs", type=int, default=100, help="episodes to run")
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.add_argument("--out", required=True)
    p_eval.add_argument("--allow-mismatch", action="store_true")
    p_eval.set_defaults(func=cmd_eval)

    p_ablate = sub.add_parser("ablate", help="train and evaluate a grid of configurations")
    p_ablate.add_argument("--configs", default="A,B,C,D", help="comma-separated configuration ids")
    p_ablate.add_argument("--seeds", default="0", help="comma-separated seeds")
    p_ablate.add_argument("--config", default=None, help="base YAML configuration")
    p_ablate.add_argument("--out", required=True)
    p_ablate.add_argument("--eval-envs", type=int, default=100)
    p_ablate.add_argument("--eval-seed", type=int, default=0)
    p_ablate.add_argument("--progress", action="store_true")
    p_ablate.set_defaults(func=cmd_ablate)

    p_report = sub.add_parser("report", help="regenerate tables from stored run directories")
    p_report.add_argument("--runs", required=True)
    p_report.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


def entrypoint() -> None:
    sys.exit(main())
