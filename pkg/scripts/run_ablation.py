#!/usr/bin/env python3
"""Run the full actuation study: four configurations, multiple seeds.

Produces one combined metrics table (one row per configuration, episodes
pooled across seeds) plus the per-propeller usage table. With defaults
this is hours of CPU time; pass --quick for a reduced-budget sanity pass.

Examples:
    python scripts/run_ablation.py --out runs/study
    python scripts/run_ablation.py --out runs/smoke --quick --seeds 0
"""

import argparse
import sys
import tempfile
from pathlib import Path

import yaml

from freeflyer_dock.cli import main as cli_main

QUICK_OVERRIDES = {
    "env": {"episode_length": 60},
    "ppo": {"total_steps": 40_000, "horizon": 64, "n_envs": 8, "checkpoint_interval": 50},
}


def parse_args():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", required=True, help="study output directory")
    parser.add_argument("--configs", default="A,B,C,D")
    parser.add_argument("--seeds", default="0,1,2")
    parser.add_argument("--config", default=None, help="base YAML config to start from")
    parser.add_argument("--eval-envs", type=int, default=300)
    parser.add_argument("--quick", action="store_true", help="tiny budget smoke run")
    return parser.parse_args()


def main():
    args = parse_args()
    argv = [
        "ablate",
        "--configs", args.configs,
        "--seeds", args.seeds,
        "--out", args.out,
        "--eval-envs", str(args.eval_envs),
        "--progress",
    ]
    if args.quick:
        base = {}
        if args.config:
            base = yaml.safe_load(Path(args.config).read_text()) or {}
        for section, overrides in QUICK_OVERRIDES.items():
            base.setdefault(section, {}).update(overrides)
        tmp = tempfile.NamedTemporaryFile("w", suffix=".yaml", delete=False)
        yaml.safe_dump(base, tmp)
        tmp.close()
        argv += ["--config", tmp.name]
    elif args.config:
        argv += ["--config", args.config]
    return cli_main(argv)


if __name__ == "__main__":
    sys.exit(main())
