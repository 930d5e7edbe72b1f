#!/usr/bin/env python3
"""Two-minute demo: train a small policy, evaluate it, print the metrics.

Uses a heavily reduced budget, so the numbers are nowhere near converged;
the point is to exercise the full train -> checkpoint -> eval -> summary
pipeline in one sitting.
"""

import argparse
import sys

import numpy as np

from freeflyer_dock import ppo
from freeflyer_dock.checkpoint import load_checkpoint
from freeflyer_dock.config import RunConfig, ablation_preset, config_fingerprint
from freeflyer_dock.evaluation import (
    METRICS_COLUMNS,
    propeller_usage,
    run_eval,
    summarize,
    summary_csv_row,
)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="runs/demo")
    parser.add_argument("--config-id", default="B", choices=["A", "B", "C", "D"])
    parser.add_argument("--steps", type=int, default=120_000)
    parser.add_argument("--eval-envs", type=int, default=50)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    cfg = RunConfig()
    cfg.ablation = ablation_preset(args.config_id)
    cfg.seed = args.seed
    resolved = cfg.resolved()
    resolved.ppo.total_steps = args.steps
    fingerprint = config_fingerprint(resolved)

    run = ppo.train(
        env_cfg=resolved.env,
        prop_cfg=resolved.propulsion.build(),
        reward_cfg=resolved.rewards,
        noise_cfg=resolved.noise,
        ppo_cfg=resolved.ppo,
        seed=resolved.seed,
        out_dir=args.out,
        fingerprint=fingerprint,
        progress=True,
    )
    checkpoint = load_checkpoint(run.final_checkpoint)
    records = run_eval(
        checkpoint,
        env_cfg=resolved.env,
        prop_cfg=resolved.propulsion.build(),
        reward_cfg=resolved.rewards,
        noise_cfg=resolved.noise,
        n_envs=args.eval_envs,
        seed=args.seed + 1000,
        expected_fingerprint=fingerprint,
    )
    print(",".join(METRICS_COLUMNS))
    print(summary_csv_row(args.config_id, summarize(records)))
    print("propeller usage:", np.round(propeller_usage(records), 3))
    return 0


if __name__ == "__main__":
    sys.exit(main())
