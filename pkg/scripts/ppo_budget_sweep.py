"""Sweep PPO step budget and entropy bonus on the toy rupture surrogate.

Prints, per setting, the generated-batch reward and how many of the 10
outcome-histogram bins the retained rows occupy. This is the sweep behind
the toy config's choice of total_steps and entropy_coef.

    python3 scripts/ppo_budget_sweep.py --steps 20480 40960 81920 --entropy 0 0.01
"""

import argparse
import time

import numpy as np

from simgen.data import split_dataset
from simgen.env import GenEnvironment, RewardConfig
from simgen.generator import filter_valid, generate_batch, histogram_outcomes
from simgen.oracle import synth_dataset
from simgen.ppo import PpoConfig, train_agent
from simgen.surrogate import GbdtConfig, fit


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, nargs="+", default=[20480, 40960, 81920])
    ap.add_argument("--entropy", type=float, nargs="+", default=[0.0, 0.01])
    ap.add_argument("--seed", type=int, default=4)
    ap.add_argument("--n", type=int, default=5000, help="generated batch size")
    args = ap.parse_args()

    ds = split_dataset(synth_dataset("rupture", 2000, seed=1),
                       {"train": 0.8, "validation": 0.0, "test": 0.2}, seed=2)
    model = fit(ds.subset("train"), GbdtConfig(monotone={"width": -1, "height": -1}), "binary")
    reward = RewardConfig()
    print(f"{'steps':>7} {'entropy':>8} {'reward':>7} {'retained':>8} {'bins':>4} {'secs':>6}")
    for steps in args.steps:
        for ent in args.entropy:
            start = time.perf_counter()
            env = GenEnvironment(model, reward, seed=3)
            bundle, _ = train_agent(env, PpoConfig(total_steps=steps, entropy_coef=ent, seed=args.seed))
            gd = generate_batch(bundle, model, args.n, seed=5, reward=reward)
            kept, frac = filter_valid(gd)
            r = np.where(gd.valid, gd.predicted, reward.invalid_penalty).mean()
            bins = int(np.count_nonzero(histogram_outcomes(kept.predicted, 10))) if len(kept) else 0
            print(f"{steps:>7} {ent:>8.3g} {r:>7.4f} {frac:>8.3f} {bins:>4} "
                  f"{time.perf_counter() - start:>6.1f}")


if __name__ == "__main__":
    main()
