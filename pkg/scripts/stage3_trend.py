"""Long single-stage end-to-end run on a small maze set; prints a moving average of the group reward."""

import argparse

import numpy as np

from planrl.envsim.tasks import generate_maze_tasks
from planrl.grpo import GrpoConfig, PolicyParams, collect_group, train_step

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--steps", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--k", type=int, default=1, help="plan candidates per generation")
    ap.add_argument("--lr", type=float, default=10.0)
    args = ap.parse_args()
    tasks = generate_maze_tasks(20, 500)
    cfg = GrpoConfig(group_size=4, learning_rate=args.lr, plan_candidates=args.k)
    params = PolicyParams.initial()
    ref = params.copy()
    rng = np.random.default_rng(args.seed)
    rewards = []
    for step in range(args.steps):
        task = tasks[int(rng.integers(len(tasks)))]
        params, m = train_step([collect_group(task, params, 3, cfg, seed=(args.seed, step))], params, ref, cfg)
        rewards.append(m.mean_reward)
        if (step + 1) % 20 == 0:
            print(f"step {step + 1:>4}  reward (last 20) {np.mean(rewards[-20:]):.3f}")
