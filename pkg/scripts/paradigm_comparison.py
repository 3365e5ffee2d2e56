"""Compare plan-guided and plan-free rollouts of one checkpoint on every bundled task set."""

import argparse
from pathlib import Path

from planrl.cli import bundled_config
from planrl.curriculum import evaluate
from planrl.envsim import load_tasks
from planrl.grpo import PolicyParams, load_checkpoint

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--ckpt", help="checkpoint JSON; defaults to the untrained policy")
    ap.add_argument("--k", type=int, default=4)
    args = ap.parse_args()
    params = load_checkpoint(args.ckpt)[0] if args.ckpt else PolicyParams.initial()
    task_dir = bundled_config("quickstart.json").parent.parent / "tasks"
    print(f"{'task set':<20}{'adaplan':>10}{'react':>10}")
    for path in sorted(Path(task_dir).glob("*.json")):
        tasks = load_tasks(path)
        scores = [evaluate(params, tasks, mode, plan_candidates=args.k).score for mode in ("adaplan", "react")]
        print(f"{path.stem:<20}{scores[0]:>10.1f}{scores[1]:>10.1f}")
