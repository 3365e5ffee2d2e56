"""Quickstart training over several seeds; prints stage-wise component trends per seed."""

import argparse
import csv
import json
from pathlib import Path

import numpy as np

from planrl.cli import main


def window(rows, stage, key, first):
    vals = [float(r[key]) for r in rows if int(r["stage"]) == stage]
    k = max(1, round(0.2 * len(vals)))
    return float(np.mean(vals[:k] if first else vals[-k:]))


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--workdir", default=".")
    ap.add_argument("--config", default="quickstart.json")
    args = ap.parse_args()
    print("seed  adherence(stage1)  plan_quality(stage2)  e2e(stage3 last)  final_eval_e2e")
    for seed in args.seeds:
        out = f"runs/sweep_seed{seed}"
        if main(["--workdir", args.workdir, "train", "--config", args.config, "--seed", str(seed), "--out", out,
                 "--no-trajectories"]) != 0:
            print(f"{seed}: run failed")
            continue
        run_dir = Path(args.workdir) / out
        with (run_dir / "metrics.csv").open() as f:
            rows = list(csv.DictReader(f))
        final = json.loads((run_dir / "report.json").read_text())["final_eval"]["mean_e2e"]
        print(f"{seed:>4}  {window(rows, 1, 'adherence', True):.2f} -> {window(rows, 1, 'adherence', False):.2f}"
              f"       {window(rows, 2, 'plan_quality', True):.2f} -> {window(rows, 2, 'plan_quality', False):.2f}"
              f"         {window(rows, 3, 'e2e', False):.2f}             {final:.2f}")
