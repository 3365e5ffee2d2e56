"""Train the bundled quickstart config, write reward curves, and evaluate on held-out mazes."""

import argparse
import sys
from pathlib import Path

from planrl.cli import bundled_config, main


def run(argv: list[str]) -> None:
    code = main(argv)
    if code != 0:
        sys.exit(code)


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workdir", default=".")
    args = ap.parse_args()
    out = f"runs/quickstart_seed{args.seed}"
    run(["--workdir", args.workdir, "train", "--config", "quickstart.json", "--seed", str(args.seed), "--out", out])
    run(["--workdir", args.workdir, "curves", out, "--svg"])
    ckpt = sorted((Path(args.workdir) / out).glob("ckpt_*_stage3.json"))[-1]
    heldout = bundled_config("quickstart.json").parent.parent / "tasks" / "maze_heldout.json"
    run(["--workdir", args.workdir, "eval", "--ckpt", str(ckpt), "--tasks", str(heldout), "--mode", "both",
         "--out", f"{out}/heldout_eval.json"])
