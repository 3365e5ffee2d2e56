"""Command line: train, eval, check, curves, gen-tasks.

Exit codes: 0 success, 1 internal error, 2 usage or config error,
3 sanity-floor halt, 4 property failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path

from .checks import SUITES, run_suite
from .curriculum import ScheduleConfig, evaluate, run_curriculum
from .envsim import TaskValidationError, load_tasks, save_tasks
from .envsim.tasks import generate_maze_tasks, generate_textcraft_tasks, generate_wordle_tasks
from .grpo import GrpoConfig, config_hash, load_checkpoint
from .judge import DEFAULT_MOCK_SCRIPT, HTTPBackend, LLMJudge, mock_backend
from .reward import Scorer

EXIT_OK, EXIT_INTERNAL, EXIT_USAGE, EXIT_HALT, EXIT_PROPERTY = 0, 1, 2, 3, 4

log = logging.getLogger("planrl")


class ConfigError(Exception):
    pass


# -- run configuration ------------------------------------------------------------

@dataclass
class RunConfig:
    schedule: ScheduleConfig
    grpo: GrpoConfig
    judge: dict
    task_files: list[Path]
    output_dir: Path
    seed: int
    heldout_files: list[Path] = field(default_factory=list)

    def hash(self) -> str:
        digests = [hashlib.sha256(p.read_bytes()).hexdigest() for p in self.task_files]
        return config_hash({"schedule": self.schedule.to_dict(), "grpo": asdict(self.grpo),
                            "judge": self.judge, "tasks": digests, "seed": self.seed})


def _known(cls, d: dict, where: str) -> dict:
    names = {f.name for f in fields(cls)}
    extra = set(d) - names
    if extra:
        raise ConfigError(f"unknown {where} setting(s): {', '.join(sorted(extra))}")
    return d


def bundled_config(name: str) -> Path | None:
    p = resources.files("planrl.data").joinpath("configs", name)
    return Path(str(p)) if p.is_file() else None


def resolve_config_path(path: str, workdir: Path) -> Path:
    p = (workdir / path)
    if p.is_file():
        return p
    b = bundled_config(Path(path).name)
    if b is not None and not Path(path).parent.parts:
        return b
    raise ConfigError(f"config file not found: {p}")


def load_run_config(path: Path, workdir: Path, seed: int | None = None, out: str | None = None) -> RunConfig:
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})") from None
    base = path.parent

    def files(key) -> list[Path]:
        v = raw.get(key, [])
        v = [v] if isinstance(v, str) else list(v)
        out_paths = []
        for f in v:
            p = Path(f) if Path(f).is_absolute() else base / f
            if not p.is_file():
                raise ConfigError(f"task file not found: {p}")
            out_paths.append(p)
        return out_paths

    task_files = files("tasks")
    if not task_files:
        raise ConfigError("config lists no task files")
    sched = dict(_known(ScheduleConfig, raw.get("schedule", {}), "schedule"))
    run_seed = int(seed if seed is not None else raw.get("seed", sched.get("seed", 0)))
    sched["seed"] = run_seed
    try:
        schedule = ScheduleConfig(**sched)
        grpo = GrpoConfig(**_known(GrpoConfig, raw.get("grpo", {}), "grpo"))
        schedule.validate()
        grpo.validate()
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{path}: {e}") from None
    out_dir = workdir / (out or raw.get("output_dir", "runs/run"))
    return RunConfig(schedule, grpo, dict(raw.get("judge", {"backend": "none"})), task_files, out_dir, run_seed,
                     files("heldout_tasks"))


def build_scorer(judge: dict) -> Scorer:
    backend = judge.get("backend", "none")
    if backend == "none":
        return Scorer()
    if backend == "mock":
        script = {**DEFAULT_MOCK_SCRIPT, **judge.get("script", {})}
        return Scorer(llm=LLMJudge(mock_backend(script)), rules=judge.get("rules", True))
    if backend == "http":
        for key in ("url", "model"):
            if key not in judge:
                raise ConfigError(f"http judge needs {key!r}")
        http = HTTPBackend(judge["url"], judge["model"], judge.get("token_env", "PLANRL_JUDGE_TOKEN"),
                           float(judge.get("temperature", 0.0)), int(judge.get("max_in_flight", 8)),
                           debug=bool(judge.get("debug", False)))
        return Scorer(llm=LLMJudge(http, int(judge.get("max_retries", 2))), rules=judge.get("rules", True))
    raise ConfigError(f"unknown judge backend {backend!r}")


def _load_task_list(paths: list[Path]):
    tasks = []
    for p in paths:
        try:
            tasks += load_tasks(p)
        except TaskValidationError as e:
            raise ConfigError(f"{p}: {e}") from None
    return tasks


# -- commands -----------------------------------------------------------------------

def cmd_train(args) -> int:
    workdir = Path(args.workdir)
    rc = load_run_config(resolve_config_path(args.config, workdir), workdir, args.seed, args.out)
    tasks = _load_task_list(rc.task_files)
    scorer = build_scorer(rc.judge)
    h = rc.hash()
    report = run_curriculum(rc.schedule, rc.grpo, tasks, out_dir=rc.output_dir, scorer=scorer, cfg_hash=h,
                            log_trajectories=not args.no_trajectories)
    n_dis = sum(e["kind"] == "judge_disagreement" for e in scorer.events)
    print(f"run {h} seed {rc.seed}: {report.steps} steps, checkpoints {', '.join(report.checkpoints)}")
    print(f"judge events: {len(scorer.events)} ({n_dis} disagreements resolved by rules)")
    if report.final_eval:
        print(f"final adaplan eval on training tasks: mean e2e {report.final_eval['mean_e2e']:.3f}, "
              f"success {report.final_eval['success_rate']:.3f}")
    print(f"artifacts in {rc.output_dir}")
    if report.halted:
        print(f"sanity floor halt: {report.halt_reason}", file=sys.stderr)
        return EXIT_HALT
    return EXIT_OK


def cmd_eval(args) -> int:
    workdir = Path(args.workdir)
    task_path = workdir / args.tasks
    if not task_path.is_file():
        raise ConfigError(f"task file not found: {task_path}")
    tasks = _load_task_list([task_path])
    if not tasks:
        raise ConfigError(f"{task_path} holds no tasks")
    params, meta = None, {}
    oracle = args.ckpt == "oracle"
    if not oracle:
        ckpt = workdir / args.ckpt
        if not ckpt.is_file():
            raise ConfigError(f"checkpoint not found: {ckpt}")
        params, meta = load_checkpoint(ckpt)
        if args.config:
            rc = load_run_config(resolve_config_path(args.config, workdir), workdir, meta.get("seed"))
            if rc.hash() != meta.get("config_hash") and not args.allow_hash_mismatch:
                raise ConfigError(f"checkpoint config hash {meta.get('config_hash')} does not match "
                                  f"{rc.hash()}; pass --allow-hash-mismatch to evaluate anyway")
    modes = ["adaplan", "react"] if args.mode == "both" else [args.mode]
    out = {"checkpoint": args.ckpt, "config_hash": meta.get("config_hash"), "seed": meta.get("seed"), "tasks": args.tasks, "reports": {}}
    for mode in modes:
        rep = evaluate(params, tasks, mode, temperature=args.temperature, seed=args.seed, oracle=oracle,
                       plan_candidates=args.k)
        d = rep.to_dict()
        if not args.rows:
            d.pop("rows")
        out["reports"][mode] = d
        print(f"{mode}: score {rep.score:.2f} (mean e2e {rep.mean_e2e:.3f}), success {rep.success_rate:.3f}, "
              f"turns {rep.mean_turns:.2f} vs oracle {rep.mean_oracle_turns:.2f}")
    if args.out:
        (workdir / args.out).write_text(json.dumps(out, indent=1) + "\n")
    return EXIT_OK


def cmd_check(args) -> int:
    names = list(SUITES) if args.suite == "all" else [args.suite]
    failed = False
    for name in names:
        res = run_suite(name, args.seed)
        status = "PASS" if res.ok else "FAIL"
        print(f"{status} {name}: {res.trials - len(res.failures)}/{res.trials} in {res.seconds:.2f}s {res.detail}")
        for f in res.failures[:20]:
            print(f"  counterexample: {f}")
        failed |= not res.ok
    return EXIT_PROPERTY if failed else EXIT_OK


CURVE_COLUMNS = ["config_hash", "seed", "kind", "step", "epoch", "stage", "planner_quality", "executor_adherence", "e2e"]


def curves_from_metrics(rows: list[dict]) -> list[dict]:
    """Normalized component curves with a marker row at each stage change."""
    out, prev_stage = [], None
    for r in rows:
        stage = r["stage"]
        if stage != prev_stage:
            out.append({"config_hash": r["config_hash"], "seed": r["seed"], "kind": "boundary", "step": r["step"], "epoch": r["epoch"], "stage": stage,
                        "planner_quality": "", "executor_adherence": "", "e2e": ""})
            prev_stage = stage
        out.append({"config_hash": r["config_hash"], "seed": r["seed"], "kind": "point", "step": r["step"], "epoch": r["epoch"], "stage": stage,
                    "planner_quality": repr(float(r["plan_quality"]) / 15),
                    "executor_adherence": repr(float(r["adherence"]) / 2), "e2e": repr(float(r["e2e"]) / 2)})
    return out


def render_svg(points: list[dict], width: int = 640, height: int = 320) -> str:
    pts = [p for p in points if p["kind"] == "point"]
    n = max(1, len(pts) - 1)
    pad = 30

    def xy(i, v):
        return pad + i * (width - 2 * pad) / n, height - pad - float(v) * (height - 2 * pad)

    colors = {"planner_quality": "#1f77b4", "executor_adherence": "#ff7f0e", "e2e": "#2ca02c"}
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
             f'<desc>config_hash={pts[0]["config_hash"] if pts else ""} seed={pts[0]["seed"] if pts else ""}</desc>',
             f'<rect x="{pad}" y="{pad}" width="{width - 2 * pad}" height="{height - 2 * pad}" '
             'fill="none" stroke="#999"/>']
    step_index = {p["step"]: i for i, p in enumerate(pts)}
    for b in (p for p in points if p["kind"] == "boundary"):
        x, _ = xy(step_index[b["step"]], 0)
        parts.append(f'<line x1="{x:.1f}" y1="{pad}" x2="{x:.1f}" y2="{height - pad}" stroke="#bbb" '
                     'stroke-dasharray="4"/>')
    for key, color in colors.items():
        coords = " ".join("{:.1f},{:.1f}".format(*xy(i, p[key])) for i, p in enumerate(pts))
        parts.append(f'<polyline fill="none" stroke="{color}" points="{coords}"/>')
        parts.append(f'<text x="{pad + 5}" y="{pad + 15 + 15 * list(colors).index(key)}" fill="{color}" '
                     f'font-size="12">{key}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def cmd_curves(args) -> int:
    run_dir = Path(args.workdir) / args.run_dir
    metrics = run_dir / "metrics.csv"
    if not metrics.is_file():
        raise ConfigError(f"no metrics.csv in {run_dir}")
    with metrics.open() as f:
        rows = [r for r in csv.DictReader(f)]
    for r in rows:
        r["stage"], r["step"], r["epoch"] = int(r["stage"]), int(r["step"]), int(r["epoch"])
    points = curves_from_metrics(rows)
    with (run_dir / "curves.csv").open("w", newline="") as f:
        w = csv.DictWriter(f, CURVE_COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(points)
    if args.svg:
        (run_dir / "curves.svg").write_text(render_svg(points))
    print(f"wrote {run_dir / 'curves.csv'} ({sum(p['kind'] == 'point' for p in points)} points)")
    return EXIT_OK


BUNDLED_SETS = {
    "maze_train.json": lambda: generate_maze_tasks(40, 100),
    "wordle_train.json": lambda: generate_wordle_tasks(20, 200),
    "maze_heldout.json": lambda: generate_maze_tasks(30, 300),
    "textcraft.json": lambda: generate_textcraft_tasks(18, 400),
}


def cmd_gen_tasks(args) -> int:
    out = Path(args.workdir) / args.out
    out.mkdir(parents=True, exist_ok=True)
    if args.env:
        gen = {"maze": lambda: generate_maze_tasks(args.n, args.seed, args.size),
               "wordle": lambda: generate_wordle_tasks(args.n, args.seed),
               "textcraft": lambda: generate_textcraft_tasks(args.n, args.seed)}[args.env]
        path = out / f"{args.env}_{args.n}_seed{args.seed}.json"
        save_tasks(gen(), path)
        print(f"wrote {path}")
        return EXIT_OK
    for name, gen in BUNDLED_SETS.items():
        save_tasks(gen(), out / name)
        print(f"wrote {out / name}")
    return EXIT_OK


# -- entry point ----------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="planrl", description=__doc__.splitlines()[0])
    p.add_argument("--workdir", default=".", help="base directory for every relative path")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="run the staged training schedule")
    t.add_argument("--config", required=True, help="run config JSON (bundled name such as quickstart.json works)")
    t.add_argument("--seed", type=int, help="override the config seed")
    t.add_argument("--out", help="override the output directory")
    t.add_argument("--no-trajectories", action="store_true", help="skip the trajectory JSONL log")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint without learning")
    e.add_argument("--ckpt", required=True, help="checkpoint JSON, or 'oracle' for the scripted policy")
    e.add_argument("--tasks", required=True, help="task JSON file")
    e.add_argument("--mode", choices=["adaplan", "react", "both"], default="adaplan")
    e.add_argument("--config", help="run config whose hash must match the checkpoint")
    e.add_argument("--allow-hash-mismatch", action="store_true")
    e.add_argument("--temperature", type=float, default=0.0)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--k", type=int, default=4, help="plan candidates per generation")
    e.add_argument("--rows", action="store_true", help="include per-task rows in the JSON output")
    e.add_argument("--out", help="write the report JSON here")
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("check", help="run a randomized invariant suite")
    c.add_argument("suite", choices=[*SUITES, "all"])
    c.add_argument("--seed", type=int, help="fix the suite seed (default: fresh entropy)")
    c.set_defaults(func=cmd_check)

    v = sub.add_parser("curves", help="normalized reward curves from a run directory")
    v.add_argument("run_dir")
    v.add_argument("--svg", action="store_true")
    v.set_defaults(func=cmd_curves)

    g = sub.add_parser("gen-tasks", help="write seeded task files")
    g.add_argument("--out", default="tasks")
    g.add_argument("--env", choices=["maze", "wordle", "textcraft"], help="generate one custom set instead")
    g.add_argument("--n", type=int, default=10)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--size", type=int, default=7)
    g.set_defaults(func=cmd_gen_tasks)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as e:  # noqa: BLE001
        log.exception("internal error")
        print(f"internal error: {e!r}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
