"""Staged training schedule, evaluation and run bookkeeping."""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .adaplan import EpisodeConfig, RuleSelector, run_episode
from .envsim import TaskSpec, oracle_optimal_length
from .grpo import GrpoConfig, PolicyParams, collect_group, config_hash, save_checkpoint, train_step
from .oracle import OraclePlanner
from .policy import PolicyAgent
from .reward import Scorer, score_trajectory, stage_components

log = logging.getLogger(__name__)

METRIC_COLUMNS = [
    "config_hash", "seed", "step", "epoch", "stage", "version", "mean_reward", "format", "adherence", "e2e",
    "plan_quality", "success", "clip_frac", "kl", "mean_abs_adv", "loss", "grad_norm",
]


class SanityHalt(RuntimeError):
    """Mean format reward fell below the floor after an epoch."""


class PlanProvider(str, Enum):
    EXTERNAL = "external"
    SELF = "self_generate_then_select"


@dataclass(frozen=True)
class StagePlanSource:
    stage: int
    plan_provider: PlanProvider

    @classmethod
    def for_stage(cls, stage: int) -> "StagePlanSource":
        return cls(stage, PlanProvider.EXTERNAL if stage == 1 else PlanProvider.SELF)


@dataclass
class ScheduleConfig:
    epochs_per_stage: tuple[int, int, int] = (1, 2, 1)
    order: tuple[int, ...] = (1, 2, 3)
    joint: bool = False  # one merged stage using every reward component
    groups_per_step: int = 4
    seed: int = 0
    reset_ref_each_stage: bool = True
    sanity_floor: float = 0.1
    eval_temperature: float = 0.0
    tasks: list[TaskSpec] = field(default_factory=list, repr=False)

    def __post_init__(self) -> None:
        self.epochs_per_stage = tuple(int(e) for e in self.epochs_per_stage)
        self.order = tuple(int(s) for s in self.order)

    def validate(self) -> None:
        if len(self.epochs_per_stage) != 3 or any(e < 1 for e in self.epochs_per_stage):
            raise ValueError("epochs_per_stage needs three positive entries")
        if not self.order or any(s not in (1, 2, 3) for s in self.order) or len(set(self.order)) != len(self.order):
            raise ValueError("order must list distinct stages from {1, 2, 3}")
        if self.groups_per_step < 1:
            raise ValueError("groups_per_step must be positive")

    def segments(self) -> list[tuple[int, int]]:
        """(stage, epochs) in run order; the joint ablation is a single stage 0."""
        if self.joint:
            return [(0, sum(self.epochs_per_stage[s - 1] for s in self.order))]
        return [(s, self.epochs_per_stage[s - 1]) for s in self.order]

    @property
    def total_epochs(self) -> int:
        return sum(n for _, n in self.segments())

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("tasks")
        return d


def stage_of(epoch: int, cfg: ScheduleConfig) -> int:
    if not 0 <= epoch < cfg.total_epochs:
        raise ValueError(f"epoch {epoch} outside [0, {cfg.total_epochs})")
    for stage, n in cfg.segments():
        if epoch < n:
            return stage
        epoch -= n
    raise AssertionError("unreachable")


# -- evaluation -----------------------------------------------------------------

@dataclass
class EvalReport:
    mode: str
    n_tasks: int
    mean_e2e: float
    score: float  # mean e2e rescaled to 0..100
    success_rate: float
    mean_turns: float
    mean_oracle_turns: float
    rows: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate(params: PolicyParams | None, tasks: list[TaskSpec], mode: str = "adaplan", *, temperature: float = 0.0,
             seed: int = 0, plan_candidates: int = 4, oracle: bool = False, scorer: Scorer | None = None) -> EvalReport:
    """One episode per task without learning. ``oracle`` swaps in the scripted planner and executor."""
    from .oracle import OracleExecutor

    if not tasks:
        raise ValueError("evaluation needs at least one task")
    if mode not in ("adaplan", "react"):
        raise ValueError(f"mode must be adaplan or react, got {mode!r}")
    rows = []
    for i, task in enumerate(tasks):
        if oracle:
            planner, executor = OraclePlanner(), OracleExecutor()
        else:
            agent = PolicyAgent(params.weights.copy(), np.random.default_rng([seed, i]), temperature)
            planner = executor = agent
        traj = run_episode(task, planner, executor, RuleSelector(), cfg=EpisodeConfig(k=plan_candidates, mode=mode))
        n_opt = oracle_optimal_length(task)
        b = score_trajectory(traj, task, 3, scorer, n_opt)
        rows.append({"task": i, "env": task.env_kind.value, "success": traj.success, "turns": len(traj.turns),
                     "oracle_turns": n_opt, "e2e": b.e2e, "format": b.format})
    e2e = float(np.mean([r["e2e"] for r in rows]))
    return EvalReport(mode, len(rows), e2e, 50.0 * e2e, float(np.mean([r["success"] for r in rows])),
                      float(np.mean([r["turns"] for r in rows])), float(np.mean([r["oracle_turns"] for r in rows])),
                      rows)


# -- training run ---------------------------------------------------------------

@dataclass
class RunReport:
    config_hash: str
    seed: int
    steps: int
    stages: list[dict]
    checkpoints: list[str]
    final_eval: dict | None
    halted: bool = False
    halt_reason: str = ""
    metrics: list[dict] = field(default_factory=list, repr=False)
    params: PolicyParams | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if k not in ("metrics", "params")}


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def metrics_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRIC_COLUMNS)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in METRIC_COLUMNS])
    return buf.getvalue()


def _traj_record(ro, task_index: int, seed, cfg_hash: str) -> dict:
    t = ro.trajectory
    return {
        "config_hash": cfg_hash, "seed": list(seed), "task": task_index, "goal": t.goal,
        "plans": [{"version": p.version, "steps": p.steps} for p in t.plans],
        "turns": [{"raw": x.raw, "action": x.action, "observation": x.observation, "violation": x.violation}
                  for x in t.turns],
        "terminal": t.terminal, "success": t.success, "aborted": t.aborted, "events": t.events,
        "reward": ro.breakdown.to_dict(),
    }


def run_curriculum(cfg: ScheduleConfig, grpo_cfg: GrpoConfig, tasks: list[TaskSpec] | None = None, *,
                   out_dir: str | Path | None = None, scorer: Scorer | None = None,
                   params: PolicyParams | None = None, cfg_hash: str | None = None,
                   log_trajectories: bool = True, final_eval: bool = True) -> RunReport:
    """Train through the staged schedule.

    Every component is logged each step, but only the stage's own components
    form the reward used for advantages. The reference policy is reset to the
    stage-entry weights at each stage boundary, and a checkpoint is written at
    initialization and after each stage.
    """
    cfg.validate()
    grpo_cfg.validate()
    tasks = list(tasks if tasks is not None else cfg.tasks)
    if not tasks:
        raise ValueError("run_curriculum needs a non-empty task set")
    cfg_hash = cfg_hash or config_hash({"schedule": cfg.to_dict(), "grpo": asdict(grpo_cfg)})
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    traj_file = (out / "trajectories.jsonl").open("w") if (out is not None and log_trajectories) else None

    params = params.copy() if params is not None else PolicyParams.initial()
    ref = params.copy()
    rng = np.random.default_rng(cfg.seed)
    rows: list[dict] = []
    checkpoints: list[str] = []
    stages: list[dict] = []

    def checkpoint(name: str, stage) -> None:
        if out is None:
            checkpoints.append(name)
            return
        path = out / f"{name}.json"
        save_checkpoint(path, params, cfg_hash, {"seed": cfg.seed, "stage": stage})
        checkpoints.append(path.name)

    def flush() -> None:
        if out is not None:
            (out / "metrics.csv").write_text(metrics_csv(rows))

    checkpoint("ckpt_init", None)
    step = epoch = 0
    halted, reason = False, ""
    try:
        for seg_i, (stage, n_epochs) in enumerate(cfg.segments()):
            stage_components(stage)
            if cfg.reset_ref_each_stage:
                ref = params.copy()
            first_step = step
            for _ in range(n_epochs):
                order = rng.permutation(len(tasks))
                epoch_format = []
                for b0 in range(0, len(order), cfg.groups_per_step):
                    idx = [int(i) for i in order[b0:b0 + cfg.groups_per_step]]
                    batch = []
                    for j, ti in enumerate(idx):
                        seed = (cfg.seed, epoch, step, j)
                        g = collect_group(tasks[ti], params, stage, grpo_cfg, seed=seed, scorer=scorer)
                        batch.append(g)
                        if traj_file is not None:
                            for ro in g.rollouts:
                                traj_file.write(json.dumps(_traj_record(ro, ti, seed, cfg_hash)) + "\n")
                    params, m = train_step(batch, params, ref, grpo_cfg)
                    bds = [ro.breakdown for g in batch for ro in g.rollouts]
                    row = {
                        "config_hash": cfg_hash, "seed": cfg.seed, "step": step, "epoch": epoch, "stage": stage,
                        "version": params.version, "mean_reward": m.mean_reward,
                        "format": float(np.mean([b.format for b in bds])),
                        "adherence": float(np.mean([b.adherence for b in bds])),
                        "e2e": float(np.mean([b.e2e for b in bds])),
                        "plan_quality": float(np.mean([b.plan_quality for b in bds])),
                        "success": float(np.mean([ro.trajectory.success for g in batch for ro in g.rollouts])),
                        "clip_frac": m.clip_frac, "kl": m.kl, "mean_abs_adv": m.mean_abs_adv, "loss": m.loss,
                        "grad_norm": m.grad_norm,
                    }
                    rows.append(row)
                    epoch_format.append(row["format"])
                    log.info("step %d stage %d reward %.3f adherence %.3f e2e %.3f pq %.2f", step, stage,
                             m.mean_reward, row["adherence"], row["e2e"], row["plan_quality"])
                    step += 1
                flush()
                epoch += 1
                if float(np.mean(epoch_format)) < cfg.sanity_floor:
                    raise SanityHalt(f"mean format reward {np.mean(epoch_format):.3f} below floor "
                                     f"{cfg.sanity_floor} after epoch {epoch - 1} (stage {stage})")
            stages.append({"stage": stage, "epochs": n_epochs, "first_step": first_step, "last_step": step - 1,
                           "plan_source": StagePlanSource.for_stage(stage).plan_provider.value})
            checkpoint(f"ckpt_{seg_i + 1}_stage{stage}", stage)
    except SanityHalt as e:
        halted, reason = True, str(e)
    finally:
        if traj_file is not None:
            traj_file.close()
        flush()

    final = None
    if final_eval and not halted:
        final = evaluate(params, tasks, "adaplan", temperature=cfg.eval_temperature, seed=cfg.seed,
                         plan_candidates=grpo_cfg.plan_candidates, scorer=scorer).to_dict()
        final.pop("rows")
    report = RunReport(cfg_hash, cfg.seed, step, stages, checkpoints, final, halted, reason, rows, params)
    if out is not None:
        (out / "report.json").write_text(json.dumps(report.to_dict(), indent=1) + "\n")
    return report
