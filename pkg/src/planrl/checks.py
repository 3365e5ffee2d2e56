"""Randomized invariant suites behind ``planrl check``."""

from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass, field

import numpy as np

from .adaplan import EpisodeConfig, GlobalPlan, RuleSelector, Trajectory, Turn, adapt_plan, clause_action
from .envsim import make_env
from .envsim import wordle
from .envsim.tasks import generate_maze_tasks, generate_textcraft_tasks, generate_wordle_tasks
from .grpo import GrpoConfig, RolloutGroup, finite_difference_error, group_advantages, grpo_loss, random_instance
from .oracle import OraclePlanner, oracle_clauses
from .policy import N_FEATURES, N_HEADS, PolicyAgent
from .reward import COMPONENT_MAX, REPLACEMENT_CHAR, score_trajectory, stage_components


@dataclass
class CheckResult:
    name: str
    trials: int
    failures: list[str] = field(default_factory=list)
    seconds: float = 0.0
    detail: str = ""

    @property
    def ok(self) -> bool:
        return not self.failures


def check_grad(rng: np.random.Generator, n: int = 100, tol: float = 1e-5) -> CheckResult:
    res = CheckResult("grad", n)
    worst = 0.0
    for i in range(n):
        cfg = GrpoConfig(clip_eps=float(rng.uniform(0.05, 0.5)), kl_beta=float(rng.uniform(0, 0.5)))
        group, p, ref = random_instance(rng)
        err = finite_difference_error(group, p, ref, cfg)
        worst = max(worst, err)
        if not err < tol:
            res.failures.append(f"instance {i}: relative error {err:.3e}")
    res.detail = f"max relative error {worst:.2e}"
    return res


def check_mask(rng: np.random.Generator, n: int = 100) -> CheckResult:
    res = CheckResult("mask", n)
    cfg = GrpoConfig()
    for i in range(n):
        group, p, ref = random_instance(rng, mask_prob=0.5)
        loss, grad, _ = grpo_loss(group, p, ref, cfg)
        rollouts = []
        for ro in group.rollouts:
            old = ro.token_logprobs_old.copy()
            masked = ~ro.token_mask
            old[masked] += rng.normal(0, 5, masked.sum())
            rollouts.append(dataclasses.replace(ro, token_logprobs_old=old))
        loss2, grad2, _ = grpo_loss(RolloutGroup(None, rollouts), p, ref, cfg)
        if loss2 != loss or not np.array_equal(grad, grad2):
            res.failures.append(f"instance {i}: loss {loss!r} vs {loss2!r}")
    return res


def check_advantage(rng: np.random.Generator, n: int = 1000, eps: float = 1e-8) -> CheckResult:
    res = CheckResult("advantage", n)
    for i in range(n):
        g = int(rng.integers(2, 33))
        kind = i % 4
        if kind == 0:
            r = rng.normal(rng.uniform(-5, 5), rng.uniform(0.05, 3), g)
        elif kind == 1:
            r = rng.choice([0.0, 0.5, 1.0, 1.5, 2.0, 3.0], g)
        elif kind == 2:
            r = rng.uniform(-3, 3) + rng.normal(0, 10.0 ** rng.uniform(-7.5, -2), g)
        else:
            r = np.full(g, rng.uniform(-3, 3))
        a = group_advantages(r, eps)
        std = r.std()
        if abs(a.mean()) >= 1e-9:
            res.failures.append(f"group {i}: mean {a.mean():.3e}")
        if np.ptp(r) == 0 and np.any(a != 0):
            res.failures.append(f"group {i}: zero-variance group gave non-zero advantages")
        if std > eps and abs(a.std() - 1) > 1e-6:
            res.failures.append(f"group {i}: output std {a.std()!r} for input std {std!r}")
    return res


def check_wordle_oracle(rng: np.random.Generator | None = None) -> CheckResult:
    words = wordle.default_words()
    res = CheckResult("wordle-oracle", len(words) ** 2)
    for g in words:
        for h in words:
            a, b = wordle.feedback(g, h), wordle.feedback_bruteforce(g, h)
            if a != b:
                res.failures.append(f"{g}/{h}: {a} vs {b}")
    return res


def _prefix_tasks(seed: int):
    return (generate_maze_tasks(4, seed) + generate_wordle_tasks(4, seed + 1)
            + generate_textcraft_tasks(4, seed + 2))


def random_adaptation(rng: np.random.Generator, task):
    """Play a few random turns, then adapt a random previous plan; returns (prev, t, result)."""
    env = make_env(task)
    obs = env.reset()
    traj = Trajectory(task.goal_text, obs.text, task.max_turns)
    t = int(rng.integers(1, max(2, min(task.max_turns, 8))))
    for _ in range(t):
        if env.done:
            break
        clauses = oracle_clauses(env)
        action = clauses[0].split(" (")[0].removeprefix("guess ") if clauses and rng.random() < 0.6 \
            else "move " + str(rng.choice(["left", "right", "up", "down"]))
        obs = env.step(action)
        traj.turns.append(Turn(f"Action: {action}", obs.text, action))
    t = len(traj.turns)
    n_prev = int(rng.integers(1, t + 6))
    prev = GlobalPlan([f"Step {i}: step text {rng.integers(1000)}" for i in range(1, n_prev + 1)], t - 1)
    if rng.random() < 0.5:
        planner = OraclePlanner()
    else:
        w = rng.normal(0, 1.5, (N_FEATURES, N_HEADS))
        planner = PolicyAgent(w, rng, 1.0)
    cfg = EpisodeConfig(k=int(rng.integers(1, 5)))
    return prev, t, adapt_plan(task, traj, prev, t, planner, RuleSelector(), env, cfg)


def check_plan_prefix(rng: np.random.Generator, n: int = 1000) -> CheckResult:
    res = CheckResult("plan-prefix", n)
    tasks = _prefix_tasks(int(rng.integers(1 << 30)))
    for i in range(n):
        task = tasks[int(rng.integers(len(tasks)))]
        prev, t, new = random_adaptation(rng, task)
        keep = min(t, len(prev.steps))
        if new.steps[:keep] != prev.steps[:keep]:
            res.failures.append(f"call {i} ({task.env_kind.value}, t={t}): prefix changed")
    return res


_NOISE_ACTIONS = ["move up", "move down", "move left", "move right", "inventory", "get 1 coal", "c r a n e",
                  "craft 4 stick using 2 planks", "dance", ""]


def _random_clauses(rng: np.random.Generator, env, n: int) -> list[str]:
    good = oracle_clauses(env, int(rng.integers(3)))
    return [good[i] if i < len(good) and rng.random() < 0.6 else str(rng.choice(_NOISE_ACTIONS[:-1]))
            for i in range(n)]


def _random_plan(rng: np.random.Generator, env, prefix: list[str], version: int) -> GlobalPlan:
    clauses = _random_clauses(rng, env, int(rng.integers(1, 8)))
    roll = rng.random()
    if roll < 0.1:
        return GlobalPlan(["First " + ", then ".join(clauses) + "."], version)
    first = len(prefix) + 1 + (roll < 0.15)
    return GlobalPlan(prefix + [f"Step {first + i}: {c}" for i, c in enumerate(clauses)], version)


def _random_raw(rng: np.random.Generator, action: str) -> str:
    form = rng.random()
    if form < 0.5:
        return f"Action: {action}"
    if form < 0.75:
        return f"Thought: try this. Action: {action}"
    if form < 0.85:
        return action
    if form < 0.95:
        return f"Action: {action} {REPLACEMENT_CHAR}"
    return f"Action: {action}\nand more"


def random_trajectory(rng: np.random.Generator, task) -> Trajectory:
    """A trajectory with arbitrary plans, response forms and actions, played against the real environment."""
    from .adaplan import FormatViolation, parse_response

    env = make_env(task)
    obs = env.reset()
    traj = Trajectory(task.goal_text, obs.text, task.max_turns)
    if rng.random() < 0.05:
        traj.aborted = traj.terminal = True
        return traj
    plan = _random_plan(rng, env, [], 0)
    traj.plans.append(plan)
    for t in range(1, int(rng.integers(1, task.max_turns + 1)) + 1):
        good = oracle_clauses(env)
        action = clause_action(good[0]) if good and rng.random() < 0.5 else str(rng.choice(_NOISE_ACTIONS))
        raw = _random_raw(rng, action)
        parsed = parse_response(raw)
        step = plan.step(t)
        if isinstance(parsed, FormatViolation):
            obs = env.reject("Invalid response format.")
            traj.turns.append(Turn(raw, obs.text, violation=parsed.reason, plan_step=step))
        else:
            obs = env.step(parsed.action)
            traj.turns.append(Turn(raw, obs.text, parsed.action, parsed.thought, plan_step=step))
        if obs.terminal:
            traj.terminal, traj.success = True, obs.success
            break
        plan = _random_plan(rng, env, plan.steps[:t], t)
        traj.plans.append(plan)
    if rng.random() < 0.03:
        traj.aborted = traj.terminal = True
    return traj


def check_reward_ranges(rng: np.random.Generator, n: int = 10_000, tasks=None) -> CheckResult:
    res = CheckResult("reward-ranges", n)
    tasks = tasks or _prefix_tasks(int(rng.integers(1 << 30)))
    for i in range(n):
        task = tasks[int(rng.integers(len(tasks)))]
        traj = random_trajectory(rng, task)
        stage = int(rng.integers(4))
        b = score_trajectory(traj, task, stage)
        bad = []
        if b.format not in (0, 1):
            bad.append(f"format {b.format}")
        if not 0 <= b.adherence <= 2 or any(a not in (0, 1, 2) for a in b.adherence_turns):
            bad.append(f"adherence {b.adherence}")
        if b.e2e not in (0, 1, 2):
            bad.append(f"e2e {b.e2e}")
        if not all(1 <= s <= 5 for s in b.plan_sub) or b.plan_quality != sum(b.plan_sub):
            bad.append(f"plan quality {b.plan_sub}")
        expect = sum(b.component(c) / COMPONENT_MAX[c] for c in stage_components(stage))
        if abs(b.stage_scalar - expect) > 1e-12 or not 0 <= b.stage_scalar <= len(stage_components(stage)):
            bad.append(f"stage {stage} scalar {b.stage_scalar!r} vs {expect!r}")
        if b.e2e == 2 and not traj.success:
            bad.append("e2e 2 without success")
        if bad:
            res.failures.append(f"trajectory {i} ({task.env_kind.value}): " + ", ".join(bad))
    return res


SUITES = {
    "grad": check_grad,
    "mask": check_mask,
    "advantage": check_advantage,
    "wordle-oracle": check_wordle_oracle,
    "plan-prefix": check_plan_prefix,
}


def run_suite(name: str, seed: int | None = None) -> CheckResult:
    rng = np.random.default_rng(seed)
    start = time.perf_counter()
    res = SUITES[name](rng)
    res.seconds = time.perf_counter() - start
    return res
