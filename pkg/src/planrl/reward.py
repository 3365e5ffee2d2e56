"""Trajectory scoring: format, plan adherence, end-to-end success and plan quality.

Rule scorers cover the deterministic environments. An optional LLM judge can
be attached; when both are present the rule score is used and disagreements
are recorded as events.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .adaplan import AgentResponse, GlobalPlan, Trajectory, parse_response, simulate_plan, step_clause
from .envsim import TaskSpec, make_env
from .judge import JudgeUnavailable, LLMJudge

REPLACEMENT_CHAR = "\ufffd"
OBS_OPEN, OBS_CLOSE = "<observation>", "</observation>"

COMPONENT_MAX = {"format": 1, "adherence": 2, "e2e": 2, "plan_quality": 15}
STAGE_COMPONENTS: dict[int, tuple[str, ...]] = {
    0: ("format", "adherence", "e2e", "plan_quality"),  # single merged stage for the joint ablation
    1: ("format", "adherence", "e2e"),
    2: ("format", "e2e", "plan_quality"),
    3: ("format", "e2e"),
}

_ARG_VERBS = {"get", "craft"}
_SPLIT_RE = re.compile(r"\s*(?:,\s*then\s+|\s+and\s+then\s+|\s+and\s+|;\s*)")


class RewardContractError(ValueError):
    pass


@dataclass
class Scorer:
    """Judge configuration shared by the reward functions."""

    llm: LLMJudge | None = None
    rules: bool = True
    events: list[dict] = field(default_factory=list)

    def event(self, kind: str, **info) -> None:
        self.events.append({"kind": kind, **info})


RULES = Scorer()


# -- adherence -----------------------------------------------------------------

def canonical(text: str) -> str:
    t = " ".join(text.strip().lower().rstrip(".").split())
    if t.startswith("fetch "):
        t = "get " + t[len("fetch "):]
    if t.startswith("guess "):
        t = t[len("guess "):]
    return t


def _verb(c: str) -> str | None:
    head = c.split(" ", 1)[0] if c else ""
    return head if head in _ARG_VERBS else None


def rule_adherence(action: str | None, plan_step: str | None) -> int:
    """2 exact match of the step's action clause, 1 same argument-taking verb or one part of a compound step, else 0."""
    if not action or not plan_step:
        return 0
    a = canonical(action)
    clause = canonical(step_clause(plan_step))
    if a == clause:
        return 2
    parts = [canonical(p) for p in _SPLIT_RE.split(clause) if p.strip()]
    if len(parts) > 1 and a in parts:
        return 1
    verb = _verb(a)
    if verb is not None and any(_verb(p) == verb for p in parts):
        return 1
    return 0


def adherence_reward(action: str | None, plan_step: str | None, judge: Scorer | None = None, *,
                     task_text: str = "", plan_text: str = "", t: int = 0) -> int:
    judge = judge or RULES
    rule = rule_adherence(action, plan_step) if judge.rules else None
    if judge.llm is None or action is None or plan_step is None:
        return rule if rule is not None else 0
    try:
        llm = judge.llm.adherence(task_text, plan_text or plan_step, t, action)
    except JudgeUnavailable as e:
        judge.event("judge_error", rubric="adherence", error=str(e))
        return rule if rule is not None else 0
    if rule is None:
        return llm
    if llm != rule:
        judge.event("judge_disagreement", rubric="adherence", rule=rule, llm=llm, t=t)
    return rule


def turn_adherence(traj: Trajectory, judge: Scorer | None = None) -> list[int]:
    out = []
    for t, turn in enumerate(traj.turns, start=1):
        plan_text = traj.plans[min(t - 1, len(traj.plans) - 1)].text() if traj.plans else ""
        out.append(adherence_reward(turn.action, turn.plan_step, judge, task_text=traj.goal,
                                    plan_text=plan_text, t=t))
    return out


def trajectory_adherence(scores: list[int]) -> float:
    return sum(scores) / len(scores) if scores else 0.0


# -- format --------------------------------------------------------------------

def serialize_trajectory(traj: Trajectory) -> str:
    """Rollout text with every environment message wrapped in observation tags."""
    parts = [f"Task: {traj.goal}", f"{OBS_OPEN}{traj.initial_observation}{OBS_CLOSE}"]
    for turn in traj.turns:
        parts.append(turn.raw)
        parts.append(f"{OBS_OPEN}{turn.observation}{OBS_CLOSE}")
    return "\n".join(parts)


def observations_tagged(text: str, expected: int | None = None) -> bool:
    depth = spans = 0
    for m in re.finditer(r"</?observation>", text):
        if m.group(0) == OBS_OPEN:
            if depth:
                return False
            depth = 1
        else:
            if not depth:
                return False
            depth = 0
            spans += 1
    return depth == 0 and (expected is None or spans == expected)


def format_flags(traj: Trajectory) -> list[int]:
    """Per-turn diagnostic: 1 when the response parses and is free of replacement characters."""
    return [int(t.violation is None and REPLACEMENT_CHAR not in t.raw
                and isinstance(parse_response(t.raw), AgentResponse)) for t in traj.turns]


def format_reward(traj: Trajectory, serialized: str | None = None) -> int:
    if traj.aborted or not traj.turns:
        return 0
    if not all(format_flags(traj)):
        return 0
    text = serialize_trajectory(traj) if serialized is None else serialized
    return int(observations_tagged(text, len(traj.turns) + 1))


# -- end to end ----------------------------------------------------------------

def efficiency_threshold(oracle_len: int) -> int:
    """ceil(1.1 * oracle_len) in exact integer arithmetic."""
    return (11 * oracle_len + 9) // 10


def rule_e2e(traj: Trajectory, oracle_len: int) -> int:
    if not traj.success or traj.aborted:
        return 0
    return 2 if len(traj.turns) <= efficiency_threshold(oracle_len) else 1


def e2e_reward(traj: Trajectory, oracle_len: int | None, judge: Scorer | None = None) -> int:
    judge = judge or RULES
    rule = rule_e2e(traj, oracle_len) if (judge.rules and oracle_len is not None) else None
    if judge.llm is None:
        if rule is None:
            judge.event("judge_error", rubric="e2e", error="no oracle length and no judge")
            return 0
        return rule
    try:
        llm = judge.llm.e2e(traj.goal, serialize_trajectory(traj))
    except JudgeUnavailable as e:
        judge.event("judge_error", rubric="e2e", error=str(e))
        if oracle_len is not None:
            return rule_e2e(traj, oracle_len)
        return 0
    if rule is None:
        return llm
    if llm != rule:
        judge.event("judge_disagreement", rubric="e2e", rule=rule, llm=llm)
    return rule


# -- plan quality --------------------------------------------------------------

def executability_score(adherence: list[int]) -> int:
    if not adherence:
        return 1
    frac = sum(a >= 1 for a in adherence) / len(adherence)
    return 1 + int(4 * frac + 0.5)


def correctness_score(task: TaskSpec, plan: GlobalPlan) -> int:
    env = make_env(task)
    env.reset()
    outcome = simulate_plan(env, plan)
    if outcome.reached:
        return 5
    return 3 if outcome.progress > 0 else 1


def rule_plan_quality(plans: list[GlobalPlan], traj: Trajectory, task: TaskSpec,
                      adherence: list[int] | None = None) -> tuple[int, int, int]:
    if not plans:
        return 1, 1, 1
    adherence = turn_adherence(traj) if adherence is None else adherence
    correct = correctness_score(task, plans[0]) if plans[0].valid else 1
    standard = 5 if all(p.valid for p in plans) else 1
    return correct, executability_score(adherence), standard


def plan_quality_reward(plans: list[GlobalPlan], traj: Trajectory, task: TaskSpec, judge: Scorer | None = None,
                        adherence: list[int] | None = None) -> tuple[int, int, int, int]:
    """(correctness, executability, standardization, total)."""
    judge = judge or RULES
    rule = rule_plan_quality(plans, traj, task, adherence) if judge.rules else None
    scores = rule
    if judge.llm is not None and plans:
        try:
            last_obs = traj.turns[-1].observation if traj.turns else traj.initial_observation
            llm = judge.llm.plan_quality(traj.goal, plans[0].text(), 0, last_obs)
            if rule is None:
                scores = llm
            elif llm != rule:
                judge.event("judge_disagreement", rubric="plan_quality", rule=list(rule), llm=list(llm))
        except JudgeUnavailable as e:
            judge.event("judge_error", rubric="plan_quality", error=str(e))
            scores = rule_plan_quality(plans, traj, task, adherence)
    if scores is None:
        if plans:
            judge.event("judge_error", rubric="plan_quality", error="no scorer configured")
        scores = (1, 1, 1)
    c, e, s = scores
    return c, e, s, c + e + s


# -- composition ---------------------------------------------------------------

@dataclass
class RewardBreakdown:
    format: int | None = None
    adherence: float | None = None
    e2e: int | None = None
    plan_quality: int | None = None
    adherence_turns: list[int] = field(default_factory=list)
    plan_sub: tuple[int, int, int] | None = None
    format_turns: list[int] = field(default_factory=list)
    stage: int | None = None
    stage_scalar: float | None = None

    def component(self, name: str):
        return getattr(self, name)

    def to_dict(self) -> dict:
        return {
            "format": self.format, "adherence": self.adherence, "e2e": self.e2e,
            "plan_quality": self.plan_quality, "adherence_turns": self.adherence_turns,
            "plan_sub": list(self.plan_sub) if self.plan_sub else None,
            "format_turns": self.format_turns, "stage": self.stage, "stage_scalar": self.stage_scalar,
        }


def stage_components(stage: int) -> tuple[str, ...]:
    if stage not in STAGE_COMPONENTS:
        raise ValueError(f"unknown stage {stage!r}; expected one of {sorted(STAGE_COMPONENTS)}")
    return STAGE_COMPONENTS[stage]


def stage_reward(stage: int, b: RewardBreakdown) -> float:
    """Sum of the stage's components, each divided by its maximum."""
    total = 0.0
    for name in stage_components(stage):
        v = b.component(name)
        if v is None:
            raise RewardContractError(f"stage {stage} needs component {name!r}")
        total += v / COMPONENT_MAX[name]
    return total


def score_trajectory(traj: Trajectory, task: TaskSpec, stage: int, judge: Scorer | None = None,
                     oracle_len: int | None = None) -> RewardBreakdown:
    """Evaluate every component (for logging) and compose the stage scalar from the active ones."""
    from .envsim import oracle_optimal_length

    judge = judge or RULES
    if oracle_len is None:
        oracle_len = oracle_optimal_length(task)
    adh = turn_adherence(traj, judge)
    c, e, s, total = plan_quality_reward(traj.plans, traj, task, judge, adh)
    b = RewardBreakdown(
        format=format_reward(traj),
        adherence=trajectory_adherence(adh),
        e2e=e2e_reward(traj, oracle_len, judge),
        plan_quality=total,
        adherence_turns=adh,
        plan_sub=(c, e, s),
        format_turns=format_flags(traj),
        stage=stage,
    )
    b.stage_scalar = stage_reward(stage, b)
    return b
