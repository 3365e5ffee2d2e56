"""Plan-then-execute agent loop.

A planner writes a numbered global plan, an executor acts one turn at a time
under the plan step for that turn, and after every turn the plan is revised:
steps already consumed (index <= t) are kept byte for byte, later steps are
regenerated by generate-then-select from the current state.
"""

from __future__ import annotations

import logging
import re
from dataclasses import asdict, dataclass, field
from typing import Protocol

from .envsim import Env, TaskSpec, make_env

log = logging.getLogger(__name__)

STEP_RE = re.compile(r"^Step (\d+): (\S.*)$")
_NOTE_RE = re.compile(r"\s*\(from [^()]*\)\s*$")


class PlanFormatError(ValueError):
    pass


class PlanGenerationError(RuntimeError):
    """No syntactically valid plan candidate survived the retry budget."""


@dataclass
class GlobalPlan:
    steps: list[str]
    version: int = 0

    @classmethod
    def parse(cls, text: str, version: int = 0) -> "GlobalPlan":
        return cls([ln.strip() for ln in text.strip().splitlines() if ln.strip()], version)

    @classmethod
    def from_clauses(cls, clauses: list[str], first: int = 1, version: int = 0) -> "GlobalPlan":
        return cls([f"Step {first + i}: {c}" for i, c in enumerate(clauses)], version)

    def validate(self) -> None:
        if not self.steps:
            raise PlanFormatError("plan has no steps")
        for k, s in enumerate(self.steps, start=1):
            m = STEP_RE.match(s)
            if m is None:
                raise PlanFormatError(f"step {k} does not match 'Step k: <text>': {s!r}")
            if int(m.group(1)) != k:
                raise PlanFormatError(f"step {k} is numbered {m.group(1)}")

    @property
    def valid(self) -> bool:
        try:
            self.validate()
        except PlanFormatError:
            return False
        return True

    def step(self, i: int) -> str | None:
        """1-indexed step text, or None past the end."""
        return self.steps[i - 1] if 1 <= i <= len(self.steps) else None

    def text(self) -> str:
        return "\n".join(self.steps)


def step_clause(step: str) -> str:
    """``"Step 3: move right (from 1, 2 to 1, 3)"`` -> ``"move right"``."""
    m = STEP_RE.match(step.strip())
    body = m.group(2) if m else step.strip()
    return _NOTE_RE.sub("", body).strip()


def clause_action(clause: str) -> str:
    """Environment action text for a plan clause (``guess s h i r e`` -> ``s h i r e``)."""
    return clause[len("guess "):] if clause.startswith("guess ") else clause


# -- executor responses -------------------------------------------------------

@dataclass(frozen=True)
class AgentResponse:
    action: str
    thought: str | None
    raw: str


@dataclass(frozen=True)
class FormatViolation:
    reason: str
    raw: str


def parse_response(raw: str) -> AgentResponse | FormatViolation:
    """Accepts exactly ``Action: <a>`` or ``Thought: <t> Action: <a>`` (markers case-sensitive)."""
    text = raw.strip()
    if "Action:" not in text:
        return FormatViolation("missing Action marker", raw)
    if text.count("Action:") > 1:
        return FormatViolation("multiple Action markers", raw)
    if text.count("Thought:") > 1:
        return FormatViolation("multiple Thought markers", raw)
    if text.startswith("Action:"):
        if "Thought:" in text:
            return FormatViolation("Thought must precede Action", raw)
        thought, action = None, text[len("Action:"):]
    elif text.startswith("Thought:"):
        thought, _, action = text[len("Thought:"):].partition("Action:")
        thought = thought.strip()
        if not thought:
            return FormatViolation("empty thought", raw)
    else:
        return FormatViolation("text before the first marker", raw)
    action = action.strip()
    if not action:
        return FormatViolation("empty action", raw)
    if "\n" in action:
        return FormatViolation("trailing text after the action line", raw)
    return AgentResponse(action, thought, raw)


# -- trajectory ---------------------------------------------------------------

@dataclass
class Turn:
    raw: str
    observation: str
    action: str | None = None
    thought: str | None = None
    violation: str | None = None
    plan_step: str | None = None


@dataclass
class Trajectory:
    goal: str
    initial_observation: str
    max_turns: int
    turns: list[Turn] = field(default_factory=list)
    plans: list[GlobalPlan] = field(default_factory=list)
    terminal: bool = False
    success: bool = False
    aborted: bool = False
    events: list[dict] = field(default_factory=list)

    def warn(self, what: str, **info) -> None:
        self.events.append({"kind": "warning", "what": what, **info})
        log.debug("episode warning: %s %s", what, info)

    def to_dict(self) -> dict:
        return asdict(self)


# -- handles ------------------------------------------------------------------

@dataclass
class PlanRequest:
    task: TaskSpec
    context: Trajectory
    prev: GlobalPlan | None
    t: int
    first_index: int
    budget: int
    env: Env


@dataclass
class ActRequest:
    task: TaskSpec
    context: Trajectory
    plan: GlobalPlan | None
    t: int
    env: Env

    @property
    def step(self) -> str | None:
        return self.plan.step(self.t) if self.plan is not None else None


class Planner(Protocol):
    def propose(self, req: PlanRequest, k: int) -> list[str]:
        """Return up to ``k`` raw plan texts numbered from ``req.first_index``."""


class Executor(Protocol):
    def act(self, req: ActRequest) -> str:
        """Return the raw executor response for turn ``req.t``."""


class Selector(Protocol):
    def select(self, req: PlanRequest, candidates: list[GlobalPlan]) -> int: ...


@dataclass
class EpisodeConfig:
    k: int = 4
    adapt_every: int = 1
    plan_retries: int = 2
    mode: str = "adaplan"  # or "react": no global plan at all


# -- plan simulation and the rule selector -----------------------------------

@dataclass(frozen=True)
class PlanOutcome:
    reached: bool
    invalid: int
    progress: float
    steps_run: int


def simulate_plan(env: Env, plan: GlobalPlan, from_index: int = 1) -> PlanOutcome:
    """Run steps ``from_index..`` of ``plan`` on a clone of ``env``."""
    sim = env.clone()
    start = sim.progress()
    invalid = run = 0
    for s in plan.steps[from_index - 1:]:
        if sim.done:
            break
        sim.step(clause_action(step_clause(s)))
        run += 1
        invalid += not sim.last_valid
    return PlanOutcome(sim.success, invalid, sim.progress() - start, run)


class RuleSelector:
    """Ranks candidates by simulated execution: reaches goal, fewer invalid steps, more progress, shorter."""

    def select(self, req: PlanRequest, candidates: list[GlobalPlan]) -> int:
        def key(i: int):
            o = simulate_plan(req.env, candidates[i], req.t + 1)
            return (not o.reached, o.invalid, -o.progress, len(candidates[i].steps), i)

        return min(range(len(candidates)), key=key)


# -- generate-then-select -----------------------------------------------------

def generate_plan_candidates(req: PlanRequest, planner: Planner, k: int, retries: int = 2,
                             prefix: list[str] | None = None) -> list[GlobalPlan]:
    """Sample up to ``k`` valid plans; invalid ones are dropped and re-requested."""
    prefix = list(prefix or [])
    valid: list[GlobalPlan] = []
    for _ in range(retries + 1):
        need = k - len(valid)
        for text in planner.propose(req, need)[:need]:
            suffix = GlobalPlan.parse(text).steps[: req.budget]
            plan = GlobalPlan(prefix + suffix, req.t)
            if suffix and plan.valid:
                valid.append(plan)
        if len(valid) == k:
            break
    if not valid:
        raise PlanGenerationError(f"no valid plan after {retries + 1} attempts at t={req.t}")
    return valid


def select_plan(req: PlanRequest, candidates: list[GlobalPlan], selector: Selector) -> GlobalPlan:
    if not candidates:
        raise ValueError("select_plan needs at least one candidate")
    if len(candidates) == 1:
        return candidates[0]
    try:
        idx = int(selector.select(req, candidates))
        if not 0 <= idx < len(candidates):
            raise IndexError(idx)
    except Exception as e:  # selector failures fall back to candidate 0
        req.context.warn("selector failed", t=req.t, error=repr(e))
        idx = 0
    return candidates[idx]


def _consumed_prefix(prev: GlobalPlan, context: Trajectory, t: int) -> list[str]:
    """Steps 1..t. Past the end of ``prev`` the executed actions fill the gap."""
    prefix = list(prev.steps[:t])
    for i in range(len(prefix) + 1, t + 1):
        turn = context.turns[i - 1] if i <= len(context.turns) else None
        what = turn.action if turn is not None and turn.action else "invalid response"
        prefix.append(f"Step {i}: {what}")
    return prefix


def adapt_plan(task: TaskSpec, context: Trajectory, prev: GlobalPlan, t: int, planner: Planner,
               selector: Selector, env: Env, cfg: EpisodeConfig | None = None) -> GlobalPlan:
    """Revise ``prev`` after ``t`` completed turns: keep steps 1..t, regenerate the rest."""
    cfg = cfg or EpisodeConfig()
    if t < 1 or prev.version >= t:
        raise ValueError(f"adapt_plan needs t >= 1 and prev.version < t (t={t}, version={prev.version})")
    if env.done:
        return prev
    prefix = _consumed_prefix(prev, context, t)
    budget = task.max_turns - t
    if budget <= 0:
        return GlobalPlan(prefix, t)
    req = PlanRequest(task, context, prev, t, t + 1, budget, env)
    try:
        cands = generate_plan_candidates(req, planner, cfg.k, cfg.plan_retries, prefix)
    except PlanGenerationError as e:
        context.warn("plan regeneration failed", t=t, error=str(e))
        return GlobalPlan(prefix + list(prev.steps[t:]), t)
    return select_plan(req, cands, selector)


def run_episode(task: TaskSpec, planner: Planner | None, executor: Executor, selector: Selector | None,
                env: Env | None = None, cfg: EpisodeConfig | None = None) -> Trajectory:
    cfg = cfg or EpisodeConfig()
    env = env or make_env(task)
    obs = env.reset()
    traj = Trajectory(task.goal_text, obs.text, task.max_turns)
    plan: GlobalPlan | None = None
    use_plan = cfg.mode == "adaplan"
    if use_plan:
        req = PlanRequest(task, traj, None, 0, 1, task.max_turns, env)
        try:
            plan = select_plan(req, generate_plan_candidates(req, planner, cfg.k, cfg.plan_retries), selector)
        except Exception as e:
            traj.warn("initial plan generation failed", error=repr(e))
            traj.aborted = traj.terminal = True
            return traj
        traj.plans.append(plan)

    for t in range(1, task.max_turns + 1):
        areq = ActRequest(task, traj, plan, t, env)
        try:
            raw = executor.act(areq)
        except Exception as e:
            traj.warn("executor failed", t=t, error=repr(e))
            traj.aborted = traj.terminal = True
            return traj
        parsed = parse_response(raw)
        if isinstance(parsed, FormatViolation):
            obs = env.reject(f"Invalid response format ({parsed.reason}).")
            turn = Turn(raw, obs.text, violation=parsed.reason, plan_step=areq.step)
        else:
            obs = env.step(parsed.action)
            turn = Turn(raw, obs.text, parsed.action, parsed.thought, plan_step=areq.step)
        traj.turns.append(turn)
        if obs.terminal:
            traj.terminal, traj.success = True, obs.success
            break
        if use_plan and t % cfg.adapt_every == 0:
            try:
                plan = adapt_plan(task, traj, plan, t, planner, selector, env, cfg)
            except Exception as e:
                traj.warn("plan adaptation failed", t=t, error=repr(e))
                traj.aborted = traj.terminal = True
                return traj
            traj.plans.append(plan)
    return traj
