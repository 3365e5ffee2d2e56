"""Softmax-linear toy policy acting as both planner and executor.

Every choice the policy makes is a decision over a small candidate set. Each
candidate carries a feature vector ``psi`` of length ``N_FEATURES`` and the
logit is ``psi @ W[:, head]``, so one weight matrix serves four heads:

* ``FORM``: how the executor wraps its action (with a thought, bare
  ``Action:``, no marker at all, or with a garbled byte).
* ``EXEC``: which environment action the executor takes.
* ``PLAN_FORM``: whether a plan is written as numbered steps or as prose.
* ``PLAN``: which action each plan step proposes.

Executor features never see the environment oracle; plan features include a
hint derived from it, so good plans are learnable while the executor alone
is not an oracle.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .adaplan import ActRequest, PlanRequest, Trajectory, clause_action, step_clause
from .envsim import EnvKind, maze, textcraft, wordle
from .reward import OBS_CLOSE, OBS_OPEN, REPLACEMENT_CHAR, rule_adherence

N_FEATURES = 5
FORM, EXEC, PLAN_FORM, PLAN = range(4)
N_HEADS = 4
FORMS = ("think", "act", "bare", "garbled")
PLAN_FORMS = ("numbered", "prose")


def initial_weights() -> np.ndarray:
    w = np.zeros((N_FEATURES, N_HEADS))
    w[:4, FORM] = [1.0, 2.0, -2.0, -2.5]
    w[:, EXEC] = [0.0, 0.0, 0.5, -1.0, -0.5]  # [follows step, partly follows, heads toward goal, invalid, repeat]
    w[:2, PLAN_FORM] = [3.0, 0.0]
    w[:, PLAN] = [0.0, 0.5, -1.0, -0.5, 0.0]  # [oracle hint, progress, invalid, repeat, unused]
    return w


_ONE_HOT = np.eye(N_FEATURES)


@dataclass(frozen=True, eq=False)
class Decision:
    head: int
    feats: np.ndarray  # (n_candidates, N_FEATURES)
    choice: int


def sample(weights: np.ndarray, head: int, feats: np.ndarray, rng: np.random.Generator, temperature: float) -> int:
    logits = feats @ weights[:, head]
    if temperature <= 0:
        return int(np.argmax(logits))
    z = logits / temperature
    p = np.exp(z - z.max())
    c = np.cumsum(p)
    return min(int(np.searchsorted(c, rng.random() * c[-1], side="right")), len(p) - 1)


# -- feature builders -----------------------------------------------------------

def _manhattan(a, b) -> int:
    return abs(a[0] - b[0]) + abs(a[1] - b[1])


def _maze_exec(env, step: str | None):
    layout = env.task.hidden_state
    walls = layout.walls(env.pos)
    seen = set(env.visited)
    cands, rows = [], []
    for d in maze.MOVES:
        action = f"move {d}"
        nxt = maze.shift(env.pos, d)
        adh = rule_adherence(action, step)
        cands.append(action)
        rows.append([adh == 2, adh == 1, _manhattan(nxt, layout.goal) < _manhattan(env.pos, layout.goal),
                     walls[d], not walls[d] and nxt in seen])
    return cands, np.array(rows, dtype=float)


def _wordle_words(env):
    secret = env.task.hidden_state
    history = env.state.history
    ranked = wordle.ranked_guesses(secret.words, history)
    consistent = set(int(i) for i in wordle.consistent_indices(secret.words, history))
    return secret.words, ranked, consistent, [g for g, _ in history]


def _wordle_exec(env, step: str | None):
    words, ranked, consistent, guessed = _wordle_words(env)
    pool: list[str] = []
    if step:
        w = wordle.parse_guess(clause_action(step_clause(step)))
        if w:
            pool.append(w)
    fresh = [words[i] for i in ranked if words[i] not in guessed]
    pool += fresh[:2] + [words[i] for i in sorted(consistent) if words[i] not in guessed][:2] + guessed[-2:]
    pool = list(dict.fromkeys(pool))
    index = {w: i for i, w in enumerate(words)}
    cands, rows = [], []
    for w in pool:
        action = wordle.spaced(w)
        adh = rule_adherence(action, step)
        cands.append(action)
        rows.append([adh == 2, adh == 1, index.get(w, -1) in consistent, w in guessed, 0.0])
    return cands, np.array(rows, dtype=float)


@lru_cache(maxsize=65536)
def _craft_plan(book, inventory: tuple) -> tuple[str, ...] | None:
    plan = textcraft.optimal_plan(book, Counter(dict(inventory)))
    return None if plan is None else tuple(plan)


def _inv_key(inv: Counter) -> tuple:
    return tuple(sorted((k, v) for k, v in inv.items() if v > 0))


def _craft_pool(env, extra: list[str]) -> list[str]:
    book = env.task.hidden_state
    opt = _craft_plan(book, _inv_key(env.state.inventory)) or ()
    pool = extra + list(opt[:2]) + [f"get 1 {b}" for b in book.base_items[:2]] + ["inventory"]
    return list(dict.fromkeys(pool))


def _craft_check(env, action: str) -> tuple[bool, float]:
    sim = env.clone()
    before = -len(_craft_plan(sim.task.hidden_state, _inv_key(sim.state.inventory)) or ())
    sim.step(action)
    if sim.success:
        return sim.last_valid, 1.0
    after = -len(_craft_plan(sim.task.hidden_state, _inv_key(sim.state.inventory)) or ())
    return sim.last_valid, after - before


def _craft_exec(env, step: str | None, last: str | None):
    extra = [clause_action(step_clause(step))] if step else []
    book = env.task.hidden_state
    opt = set(_craft_plan(book, _inv_key(env.state.inventory)) or ())
    cands, rows = [], []
    for action in _craft_pool(env, extra):
        adh = rule_adherence(action, step)
        valid, _ = _craft_check(env, action)
        cands.append(action)
        rows.append([adh == 2, adh == 1, action in opt, not valid, action == last])
    return cands, np.array(rows, dtype=float)


def executor_candidates(env, step: str | None, last_action: str | None = None):
    kind = env.task.env_kind
    if kind is EnvKind.MAZE:
        return _maze_exec(env, step)
    if kind is EnvKind.WORDLE:
        return _wordle_exec(env, step)
    return _craft_exec(env, step, last_action)


# -- plan step candidates (simulated forward on a clone) ------------------------

def _maze_plan_step(sim, dist):
    layout = sim.task.hidden_state
    walls = layout.walls(sim.pos)
    seen = set(sim.visited)
    here = dist[sim.pos]
    cands, rows = [], []
    for d in maze.MOVES:
        nxt = maze.shift(sim.pos, d)
        cands.append(f"move {d}")
        rows.append([not walls[d] and dist.get(nxt, 1 << 30) < here,
                     _manhattan(nxt, layout.goal) < _manhattan(sim.pos, layout.goal),
                     walls[d], not walls[d] and nxt in seen, 0.0])
    return cands, np.array(rows, dtype=float)


def _wordle_plan_step(env, chosen: list[str]):
    words, ranked, consistent, guessed = _wordle_words(env)
    taken = set(guessed) | set(chosen)
    fresh = [words[i] for i in ranked if words[i] not in taken]
    pool = fresh[:3] + [words[i] for i in sorted(consistent) if words[i] not in taken][:2] + guessed[-1:]
    pool = list(dict.fromkeys(pool))
    top = fresh[0] if fresh else None
    index = {w: i for i, w in enumerate(words)}
    cands = [f"guess {wordle.spaced(w)}" for w in pool]
    rows = [[w == top, index[w] in consistent, w in taken, 0.0, 0.0] for w in pool]
    return cands, np.array(rows, dtype=float)


def _craft_plan_step(sim, prev: str | None):
    opt = _craft_plan(sim.task.hidden_state, _inv_key(sim.state.inventory)) or ()
    cands, rows = [], []
    for action in _craft_pool(sim, []):
        valid, gain = _craft_check(sim, action)
        cands.append(action)
        rows.append([bool(opt) and action == opt[0] and valid, gain > 0, not valid, action == prev, 0.0])
    return cands, np.array(rows, dtype=float)


# -- the agent ------------------------------------------------------------------

@dataclass
class PolicyAgent:
    """Samples planner and executor outputs from one weight snapshot and records every decision.

    ``record_plans`` is off when plans come from an external planner so that
    only policy-generated tokens enter the rollout.
    """

    weights: np.ndarray
    rng: np.random.Generator
    temperature: float = 1.0
    record_plans: bool = True
    texts: list[str] = field(default_factory=list)
    decisions: list[Decision | None] = field(default_factory=list)
    _obs_seen: int = -1

    def _decide(self, head: int, feats: np.ndarray, texts: list[str], record: bool = True) -> int:
        i = sample(self.weights, head, feats, self.rng, self.temperature)
        if record:
            self.texts.append(texts[i])
            self.decisions.append(Decision(head, feats, i))
        return i

    def _emit_observation(self, text: str) -> None:
        words = [OBS_OPEN] + text.split() + [OBS_CLOSE]
        self.texts.extend(words)
        self.decisions.extend([None] * len(words))

    def sync(self, context: Trajectory) -> None:
        """Append observation spans not yet in the token stream."""
        if self._obs_seen < 0:
            self._emit_observation(context.initial_observation)
            self._obs_seen = 0
        while self._obs_seen < len(context.turns):
            self._emit_observation(context.turns[self._obs_seen].observation)
            self._obs_seen += 1

    # Planner
    def propose(self, req: PlanRequest, k: int) -> list[str]:
        self.sync(req.context)
        return [self._one_plan(req) for _ in range(k)]

    def _one_plan(self, req: PlanRequest) -> str:
        rec = self.record_plans
        form = self._decide(PLAN_FORM, _ONE_HOT[:2], ["Step", "Plan:"], rec)
        kind = req.task.env_kind
        clauses: list[str] = []
        if kind is EnvKind.WORDLE:
            for _ in range(min(req.budget, wordle.MAX_ATTEMPTS)):
                cands, feats = _wordle_plan_step(req.env, [wordle.parse_guess(clause_action(c)) for c in clauses])
                if not cands:
                    break
                clauses.append(cands[self._decide(PLAN, feats, cands, rec)])
        else:
            sim = req.env.clone()
            dist = maze.distances_to(sim.task.hidden_state, sim.task.hidden_state.goal) if kind is EnvKind.MAZE else None
            for _ in range(req.budget):
                if sim.done:
                    break
                if kind is EnvKind.MAZE:
                    cands, feats = _maze_plan_step(sim, dist)
                else:
                    cands, feats = _craft_plan_step(sim, clauses[-1] if clauses else None)
                action = cands[self._decide(PLAN, feats, cands, rec)]
                clauses.append(action)
                sim.step(action)
        if PLAN_FORMS[form] == "prose":
            return "First " + ", then ".join(clauses) + "."
        return "\n".join(f"Step {req.first_index + i}: {c}" for i, c in enumerate(clauses))

    # Executor
    def act(self, req: ActRequest) -> str:
        self.sync(req.context)
        form = FORMS[self._decide(FORM, _ONE_HOT[:4], ["Thought: follow the plan. Action:", "Action:", "", "Action:" + REPLACEMENT_CHAR])]
        last = next((t.action for t in reversed(req.context.turns) if t.action), None)
        cands, feats = executor_candidates(req.env, req.step, last)
        action = cands[self._decide(EXEC, feats, cands)]
        if form == "think":
            return f"Thought: I will work on step {req.t} of the plan. Action: {action}"
        if form == "act":
            return f"Action: {action}"
        if form == "bare":
            return action
        return f"Action: {action} {REPLACEMENT_CHAR}"

    def finish(self, traj: Trajectory) -> tuple[list[str], list[Decision | None]]:
        self.sync(traj)
        return self.texts, self.decisions
