"""Scripted planner and executor backed by the environment oracles."""

from __future__ import annotations

import numpy as np

from .adaplan import ActRequest, PlanRequest, clause_action, step_clause
from .envsim import EnvKind
from .envsim import maze, textcraft, wordle


def _maze_clauses(env, rng=None) -> list[str]:
    layout = env.task.hidden_state
    pos = env.pos
    out = []
    for d in maze.shortest_path(layout, pos, rng) or []:
        nxt = maze.shift(pos, d)
        out.append(f"move {d} (from {maze.fmt(pos)} to {maze.fmt(nxt)})")
        pos = nxt
    return out


def _wordle_clauses(env) -> list[str]:
    secret = env.task.hidden_state
    history = env.state.history
    guessed = {g for g, _ in history}
    first = wordle.best_guess(secret.words, history)
    rest = [secret.words[i] for i in wordle.consistent_indices(secret.words, history)]
    seq = [first] + [w for w in rest if w != first and w not in guessed]
    return [f"guess {wordle.spaced(w)}" for w in seq]


def oracle_clauses(env, variant: int = 0) -> list[str]:
    """Remaining plan clauses from the current state of ``env``."""
    kind = env.task.env_kind
    if kind is EnvKind.MAZE:
        return _maze_clauses(env, np.random.default_rng(variant) if variant else None)
    if kind is EnvKind.WORDLE:
        return _wordle_clauses(env)
    return list(textcraft.optimal_plan(env.task.hidden_state, env.state.inventory) or [])


def oracle_next_action(env) -> str:
    clauses = oracle_clauses(env)
    return clause_action(step_clause(clauses[0])) if clauses else "inventory"


class OraclePlanner:
    """Optimal plans; candidate j > 0 of a maze request breaks shortest-path ties at random."""

    def propose(self, req: PlanRequest, k: int) -> list[str]:
        out = []
        for j in range(k):
            clauses = oracle_clauses(req.env, j)[: req.budget]
            out.append("\n".join(f"Step {req.first_index + i}: {c}" for i, c in enumerate(clauses)))
        return out


class OracleExecutor:
    """Carries out the current plan step; without one, takes the oracle's next action."""

    def act(self, req: ActRequest) -> str:
        step = req.step
        action = clause_action(step_clause(step)) if step else oracle_next_action(req.env)
        return f"Action: {action}"
