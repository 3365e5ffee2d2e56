"""TaskSpec, its JSON wire format, seeded generators and the optimal-length oracle."""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Union

import numpy as np

from . import maze, textcraft, wordle
from .base import Env, TaskValidationError
from .maze import MazeLayout
from .textcraft import CraftBook, Recipe


class EnvKind(str, Enum):
    WORDLE = "wordle"
    MAZE = "maze"
    TEXTCRAFT = "textcraft"


@dataclass(frozen=True)
class WordleSecret:
    hidden: str
    words: tuple[str, ...]


HiddenState = Union[MazeLayout, WordleSecret, CraftBook]


@dataclass(frozen=True)
class TaskSpec:
    env_kind: EnvKind
    goal_text: str
    hidden_state: HiddenState
    max_turns: int

    def validate(self) -> None:
        if not isinstance(self.max_turns, int) or self.max_turns < 1:
            raise TaskValidationError(f"max_turns must be a positive integer, got {self.max_turns!r}")
        h = self.hidden_state
        if self.env_kind is EnvKind.WORDLE:
            if not isinstance(h, WordleSecret) or not wordle.is_word(h.hidden):
                raise TaskValidationError("hidden word must be 5 lowercase letters")
            if h.hidden not in h.words:
                raise TaskValidationError(f"hidden word {h.hidden!r} is not in the task word list")
        elif self.env_kind is EnvKind.MAZE:
            if not isinstance(h, MazeLayout):
                raise TaskValidationError("maze task needs a MazeLayout")
            if len({len(r) for r in h.grid}) != 1 or not h.grid:
                raise TaskValidationError("maze grid must be a non-empty rectangle")
            for name, p in (("start", h.start), ("goal", h.goal)):
                if not h.open(p):
                    raise TaskValidationError(f"maze {name} {p} is outside the grid or on a wall")
            if maze.shortest_path_length(h) is None:
                raise TaskValidationError("maze goal is not reachable from the start cell")
        elif self.env_kind is EnvKind.TEXTCRAFT:
            if not isinstance(h, CraftBook) or not h.recipes:
                raise TaskValidationError("textcraft task needs a non-empty recipe book")
            if textcraft.optimal_plan(h) is None:
                raise TaskValidationError(f"target {h.target!r} is not derivable from the recipe book")
        else:  # pragma: no cover
            raise TaskValidationError(f"unknown env kind {self.env_kind!r}")


def make_env(task: TaskSpec) -> Env:
    cls = {
        EnvKind.MAZE: maze.MazeEnv,
        EnvKind.WORDLE: wordle.WordleEnv,
        EnvKind.TEXTCRAFT: textcraft.TextCraftEnv,
    }[task.env_kind]
    return cls(task)


def env_reset(task: TaskSpec):
    """Build an environment for ``task`` and return ``(env, first observation)``."""
    env = make_env(task)
    return env, env.reset()


def oracle_solution(task: TaskSpec) -> list[str] | None:
    """A shortest action sequence (reference strategy for Wordle), or None if unsolvable."""
    h = task.hidden_state
    if task.env_kind is EnvKind.MAZE:
        path = maze.shortest_path(h)
        return None if path is None else [f"move {d}" for d in path]
    if task.env_kind is EnvKind.WORDLE:
        return [wordle.spaced(g) for g in wordle.solve(h.words, h.hidden)]
    return textcraft.optimal_plan(h)


def oracle_optimal_length(task: TaskSpec) -> int | None:
    """Optimal episode length; None marks an unsolvable task."""
    h = task.hidden_state
    if task.env_kind is EnvKind.MAZE:
        return maze.shortest_path_length(h)
    sol = oracle_solution(task)
    return None if sol is None else len(sol)


# -- JSON ---------------------------------------------------------------------

def default_max_turns(kind: EnvKind, oracle_len: int) -> int:
    if kind is EnvKind.WORDLE:
        return wordle.MAX_ATTEMPTS
    return max(1, (2 if kind is EnvKind.MAZE else 3) * oracle_len)


def maze_task(grid, start, goal, max_turns: int | None = None) -> TaskSpec:
    layout = MazeLayout(tuple(tuple(int(c) for c in row) for row in grid), tuple(start), tuple(goal))
    if max_turns is None:
        n = maze.shortest_path_length(layout)
        if n is None:
            raise TaskValidationError("maze goal is not reachable from the start cell")
        max_turns = default_max_turns(EnvKind.MAZE, n)
    task = TaskSpec(EnvKind.MAZE, f"Reach the goal at position {maze.fmt(layout.goal)}.", layout, max_turns)
    task.validate()
    return task


def wordle_task(hidden: str, words=None, max_turns: int = wordle.MAX_ATTEMPTS) -> TaskSpec:
    words = wordle.default_words() if words in (None, "default") else tuple(words)
    task = TaskSpec(
        EnvKind.WORDLE,
        f"Guess the hidden 5 letter word in at most {max_turns} attempts.",
        WordleSecret(hidden, words),
        max_turns,
    )
    task.validate()
    return task


def textcraft_task(target, recipes, base_items, target_count: int = 1, max_turns: int | None = None) -> TaskSpec:
    book = CraftBook(tuple(recipes), tuple(base_items), target, target_count)
    if max_turns is None:
        plan = textcraft.optimal_plan(book)
        if plan is None:
            raise TaskValidationError(f"target {target!r} is not derivable from the recipe book")
        max_turns = default_max_turns(EnvKind.TEXTCRAFT, len(plan))
    task = TaskSpec(EnvKind.TEXTCRAFT, f"craft {target_count} {target}", book, max_turns)
    task.validate()
    return task


def task_to_dict(task: TaskSpec) -> dict:
    h = task.hidden_state
    if task.env_kind is EnvKind.MAZE:
        return {"env": "maze", "grid": [list(r) for r in h.grid], "start": list(h.start),
                "goal": list(h.goal), "max_turns": task.max_turns}
    if task.env_kind is EnvKind.WORDLE:
        words = "default" if h.words == wordle.default_words() else list(h.words)
        return {"env": "wordle", "hidden": h.hidden, "words": words, "max_turns": task.max_turns}
    return {
        "env": "textcraft",
        "target": h.target,
        "target_count": h.target_count,
        "recipes": [{"output": r.output, "count": r.count, "ingredients": dict(r.ingredients)} for r in h.recipes],
        "base_items": list(h.base_items),
        "max_turns": task.max_turns,
    }


def task_from_dict(d: dict) -> TaskSpec:
    kind = d.get("env")
    try:
        if kind == "maze":
            return maze_task(d["grid"], d["start"], d["goal"], d.get("max_turns"))
        if kind == "wordle":
            return wordle_task(d["hidden"], d.get("words"), d.get("max_turns", wordle.MAX_ATTEMPTS))
        if kind == "textcraft":
            recipes = [Recipe(r["output"], int(r.get("count", 1)), tuple((k, int(v)) for k, v in r["ingredients"].items()))
                       for r in d["recipes"]]
            return textcraft_task(d["target"], recipes, d["base_items"], int(d.get("target_count", 1)), d.get("max_turns"))
    except KeyError as e:
        raise TaskValidationError(f"{kind} task is missing field {e.args[0]!r}") from None
    raise TaskValidationError(f"unknown env kind {kind!r}")


def load_tasks(path) -> list[TaskSpec]:
    data = json.loads(Path(path).read_text())
    if isinstance(data, dict):
        data = [data]
    return [task_from_dict(d) for d in data]


def save_tasks(tasks: list[TaskSpec], path) -> None:
    Path(path).write_text(json.dumps([task_to_dict(t) for t in tasks], indent=1) + "\n")


# -- generators ---------------------------------------------------------------

def reference_maze() -> TaskSpec:
    """10x8 corridor maze: (1,1) right to (1,4), down to (8,4), right to (8,6); 12 moves."""
    grid = [[1] * 8 for _ in range(10)]
    cells = [(1, y) for y in range(1, 5)] + [(x, 4) for x in range(2, 9)] + [(8, 5), (8, 6)]
    for x, y in cells:
        grid[x][y] = 0
    return maze_task(grid, (1, 1), (8, 6))


def random_maze(rng: np.random.Generator, size: int = 7, density: float = 0.28, min_dist: int = 5) -> TaskSpec:
    """Random obstacle maze with a border of walls; retries until the goal is far enough and reachable."""
    while True:
        grid = np.ones((size + 2, size + 2), dtype=int)
        grid[1:-1, 1:-1] = (rng.random((size, size)) < density).astype(int)
        free = [tuple(int(v) for v in p) for p in np.argwhere(grid == 0)]
        if len(free) < 2:
            continue
        i, j = rng.choice(len(free), size=2, replace=False)
        start, goal = free[i], free[j]
        layout = MazeLayout(tuple(tuple(int(c) for c in r) for r in grid), start, goal)
        n = maze.shortest_path_length(layout)
        if n is not None and n >= min_dist:
            return maze_task(grid.tolist(), start, goal)


def generate_maze_tasks(n: int, seed: int, size: int = 7) -> list[TaskSpec]:
    rng = np.random.default_rng(seed)
    return [random_maze(rng, size) for _ in range(n)]


def generate_wordle_tasks(n: int, seed: int) -> list[TaskSpec]:
    words = wordle.default_words()
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(words), size=min(n, len(words)), replace=False)
    return [wordle_task(words[int(i)]) for i in idx]


def _r(output: str, count: int, **ings: int) -> Recipe:
    return Recipe(output, count, tuple((k.replace("_", " "), v) for k, v in ings.items()))


RECIPE_BOOK: tuple[Recipe, ...] = (
    _r("oak planks", 4, oak_log=1),
    _r("birch planks", 4, birch_log=1),
    _r("stick", 4, planks=2),
    _r("crafting table", 1, planks=4),
    _r("wooden pickaxe", 1, oak_planks=3, stick=2),
    _r("torch", 4, coal=1, stick=1),
    _r("ladder", 3, stick=7),
    _r("chest", 1, planks=8),
    _r("bowl", 4, birch_planks=3),
    _r("iron ingot", 1, iron_ore=1, coal=1),
    _r("iron pickaxe", 1, iron_ingot=3, stick=2),
    _r("bucket", 1, iron_ingot=3),
    _r("shears", 1, iron_ingot=2),
    _r("stone pickaxe", 1, cobblestone=3, stick=2),
    _r("furnace", 1, cobblestone=8),
    _r("paper", 3, sugar_cane=3),
    _r("book", 1, paper=3, leather=1),
    _r("bookshelf", 1, oak_planks=6, book=3),
)
BASE_ITEMS = ("oak log", "birch log", "coal", "iron ore", "cobblestone", "sugar cane", "leather")
TEXTCRAFT_TARGETS = tuple(sorted({r.output for r in RECIPE_BOOK}))


def generate_textcraft_tasks(n: int, seed: int) -> list[TaskSpec]:
    rng = np.random.default_rng(seed)
    out = []
    for k in range(n):
        target = TEXTCRAFT_TARGETS[int(rng.integers(len(TEXTCRAFT_TARGETS)))] if k >= len(TEXTCRAFT_TARGETS) \
            else TEXTCRAFT_TARGETS[k]
        out.append(textcraft_task(target, RECIPE_BOOK, BASE_ITEMS))
    return out
