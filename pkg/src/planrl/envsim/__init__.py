"""Deterministic simulators for the Wordle, maze and TextCraft environments."""

from .base import COMPLETED, Env, EpisodeOverError, Observation, TaskValidationError
from .maze import MazeLayout, MazeState
from .tasks import (
    EnvKind,
    TaskSpec,
    WordleSecret,
    env_reset,
    load_tasks,
    make_env,
    oracle_optimal_length,
    oracle_solution,
    save_tasks,
    task_from_dict,
    task_to_dict,
)
from .textcraft import CraftBook, Recipe
from .wordle import feedback as wordle_feedback

__all__ = [
    "COMPLETED", "CraftBook", "Env", "EnvKind", "EpisodeOverError", "MazeLayout", "MazeState",
    "Observation", "Recipe", "TaskSpec", "TaskValidationError", "WordleSecret", "env_reset",
    "load_tasks", "make_env", "oracle_optimal_length", "oracle_solution", "save_tasks",
    "task_from_dict", "task_to_dict", "wordle_feedback",
]
