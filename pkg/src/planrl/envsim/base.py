"""Shared environment types: observations, errors and the turn-counting base class."""

from __future__ import annotations

import copy
from dataclasses import dataclass
from typing import Any

COMPLETED = "Task Completed!"


class TaskValidationError(ValueError):
    """A TaskSpec violates one of its invariants."""


class EpisodeOverError(RuntimeError):
    """step() was called on a terminal episode."""


@dataclass(frozen=True)
class Observation:
    text: str
    terminal: bool = False
    success: bool = False

    def __post_init__(self) -> None:
        if self.success and not self.terminal:
            raise ValueError("success implies terminal")
        if not self.terminal and not self.text:
            raise ValueError("non-terminal observation needs text")


class Env:
    """Pure state machine over one TaskSpec.

    Subclasses implement ``_initial_text``, ``_apply``, ``public_state`` and
    ``progress``; this class owns the turn budget and the terminal flag.
    ``_apply`` sets ``last_valid = False`` when the action had no effect.
    """

    def __init__(self, task):
        task.validate()
        self.task = task
        self.turn = 0
        self.done = False
        self.success = False
        self.last_valid = True

    def reset(self) -> Observation:
        self.turn = 0
        self.done = False
        self.success = False
        self._reset_state()
        return Observation(self._initial_text())

    def step(self, action_text: str) -> Observation:
        self._check_live()
        self.turn += 1
        self.last_valid = True
        return self._finish(self._apply(action_text.strip()))

    def reject(self, message: str) -> Observation:
        """Consume a turn with a corrective observation (used for unparseable responses)."""
        self._check_live()
        self.turn += 1
        self.last_valid = False
        return self._finish(Observation(message + " " + self._status_text()))

    def clone(self) -> "Env":
        new = copy.copy(self)
        self._copy_state(new)
        return new

    @property
    def turns_left(self) -> int:
        return self.task.max_turns - self.turn

    def _check_live(self) -> None:
        if self.done:
            raise EpisodeOverError("episode is terminal; call reset() first")

    def _finish(self, obs: Observation) -> Observation:
        if obs.success:
            self.done = self.success = True
            return obs
        if self.turn >= self.task.max_turns:
            self.done = True
            return Observation(obs.text + " No turns remaining.", terminal=True, success=False)
        return obs

    # subclass hooks
    def _copy_state(self, new: "Env") -> None:
        raise NotImplementedError

    def _reset_state(self) -> None:
        raise NotImplementedError

    def _initial_text(self) -> str:
        raise NotImplementedError

    def _status_text(self) -> str:
        raise NotImplementedError

    def _apply(self, action: str) -> Observation:
        raise NotImplementedError

    def public_state(self) -> Any:
        raise NotImplementedError

    def progress(self) -> float:
        """Task-specific progress score; larger is closer to the goal."""
        raise NotImplementedError
