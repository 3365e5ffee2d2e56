"""Grid maze. Positions are ``(x, y)`` with x growing downward and y rightward.

``grid[x][y] == 1`` marks a wall cell; anything outside the grid is a wall too.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from .base import COMPLETED, Env, Observation

Pos = tuple[int, int]

# order matters: it is the tie-break order for shortest paths and the wall phrase order
MOVES: dict[str, Pos] = {"left": (0, -1), "right": (0, 1), "up": (-1, 0), "down": (1, 0)}
OPPOSITE = {"left": "right", "right": "left", "up": "down", "down": "up"}
_WALL_PHRASE = {"left": "to your left", "right": "to your right", "up": "above you", "down": "below you"}


@dataclass(frozen=True)
class MazeLayout:
    grid: tuple[tuple[int, ...], ...]
    start: Pos
    goal: Pos

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.grid), len(self.grid[0])

    def open(self, p: Pos) -> bool:
        x, y = p
        rows, cols = self.shape
        return 0 <= x < rows and 0 <= y < cols and self.grid[x][y] == 0

    def walls(self, p: Pos) -> dict[str, bool]:
        """Per-direction blocked flags for cell ``p``."""
        return {d: not self.open(shift(p, d)) for d in MOVES}


@dataclass
class MazeState:
    pos: Pos
    goal: Pos
    walls: dict[str, bool]
    visited: list[Pos]


def shift(p: Pos, direction: str) -> Pos:
    dx, dy = MOVES[direction]
    return p[0] + dx, p[1] + dy


def distances_to(layout: MazeLayout, target: Pos) -> dict[Pos, int]:
    """BFS distance from every reachable open cell to ``target``."""
    dist = {target: 0}
    queue = deque([target])
    while queue:
        p = queue.popleft()
        for d in MOVES:
            q = shift(p, d)
            if layout.open(q) and q not in dist:
                dist[q] = dist[p] + 1
                queue.append(q)
    return dist


def shortest_path_length(layout: MazeLayout, src: Pos | None = None) -> int | None:
    src = layout.start if src is None else src
    return distances_to(layout, layout.goal).get(src)


def optimal_moves(layout: MazeLayout, pos: Pos, dist: dict[Pos, int] | None = None) -> list[str]:
    """Moves from ``pos`` that lie on some shortest path to the goal."""
    dist = distances_to(layout, layout.goal) if dist is None else dist
    here = dist.get(pos)
    if here is None or here == 0:
        return []
    return [d for d in MOVES if dist.get(shift(pos, d)) == here - 1]


def shortest_path(layout: MazeLayout, pos: Pos | None = None, rng=None) -> list[str] | None:
    """One shortest move sequence; ties broken by MOVES order, or at random when ``rng`` is given."""
    pos = layout.start if pos is None else pos
    dist = distances_to(layout, layout.goal)
    if pos not in dist:
        return None
    path = []
    while pos != layout.goal:
        opts = optimal_moves(layout, pos, dist)
        d = opts[0] if rng is None else opts[int(rng.integers(len(opts)))]
        path.append(d)
        pos = shift(pos, d)
    return path


def fmt(p: Pos) -> str:
    return f"{p[0]}, {p[1]}"


def describe(pos: Pos, goal: Pos, walls: dict[str, bool]) -> str:
    blocked = [_WALL_PHRASE[d] for d in MOVES if walls[d]]
    if not blocked:
        wall_text = "There are no walls around you."
    elif len(blocked) == 1:
        wall_text = f"There is a wall {blocked[0]}."
    else:
        wall_text = f"There are walls {', '.join(blocked)}."
    return f"The goal is at position {fmt(goal)}. Your current position is at position {fmt(pos)}. {wall_text}"


def parse_move(action: str) -> str | None:
    parts = action.strip().lower().split()
    if len(parts) == 2 and parts[0] == "move" and parts[1] in MOVES:
        return parts[1]
    return None


class MazeEnv(Env):
    def _reset_state(self) -> None:
        layout = self.task.hidden_state
        self.pos = layout.start
        self.visited = [layout.start]
        self._dist = None

    def _copy_state(self, new) -> None:
        new.visited = list(self.visited)

    def _initial_text(self) -> str:
        return self._status_text()

    def _status_text(self) -> str:
        layout = self.task.hidden_state
        return describe(self.pos, layout.goal, layout.walls(self.pos))

    def _apply(self, action: str) -> Observation:
        layout = self.task.hidden_state
        direction = parse_move(action)
        if direction is None:
            self.last_valid = False
            return Observation(
                f'Invalid action "{action}". Valid actions are: move up, move down, move left, move right. '
                + self._status_text()
            )
        if layout.walls(self.pos)[direction]:
            self.last_valid = False
            return Observation(
                f"You cannot move {direction}: there is a wall {_WALL_PHRASE[direction]}. " + self._status_text()
            )
        old, self.pos = self.pos, shift(self.pos, direction)
        self.visited.append(self.pos)
        if self.pos == layout.goal:
            return Observation(
                f"You moved {direction} from {fmt(old)} to {fmt(self.pos)}. {COMPLETED}",
                terminal=True,
                success=True,
            )
        return Observation(f"You moved {direction} from {fmt(old)} to {fmt(self.pos)}. " + self._status_text())

    def progress(self) -> float:
        if self._dist is None:
            self._dist = distances_to(self.task.hidden_state, self.task.hidden_state.goal)
        return -float(self._dist[self.pos])

    def public_state(self) -> MazeState:
        layout = self.task.hidden_state
        return MazeState(self.pos, layout.goal, layout.walls(self.pos), list(self.visited))
