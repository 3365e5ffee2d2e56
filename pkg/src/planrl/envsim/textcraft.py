"""TextCraft: fetch base items and craft targets from a recipe book.

Commands::

    get [N] <item>            (``fetch`` is accepted as a synonym)
    craft [N] <target> using <q1> <ing1>, <q2> <ing2>, ...
    inventory

A craft command may apply a recipe k times at once when every quantity is k
times the recipe's. A recipe ingredient with a generic name such as
``planks`` accepts any specialised item whose name ends with it
(``dark oak planks``). Substitution is one level deep.
"""

from __future__ import annotations

import itertools
import math
import re
from collections import Counter
from dataclasses import dataclass, field

from .base import COMPLETED, Env, Observation

_GET_RE = re.compile(r"^(?:get|fetch)\s+(?:(\d+)\s+)?(.+)$")
_CRAFT_RE = re.compile(r"^craft\s+(?:(\d+)\s+)?(.+?)\s+using\s+(.+)$")
_QTY_RE = re.compile(r"^(?:(\d+)\s+)?(.+)$")


@dataclass(frozen=True)
class Recipe:
    output: str
    count: int
    ingredients: tuple[tuple[str, int], ...]

    def command(self, k: int = 1, names: dict[str, str] | None = None) -> str:
        names = names or {}
        ings = ", ".join(f"{q * k} {names.get(i, i)}" for i, q in self.ingredients)
        return f"craft {self.count * k} {self.output} using {ings}"

    def text(self) -> str:
        return self.command().removeprefix("craft ")


@dataclass(frozen=True)
class CraftBook:
    recipes: tuple[Recipe, ...]
    base_items: tuple[str, ...]
    target: str
    target_count: int = 1

    def recipes_for(self, item: str) -> list[Recipe]:
        return [r for r in self.recipes if r.output == item]

    def items(self) -> set[str]:
        out = set(self.base_items) | {r.output for r in self.recipes}
        for r in self.recipes:
            out.update(i for i, _ in r.ingredients)
        return out


@dataclass
class TextCraftState:
    inventory: Counter = field(default_factory=Counter)


def satisfies(have: str, need: str) -> bool:
    return have == need or have.endswith(" " + need)


def parse_action(action: str):
    """Returns ``("get", n, item)``, ``("craft", n|None, target, [(q, item), ...])``, ``("inventory",)`` or None."""
    a = " ".join(action.strip().lower().split())
    if a == "inventory":
        return ("inventory",)
    m = _CRAFT_RE.match(a)
    if m:
        ings = []
        for part in m.group(3).split(","):
            qm = _QTY_RE.match(part.strip())
            if not qm or not qm.group(2):
                return None
            ings.append((int(qm.group(1) or 1), qm.group(2).strip()))
        return ("craft", int(m.group(1)) if m.group(1) else None, m.group(2).strip(), ings)
    m = _GET_RE.match(a)
    if m:
        return ("get", int(m.group(1) or 1), m.group(2).strip())
    return None


def match_recipe(book: CraftBook, target: str, n: int | None, ings: list[tuple[int, str]]):
    """Find (recipe, k) consistent with a craft command, or None."""
    for r in book.recipes_for(target):
        if len(r.ingredients) != len(ings):
            continue
        for perm in itertools.permutations(ings):
            pairs = list(zip(r.ingredients, perm))
            if not all(satisfies(have, need) for (need, _), (_, have) in pairs):
                continue
            ks = {q // rq for (_, rq), (q, _) in pairs if q % rq == 0}
            if len(ks) != 1 or any(q % rq for (_, rq), (q, _) in pairs):
                continue
            k = ks.pop()
            if k < 1 or (n is not None and n != k * r.count):
                continue
            return r, k
    return None


# -- oracle -----------------------------------------------------------------

def _options(book: CraftBook, item: str, obtainable: set[str]):
    opts = []
    if item in book.base_items:
        opts.append(("fetch",))
    for r in book.recipes_for(item):
        opts.append(("craft", r))
    for s in sorted(obtainable):
        if s != item and satisfies(s, item):
            opts.append(("sub", s))
    return opts


def _children(choice) -> list[str]:
    if choice[0] == "craft":
        return [i for i, _ in choice[1].ingredients]
    if choice[0] == "sub":
        return [choice[1]]
    return []


def _topo(assign: dict, root: str) -> list[str] | None:
    order, state = [], {}

    def visit(u) -> bool:
        if state.get(u) == 1:
            return False
        if state.get(u) == 2:
            return True
        state[u] = 1
        for v in _children(assign[u]):
            if not visit(v):
                return False
        state[u] = 2
        order.append(u)
        return True

    return order[::-1] if visit(root) else None


def _assignments(book: CraftBook, obtainable: set[str]):
    def expand(pending: list[str], assigned: dict):
        if not pending:
            yield assigned
            return
        item, rest = pending[0], pending[1:]
        if item in assigned:
            yield from expand(rest, assigned)
            return
        for choice in _options(book, item, obtainable):
            yield from expand(rest + _children(choice), {**assigned, item: choice})

    yield from expand([book.target], {})


def _obtainable(book: CraftBook) -> set[str]:
    """Items with at least one finite derivation (fixpoint over fetch/craft/substitute)."""
    have = set(book.base_items)
    items = book.items()
    changed = True
    while changed:
        changed = False
        for it in items - have:
            if any(all(i in have for i, _ in r.ingredients) for r in book.recipes_for(it)) or any(
                s != it and satisfies(s, it) for s in have
            ):
                have.add(it)
                changed = True
    return have


def optimal_plan(book: CraftBook, inventory: Counter | None = None) -> list[str] | None:
    """Shortest get/craft command list reaching the target, by exhaustive search over recipe choices."""
    inventory = Counter(inventory or {})
    if inventory[book.target] >= book.target_count:
        return []
    obtainable = _obtainable(book)
    if book.target not in obtainable:
        return None
    best: list[str] | None = None
    for assign in _assignments(book, obtainable):
        order = _topo(assign, book.target)
        if order is None:
            continue
        plan = _plan_for(assign, order, book, inventory)
        if plan is not None and (best is None or len(plan) < len(best)):
            best = plan
    return best


def _plan_for(assign, order, book, inventory) -> list[str] | None:
    demand = Counter({book.target: book.target_count})
    avail = Counter(inventory)
    fetches: list[str] = []
    crafts: list[str] = []
    names: dict[str, str] = {}
    for item in order:
        need = demand[item] - min(avail[item], demand[item])
        avail[item] -= demand[item] - need
        if need <= 0:
            continue
        choice = assign[item]
        if choice[0] == "fetch":
            fetches.append(f"get {need} {item}")
        elif choice[0] == "sub":
            demand[choice[1]] += need
            names[item] = choice[1]
        else:
            r = choice[1]
            k = math.ceil(need / r.count)
            for ing, q in r.ingredients:
                demand[ing] += k * q
            crafts.append((r, k))
    cmds = [r.command(k, {i: _resolve(i, names) for i, _ in r.ingredients}) for r, k in reversed(crafts)]
    return fetches + cmds


def _resolve(item: str, names: dict[str, str]) -> str:
    seen = set()
    while item in names and item not in seen:
        seen.add(item)
        item = names[item]
    return item


class TextCraftEnv(Env):
    def _reset_state(self) -> None:
        self.state = TextCraftState()

    def _copy_state(self, new) -> None:
        new.state = TextCraftState(Counter(self.state.inventory))

    def _initial_text(self) -> str:
        book = self.task.hidden_state
        lines = "; ".join(r.text() for r in book.recipes)
        return f"Crafting commands: {lines}. Goal: craft {book.target_count} {book.target}."

    def _status_text(self) -> str:
        book = self.task.hidden_state
        return f"Goal: craft {book.target_count} {book.target}."

    def _inventory_text(self) -> str:
        inv = self.state.inventory
        if not +inv:
            return "Inventory: You are not carrying anything."
        return "Inventory: " + ", ".join(f"[{k}] ({v})" for k, v in sorted(inv.items()) if v > 0)

    def _apply(self, action: str) -> Observation:
        book: CraftBook = self.task.hidden_state
        inv = self.state.inventory
        cmd = parse_action(action)
        if cmd is None:
            self.last_valid = False
            return Observation(f'Invalid action "{action}". Use get, craft or inventory. ' + self._status_text())
        if cmd[0] == "inventory":
            return Observation(self._inventory_text())
        if cmd[0] == "get":
            _, n, item = cmd
            if item not in book.base_items:
                self.last_valid = False
                return Observation(f"Could not find {item}.")
            inv[item] += n
            return Observation(f"Got {n} {item}.")
        _, n, target, ings = cmd
        found = match_recipe(book, target, n, ings)
        if found is None:
            self.last_valid = False
            return Observation(f"Could not find a valid recipe for {target}.")
        r, k = found
        if any(inv[item] < q for q, item in ings):
            self.last_valid = False
            return Observation(f"Could not find enough items to craft {target}.")
        for q, item in ings:
            inv[item] -= q
            if inv[item] == 0:
                del inv[item]
        inv[r.output] += k * r.count
        text = f"Crafted {k * r.count} {r.output}."
        if inv[book.target] >= book.target_count:
            return Observation(f"{text} {COMPLETED}", terminal=True, success=True)
        return Observation(text)

    def progress(self) -> float:
        plan = optimal_plan(self.task.hidden_state, self.state.inventory)
        return -float(len(plan)) if plan is not None else -1e9

    def public_state(self) -> TextCraftState:
        return self.state
