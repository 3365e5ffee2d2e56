"""Wordle: feedback scoring, a greedy entropy solver, and the environment.

Feedback symbols: ``g`` right letter in the right spot, ``y`` letter present
elsewhere, ``b`` absent. Repeated letters use the usual two-pass rule: greens
are marked first, then yellows are handed out left to right while the hidden
word still has unmatched copies of that letter.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

import numpy as np

from .base import COMPLETED, Env, Observation

WORD_LEN = 5
MAX_ATTEMPTS = 6
_SYMBOLS = "byg"
_GUESS_RE = re.compile(r"^[A-Za-z]( [A-Za-z]){4}$")


@lru_cache(maxsize=None)
def default_words() -> tuple[str, ...]:
    text = resources.files("planrl.data").joinpath("words.txt").read_text()
    return tuple(text.split())


def is_word(s: str) -> bool:
    return len(s) == WORD_LEN and s.isascii() and s.isalpha() and s.islower()


def feedback(guess: str, hidden: str) -> str:
    """Space-separated feedback string, e.g. ``feedback("raise", "shire") == "y b g y g"``."""
    if not (is_word(guess) and is_word(hidden)):
        raise ValueError(f"both words must be 5 lowercase letters: {guess!r}, {hidden!r}")
    out = ["b"] * WORD_LEN
    remaining = Counter()
    for i, (g, h) in enumerate(zip(guess, hidden)):
        if g == h:
            out[i] = "g"
        else:
            remaining[h] += 1
    for i, g in enumerate(guess):
        if out[i] != "g" and remaining[g] > 0:
            out[i] = "y"
            remaining[g] -= 1
    return " ".join(out)


def feedback_bruteforce(guess: str, hidden: str) -> str:
    """Independent scorer used to cross-check :func:`feedback`.

    Works letter by letter: for each distinct letter, positions matching in
    place are green; of the remaining guess positions holding that letter, the
    leftmost ``min(#unmatched in guess, #unmatched in hidden)`` are yellow.
    """
    out = ["b"] * WORD_LEN
    for letter in set(guess):
        gpos = [i for i, c in enumerate(guess) if c == letter]
        hpos = [i for i, c in enumerate(hidden) if c == letter]
        exact = [i for i in gpos if i in hpos]
        for i in exact:
            out[i] = "g"
        loose_g = [i for i in gpos if i not in exact]
        loose_h = [i for i in hpos if i not in exact]
        for i in loose_g[: min(len(loose_g), len(loose_h))]:
            out[i] = "y"
    return " ".join(out)


def encode(fb: str) -> int:
    code = 0
    for sym in fb.split():
        code = code * 3 + _SYMBOLS.index(sym)
    return code


def parse_guess(action: str) -> str | None:
    """``"s h i r e"`` -> ``"shire"``; anything else -> None."""
    if not _GUESS_RE.match(action.strip()):
        return None
    return action.strip().replace(" ", "").lower()


def spaced(word: str) -> str:
    return " ".join(word)


@lru_cache(maxsize=8)
def feedback_matrix(words: tuple[str, ...]) -> np.ndarray:
    """``M[g, h]`` is the base-3 code of ``feedback(words[g], words[h])``."""
    n = len(words)
    m = np.empty((n, n), dtype=np.int16)
    for gi, g in enumerate(words):
        for hi, h in enumerate(words):
            m[gi, hi] = encode(feedback(g, h))
    return m


def consistent_indices(words: tuple[str, ...], history: list[tuple[str, str]]) -> np.ndarray:
    """Indices of words compatible with every (guess, feedback) pair so far."""
    keep = np.ones(len(words), dtype=bool)
    index = {w: i for i, w in enumerate(words)}
    m = feedback_matrix(words)
    for guess, fb in history:
        code = encode(fb)
        if guess in index:
            keep &= m[index[guess]] == code
        else:
            keep &= np.array([encode(feedback(guess, w)) == code for w in words])
    return np.flatnonzero(keep)


@lru_cache(maxsize=4096)
def _ranked_guesses(words: tuple[str, ...], candidates: tuple[int, ...]) -> tuple[int, ...]:
    m = feedback_matrix(words)
    n = len(candidates)
    if n == 0:
        return ()
    sub = m[:, list(candidates)].astype(np.int64)
    counts = np.zeros((len(words), 243), dtype=np.int64)
    rows = np.repeat(np.arange(len(words)), n)
    np.add.at(counts, (rows, sub.ravel()), 1)
    p = counts / n
    with np.errstate(divide="ignore", invalid="ignore"):
        ent = -np.where(p > 0, p * np.log(p), 0.0).sum(axis=1)
    ent = np.round(ent, 12)
    in_cand = np.zeros(len(words), dtype=bool)
    in_cand[list(candidates)] = True
    # highest entropy, then prefer a word that could itself be the answer, then lowest index
    order = np.lexsort((np.arange(len(words)), ~in_cand, -ent))
    return tuple(int(i) for i in order)


def ranked_guesses(words: tuple[str, ...], history: list[tuple[str, str]]) -> list[int]:
    cand = tuple(int(i) for i in consistent_indices(words, history))
    if len(cand) <= 2:
        # guessing a live candidate is never worse here
        return list(cand) + [i for i in _ranked_guesses(words, cand) if i not in cand]
    return list(_ranked_guesses(words, cand))


def best_guess(words: tuple[str, ...], history: list[tuple[str, str]]) -> str:
    """Greedy entropy-maximizing guess over the whole word list; deterministic tie-breaks."""
    ranked = ranked_guesses(words, history)
    guessed = {g for g, _ in history}
    for i in ranked:
        if words[i] not in guessed:
            return words[i]
    raise ValueError("no guess available")


def solve(words: tuple[str, ...], hidden: str, max_attempts: int = 50) -> list[str]:
    """Guesses the reference strategy makes until it hits ``hidden``."""
    history: list[tuple[str, str]] = []
    while len(history) < max_attempts:
        g = best_guess(words, history)
        fb = feedback(g, hidden)
        history.append((g, fb))
        if g == hidden:
            return [h[0] for h in history]
    raise RuntimeError(f"reference strategy failed on {hidden!r}")


@dataclass
class WordleState:
    guesses: list[str] = field(default_factory=list)
    feedbacks: list[str] = field(default_factory=list)
    attempts_left: int = MAX_ATTEMPTS

    @property
    def history(self) -> list[tuple[str, str]]:
        return list(zip(self.guesses, self.feedbacks))


class WordleEnv(Env):
    def _reset_state(self) -> None:
        self.state = WordleState(attempts_left=self.task.max_turns)

    def _copy_state(self, new) -> None:
        new.state = WordleState(list(self.state.guesses), list(self.state.feedbacks), self.state.attempts_left)

    def _initial_text(self) -> str:
        return (
            f"Guess the hidden {WORD_LEN} letter word. "
            f"You have {self.task.max_turns} attempts remaining."
        )

    def _status_text(self) -> str:
        left = self.task.max_turns - self.turn
        return f"You have {left} attempts remaining."

    def _apply(self, action: str) -> Observation:
        self.state.attempts_left = self.task.max_turns - self.turn
        word = parse_guess(action)
        if word is None:
            self.last_valid = False
            return Observation(
                f'Invalid guess "{action}": write 5 space separated letters, like "s h i r e". '
                + self._status_text()
            )
        fb = feedback(word, self.task.hidden_state.hidden)
        self.state.guesses.append(word)
        self.state.feedbacks.append(fb)
        if word == self.task.hidden_state.hidden:
            return Observation(f"{COMPLETED} The hidden word was {word}.", terminal=True, success=True)
        return Observation(f"Feedback: {fb}. " + self._status_text())

    def progress(self) -> float:
        if self.success:
            return float(WORD_LEN)
        return float(max((fb.count("g") for fb in self.state.feedbacks), default=0))

    def public_state(self) -> WordleState:
        return self.state
