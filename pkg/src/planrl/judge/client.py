"""Judge queries: verdict parsing with range checks, retrying, mock and HTTP backends."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Protocol

import httpx

from .prompts import Rubric, render_prompt

log = logging.getLogger(__name__)

_FENCE_RE = re.compile(r"```(?:json)?[ \t]*\n?(.*?)(?:```|''')", re.DOTALL)


class VerdictError(ValueError):
    """The judge reply could not be parsed or broke the rubric's range."""


class JudgeUnavailable(RuntimeError):
    """Retries were exhausted; callers apply their own fallback."""


class MockScriptError(LookupError):
    pass


@dataclass(frozen=True)
class JudgeRequest:
    rubric: Rubric
    filled_prompt: str
    max_retries: int = 2
    timeout: float = 30.0
    n_candidates: int | None = None  # plan selection range


@dataclass(frozen=True)
class JudgeVerdict:
    rubric: Rubric
    raw: str
    reason: str = ""
    score: int | None = None
    scores: dict[str, int] | None = None
    selected: int | None = None
    feedback: str | None = None
    completed: bool = False


def _int_in(obj: dict, key: str, lo: int, hi: int) -> int:
    if key not in obj:
        raise VerdictError(f"missing key {key!r}")
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or int(v) != v:
        raise VerdictError(f"{key} must be an integer, got {v!r}")
    if not lo <= int(v) <= hi:
        raise VerdictError(f"{key}={v} outside [{lo}, {hi}]")
    return int(v)


def _fenced_json(raw: str) -> dict:
    blocks = _FENCE_RE.findall(raw)
    if len(blocks) != 1:
        raise VerdictError(f"expected exactly one fenced JSON block, found {len(blocks)}")
    try:
        obj = json.loads(blocks[0])
    except json.JSONDecodeError as e:
        raise VerdictError(f"invalid JSON: {e}") from None
    if not isinstance(obj, dict):
        raise VerdictError("verdict must be a JSON object")
    return obj


def parse_verdict(rubric: Rubric, raw: str, n_candidates: int | None = None) -> JudgeVerdict:
    rubric = Rubric(rubric)
    if rubric is Rubric.ENV_FEEDBACK:
        text = raw.strip()
        if "Task Completed!" in text:
            return JudgeVerdict(rubric, raw, feedback="Task Completed!", completed=True)
        for line in text.splitlines():
            if line.strip().startswith("Observation:"):
                return JudgeVerdict(rubric, raw, feedback=line.strip()[len("Observation:"):].strip())
        raise VerdictError('expected "Task Completed!" or a line starting with "Observation:"')
    obj = _fenced_json(raw)
    if rubric in (Rubric.ADHERENCE, Rubric.E2E):
        return JudgeVerdict(rubric, raw, str(obj.get("reason", "")), score=_int_in(obj, "score", 0, 2))
    if rubric is Rubric.PLAN_QUALITY:
        scores = {k: _int_in(obj, f"{k}_score", 1, 5) for k in ("correctness", "executability", "standardization")}
        return JudgeVerdict(rubric, raw, "", scores=scores)
    hi = (n_candidates or 1) - 1
    return JudgeVerdict(rubric, raw, str(obj.get("reason", "")), selected=_int_in(obj, "selected_index", 0, hi))


class Backend(Protocol):
    def complete(self, rubric: Rubric, messages: list[dict], timeout: float) -> str: ...


def query(req: JudgeRequest, backend: Backend) -> JudgeVerdict:
    """Send a rubric prompt; on a parse or range failure, retry with the error appended."""
    messages = [{"role": "user", "content": req.filled_prompt}]
    last = ""
    for _ in range(req.max_retries + 1):
        reply = backend.complete(req.rubric, messages, req.timeout)
        try:
            return parse_verdict(req.rubric, reply, req.n_candidates)
        except VerdictError as e:
            last = str(e)
            messages = messages + [
                {"role": "assistant", "content": reply},
                {"role": "user", "content": f"Your reply could not be used ({e}). Answer again in the required output format."},
            ]
    raise JudgeUnavailable(f"{Rubric(req.rubric).value} judge failed after {req.max_retries + 1} tries: {last}")


def prompt_key(prompt: str) -> str:
    return hashlib.sha256(prompt.encode()).hexdigest()[:16]


def fenced(obj: dict) -> str:
    return "```json\n" + json.dumps(obj) + "\n```"


@dataclass
class MockBackend:
    """Deterministic scripted backend.

    ``script`` maps ``(rubric, prompt_key)`` or ``rubric`` or ``"*"`` to a
    reply: a string, a dict (sent as fenced JSON), a list of replies consumed
    in turn, or a callable taking the prompt.
    """

    script: dict
    requests: list[tuple[str, str]] = field(default_factory=list)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def complete(self, rubric: Rubric, messages: list[dict], timeout: float = 0.0) -> str:
        rubric = Rubric(rubric).value
        prompt = messages[0]["content"]
        with self._lock:
            self.requests.append((rubric, prompt))
            for key in ((rubric, prompt_key(prompt)), rubric, "*"):
                if key in self.script:
                    reply = self.script[key]
                    break
            else:
                raise MockScriptError(f"no scripted reply for rubric {rubric!r}")
            if isinstance(reply, list):
                reply = reply.pop(0) if len(reply) > 1 else reply[0]
        if callable(reply):
            reply = reply(prompt)
        return fenced(reply) if isinstance(reply, dict) else str(reply)


def mock_backend(script: dict) -> MockBackend:
    return MockBackend(dict(script))


DEFAULT_MOCK_SCRIPT: dict[str, Any] = {
    "adherence": {"score": 2, "reason": "mock"},
    "e2e": {"score": 2, "reason": "mock"},
    "plan_quality": {"correctness_score": 5, "executability_score": 5, "standardization_score": 5},
    "plan_selection": {"selected_index": 0, "reason": "mock"},
    "env_feedback": "Task Completed!",
}


class HTTPBackend:
    """Chat-completions client with bounded concurrency, backoff and a prompt cache.

    The bearer token is read from the environment variable named by
    ``token_env``; it is never logged.
    """

    def __init__(self, url: str, model: str, token_env: str = "PLANRL_JUDGE_TOKEN", temperature: float = 0.0,
                 max_in_flight: int = 8, transport_retries: int = 3, backoff: float = 0.5, debug: bool = False,
                 client: httpx.Client | None = None, sleep: Callable[[float], None] = time.sleep):
        self.url = url
        self.model = model
        self.token_env = token_env
        self.temperature = temperature
        self.transport_retries = transport_retries
        self.backoff = backoff
        self.debug = debug
        self._client = client or httpx.Client()
        self._sem = threading.BoundedSemaphore(max_in_flight)
        self._cache: dict[tuple, str] = {}
        self._cache_lock = threading.Lock()
        self._sleep = sleep

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(self.token_env)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        return headers

    def complete(self, rubric: Rubric, messages: list[dict], timeout: float = 30.0) -> str:
        key = (Rubric(rubric).value, json.dumps(messages, sort_keys=True))
        with self._cache_lock:
            if key in self._cache:
                return self._cache[key]
        body = {"model": self.model, "messages": messages, "temperature": self.temperature}
        if self.debug:
            log.debug("judge request to %s: %s (Authorization redacted)", self.url, json.dumps(body))
        delay = self.backoff
        for attempt in range(self.transport_retries + 1):
            try:
                with self._sem:
                    resp = self._client.post(self.url, json=body, headers=self._headers(), timeout=timeout)
                resp.raise_for_status()
                reply = resp.json()["choices"][0]["message"]["content"]
                break
            except (httpx.TransportError, httpx.HTTPStatusError) as e:
                if attempt == self.transport_retries:
                    raise JudgeUnavailable(f"judge endpoint failed: {e}") from e
                self._sleep(delay)
                delay *= 2
        if self.debug:
            log.debug("judge response: %s", reply)
        with self._cache_lock:
            self._cache[key] = reply
        return reply


class LLMJudge:
    """Rubric-backed scorer over any backend. Every method raises JudgeUnavailable on failure."""

    def __init__(self, backend: Backend, max_retries: int = 2, timeout: float = 30.0):
        self.backend = backend
        self.max_retries = max_retries
        self.timeout = timeout

    def _ask(self, rubric: Rubric, slots: dict, n_candidates: int | None = None) -> JudgeVerdict:
        req = JudgeRequest(rubric, render_prompt(rubric, slots), self.max_retries, self.timeout, n_candidates)
        return query(req, self.backend)

    def adherence(self, task: str, plan: str, t: int, action: str) -> int:
        return self._ask(Rubric.ADHERENCE, {"task": task, "global_plan": plan,
                                            "execution_step_index": t, "agent_action": action}).score

    def e2e(self, task: str, context: str, reference: str | None = None) -> int:
        return self._ask(Rubric.E2E, {"task": task, "accumulated_context": context,
                                      "ref_interaction": reference}).score

    def plan_quality(self, task: str, plan: str, t: int, observation: str | None = None) -> tuple[int, int, int]:
        s = self._ask(Rubric.PLAN_QUALITY, {"task": task, "global_plan": plan, "execution_step_index": t,
                                            "observation": observation}).scores
        return s["correctness"], s["executability"], s["standardization"]

    def choose(self, task: str, plans: list[str], t: int, observation: str | None = None) -> int:
        listing = "\n\n".join(f"[{i}]\n{p}" for i, p in enumerate(plans))
        return self._ask(Rubric.PLAN_SELECTION, {"task": task, "global_plans": listing, "execution_step_index": t,
                                                 "observation": observation}, n_candidates=len(plans)).selected

    def env_feedback(self, task: str, reference: str, action: str, observation: str | None = None) -> JudgeVerdict:
        return self._ask(Rubric.ENV_FEEDBACK, {"task": task, "ref_interaction": reference,
                                               "observation": observation, "agent_action": action})

    # adaplan Selector protocol
    def select(self, req, candidates) -> int:
        last = req.context.turns[-1].observation if req.context.turns else req.context.initial_observation
        return self.choose(req.task.goal_text, [c.text() for c in candidates], req.t, last)
