"""Rubric prompt templates and slot rendering."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum


class Rubric(str, Enum):
    ADHERENCE = "adherence"
    E2E = "e2e"
    PLAN_QUALITY = "plan_quality"
    PLAN_SELECTION = "plan_selection"
    ENV_FEEDBACK = "env_feedback"


class TemplateError(KeyError):
    pass


@dataclass(frozen=True)
class Section:
    heading: str
    slot: str
    optional: bool = False


@dataclass(frozen=True)
class Template:
    preamble: str
    sections: tuple[Section, ...]
    output_format: str = ""

    @property
    def required(self) -> set[str]:
        return {s.slot for s in self.sections if not s.optional}


_SCORE_FORMAT = """Output Format:
```json
{
    "score": xxx,
    "reason": "..."
}
```"""

TEMPLATES: dict[Rubric, Template] = {
    Rubric.ADHERENCE: Template(
        "You are an expert in agent tasks. Judge how closely the agent's action at the given "
        "execution step follows the global plan. Rate it from 0 to 2 points, and explain the reason.\n\n"
        "2 points: the action does exactly what the plan step asks.\n"
        "1 point: the action partly follows the step, for example it carries out one of several "
        "tools or sub-actions the step suggests without contradicting it.\n"
        "0 points: the action ignores or contradicts the step, or is garbled, malformed or irrelevant.",
        (
            Section("Task", "task"),
            Section("Global Plan", "global_plan"),
            Section("Execution Step Index", "execution_step_index"),
            Section("Agent Action", "agent_action"),
        ),
        _SCORE_FORMAT,
    ),
    Rubric.E2E: Template(
        "You are an expert in agent tasks. Judge the whole interaction between the agent and the "
        "environment: was the task completed, and was it completed without unnecessary detours or "
        "redundancies? Rate it from 0 to 2 points, and explain the reason.\n\n"
        "2 points: the task is completed directly, with no wasted or repeated actions.\n"
        "1 point: the task is completed, but the trajectory contains redundant steps or drifts.\n"
        "0 points: the task is not completed.",
        (
            Section("Task", "task"),
            Section("Agent-Environment Interaction", "accumulated_context"),
            Section("Reference Interaction", "ref_interaction", optional=True),
        ),
        _SCORE_FORMAT,
    ),
    Rubric.PLAN_QUALITY: Template(
        "You are reviewing a global plan that guided an agent. Judge the given global plan along "
        "three dimensions: correctness (following it leads to the task goal, given the environment's "
        "feedback), executability (its steps are clear and the agent could carry them out), and "
        "standardization (every step uses one consistent numbered format). "
        "For each dimension, please score the global plan on a scale of 1 to 5, where 5 is best, "
        "and explain the reason.",
        (
            Section("Task", "task"),
            Section("Global Plan", "global_plan"),
            Section("Execution Step Index", "execution_step_index"),
            Section("Accumulated Observation", "observation", optional=True),
        ),
        """Output Format:
```json
{
    "correctness_score": xxx,
    "correctness_reason": "...",
    "executability_score": xxx,
    "executability_reason": "...",
    "standardization_score": xxx,
    "standardization_reason": "..."
}
```""",
    ),
    Rubric.PLAN_SELECTION: Template(
        "Several candidate global plans are listed below, numbered from 0. Pick the one best suited "
        "to finishing the task from the current execution step, weighing correctness, executability "
        "and standardization of format.",
        (
            Section("Task", "task"),
            Section("Available Global Plans", "global_plans"),
            Section("Execution Step Index", "execution_step_index"),
            Section("Accumulated Observation", "observation", optional=True),
        ),
        """Output Format:
```json
{
    "selected_index": xxx,
    "reason": "..."
}
```""",
    ),
    Rubric.ENV_FEEDBACK: Template(
        "You are simulating the environment. Using the task and a reference interaction that "
        "finishes it, write the environment's response to the agent's action. If the action reaches "
        'the final goal, reply exactly "Task Completed!"; otherwise reply with one line of the form '
        '"Observation: ...".',
        (
            Section("Task", "task"),
            Section("Reference Interaction", "ref_interaction"),
            Section("Previous Observation", "observation", optional=True),
            Section("Agent Action", "agent_action"),
        ),
    ),
}


def render_prompt(rubric: Rubric | str, slots: dict[str, object]) -> str:
    """Substitute slot values verbatim; optional sections with no value are left out."""
    tpl = TEMPLATES[Rubric(rubric)]
    missing = sorted(s for s in tpl.required if slots.get(s) is None)
    if missing:
        raise TemplateError(f"{Rubric(rubric).value} prompt is missing slot(s): {', '.join(missing)}")
    parts = [tpl.preamble]
    for sec in tpl.sections:
        value = slots.get(sec.slot)
        if value is None or (sec.optional and value == ""):
            continue
        parts.append(f"# {sec.heading}\n{value}")
    if tpl.output_format:
        parts.append(tpl.output_format)
    return "\n\n".join(parts)
