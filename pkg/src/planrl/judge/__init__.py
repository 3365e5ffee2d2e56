"""Rubric judges: prompt templates, verdict parsing, mock and HTTP backends."""

from .client import (
    DEFAULT_MOCK_SCRIPT,
    HTTPBackend,
    JudgeRequest,
    JudgeUnavailable,
    JudgeVerdict,
    LLMJudge,
    MockBackend,
    MockScriptError,
    VerdictError,
    fenced,
    mock_backend,
    parse_verdict,
    prompt_key,
    query,
)
from .prompts import Rubric, TemplateError, render_prompt

__all__ = [
    "DEFAULT_MOCK_SCRIPT", "HTTPBackend", "JudgeRequest", "JudgeUnavailable", "JudgeVerdict", "LLMJudge",
    "MockBackend", "MockScriptError", "Rubric", "TemplateError", "VerdictError", "fenced", "mock_backend",
    "parse_verdict", "prompt_key", "query", "render_prompt",
]
