"""Prompt assembly for both pipeline modes from versioned template files.

Templates live under ``adlx/templates`` (overridable per call) and use
``{{name}}`` placeholders.  Builders are pure: identical inputs produce
identical bytes.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional

from .errors import (
    EmptyActivitySet,
    PromptTooLarge,
    SchemaViolation,
    UnknownActivity,
)
from .model import ActivitySet

DEFAULT_MAX_PROMPT_TOKENS = 32768

_PLACEHOLDER = re.compile(r"\{\{(\w+)\}\}")


def estimate_tokens(text: str) -> int:
    """Heuristic token count: one token per four characters, rounded up."""
    return (len(text) + 3) // 4


@dataclass(frozen=True)
class HomeProfile:
    """Deployment-specific context injected into the system prompts."""

    layout_description: str
    sensor_description: str
    activities: ActivitySet

    def __post_init__(self) -> None:
        if not self.layout_description.strip():
            raise ValueError("layout description must be non-empty")
        if not self.sensor_description.strip():
            raise ValueError("sensor description must be non-empty")


def load_template(name: str, template_dir: Optional[Path] = None) -> str:
    """Read a template by file name, from the override dir when given."""
    if template_dir is not None:
        return (Path(template_dir) / name).read_text(encoding="utf-8")
    return (
        resources.files("adlx").joinpath("templates", name).read_text(encoding="utf-8")
    )


def fill_template(template: str, values: dict[str, str]) -> str:
    """Substitute ``{{name}}`` placeholders; leftovers are an error."""

    def sub(match: re.Match) -> str:
        key = match.group(1)
        if key not in values:
            raise SchemaViolation(f"template placeholder {{{{{key}}}}} has no value")
        return values[key]

    return _PLACEHOLDER.sub(sub, template)


def _activity_bullets(activities: ActivitySet) -> str:
    if len(activities) == 0:
        raise EmptyActivitySet("the candidate activity set is empty")
    return "\n".join(f"- {label}" for label in activities)


def _budget_check(text: str, max_tokens: int) -> str:
    used = estimate_tokens(text)
    if used > max_tokens:
        raise PromptTooLarge(
            f"prompt is about {used} tokens, budget is {max_tokens}"
        )
    return text


def build_e2e_system_prompt(
    profile: HomeProfile,
    *,
    template_dir: Optional[Path] = None,
    max_tokens: int = DEFAULT_MAX_PROMPT_TOKENS,
) -> str:
    """System prompt for the single-call classify-and-explain mode."""
    text = fill_template(
        load_template("e2e_system.txt", template_dir),
        {
            "layout_description": profile.layout_description,
            "sensor_description": profile.sensor_description,
            "activity_list": _activity_bullets(profile.activities),
        },
    )
    return _budget_check(text, max_tokens)


def build_e2e_user_prompt(
    window_json: str,
    *,
    template_dir: Optional[Path] = None,
    max_tokens: int = DEFAULT_MAX_PROMPT_TOKENS,
) -> str:
    """User prompt embedding one rendered window, with step-by-step cue."""
    if not window_json.strip():
        raise SchemaViolation("window JSON must be non-empty")
    text = fill_template(
        load_template("e2e_user.txt", template_dir),
        {"window_json": window_json},
    )
    return _budget_check(text, max_tokens)


def build_explainer_system_prompt(
    profile: HomeProfile,
    *,
    template_dir: Optional[Path] = None,
    max_tokens: int = DEFAULT_MAX_PROMPT_TOKENS,
) -> str:
    """System prompt for the explanation-only mode."""
    text = fill_template(
        load_template("explainer_system.txt", template_dir),
        {
            "layout_description": profile.layout_description,
            "sensor_description": profile.sensor_description,
            "activity_list": _activity_bullets(profile.activities),
        },
    )
    return _budget_check(text, max_tokens)


def build_explainer_user_prompt(
    predicted: str,
    attrs_json: str,
    activities: ActivitySet,
    *,
    template_dir: Optional[Path] = None,
    max_tokens: int = DEFAULT_MAX_PROMPT_TOKENS,
) -> str:
    """User prompt naming the predicted label plus its attribution JSON."""
    if predicted not in activities:
        raise UnknownActivity(
            f"predicted activity {predicted!r} is not a candidate"
        )
    if not attrs_json.strip():
        raise SchemaViolation("attribution JSON must be non-empty")
    text = fill_template(
        load_template("explainer_user.txt", template_dir),
        {
            "predicted_activity": activities.canonical(predicted),
            "attributions_json": attrs_json,
        },
    )
    return _budget_check(text, max_tokens)
