"""Parse raw model output into an activity label and an explanation.

Extraction is two-stage: the structured JSON envelope the prompts request
is tried first; failing that, a tolerant free-text scan matches candidate
labels case-insensitively, preferring the longest label present.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Optional

from .errors import (
    HallucinatedLabel,
    MissingExplanation,
    UnparseableOutput,
)
from .model import ActivitySet, normalize_label

MODE_E2E = "e2e"
MODE_EXPLAINER = "explainer"

_FENCE = re.compile(r"```(?:json)?\s*(.*?)```", re.DOTALL)

# Free-text declaration of a label, used to distinguish a hallucinated
# activity from plain unparseable text once no candidate label matched.
_DECLARED = re.compile(
    r"\bthe activity\b[\s:\"']+(.+?)"
    r"(?=\s+(?:mainly|because|since|as)\b|[\".,;:!?\n]|$)",
    re.IGNORECASE | re.DOTALL,
)


@dataclass(frozen=True, slots=True)
class Extraction:
    activity: Optional[str]
    explanation: str
    reasoning: str = ""


def render_envelope(activity: str, explanation: str, reasoning: str = "") -> str:
    """The machine-readable answer shape the output contract requests."""
    return json.dumps(
        {"activity": activity, "explanation": explanation, "reasoning": reasoning},
        indent=2,
        ensure_ascii=False,
    )


def find_json_object(raw: str) -> Optional[dict]:
    candidates = [raw]
    candidates.extend(m.group(1) for m in _FENCE.finditer(raw))
    brace = _match_braces(raw)
    if brace is not None:
        candidates.append(brace)
    for text in candidates:
        try:
            doc = json.loads(text)
        except json.JSONDecodeError:
            continue
        if isinstance(doc, dict):
            return doc
    return None


def _match_braces(raw: str) -> Optional[str]:
    start = raw.find("{")
    if start < 0:
        return None
    depth = 0
    in_string = False
    escaped = False
    for i in range(start, len(raw)):
        ch = raw[i]
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
        elif ch == '"':
            in_string = True
        elif ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                return raw[start : i + 1]
    return None


def _from_envelope(
    doc: dict, activities: ActivitySet, mode: str
) -> Extraction:
    activity_raw = doc.get("activity")
    explanation = doc.get("explanation")
    reasoning = doc.get("reasoning", "")
    if not isinstance(explanation, str) or not explanation.strip():
        raise MissingExplanation("envelope carries no usable explanation")
    activity: Optional[str] = None
    if isinstance(activity_raw, str) and activity_raw.strip():
        if activity_raw not in activities:
            raise HallucinatedLabel(activity_raw.strip())
        activity = activities.canonical(activity_raw)
    if mode == MODE_E2E and activity is None:
        raise UnparseableOutput("envelope names no activity")
    return Extraction(activity, explanation.strip(), str(reasoning or "").strip())


def _scan_free_text(raw: str, activities: ActivitySet) -> Optional[tuple[str, int, int]]:
    """Longest candidate label present in the text, with its span."""
    best: Optional[tuple[str, int, int]] = None
    best_key: Optional[tuple[int, int]] = None
    for label in activities:
        words = [re.escape(word) for word in label.split()]
        pattern = re.compile(
            r"\b" + r"\s+".join(words) + r"\b", re.IGNORECASE
        )
        m = pattern.search(raw)
        if m is None:
            continue
        key = (-len(normalize_label(label)), m.start())
        if best_key is None or key < best_key:
            best_key = key
            best = (label, m.start(), m.end())
    return best


def _from_free_text(raw: str, activities: ActivitySet, mode: str) -> Extraction:
    hit = _scan_free_text(raw, activities)
    if hit is not None:
        label, _start, end = hit
        remainder = raw[end:].lstrip(" \t\r\n,.;:-")
        if mode == MODE_EXPLAINER:
            return Extraction(activities.canonical(label), raw.strip())
        if not remainder.strip():
            raise MissingExplanation(
                f"output names {label!r} but gives no explanation"
            )
        return Extraction(activities.canonical(label), remainder.strip())
    if mode == MODE_EXPLAINER:
        if raw.strip():
            return Extraction(None, raw.strip())
        raise UnparseableOutput("output is blank")
    declared = _DECLARED.search(raw)
    if declared is not None:
        raise HallucinatedLabel(declared.group(1).strip())
    raise UnparseableOutput("no candidate activity found in the output")


def extract(raw: str, activities: ActivitySet, mode: str = MODE_E2E) -> Extraction:
    """Extract (activity, explanation) from raw model output.

    The returned activity is always a member of the candidate set in its
    canonical form; a stated label outside the set raises HallucinatedLabel
    (never coerced).  Explanations are returned verbatim apart from
    surrounding whitespace.  In explainer mode the activity is optional:
    it is validated when stated but plain explanation text is accepted.
    """
    if mode not in (MODE_E2E, MODE_EXPLAINER):
        raise ValueError(f"unknown extraction mode {mode!r}")
    if not raw or not raw.strip():
        raise UnparseableOutput("output is blank")
    doc = find_json_object(raw)
    if doc is not None and ("activity" in doc or "explanation" in doc):
        return _from_envelope(doc, activities, mode)
    return _from_free_text(raw, activities, mode)
