"""Serialize state windows and attribution sets into the interchange JSON.

The interchange object has a fixed shape shared by both pipeline modes:

    {
      "Time window": ["HH:MM:SS", "HH:MM:SS"],
      "<human-readable property label>": [["HH:MM:SS", "HH:MM:SS"], ...]
    }

Times are rendered as time-of-day; the calendar date travels out-of-band
with the window metadata and is re-attached when parsing back.
"""

from __future__ import annotations

import json
from datetime import datetime, timedelta
from typing import Mapping, Sequence

from .catalog import SensorCatalog
from .errors import MissingLabel, SchemaViolation, UnknownEntity
from .model import AttributionSet, StateWindow, Timestamp

TIME_WINDOW_KEY = "Time window"


def _clock(ts: Timestamp) -> str:
    return ts.strftime("%H:%M:%S")


def _label_for(catalog: SensorCatalog, prop: str) -> str:
    try:
        return catalog.label_for(prop)
    except UnknownEntity:
        raise MissingLabel(
            f"property {prop!r} has no human-readable label in the catalog"
        ) from None


def _render(
    start: Timestamp,
    end: Timestamp,
    intervals_by_label: Mapping[str, Sequence[tuple[Timestamp, Timestamp]]],
) -> str:
    doc: dict[str, object] = {TIME_WINDOW_KEY: [_clock(start), _clock(end)]}
    ordered = sorted(
        intervals_by_label.items(),
        key=lambda item: (min(s for s, _ in item[1]), item[0]),
    )
    for label, intervals in ordered:
        doc[label] = [[_clock(s), _clock(e)] for s, e in intervals]
    return json.dumps(doc, indent=2, ensure_ascii=False)


def render_window(window: StateWindow, catalog: SensorCatalog) -> str:
    """Render a window's states grouped per property label.

    Keys after "Time window" are ordered by earliest interval start, ties
    broken by label.  Each property contributes one key with one interval
    per state occurrence.  Output is byte-deterministic.
    """
    grouped: dict[str, list[tuple[Timestamp, Timestamp]]] = {}
    for state in window.states:
        label = _label_for(catalog, state.property)
        grouped.setdefault(label, []).append((state.start, state.end))
    return _render(window.start, window.end, grouped)


def render_attributions(
    attrs: AttributionSet,
    window_interval: tuple[Timestamp, Timestamp],
    catalog: SensorCatalog,
) -> str:
    """Render an attribution set in the same shape as a state window."""
    grouped: dict[str, list[tuple[Timestamp, Timestamp]]] = {}
    for prop, intervals in attrs.features.items():
        if not intervals:
            continue
        label = _label_for(catalog, prop)
        grouped.setdefault(label, []).extend(intervals)
    for label in grouped:
        grouped[label].sort()
    return _render(window_interval[0], window_interval[1], grouped)


def _attach_date(clock_text: str, window_start: Timestamp) -> Timestamp:
    try:
        parsed = datetime.strptime(clock_text, "%H:%M:%S")
    except ValueError:
        raise SchemaViolation(f"bad time-of-day value {clock_text!r}") from None
    candidate = window_start.replace(
        hour=parsed.hour, minute=parsed.minute, second=parsed.second, microsecond=0
    )
    if candidate < window_start:
        candidate += timedelta(days=1)
    return candidate


def parse_window_json(
    text: str, window_start: Timestamp
) -> tuple[tuple[Timestamp, Timestamp], dict[str, list[tuple[Timestamp, Timestamp]]]]:
    """Parse interchange JSON back into dated bounds and per-label intervals.

    ``window_start`` supplies the calendar date; any time-of-day earlier
    than the window start is taken to lie past midnight.  Windows shorter
    than 24 hours parse back exactly.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaViolation(f"interchange text is not valid JSON: {exc}") from None
    if not isinstance(doc, dict) or TIME_WINDOW_KEY not in doc:
        raise SchemaViolation(f'interchange object must carry a "{TIME_WINDOW_KEY}" key')
    bounds_raw = doc[TIME_WINDOW_KEY]
    if not (isinstance(bounds_raw, list) and len(bounds_raw) == 2):
        raise SchemaViolation(f'"{TIME_WINDOW_KEY}" must be a two-element array')
    bounds = (
        _attach_date(bounds_raw[0], window_start),
        _attach_date(bounds_raw[1], window_start),
    )
    per_label: dict[str, list[tuple[Timestamp, Timestamp]]] = {}
    for key, value in doc.items():
        if key == TIME_WINDOW_KEY:
            continue
        if not isinstance(value, list):
            raise SchemaViolation(f"key {key!r} must map to a list of intervals")
        intervals = []
        for pair in value:
            if not (isinstance(pair, list) and len(pair) == 2):
                raise SchemaViolation(
                    f"key {key!r}: each interval must be a two-element array"
                )
            intervals.append(
                (
                    _attach_date(pair[0], window_start),
                    _attach_date(pair[1], window_start),
                )
            )
        per_label[key] = intervals
    return bounds, per_label
