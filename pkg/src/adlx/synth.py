"""Seeded synthetic event logs with ground truth for offline pipeline runs.

A scenario document is JSON:

    {
      "activities": {
        "<activity label>": {
          "sensors": [
            {
              "entity": "BedPressure",          (required)
              "label": "the bed is occupied",   (optional; defaulted)
              "statuses": ["Start", "End"],     (optional; default Start/End)
              "min_dwell_seconds": 30,          (required)
              "max_dwell_seconds": 120,         (required, >= min)
              "occurrences": 1,                 (optional; default 1)
              "start_offset_seconds": 0,        (optional; default 0)
              "gap_seconds": 0                  (optional; default 0)
            }
          ]
        }
      },
      "schedule": [
        {"activity": "<label>", "start": "<ISO>", "end": "<ISO>"}
      ]
    }

Each scheduled interval emits its activity's sensor templates: every
occurrence opens at the current cursor and closes after a seeded
whole-second dwell drawn uniformly from [min, max], clamped to the
interval end.  Dwell draws are deterministic under the seed.
"""

from __future__ import annotations

import json
import random
from datetime import datetime, timedelta
from pathlib import Path
from typing import IO, Union

from .catalog import EntitySpec, SensorCatalog
from .errors import InvalidScenario
from .ingest import GroundTruthInterval
from .model import ActivitySet, SemanticEvent


def load_scenario(source: Union[str, Path, IO[str], bytes, dict]) -> dict:
    if isinstance(source, dict):
        return source
    if isinstance(source, bytes):
        text = source.decode("utf-8")
    elif hasattr(source, "read"):
        text = source.read()
    else:
        text = Path(source).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidScenario(f"scenario is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise InvalidScenario("scenario must be a JSON object")
    return doc


def _parse_ts(text: str, where: str) -> datetime:
    try:
        return datetime.fromisoformat(text)
    except (TypeError, ValueError):
        raise InvalidScenario(f"{where}: bad ISO timestamp {text!r}") from None


def _sensor_templates(doc: dict) -> dict[str, list[dict]]:
    activities = doc.get("activities")
    if not isinstance(activities, dict) or not activities:
        raise InvalidScenario('scenario needs a non-empty "activities" map')
    templates: dict[str, list[dict]] = {}
    for activity, body in activities.items():
        if not isinstance(body, dict):
            raise InvalidScenario(f"activity {activity!r}: body must be a map")
        sensors = body.get("sensors")
        if not isinstance(sensors, list) or not sensors:
            raise InvalidScenario(
                f"activity {activity!r}: needs a non-empty sensor list"
            )
        for sensor in sensors:
            if not isinstance(sensor, dict) or "entity" not in sensor:
                raise InvalidScenario(
                    f"activity {activity!r}: each sensor needs an entity id"
                )
            lo = sensor.get("min_dwell_seconds")
            hi = sensor.get("max_dwell_seconds")
            if not isinstance(lo, int) or not isinstance(hi, int) or lo < 1 or hi < lo:
                raise InvalidScenario(
                    f"activity {activity!r}, entity {sensor['entity']!r}: "
                    "dwell bounds must be integers with 1 <= min <= max"
                )
        templates[activity] = sensors
    return templates


def scenario_catalog(doc: dict) -> SensorCatalog:
    """Sensor catalog covering every entity the scenario can emit."""
    specs: dict[str, EntitySpec] = {}
    for activity, sensors in _sensor_templates(doc).items():
        for sensor in sensors:
            entity = sensor["entity"]
            statuses = tuple(sensor.get("statuses", ["Start", "End"]))
            if len(statuses) != 2:
                raise InvalidScenario(
                    f"entity {entity!r}: statuses must be a two-element pair"
                )
            label = sensor.get("label", f"the {entity} sensor is active")
            spec = EntitySpec(
                entity=entity,
                label=label,
                statuses=statuses,
                complements=((statuses[0], statuses[1]),),
            )
            if entity in specs and specs[entity] != spec:
                raise InvalidScenario(
                    f"entity {entity!r} is declared twice with different specs"
                )
            specs[entity] = spec
    return SensorCatalog(specs.values())


def scenario_activities(doc: dict) -> ActivitySet:
    return ActivitySet(_sensor_templates(doc).keys())


def mock_rules(doc: dict) -> dict[str, str]:
    """Map each sensor's property label to its activity.

    This is the rule table for the deterministic mock backend; it only
    exists when every sensor label belongs to exactly one activity.
    """
    catalog = scenario_catalog(doc)
    rules: dict[str, str] = {}
    owners: dict[str, str] = {}
    for activity, sensors in _sensor_templates(doc).items():
        for sensor in sensors:
            label = catalog.label_for(sensor["entity"])
            if label in rules and owners[label] != activity:
                raise InvalidScenario(
                    f"sensor label {label!r} is shared by activities "
                    f"{owners[label]!r} and {activity!r}; rules would be ambiguous"
                )
            rules[label] = activity
            owners[label] = activity
    return rules


def generate(
    scenario: Union[str, Path, IO[str], bytes, dict], seed: int
) -> tuple[list[SemanticEvent], list[GroundTruthInterval], SensorCatalog]:
    """Produce (events, ground truth, catalog) for a scenario, seeded."""
    doc = load_scenario(scenario)
    templates = _sensor_templates(doc)
    catalog = scenario_catalog(doc)
    schedule = doc.get("schedule")
    if not isinstance(schedule, list) or not schedule:
        raise InvalidScenario('scenario needs a non-empty "schedule" list')
    rng = random.Random(seed)
    events: list[SemanticEvent] = []
    truth: list[GroundTruthInterval] = []
    for pos, slot in enumerate(schedule):
        where = f"schedule[{pos}]"
        if not isinstance(slot, dict):
            raise InvalidScenario(f"{where}: must be a map")
        activity = slot.get("activity")
        if activity not in templates:
            raise InvalidScenario(
                f"{where}: activity {activity!r} is not defined in the scenario"
            )
        start = _parse_ts(slot.get("start"), where)
        end = _parse_ts(slot.get("end"), where)
        if end <= start:
            raise InvalidScenario(f"{where}: end must be after start")
        truth.append(GroundTruthInterval(activity, start, end))
        for sensor in templates[activity]:
            entity = sensor["entity"]
            statuses = sensor.get("statuses", ["Start", "End"])
            opening, closing = statuses[0], statuses[1]
            occurrences = int(sensor.get("occurrences", 1))
            gap = timedelta(seconds=int(sensor.get("gap_seconds", 0)))
            cursor = start + timedelta(
                seconds=int(sensor.get("start_offset_seconds", 0))
            )
            for _ in range(occurrences):
                if cursor >= end:
                    break
                dwell = rng.randint(
                    sensor["min_dwell_seconds"], sensor["max_dwell_seconds"]
                )
                close_at = min(cursor + timedelta(seconds=dwell), end)
                if close_at <= cursor:
                    break
                events.append(SemanticEvent(entity, opening, cursor))
                events.append(SemanticEvent(entity, closing, close_at))
                cursor = close_at + gap
    events.sort(key=lambda ev: ev.ts)
    truth.sort(key=lambda iv: iv.start)
    return events, truth, catalog


def scenario_profile(doc: dict) -> dict:
    """Plain-JSON home profile derived from the scenario's sensors."""
    catalog = scenario_catalog(doc)
    labels = [spec.label for spec in catalog]
    return {
        "layout_description": (
            "A synthetic smart home driven by a scripted scenario; rooms "
            "and furnishings are implied by the sensor names."
        ),
        "sensor_description": (
            "Binary sensors report when a property starts and stops "
            "holding. Installed properties: " + "; ".join(sorted(labels)) + "."
        ),
        "activities": list(scenario_activities(doc)),
    }
