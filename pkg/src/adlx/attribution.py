"""Adapt heatmap-style feature importance into attribution sets.

A heatmap explanation carries one row per model feature; each row holds
time segments scored with a peak intensity in [0, 1].  Rows whose peak
exceeds a threshold are the important features; their segments become the
intervals of an AttributionSet, keyed by state property.

The on-disk interchange document is JSON:

    {
      "predicted_activity": "<label>",
      "window": ["<ISO start>", "<ISO end>"],          (optional)
      "features": {"<property>": [["<ISO>", "<ISO>"], ...], ...}
    }
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import IO, Mapping, Optional, Union

from .errors import InvalidParameters, SchemaViolation, UnmappedFeature
from .model import ActivitySet, AttributionSet, Timestamp

SEGMENTS_ALL = "all"
SEGMENTS_ABOVE = "above"


@dataclass(frozen=True, slots=True)
class HeatmapSegment:
    start: Timestamp
    end: Timestamp
    max_intensity: float

    def __post_init__(self) -> None:
        if self.end < self.start:
            raise SchemaViolation(
                f"segment end {self.end} precedes start {self.start}"
            )
        if not 0.0 <= self.max_intensity <= 1.0:
            raise SchemaViolation(
                f"intensity {self.max_intensity} outside [0, 1]"
            )


@dataclass(frozen=True)
class HeatmapRow:
    feature: str
    segments: tuple[HeatmapSegment, ...]

    def __post_init__(self) -> None:
        if not self.feature:
            raise SchemaViolation("heatmap row feature name must be non-empty")
        prev_end: Optional[Timestamp] = None
        for seg in self.segments:
            if prev_end is not None and seg.start < prev_end:
                raise SchemaViolation(
                    f"feature {self.feature!r}: segments overlap or are unsorted"
                )
            prev_end = seg.end

    @property
    def peak(self) -> float:
        return max((s.max_intensity for s in self.segments), default=0.0)


@dataclass(frozen=True)
class HeatmapExplanation:
    rows: tuple[HeatmapRow, ...]

    def __post_init__(self) -> None:
        names = [r.feature for r in self.rows]
        if len(set(names)) != len(names):
            raise SchemaViolation("duplicate feature rows in heatmap")


def heatmap_to_attributions(
    hm: HeatmapExplanation,
    threshold: float,
    predicted: str,
    name_map: Mapping[str, str],
    *,
    activities: Optional[ActivitySet] = None,
    include_equal: bool = False,
    segments: str = SEGMENTS_ALL,
) -> AttributionSet:
    """Select important heatmap rows and build an AttributionSet.

    A row is important iff any of its segments scores strictly above the
    threshold (``include_equal`` switches to >=).  All segments of an
    important row contribute intervals by default; ``segments="above"``
    keeps only the above-threshold segments.  Feature names translate to
    state properties through ``name_map``.
    """
    if not 0.0 <= threshold <= 1.0:
        raise InvalidParameters(f"threshold {threshold} outside [0, 1]")
    if segments not in (SEGMENTS_ALL, SEGMENTS_ABOVE):
        raise InvalidParameters(f"unknown segment policy {segments!r}")
    if activities is not None and predicted not in activities:
        raise InvalidParameters(
            f"predicted activity {predicted!r} is not a candidate"
        )

    def hot(value: float) -> bool:
        return value >= threshold if include_equal else value > threshold

    features: dict[str, list[tuple[Timestamp, Timestamp]]] = {}
    for row in hm.rows:
        if not any(hot(seg.max_intensity) for seg in row.segments):
            continue
        try:
            prop = name_map[row.feature]
        except KeyError:
            raise UnmappedFeature(
                f"heatmap feature {row.feature!r} has no state property mapping"
            ) from None
        kept = [
            (seg.start, seg.end)
            for seg in row.segments
            if segments == SEGMENTS_ALL or hot(seg.max_intensity)
        ]
        features.setdefault(prop, []).extend(kept)
    for prop in features:
        features[prop].sort()
    return AttributionSet(predicted, features)


def _parse_iso(text: str, where: str) -> Timestamp:
    try:
        return datetime.fromisoformat(text)
    except (TypeError, ValueError):
        raise SchemaViolation(f"{where}: bad ISO timestamp {text!r}") from None


def _read_text(source: Union[str, Path, IO[str], bytes]) -> str:
    if isinstance(source, bytes):
        return source.decode("utf-8")
    if hasattr(source, "read"):
        data = source.read()
        return data.decode("utf-8") if isinstance(data, bytes) else data
    return Path(source).read_text(encoding="utf-8")


def load_attribution_document(
    source: Union[str, Path, IO[str], bytes],
) -> tuple[AttributionSet, Optional[tuple[Timestamp, Timestamp]]]:
    """Load the interchange JSON; returns the set and the window if given."""
    try:
        doc = json.loads(_read_text(source))
    except json.JSONDecodeError as exc:
        raise SchemaViolation(f"attribution document is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise SchemaViolation("attribution document must be a JSON object")
    predicted = doc.get("predicted_activity")
    if not isinstance(predicted, str) or not predicted.strip():
        raise SchemaViolation('"predicted_activity" must be a non-empty string')
    features_raw = doc.get("features")
    if not isinstance(features_raw, dict):
        raise SchemaViolation('"features" must be an object')
    features: dict[str, list[tuple[Timestamp, Timestamp]]] = {}
    for prop, intervals_raw in features_raw.items():
        if not isinstance(intervals_raw, list):
            raise SchemaViolation(f"feature {prop!r}: intervals must be a list")
        intervals = []
        for pair in intervals_raw:
            if not (isinstance(pair, list) and len(pair) == 2):
                raise SchemaViolation(
                    f"feature {prop!r}: each interval must be a two-element array"
                )
            start = _parse_iso(pair[0], f"feature {prop!r}")
            end = _parse_iso(pair[1], f"feature {prop!r}")
            if end < start:
                raise SchemaViolation(
                    f"feature {prop!r}: interval end {pair[1]} precedes start {pair[0]}"
                )
            intervals.append((start, end))
        features[prop] = intervals
    window: Optional[tuple[Timestamp, Timestamp]] = None
    if "window" in doc and doc["window"] is not None:
        raw = doc["window"]
        if not (isinstance(raw, list) and len(raw) == 2):
            raise SchemaViolation('"window" must be a two-element array')
        window = (_parse_iso(raw[0], '"window"'), _parse_iso(raw[1], '"window"'))
        if window[1] <= window[0]:
            raise SchemaViolation('"window" end must be after its start')
    try:
        attrs = AttributionSet(predicted, features)
    except ValueError as exc:
        raise SchemaViolation(str(exc)) from None
    return attrs, window


def load_attribution_interchange(
    source: Union[str, Path, IO[str], bytes],
) -> AttributionSet:
    attrs, _window = load_attribution_document(source)
    return attrs


def dump_attribution_interchange(
    attrs: AttributionSet,
    window: Optional[tuple[Timestamp, Timestamp]] = None,
) -> str:
    doc: dict[str, object] = {"predicted_activity": attrs.predicted_activity}
    if window is not None:
        doc["window"] = [window[0].isoformat(), window[1].isoformat()]
    doc["features"] = {
        prop: [[s.isoformat(), e.isoformat()] for s, e in intervals]
        for prop, intervals in attrs.features.items()
    }
    return json.dumps(doc, indent=2, ensure_ascii=False)


def load_heatmap_csv(
    source: Union[str, Path, IO[str], bytes],
) -> HeatmapExplanation:
    """Read a heatmap dump: CSV rows ``feature,start,end,intensity``.

    Rows group by feature in file order; segments of one feature must be
    sorted and non-overlapping.
    """
    text = _read_text(source)
    grouped: dict[str, list[HeatmapSegment]] = {}
    for line_no, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not row or not any(cell.strip() for cell in row):
            continue
        if not any(ch.isdigit() for ch in ",".join(row)):
            continue
        if len(row) != 4:
            raise SchemaViolation(
                f"line {line_no}: expected 4 columns, got {len(row)}"
            )
        feature = row[0].strip()
        start = _parse_iso(row[1].strip(), f"line {line_no}")
        end = _parse_iso(row[2].strip(), f"line {line_no}")
        try:
            intensity = float(row[3])
        except ValueError:
            raise SchemaViolation(
                f"line {line_no}: bad intensity {row[3]!r}"
            ) from None
        grouped.setdefault(feature, []).append(
            HeatmapSegment(start, end, intensity)
        )
    return HeatmapExplanation(
        tuple(
            HeatmapRow(feature, tuple(segments))
            for feature, segments in grouped.items()
        )
    )
