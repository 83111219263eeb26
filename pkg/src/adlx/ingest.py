"""Dataset ingestion: event logs, ground-truth intervals, threshold adaptation.

Three column layouts are supported:

* ``uci-adl``     interval rows ``start, end, location, type, place`` (tab or
                  comma delimited); each row explodes into a Start/End event
                  pair for the entity ``location + type``.
* ``marble``      CSV ``ts_ms, entity, status`` with epoch-millisecond stamps.
* ``generic-csv`` CSV ``timestamp, entity, status`` with ISO timestamps.

Blank lines and lines containing no digits (headers, comments) are skipped.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from datetime import datetime, timedelta
from pathlib import Path
from typing import IO, Iterable, Optional, Sequence, Union

from .catalog import SensorCatalog
from .errors import EmptyInput, MalformedRow, UnknownActivity, UnknownStatus
from .model import ActivitySet, SemanticEvent, StateWindow, Timestamp

EVENT_FORMATS = ("uci-adl", "marble", "generic-csv")

_EPOCH = datetime(1970, 1, 1)

# Statuses used for interval-style rows exploded into event pairs.
OPENING_STATUS = "Start"
CLOSING_STATUS = "End"


@dataclass(frozen=True, slots=True)
class GroundTruthInterval:
    activity: str
    start: Timestamp
    end: Timestamp

    def __post_init__(self) -> None:
        if self.end < self.start:
            raise ValueError(
                f"interval end {self.end} precedes start {self.start}"
            )


def _read_text(source: Union[str, Path, IO[str], bytes]) -> str:
    if isinstance(source, bytes):
        return source.decode("utf-8")
    if hasattr(source, "read"):
        data = source.read()
        return data.decode("utf-8") if isinstance(data, bytes) else data
    return Path(source).read_text(encoding="utf-8")


def _data_lines(text: str) -> Iterable[tuple[int, str]]:
    """Yield (1-based line number, line) for rows that can carry data."""
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        if not any(ch.isdigit() for ch in stripped):
            continue
        yield line_no, stripped


def _split_columns(line: str) -> list[str]:
    """Split a row on commas when present, otherwise on whitespace runs."""
    if "," in line:
        fields = next(csv.reader([line]))
    else:
        fields = line.split("\t") if "\t" in line else line.split()
    return [f.strip() for f in fields if f.strip()]


def _parse_uci_ts(text: str, line_no: int) -> Timestamp:
    try:
        return datetime.strptime(text, "%Y-%m-%d %H:%M:%S")
    except ValueError:
        raise MalformedRow(line_no, f"bad timestamp {text!r}") from None


def _parse_iso_ts(text: str, line_no: int) -> Timestamp:
    try:
        return datetime.fromisoformat(text)
    except ValueError:
        pass
    try:
        return datetime.strptime(text, "%H:%M:%S")
    except ValueError:
        raise MalformedRow(line_no, f"bad ISO timestamp {text!r}") from None


def _parse_epoch_ms(text: str, line_no: int) -> Timestamp:
    try:
        return _EPOCH + timedelta(milliseconds=int(text))
    except ValueError:
        raise MalformedRow(
            line_no, f"bad epoch-millisecond timestamp {text!r}"
        ) from None


def _check_format(fmt: str) -> None:
    if fmt not in EVENT_FORMATS:
        raise ValueError(
            f"unknown format {fmt!r}; expected one of {', '.join(EVENT_FORMATS)}"
        )


def parse_event_log(
    source: Union[str, Path, IO[str], bytes],
    fmt: str,
    catalog: Optional[SensorCatalog] = None,
) -> list[SemanticEvent]:
    """Parse an event log into semantic events sorted by timestamp.

    When a catalog is supplied, every entity and status must resolve
    against it.  Out-of-order input is legal and re-sorted (stable).
    """
    _check_format(fmt)
    events: list[SemanticEvent] = []
    for line_no, line in _data_lines(_read_text(source)):
        fields = _split_columns(line)
        if fmt == "uci-adl":
            if len(fields) != 5:
                raise MalformedRow(
                    line_no, f"expected 5 columns, got {len(fields)}"
                )
            start = _parse_uci_ts(fields[0], line_no)
            end = _parse_uci_ts(fields[1], line_no)
            if end < start:
                raise MalformedRow(line_no, "interval end precedes start")
            entity = fields[2] + fields[3]
            events.append(SemanticEvent(entity, OPENING_STATUS, start))
            events.append(SemanticEvent(entity, CLOSING_STATUS, end))
        else:
            if len(fields) != 3:
                raise MalformedRow(
                    line_no, f"expected 3 columns, got {len(fields)}"
                )
            ts = (
                _parse_epoch_ms(fields[0], line_no)
                if fmt == "marble"
                else _parse_iso_ts(fields[0], line_no)
            )
            entity, status = fields[1], fields[2]
            if not entity or not status:
                raise MalformedRow(line_no, "empty entity or status column")
            events.append(SemanticEvent(entity, status, ts))
    if catalog is not None:
        for ev in events:
            spec = catalog.spec(ev.entity)
            if ev.status not in spec.statuses:
                raise UnknownStatus(
                    f"entity {ev.entity!r} has no status {ev.status!r}"
                )
    events.sort(key=lambda ev: ev.ts)
    return events


def parse_ground_truth(
    source: Union[str, Path, IO[str], bytes],
    fmt: str,
    activities: Optional[ActivitySet] = None,
) -> list[GroundTruthInterval]:
    """Parse activity annotations into intervals sorted by start.

    Overlapping intervals are retained as-is.  With an activity set given,
    labels outside it raise UnknownActivity; matching is case-insensitive
    and intervals carry the canonical label form.
    """
    _check_format(fmt)
    intervals: list[GroundTruthInterval] = []
    for line_no, line in _data_lines(_read_text(source)):
        fields = _split_columns(line)
        if fmt == "uci-adl":
            if len(fields) != 3:
                raise MalformedRow(
                    line_no, f"expected 3 columns, got {len(fields)}"
                )
            start = _parse_uci_ts(fields[0], line_no)
            end = _parse_uci_ts(fields[1], line_no)
            activity = fields[2]
        elif fmt == "marble":
            if len(fields) != 3:
                raise MalformedRow(
                    line_no, f"expected 3 columns, got {len(fields)}"
                )
            start = _parse_epoch_ms(fields[0], line_no)
            end = _parse_epoch_ms(fields[1], line_no)
            activity = fields[2]
        else:
            if len(fields) != 3:
                raise MalformedRow(
                    line_no, f"expected 3 columns, got {len(fields)}"
                )
            activity = fields[0]
            start = _parse_iso_ts(fields[1], line_no)
            end = _parse_iso_ts(fields[2], line_no)
        if end < start:
            raise MalformedRow(line_no, "interval end precedes start")
        if not activity:
            raise MalformedRow(line_no, "empty activity column")
        if activities is not None:
            if activity not in activities:
                raise UnknownActivity(
                    f"line {line_no}: activity {activity!r} is not a candidate"
                )
            activity = activities.canonical(activity)
        intervals.append(GroundTruthInterval(activity, start, end))
    intervals.sort(key=lambda iv: iv.start)
    return intervals


def threshold_adapter(
    series: Sequence[tuple[Timestamp, float]],
    threshold: float,
    property: str,
) -> list[SemanticEvent]:
    """Turn a numeric series into Start/End events at threshold crossings.

    A sample is "above" iff value > threshold (strict).  A Start event is
    emitted at each below-to-above transition, an End event at each
    above-to-below transition; a series opening above the threshold emits
    Start at its first sample.  A trailing Start is left unclosed.
    """
    events: list[SemanticEvent] = []
    above = False
    for ts, value in series:
        now_above = value > threshold
        if now_above and not above:
            events.append(SemanticEvent(property, OPENING_STATUS, ts))
        elif above and not now_above:
            events.append(SemanticEvent(property, CLOSING_STATUS, ts))
        above = now_above
    return events


def _overlap(window: StateWindow, interval: GroundTruthInterval) -> timedelta:
    lo = max(window.start, interval.start)
    hi = min(window.end, interval.end)
    return max(hi - lo, timedelta(0))


def label_windows(
    windows: Sequence[StateWindow],
    truth: Sequence[GroundTruthInterval],
) -> tuple[list[tuple[StateWindow, str]], int]:
    """Assign each window the label of its maximal-overlap interval.

    Windows with zero overlap against every interval are dropped; the
    second return value counts them.  Ties go to the earlier-starting
    interval (then to the earlier position in start order).
    """
    if not truth:
        raise EmptyInput("ground truth is empty; no window can be labeled")
    ordered = sorted(truth, key=lambda iv: (iv.start, iv.end))
    labeled: list[tuple[StateWindow, str]] = []
    dropped = 0
    for window in windows:
        best: Optional[GroundTruthInterval] = None
        best_overlap = timedelta(0)
        for interval in ordered:
            ov = _overlap(window, interval)
            if ov > best_overlap:
                best, best_overlap = interval, ov
        if best is None:
            dropped += 1
        else:
            labeled.append((window, best.activity))
    return labeled, dropped


def write_events_csv(
    events: Iterable[SemanticEvent], sink: IO[str]
) -> None:
    """Write events in the generic-csv layout (round-trips with the parser)."""
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(["timestamp", "entity", "status"])
    for ev in events:
        writer.writerow([ev.ts.isoformat(), ev.entity, ev.status])


def write_truth_csv(
    intervals: Iterable[GroundTruthInterval], sink: IO[str]
) -> None:
    """Write intervals in the generic-csv layout (round-trips with the parser)."""
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(["activity", "start", "end"])
    for iv in intervals:
        writer.writerow([iv.activity, iv.start.isoformat(), iv.end.isoformat()])


def events_to_csv(events: Iterable[SemanticEvent]) -> str:
    buf = io.StringIO()
    write_events_csv(events, buf)
    return buf.getvalue()


def truth_to_csv(intervals: Iterable[GroundTruthInterval]) -> str:
    buf = io.StringIO()
    write_truth_csv(intervals, buf)
    return buf.getvalue()
