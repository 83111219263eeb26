"""Core value objects: events, states, windows, activity sets, predictions.

All types are immutable and safe to share across threads.  Timestamps are
naive ``datetime`` instants carrying a full calendar date even when they
are later rendered as time-of-day only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import Mapping, Optional

Timestamp = datetime

Interval = tuple[Timestamp, Timestamp]


@dataclass(frozen=True, slots=True)
class SemanticEvent:
    """One timestamped entity/status observation derived from a sensor."""

    entity: str
    status: str
    ts: Timestamp

    def __post_init__(self) -> None:
        if not self.entity:
            raise ValueError("event entity must be non-empty")
        if not self.status:
            raise ValueError("event status must be non-empty")


@dataclass(frozen=True, slots=True)
class SemanticState:
    """An interval during which a sensed property holds continuously.

    Zero-duration states (start == end) are legal; they arise when a state
    is clipped at a window boundary.
    """

    property: str
    start: Timestamp
    end: Timestamp

    def __post_init__(self) -> None:
        if not self.property:
            raise ValueError("state property must be non-empty")
        if self.end < self.start:
            raise ValueError(
                f"state end {self.end} precedes start {self.start}"
            )


def state_duration(state: SemanticState) -> timedelta:
    """Length of the state's interval; zero for point states."""
    return state.end - state.start


def clip_state(
    state: SemanticState, win_start: Timestamp, win_end: Timestamp
) -> Optional[SemanticState]:
    """Intersect a state with a window interval.

    Returns ``None`` when the closed intervals do not intersect, otherwise
    the state restricted to ``[max(start, win_start), min(end, win_end)]``.
    The input state is returned unchanged when it is entirely contained.
    """
    if win_start >= win_end:
        raise InvalidWindowBounds(win_start, win_end)
    if state.end < win_start or state.start > win_end:
        return None
    start = max(state.start, win_start)
    end = min(state.end, win_end)
    if start == state.start and end == state.end:
        return state
    return SemanticState(state.property, start, end)


class InvalidWindowBounds(ValueError):
    def __init__(self, start: Timestamp, end: Timestamp):
        super().__init__(f"window start {start} must precede end {end}")


@dataclass(frozen=True, slots=True)
class StateWindow:
    """A fixed-length time window with the states clipped into it.

    States are sorted by (start, property) and lie fully inside the window
    bounds.  A window with no states is legal and flagged empty.
    """

    start: Timestamp
    end: Timestamp
    states: tuple[SemanticState, ...] = ()

    def __post_init__(self) -> None:
        if self.end <= self.start:
            raise ValueError("window end must be after window start")
        prev_key = None
        for st in self.states:
            if st.start < self.start or st.end > self.end:
                raise ValueError(
                    f"state {st.property} [{st.start}, {st.end}] exceeds "
                    f"window [{self.start}, {self.end}]"
                )
            key = (st.start, st.property)
            if prev_key is not None and key < prev_key:
                raise ValueError("window states must be sorted by (start, property)")
            prev_key = key

    @property
    def is_empty(self) -> bool:
        return not self.states

    @property
    def length(self) -> timedelta:
        return self.end - self.start


def normalize_label(label: str) -> str:
    """Canonical form used for activity-label comparison."""
    return label.strip().lower()


@dataclass(frozen=True)
class ActivitySet:
    """Ordered candidate activity labels, distinct after normalization."""

    labels: tuple[str, ...]

    def __init__(self, labels) -> None:
        object.__setattr__(self, "labels", tuple(labels))
        seen: dict[str, str] = {}
        for label in self.labels:
            norm = normalize_label(label)
            if not norm:
                raise ValueError("activity labels must be non-empty")
            if norm in seen:
                raise ValueError(
                    f"labels {seen[norm]!r} and {label!r} collide after normalization"
                )
            seen[norm] = label
        object.__setattr__(self, "_by_norm", seen)

    def __len__(self) -> int:
        return len(self.labels)

    def __iter__(self):
        return iter(self.labels)

    def __contains__(self, label: str) -> bool:
        return normalize_label(label) in self._by_norm

    def canonical(self, label: str) -> str:
        """Stored display form of a label, matched case-insensitively."""
        try:
            return self._by_norm[normalize_label(label)]
        except KeyError:
            raise KeyError(f"activity {label!r} is not in the set") from None


@dataclass(frozen=True, slots=True)
class TokenUsage:
    prompt_tokens: int = 0
    completion_tokens: int = 0

    @property
    def total(self) -> int:
        return self.prompt_tokens + self.completion_tokens


# Prediction outcome statuses.
STATUS_OK = "ok"
STATUS_HALLUCINATED = "hallucinated"
STATUS_UNPARSEABLE = "unparseable"
STATUS_MISSING_EXPLANATION = "missing-explanation"
STATUS_SKIPPED = "skipped"

PREDICTION_STATUSES = (
    STATUS_OK,
    STATUS_HALLUCINATED,
    STATUS_UNPARSEABLE,
    STATUS_MISSING_EXPLANATION,
    STATUS_SKIPPED,
)


@dataclass(frozen=True, slots=True)
class PredictionRecord:
    """One classified window: label, explanation, and audit trail."""

    window_start: Timestamp
    window_end: Timestamp
    status: str
    activity: Optional[str]
    explanation: str
    raw_model_output: str = ""
    prompt_fingerprint: str = ""
    token_usage: TokenUsage = field(default_factory=TokenUsage)

    def __post_init__(self) -> None:
        if self.status not in PREDICTION_STATUSES:
            raise ValueError(f"unknown prediction status {self.status!r}")
        if self.status == STATUS_OK and not self.activity:
            raise ValueError("ok predictions must carry an activity label")


@dataclass(frozen=True)
class AttributionSet:
    """Most important state properties behind one prediction.

    ``features`` maps each property to its sorted, non-overlapping
    [start, end] intervals.
    """

    predicted_activity: str
    features: Mapping[str, tuple[Interval, ...]]

    def __init__(self, predicted_activity: str, features) -> None:
        object.__setattr__(self, "predicted_activity", predicted_activity)
        frozen = {prop: tuple((s, e) for s, e in ivals) for prop, ivals in dict(features).items()}
        for prop, ivals in frozen.items():
            prev_end = None
            for s, e in ivals:
                if e < s:
                    raise ValueError(
                        f"feature {prop!r}: interval end {e} precedes start {s}"
                    )
                if prev_end is not None and s < prev_end:
                    raise ValueError(
                        f"feature {prop!r}: intervals overlap or are unsorted"
                    )
                prev_end = e
        object.__setattr__(self, "features", frozen)
