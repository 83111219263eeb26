"""Fixed-length overlapping windowing of semantic state streams."""

from __future__ import annotations

from datetime import timedelta
from typing import Optional, Sequence

from .errors import InvalidParameters
from .model import SemanticState, StateWindow, Timestamp, clip_state


def stride_for(window_seconds: float, overlap: float) -> timedelta:
    """Stride between window starts, quantized to whole milliseconds."""
    _check_parameters(window_seconds, overlap)
    return timedelta(milliseconds=round(window_seconds * (1.0 - overlap) * 1000))


def _check_parameters(window_seconds: float, overlap: float) -> None:
    if not window_seconds > 0:
        raise InvalidParameters(f"window length must be positive, got {window_seconds}")
    if not 0.0 <= overlap < 1.0:
        raise InvalidParameters(f"overlap must lie in [0, 1), got {overlap}")


def window_starts(
    span_start: Timestamp,
    span_end: Timestamp,
    window_seconds: float,
    overlap: float,
) -> list[Timestamp]:
    """Start instants of all windows fitting entirely inside the span."""
    _check_parameters(window_seconds, overlap)
    if span_end < span_start:
        raise InvalidParameters("span end precedes span start")
    length = timedelta(milliseconds=round(window_seconds * 1000))
    stride = stride_for(window_seconds, overlap)
    starts: list[Timestamp] = []
    start = span_start
    while start + length <= span_end:
        starts.append(start)
        start += stride
    return starts


def segment(
    states: Sequence[SemanticState],
    window_seconds: float,
    overlap: float,
    span: Optional[tuple[Timestamp, Timestamp]] = None,
) -> list[StateWindow]:
    """Slice states into fixed-length windows advancing by stride.

    Windows start at the span start and advance by window_seconds*(1-overlap)
    for as long as they fit inside the span.  A window contains every state
    whose closed interval intersects it, clipped to the window bounds, with
    one exception keeping each point-in-time state in a single window: a
    state whose intersection collapses to the window's end instant is
    deferred to the next window (the final window keeps its end instant).
    Empty windows are retained.  The span defaults to the states' full
    extent.
    """
    _check_parameters(window_seconds, overlap)
    if span is None:
        if not states:
            return []
        span = (min(s.start for s in states), max(s.end for s in states))
    starts = window_starts(span[0], span[1], window_seconds, overlap)
    length = timedelta(milliseconds=round(window_seconds * 1000))
    windows: list[StateWindow] = []
    last_index = len(starts) - 1
    for i, w_start in enumerate(starts):
        w_end = w_start + length
        clipped = []
        for state in states:
            cut = clip_state(state, w_start, w_end)
            if cut is None:
                continue
            if (
                i != last_index
                and cut.start == cut.end == w_end
            ):
                continue
            clipped.append(cut)
        clipped.sort(key=lambda st: (st.start, st.property))
        windows.append(StateWindow(w_start, w_end, tuple(clipped)))
    return windows
