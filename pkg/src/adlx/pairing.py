"""Pair complementary semantic events into semantic states."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

from .catalog import SensorCatalog
from .errors import UnknownEntity, UnknownStatus
from .model import SemanticEvent, SemanticState, Timestamp

# Diagnostic reasons for events that end up in no state.
REASON_UNKNOWN_ENTITY = "unknown-entity"
REASON_UNKNOWN_STATUS = "unknown-status"
REASON_UNPAIRABLE_STATUS = "unpairable-status"
REASON_INTERRUPTED = "interrupted"
REASON_NO_MATCHING_OPEN = "no-matching-open"
REASON_DANGLING = "dangling"


@dataclass(frozen=True, slots=True)
class UnpairedEvent:
    event: SemanticEvent
    reason: str


def pair_events(
    events: Sequence[SemanticEvent],
    catalog: SensorCatalog,
    *,
    close_dangling_at: Optional[Timestamp] = None,
) -> tuple[list[SemanticState], list[UnpairedEvent]]:
    """Pair complementary events of each entity into states.

    Two events of one entity form a state exactly when the second carries
    the closing partner of the first's status, the first strictly precedes
    the second, and no other event of that entity falls between them.  The
    state's property is the entity id; its interval is [t1, t2].

    Every event joins at most one state.  Leftovers are returned as
    diagnostics, never raised: events whose entity or status is not in the
    catalog, openings cut off by another event of the same entity, closings
    with no open state, and openings still pending at end of stream.  The
    latter are closed at ``close_dangling_at`` instead when it is given
    (events at or after that instant stay dangling).
    """
    states: list[SemanticState] = []
    unpaired: list[UnpairedEvent] = []
    # entity -> (opening event, expected closing status)
    pending: dict[str, tuple[SemanticEvent, str]] = {}

    def open_fresh(ev: SemanticEvent) -> None:
        try:
            partner = catalog.closing_partner(ev.entity, ev.status)
        except UnknownStatus:
            unpaired.append(UnpairedEvent(ev, REASON_UNKNOWN_STATUS))
            return
        if partner is not None:
            pending[ev.entity] = (ev, partner)
        else:
            spec = catalog.spec(ev.entity)
            closing = any(ev.status == c for _, c in spec.complements)
            reason = (
                REASON_NO_MATCHING_OPEN if closing else REASON_UNPAIRABLE_STATUS
            )
            unpaired.append(UnpairedEvent(ev, reason))

    for ev in events:
        if ev.entity not in catalog:
            unpaired.append(UnpairedEvent(ev, REASON_UNKNOWN_ENTITY))
            continue
        held = pending.pop(ev.entity, None)
        if held is not None:
            opening, expected = held
            if ev.status == expected and opening.ts < ev.ts:
                states.append(SemanticState(ev.entity, opening.ts, ev.ts))
                continue
            unpaired.append(UnpairedEvent(opening, REASON_INTERRUPTED))
        open_fresh(ev)

    for opening, _expected in pending.values():
        if close_dangling_at is not None and close_dangling_at > opening.ts:
            states.append(
                SemanticState(opening.entity, opening.ts, close_dangling_at)
            )
        else:
            unpaired.append(UnpairedEvent(opening, REASON_DANGLING))

    states.sort(key=lambda st: (st.start, st.property))
    unpaired.sort(key=lambda up: up.event.ts)
    return states, unpaired
