"""Fixed inputs behind the byte-frozen golden files."""

from __future__ import annotations

from datetime import datetime

from adlx.model import AttributionSet, SemanticState, StateWindow


def d(h: int, m: int = 0, s: int = 0) -> datetime:
    return datetime(2024, 3, 1, h, m, s)


GOLDEN_WINDOWS = {
    "window_fridge": StateWindow(
        d(15, 20),
        d(15, 40),
        (SemanticState("Fridge", d(15, 34), d(15, 35)),),
    ),
    "window_empty": StateWindow(d(8, 0), d(8, 0, 16)),
    "window_busy": StateWindow(
        d(19, 0),
        d(19, 30),
        (
            SemanticState("Television", d(19, 0), d(19, 30)),
            SemanticState("OnTheCouch", d(19, 2), d(19, 10)),
            SemanticState("Fridge", d(19, 12), d(19, 13)),
            SemanticState("OnTheCouch", d(19, 14), d(19, 30)),
        ),
    ),
}

GOLDEN_ATTRIBUTIONS = {
    "attrs_hot_meal": (
        AttributionSet(
            "preparing hot meal",
            {
                "Fridge": ((d(12, 1), d(12, 2)), (d(12, 10), d(12, 11))),
                "Television": ((d(12, 5), d(12, 6)),),
            },
        ),
        (d(12, 0), d(12, 16)),
    ),
    "attrs_empty": (
        AttributionSet("watching tv", {}),
        (d(21, 0), d(21, 0, 16)),
    ),
}

GOLDEN_PROMPT_WINDOW = "window_fridge"
