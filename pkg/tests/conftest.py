"""Shared fixtures: a reference catalog, activity sets, time helpers."""

from __future__ import annotations

import sys
from datetime import datetime
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from adlx.catalog import EntitySpec, SensorCatalog
from adlx.model import ActivitySet

MARBLE_ACTIVITIES = (
    "clearing table",
    "eating",
    "entering home",
    "leaving home",
    "phone call",
    "preparing cold meal",
    "preparing hot meal",
    "setting up table",
    "taking medicines",
    "using pc",
    "watching tv",
)


def ts(hour: int, minute: int = 0, second: int = 0, day: int = 1) -> datetime:
    return datetime(2024, 3, day, hour, minute, second)


@pytest.fixture(scope="session")
def marble_activities() -> ActivitySet:
    return ActivitySet(MARBLE_ACTIVITIES)


@pytest.fixture(scope="session")
def catalog() -> SensorCatalog:
    return SensorCatalog(
        [
            EntitySpec(
                entity="Fridge",
                label="the fridge door is open",
                statuses=("Opened", "Closed"),
                complements=(("Opened", "Closed"),),
            ),
            EntitySpec(
                entity="Television",
                label="the television is on",
                statuses=("On", "Off"),
                complements=(("On", "Off"),),
            ),
            EntitySpec(
                entity="OnTheCouch",
                label="the subject is on the couch",
                statuses=("Start", "End"),
                complements=(("Start", "End"),),
            ),
            EntitySpec(
                entity="MedicineDrawer",
                label="the medicine drawer is open",
                statuses=("Opened", "Closed"),
                complements=(("Opened", "Closed"),),
            ),
            EntitySpec(
                entity="BedPressure",
                label="the bed is occupied",
                statuses=("Start", "End"),
                complements=(("Start", "End"),),
            ),
        ]
    )


@pytest.fixture(scope="session")
def profile_texts() -> dict[str, str]:
    return {
        "layout_description": (
            "A one-bedroom apartment with a kitchen, a living room with a "
            "couch and a television, and a bedroom."
        ),
        "sensor_description": (
            "Magnetic sensors report doors and drawers opening and closing; "
            "pressure mats report the couch and bed being occupied; a smart "
            "plug reports the television turning on and off."
        ),
    }
