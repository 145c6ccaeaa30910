"""Activity states and sensing power levels shared by every module."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Sequence


class Activity(enum.IntEnum):
    """User activity, ordered by motion intensity."""

    SLEEPING = 0
    SITTING = 1
    WALKING = 2
    JOGGING = 3
    RUNNING = 4

    @property
    def label(self) -> str:
        return self.name.capitalize()

    @property
    def intensity_rank(self) -> int:
        return int(self)

    @classmethod
    def from_label(cls, label: str) -> "Activity":
        # labels are case-sensitive on ingest
        for a in cls:
            if a.label == label:
                return a
        raise ValueError(f"unknown activity label {label!r}")


ACTIVITIES: tuple[Activity, ...] = tuple(Activity)


@dataclass(frozen=True, order=True)
class PowerLevel:
    """A discrete sensing-power action.

    Index 0 is the sleep mode and draws nothing.
    """

    index: int
    current_ma: float
    consumption_mw: float

    @property
    def name(self) -> str:
        return f"U{self.index}"

    @property
    def is_sleep(self) -> bool:
        return self.index == 0


# LED currents and node power draw per level
DEFAULT_LEVELS: tuple[PowerLevel, ...] = (
    PowerLevel(0, 0.0, 0.0),
    PowerLevel(1, 0.8, 69.3),
    PowerLevel(2, 3.5, 73.26),
    PowerLevel(3, 6.3, 79.86),
    PowerLevel(4, 9.2, 84.15),
    PowerLevel(5, 12.0, 89.43),
)


def validate_levels(levels: Sequence[PowerLevel]) -> tuple[PowerLevel, ...]:
    """Check the level table and return it sorted by index."""
    levels = tuple(sorted(levels, key=lambda u: u.index))
    if not levels:
        raise ValueError("at least one power level is required")
    if [u.index for u in levels] != list(range(len(levels))):
        raise ValueError("power level indices must be 0..m without gaps")
    u0 = levels[0]
    if u0.current_ma != 0 or u0.consumption_mw != 0:
        raise ValueError("level 0 is sleep mode and must have zero current and consumption")
    for lo, hi in zip(levels[1:], levels[2:]):
        if not (hi.current_ma > lo.current_ma and hi.consumption_mw > lo.consumption_mw):
            raise ValueError(
                f"current and consumption must increase strictly with index ({lo.name} -> {hi.name})"
            )
    for u in levels[1:]:
        if u.current_ma <= 0 or u.consumption_mw <= 0:
            raise ValueError(f"{u.name} must have positive current and consumption")
    return levels


def active_levels(levels: Iterable[PowerLevel]) -> tuple[PowerLevel, ...]:
    return tuple(u for u in levels if u.index >= 1)


def level_by_name(levels: Iterable[PowerLevel], name: str) -> PowerLevel:
    for u in levels:
        if u.name == name or str(u.index) == name:
            return u
    raise KeyError(f"no power level named {name!r}")
