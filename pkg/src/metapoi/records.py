"""Core domain types: check-in records, trajectories, and id vocabularies."""

from __future__ import annotations

from dataclasses import dataclass, field

SECONDS_PER_DAY = 86400
SECONDS_PER_HOUR = 3600
# 1970-01-01 was a Thursday; shift so 0 = Monday.
_EPOCH_WEEKDAY = 3

SUPPORTED_SLOT_COUNTS = (24, 48, 168)


class DataError(ValueError):
    """Raised for malformed or inconsistent input data."""


def day_index(timestamp: int, tz_offset_minutes: int = 0) -> int:
    """Calendar-day index of a UTC timestamp, optionally shifted to local time."""
    return (timestamp + tz_offset_minutes * 60) // SECONDS_PER_DAY


def weekday_of(timestamp: int, tz_offset_minutes: int = 0) -> int:
    """Day of week, 0 = Monday .. 6 = Sunday."""
    return (day_index(timestamp, tz_offset_minutes) + _EPOCH_WEEKDAY) % 7


def time_slot(timestamp: int, slot_count: int = 48, tz_offset_minutes: int = 0) -> int:
    """Discretize a timestamp into one of `slot_count` slots.

    24 slots: hour of day. 48 slots (default): hour of day split by
    weekday/weekend. 168 slots: hour of week.
    """
    if slot_count not in SUPPORTED_SLOT_COUNTS:
        raise DataError(f"unsupported slot_count {slot_count}; expected one of {SUPPORTED_SLOT_COUNTS}")
    local = timestamp + tz_offset_minutes * 60
    hour = (local % SECONDS_PER_DAY) // SECONDS_PER_HOUR
    if slot_count == 24:
        return int(hour)
    weekday = weekday_of(timestamp, tz_offset_minutes)
    if slot_count == 48:
        return int(hour) + (24 if weekday >= 5 else 0)
    return weekday * 24 + int(hour)


@dataclass(frozen=True, slots=True)
class CheckinRecord:
    """One check-in event with dense ids and a precomputed time slot."""

    user: int
    poi: int
    category: int
    lat: float
    lon: float
    timestamp: int
    time_slot: int
    tz_offset_minutes: int = 0


@dataclass(frozen=True, slots=True)
class Trajectory:
    """One user's temporally ordered check-ins within a single session day."""

    user: int
    checkins: tuple[CheckinRecord, ...]

    def __len__(self) -> int:
        return len(self.checkins)


@dataclass
class Vocab:
    """Dense-id vocabularies plus per-POI category and coordinates.

    Dense ids are assigned in first-seen order over the raw input; the
    forward maps and id lists are mutual inverses.
    """

    user_ids: list[str]
    poi_ids: list[str]
    category_ids: list[str]
    poi_category: list[int]
    poi_lat: list[float]
    poi_lon: list[float]
    slot_count: int = 48
    user_index: dict[str, int] = field(default_factory=dict)
    poi_index: dict[str, int] = field(default_factory=dict)
    category_index: dict[str, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.user_index:
            self.user_index = {raw: i for i, raw in enumerate(self.user_ids)}
        if not self.poi_index:
            self.poi_index = {raw: i for i, raw in enumerate(self.poi_ids)}
        if not self.category_index:
            self.category_index = {raw: i for i, raw in enumerate(self.category_ids)}

    @property
    def user_count(self) -> int:
        return len(self.user_ids)

    @property
    def poi_count(self) -> int:
        return len(self.poi_ids)

    @property
    def category_count(self) -> int:
        return len(self.category_ids)

    def validate(self) -> None:
        if len(self.user_index) != len(self.user_ids):
            raise DataError("user id map is not a bijection")
        if len(self.poi_index) != len(self.poi_ids):
            raise DataError("poi id map is not a bijection")
        if len(self.category_index) != len(self.category_ids):
            raise DataError("category id map is not a bijection")
        if not (len(self.poi_category) == len(self.poi_lat) == len(self.poi_lon) == self.poi_count):
            raise DataError("per-poi attribute lengths do not match poi count")
        for c in self.poi_category:
            if not 0 <= c < self.category_count:
                raise DataError(f"poi category {c} out of range")


def validate_coords(lat: float, lon: float, line: int | None = None) -> None:
    where = "" if line is None else f" at line {line}"
    if not -90.0 <= lat <= 90.0:
        raise DataError(f"latitude {lat} out of range [-90, 90]{where}")
    if not -180.0 <= lon <= 180.0:
        raise DataError(f"longitude {lon} out of range [-180, 180]{where}")


def validate_records(records: list[CheckinRecord], vocab: Vocab) -> None:
    """Check id ranges, slot bounds, and coordinate bounds for every record."""
    for r in records:
        if not 0 <= r.user < vocab.user_count:
            raise DataError(f"user id {r.user} out of range")
        if not 0 <= r.poi < vocab.poi_count:
            raise DataError(f"poi id {r.poi} out of range")
        if not 0 <= r.category < vocab.category_count:
            raise DataError(f"category id {r.category} out of range")
        if not 0 <= r.time_slot < vocab.slot_count:
            raise DataError(f"time slot {r.time_slot} out of range")
        validate_coords(r.lat, r.lon)
