"""Parse raw check-in logs into dense-id records plus a vocabulary.

Input grammar (`foursquare-tsv`): one check-in per line, tab separated:

    user_id  venue_id  category_id  category_name  latitude  longitude
    tz_offset_minutes  utc_time

where utc_time looks like ``Tue Apr 03 18:00:09 +0000 2012``.  Lines
starting with ``#`` are skipped.
"""

from __future__ import annotations

import calendar
from collections import Counter
from pathlib import Path

from .records import CheckinRecord, DataError, Vocab, time_slot, validate_coords

_MONTHS = {
    "Jan": 1, "Feb": 2, "Mar": 3, "Apr": 4, "May": 5, "Jun": 6,
    "Jul": 7, "Aug": 8, "Sep": 9, "Oct": 10, "Nov": 11, "Dec": 12,
}

N_COLUMNS = 8


def parse_utc_time(text: str, line: int) -> int:
    """Parse ``EEE MMM dd HH:mm:ss +0000 yyyy`` into UTC seconds.

    Month names are mapped explicitly so parsing does not depend on the
    process locale.
    """
    parts = text.strip().split()
    if len(parts) != 6:
        raise DataError(f"malformed timestamp {text!r} at line {line}")
    _, mon, day, clock, zone, year = parts
    if mon not in _MONTHS:
        raise DataError(f"unknown month {mon!r} at line {line}")
    try:
        hh, mm, ss = (int(x) for x in clock.split(":"))
        ts = calendar.timegm((int(year), _MONTHS[mon], int(day), hh, mm, ss))
    except ValueError as exc:
        raise DataError(f"malformed timestamp {text!r} at line {line}: {exc}") from None
    if zone not in ("+0000", "-0000"):
        sign = 1 if zone[0] == "+" else -1
        try:
            ts -= sign * (int(zone[1:3]) * 3600 + int(zone[3:5]) * 60)
        except (ValueError, IndexError):
            raise DataError(f"malformed zone {zone!r} at line {line}") from None
    return ts


def ingest_checkins(
    path: str | Path,
    fmt: str = "foursquare-tsv",
    slot_count: int = 48,
    local_time: bool = False,
) -> tuple[Vocab, list[CheckinRecord]]:
    """Read a raw check-in log and return (vocab, records).

    Dense ids are assigned in first-seen order.  Records come back sorted
    by (user, timestamp).  When one POI is reported with several raw
    categories, the majority category wins, ties broken by first
    occurrence; every record is rewritten to the resolved category.
    """
    if fmt != "foursquare-tsv":
        raise DataError(f"unknown input format {fmt!r}")
    path = Path(path)

    user_index: dict[str, int] = {}
    poi_index: dict[str, int] = {}
    category_index: dict[str, int] = {}
    poi_lat: list[float] = []
    poi_lon: list[float] = []
    # Per poi: raw-category vote counts and first-seen order for tie breaks.
    poi_cat_votes: list[Counter] = []
    poi_cat_first: list[dict[int, int]] = []

    rows: list[tuple[int, int, int, int, int]] = []  # (user, poi, cat, ts, tz)
    with path.open("r", encoding="utf-8") as fh:
        for lineno, raw_line in enumerate(fh, start=1):
            line = raw_line.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            cols = line.split("\t")
            if len(cols) != N_COLUMNS:
                raise DataError(f"expected {N_COLUMNS} columns, got {len(cols)} at line {lineno}")
            raw_user, raw_poi, raw_cat, _cat_name, lat_s, lon_s, tz_s, time_s = cols
            try:
                lat = float(lat_s)
                lon = float(lon_s)
                tz = int(tz_s)
            except ValueError as exc:
                raise DataError(f"malformed numeric field at line {lineno}: {exc}") from None
            validate_coords(lat, lon, line=lineno)
            ts = parse_utc_time(time_s, lineno)

            u = user_index.setdefault(raw_user, len(user_index))
            c = category_index.setdefault(raw_cat, len(category_index))
            p = poi_index.get(raw_poi)
            if p is None:
                p = len(poi_index)
                poi_index[raw_poi] = p
                poi_lat.append(lat)
                poi_lon.append(lon)
                poi_cat_votes.append(Counter())
                poi_cat_first.append({})
            poi_cat_votes[p][c] += 1
            poi_cat_first[p].setdefault(c, len(rows))
            rows.append((u, p, c, ts, tz))

    if not rows:
        raise DataError("empty input")

    poi_category = [
        max(votes, key=lambda c: (votes[c], -poi_cat_first[p][c]))
        for p, votes in enumerate(poi_cat_votes)
    ]

    vocab = Vocab(
        user_ids=list(user_index),
        poi_ids=list(poi_index),
        category_ids=list(category_index),
        poi_category=poi_category,
        poi_lat=poi_lat,
        poi_lon=poi_lon,
        slot_count=slot_count,
    )

    records = [
        CheckinRecord(
            user=u,
            poi=p,
            category=poi_category[p],
            lat=poi_lat[p],
            lon=poi_lon[p],
            timestamp=ts,
            time_slot=time_slot(ts, slot_count, tz if local_time else 0),
            tz_offset_minutes=tz,
        )
        for (u, p, _c, ts, tz) in rows
    ]
    records.sort(key=lambda r: (r.user, r.timestamp))
    return vocab, records
