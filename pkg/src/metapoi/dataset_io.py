"""Preprocessed dataset file: JSON lines, header with the vocab, then one
object per check-in carrying dense ids and the slot index."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .records import CheckinRecord, DataError, Vocab


@dataclass
class Dataset:
    vocab: Vocab
    records: list[CheckinRecord]


def save_dataset(dataset: Dataset, path: str | Path) -> None:
    vocab = dataset.vocab
    header = {
        "users": vocab.user_count,
        "pois": vocab.poi_count,
        "categories": vocab.category_count,
        "slots": vocab.slot_count,
        "user_ids": vocab.user_ids,
        "poi_ids": vocab.poi_ids,
        "category_ids": vocab.category_ids,
        "poi_category": vocab.poi_category,
        "poi_lat": vocab.poi_lat,
        "poi_lon": vocab.poi_lon,
    }
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for r in dataset.records:
            row = {
                "u": r.user,
                "p": r.poi,
                "c": r.category,
                "lat": r.lat,
                "lon": r.lon,
                "ts": r.timestamp,
                "slot": r.time_slot,
                "tz": r.tz_offset_minutes,
            }
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def load_dataset(path: str | Path) -> Dataset:
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        header_line = fh.readline()
        if not header_line.strip():
            raise DataError(f"empty dataset file {path}")
        try:
            header = json.loads(header_line)
        except json.JSONDecodeError as exc:
            raise DataError(f"bad dataset header in {path}: {exc}") from None
        try:
            vocab = Vocab(
                user_ids=list(header["user_ids"]),
                poi_ids=list(header["poi_ids"]),
                category_ids=list(header["category_ids"]),
                poi_category=list(header["poi_category"]),
                poi_lat=list(header["poi_lat"]),
                poi_lon=list(header["poi_lon"]),
                slot_count=int(header["slots"]),
            )
        except KeyError as exc:
            raise DataError(f"dataset header missing field {exc}") from None
        if (
            vocab.user_count != header["users"]
            or vocab.poi_count != header["pois"]
            or vocab.category_count != header["categories"]
        ):
            raise DataError("dataset header counts do not match id lists")
        vocab.validate()

        records: list[CheckinRecord] = []
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                records.append(
                    CheckinRecord(
                        user=int(row["u"]),
                        poi=int(row["p"]),
                        category=int(row["c"]),
                        lat=float(row["lat"]),
                        lon=float(row["lon"]),
                        timestamp=int(row["ts"]),
                        time_slot=int(row["slot"]),
                        tz_offset_minutes=int(row.get("tz", 0)),
                    )
                )
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise DataError(f"bad dataset row at line {lineno}: {exc}") from None
    return Dataset(vocab=vocab, records=records)
