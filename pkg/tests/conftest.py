import numpy as np
import pytest

from metapoi.records import CheckinRecord, Vocab


@pytest.fixture
def tiny_vocab() -> Vocab:
    """3 POIs, 2 users, 2 categories, 2 slots; POIs stacked ~111 m apart."""
    return Vocab(
        user_ids=["u0", "u1"],
        poi_ids=["p0", "p1", "p2"],
        category_ids=["c0", "c1"],
        poi_category=[0, 1, 0],
        poi_lat=[40.0, 40.001, 40.002],
        poi_lon=[-74.0, -74.0, -74.0],
        slot_count=2,
    )


def make_record(vocab: Vocab, user: int, poi: int, ts: int, slot: int = 0) -> CheckinRecord:
    return CheckinRecord(
        user=user,
        poi=poi,
        category=vocab.poi_category[poi],
        lat=vocab.poi_lat[poi],
        lon=vocab.poi_lon[poi],
        timestamp=ts,
        time_slot=slot,
    )


@pytest.fixture
def tiny_records(tiny_vocab):
    return [
        make_record(tiny_vocab, 0, 0, 0, 0),
        make_record(tiny_vocab, 0, 1, 100, 1),
        make_record(tiny_vocab, 0, 2, 200, 0),
        make_record(tiny_vocab, 1, 2, 50, 1),
        make_record(tiny_vocab, 1, 0, 150, 0),
    ]


def random_vocab(rng: np.random.Generator, n_pois: int, n_categories: int, extent_deg: float = 0.02) -> Vocab:
    """Random POIs in a small box around a city-scale anchor."""
    lats = (40.0 + rng.uniform(0, extent_deg, n_pois)).tolist()
    lons = (-74.0 + rng.uniform(0, extent_deg, n_pois)).tolist()
    cats = rng.integers(0, n_categories, n_pois).tolist()
    return Vocab(
        user_ids=["u0"],
        poi_ids=[f"p{i}" for i in range(n_pois)],
        category_ids=[f"c{i}" for i in range(n_categories)],
        poi_category=[int(c) for c in cats],
        poi_lat=lats,
        poi_lon=lons,
        slot_count=48,
    )
