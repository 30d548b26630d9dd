"""Synthetic check-in populations with controllable behavioral diversity.

Two sub-populations are generated: routine users drawing visits from a
small personal category pool, and explorers drawing from a wide pool.
POIs sit on a regular lattice with round-robin categories, so spatial,
temporal, and preference structure all carry signal.  Generation is fully
deterministic under the config seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .records import CheckinRecord, DataError, SECONDS_PER_DAY, Vocab, time_slot

# Monday 2012-01-02 00:00 UTC; keeps weekday arithmetic easy to eyeball.
_BASE_TS = 1325462400
_BASE_LAT = 40.0
_BASE_LON = -74.0
_KM_PER_DEG_LAT = 111.19492664455873  # pi/180 * mean earth radius


@dataclass
class SynthConfig:
    n_users: int = 200
    n_pois: int = 300
    n_categories: int = 20
    grid_extent_km: float = 4.0
    fraction_routine: float = 0.64
    routine_category_count: int = 2
    explorer_category_count: int = 12
    days_per_user: int = 8
    checkins_per_day: int = 4
    poi_noise: float = 0.1
    time_consistency: float = 0.7
    routine_drift_days: int = 0
    uniform_pois: bool = False
    slot_count: int = 48
    seed: int = 7

    def validate(self) -> None:
        if min(self.n_users, self.n_pois, self.n_categories) <= 0:
            raise DataError("population counts must be positive")
        if min(self.days_per_user, self.checkins_per_day) <= 0:
            raise DataError("visit counts must be positive")
        if self.checkins_per_day < 2:
            raise DataError("checkins_per_day must be at least 2 to form sessions")
        if not 0.0 <= self.fraction_routine <= 1.0:
            raise DataError("fraction_routine must lie in [0, 1]")
        if not 0.0 <= self.poi_noise <= 1.0:
            raise DataError("poi_noise must lie in [0, 1]")
        if not 0.0 <= self.time_consistency <= 1.0:
            raise DataError("time_consistency must lie in [0, 1]")
        if not 0 <= self.routine_drift_days < self.days_per_user:
            raise DataError("routine_drift_days must be smaller than days_per_user")
        if self.routine_category_count >= self.explorer_category_count:
            raise DataError("routine_category_count must be smaller than explorer_category_count")
        if self.explorer_category_count > self.n_categories:
            raise DataError("explorer_category_count exceeds n_categories")
        if self.grid_extent_km <= 0:
            raise DataError("grid_extent_km must be positive")


def routine_user_count(cfg: SynthConfig) -> int:
    return int(round(cfg.fraction_routine * cfg.n_users))


def generate_synthetic(cfg: SynthConfig) -> tuple[Vocab, list[CheckinRecord]]:
    """Generate (vocab, records) for a synthetic two-population city."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)

    side = int(np.ceil(np.sqrt(cfg.n_pois)))
    spacing = cfg.grid_extent_km / side
    lat_step = spacing / _KM_PER_DEG_LAT
    lon_step = spacing / (_KM_PER_DEG_LAT * np.cos(np.radians(_BASE_LAT)))
    poi_lat = [_BASE_LAT + (k // side) * lat_step for k in range(cfg.n_pois)]
    poi_lon = [_BASE_LON + (k % side) * lon_step for k in range(cfg.n_pois)]
    poi_category = [k % cfg.n_categories for k in range(cfg.n_pois)]

    by_category: list[list[int]] = [[] for _ in range(cfg.n_categories)]
    for p, c in enumerate(poi_category):
        by_category[c].append(p)
    empty = [c for c, pois in enumerate(by_category) if not pois]
    if empty:
        raise DataError(f"categories {empty} received no POIs; increase n_pois")

    n_routine = routine_user_count(cfg)
    records: list[CheckinRecord] = []
    for u in range(cfg.n_users):
        is_routine = u < n_routine
        breadth = cfg.routine_category_count if is_routine else cfg.explorer_category_count
        cats = rng.choice(cfg.n_categories, size=breadth, replace=False)
        prefs = rng.dirichlet(np.ones(breadth))
        home = int(rng.integers(cfg.n_pois))
        # routine users relocate their anchor for the trailing days, so
        # their late sessions run over a fresh venue chain
        drift_home = int(rng.integers(cfg.n_pois))
        drift_start = cfg.days_per_user - (cfg.routine_drift_days if is_routine else 0)
        for day in range(cfg.days_per_user):
            here = home if day < drift_start else drift_home
            for visit in range(cfg.checkins_per_day):
                if cfg.uniform_pois:
                    poi = int(rng.integers(cfg.n_pois))
                else:
                    # habitual users revisit the same category at the same
                    # daily position, which ties categories to time slots
                    if rng.random() < cfg.time_consistency:
                        c = int(cats[visit % breadth])
                    else:
                        c = int(cats[rng.choice(breadth, p=prefs)])
                    pool = by_category[c]
                    if rng.random() < cfg.poi_noise:
                        poi = int(pool[rng.integers(len(pool))])
                    else:
                        dists = [
                            (poi_lat[p] - poi_lat[here]) ** 2
                            + (poi_lon[p] - poi_lon[here]) ** 2
                            for p in pool
                        ]
                        poi = pool[int(np.argmin(dists))]
                here = poi
                hour = 8 + visit * (14 // max(1, cfg.checkins_per_day))
                minute = int(rng.integers(0, 60))
                ts = _BASE_TS + day * SECONDS_PER_DAY + hour * 3600 + minute * 60 + visit
                records.append(
                    CheckinRecord(
                        user=u,
                        poi=poi,
                        category=poi_category[poi],
                        lat=poi_lat[poi],
                        lon=poi_lon[poi],
                        timestamp=ts,
                        time_slot=time_slot(ts, cfg.slot_count),
                    )
                )

    vocab = Vocab(
        user_ids=[f"u{u}" for u in range(cfg.n_users)],
        poi_ids=[f"p{p}" for p in range(cfg.n_pois)],
        category_ids=[f"c{c}" for c in range(cfg.n_categories)],
        poi_category=poi_category,
        poi_lat=poi_lat,
        poi_lon=poi_lon,
        slot_count=cfg.slot_count,
    )
    records.sort(key=lambda r: (r.user, r.timestamp))
    return vocab, records
