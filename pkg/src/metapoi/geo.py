"""Haversine distance and a grid index for radius-limited POI pair search."""

from __future__ import annotations

import math

EARTH_RADIUS_KM = 6371.0088


def haversine_km(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Great-circle distance in km between two WGS-84 points."""
    p1 = math.radians(lat1)
    p2 = math.radians(lat2)
    dp = p2 - p1
    dl = math.radians(lon2 - lon1)
    a = math.sin(dp / 2.0) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(a)))


class SpatialGridIndex:
    """Buckets POIs into lat/lon cells sized so that any pair within
    `cell_km` of each other lands in adjacent cells.

    Cell extents are derived from the haversine inequality: a pair at
    distance <= cell_km differs by at most cell_km/R radians in latitude
    and, given the largest absolute latitude in the data, by a bounded
    longitude span.  Longitude cells wrap around the antimeridian.
    """

    def __init__(self, lats: list[float], lons: list[float], cell_km: float):
        if cell_km <= 0:
            raise ValueError(f"cell size must be positive, got {cell_km}")
        self.cell_km = cell_km
        self.lats = list(lats)
        self.lons = list(lons)
        n = len(self.lats)

        central = cell_km / EARTH_RADIUS_KM
        self._lat_cell_deg = math.degrees(central)
        cos_min = min((math.cos(math.radians(lat)) for lat in self.lats), default=1.0)
        half_sin = math.sin(min(central, math.pi) / 2.0)
        if cos_min <= half_sin:
            lon_span = 360.0
        else:
            lon_span = math.degrees(2.0 * math.asin(min(1.0, half_sin / cos_min)))
        self._n_lon = max(1, int(360.0 // lon_span)) if lon_span < 360.0 else 1
        self._lon_cell_deg = 360.0 / self._n_lon

        self.cells: dict[tuple[int, int], list[int]] = {}
        for i in range(n):
            self.cells.setdefault(self._cell_of(self.lats[i], self.lons[i]), []).append(i)

    def _cell_of(self, lat: float, lon: float) -> tuple[int, int]:
        iy = int((lat + 90.0) // self._lat_cell_deg)
        ix = int((lon + 180.0) // self._lon_cell_deg) % self._n_lon
        return ix, iy

    def neighborhood(self, idx: int) -> list[int]:
        """All POIs in the 3x3 cell block around `idx`, including itself."""
        ix, iy = self._cell_of(self.lats[idx], self.lons[idx])
        seen_cells = set()
        out: list[int] = []
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                key = ((ix + dx) % self._n_lon, iy + dy)
                if key in seen_cells:
                    continue
                seen_cells.add(key)
                out.extend(self.cells.get(key, ()))
        return out

    def candidate_pairs(self):
        """Yield each unordered candidate pair (i, j), i < j, exactly once."""
        for i in range(len(self.lats)):
            for j in sorted(self.neighborhood(i)):
                if j > i:
                    yield i, j
