"""Great-circle distance, coordinate averaging and subzone lookup."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ._kernels import EARTH_RADIUS_KM, haversine_km_vec
from .errors import EmptyInputError, InvalidInputError, OutOfRegionError

# mean_coordinate refuses to average points spread wider than this
MAX_MEAN_SPAN_KM = 100.0


@dataclass(frozen=True, slots=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self):
        object.__setattr__(self, "lat", float(self.lat))
        object.__setattr__(self, "lon", float(self.lon))
        if not (math.isfinite(self.lat) and math.isfinite(self.lon)):
            raise InvalidInputError(f"non-finite coordinate ({self.lat}, {self.lon})")
        if not -90.0 <= self.lat <= 90.0:
            raise InvalidInputError(f"latitude out of range: {self.lat}")
        if not -180.0 <= self.lon <= 180.0:
            raise InvalidInputError(f"longitude out of range: {self.lon}")


def haversine_km(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in km on a sphere of radius 6371.0088 km."""
    for p in (a, b):
        if not (math.isfinite(p.lat) and math.isfinite(p.lon)):
            raise InvalidInputError(f"non-finite coordinate ({p.lat}, {p.lon})")
    p1 = math.radians(a.lat)
    p2 = math.radians(b.lat)
    dp = p2 - p1
    dl = math.radians(b.lon) - math.radians(a.lon)
    h = math.sin(dp * 0.5) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl * 0.5) ** 2
    return 2.0 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(h)))


def mean_coordinate(points: Sequence[GeoPoint]) -> GeoPoint:
    """Arithmetic mean of latitudes and longitudes.

    Only meaningful for points inside a small region, so a bounding box whose
    diagonal reaches ``MAX_MEAN_SPAN_KM`` is rejected.
    """
    if len(points) == 0:
        raise EmptyInputError("mean_coordinate needs at least one point")
    lat = np.fromiter((p.lat for p in points), dtype=np.float64, count=len(points))
    lon = np.fromiter((p.lon for p in points), dtype=np.float64, count=len(points))
    return GeoPoint(*mean_latlon(lat, lon))


def mean_latlon(lat: np.ndarray, lon: np.ndarray) -> tuple[float, float]:
    """Array form of :func:`mean_coordinate`."""
    if lat.size == 0:
        raise EmptyInputError("mean_coordinate needs at least one point")
    span = float(haversine_km_vec(lat.min(), lon.min(), lat.max(), lon.max()))
    if span >= MAX_MEAN_SPAN_KM:
        raise OutOfRegionError(f"points span {span:.1f} km; arithmetic mean not valid")
    return float(lat.mean()), float(lon.mean())


# --------------------------------------------------------------------------
# subzones
# --------------------------------------------------------------------------

_EDGE_EPS = 1e-12


def _normalize_ring(coords: Iterable[Sequence[float]]) -> np.ndarray:
    """Return an explicitly closed (x=lon, y=lat) ring as an (n, 2) array."""
    ring = np.asarray([(float(c[0]), float(c[1])) for c in coords], dtype=np.float64)
    if ring.ndim != 2 or ring.shape[0] == 0:
        raise InvalidInputError("empty ring")
    if not np.array_equal(ring[0], ring[-1]):
        ring = np.vstack([ring, ring[:1]])
    if ring.shape[0] - 1 < 3:
        raise InvalidInputError("ring needs at least 3 vertices")
    return ring


def _on_ring_boundary(x: float, y: float, ring: np.ndarray) -> bool:
    x1, y1 = ring[:-1, 0], ring[:-1, 1]
    x2, y2 = ring[1:, 0], ring[1:, 1]
    cross = (x2 - x1) * (y - y1) - (y2 - y1) * (x - x1)
    scale = np.maximum(np.abs(x2 - x1) + np.abs(y2 - y1), 1.0)
    within = (
        (x >= np.minimum(x1, x2) - _EDGE_EPS)
        & (x <= np.maximum(x1, x2) + _EDGE_EPS)
        & (y >= np.minimum(y1, y2) - _EDGE_EPS)
        & (y <= np.maximum(y1, y2) + _EDGE_EPS)
    )
    return bool(np.any(within & (np.abs(cross) <= _EDGE_EPS * scale)))


def _ray_cast(x: float, y: float, ring: np.ndarray) -> bool:
    x1, y1 = ring[:-1, 0], ring[:-1, 1]
    x2, y2 = ring[1:, 0], ring[1:, 1]
    straddle = (y1 > y) != (y2 > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        x_cross = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
    return bool(np.count_nonzero(straddle & (x < x_cross)) % 2)


@dataclass(frozen=True)
class Polygon:
    outer: np.ndarray
    holes: tuple[np.ndarray, ...] = ()

    def contains(self, x: float, y: float) -> bool:
        """Even-odd containment; points on any ring edge count as inside."""
        if _on_ring_boundary(x, y, self.outer):
            return True
        if not _ray_cast(x, y, self.outer):
            return False
        for hole in self.holes:
            if _on_ring_boundary(x, y, hole):
                return True
            if _ray_cast(x, y, hole):
                return False
        return True


@dataclass(frozen=True)
class Zone:
    zone_id: str
    polygons: tuple[Polygon, ...]
    bbox: tuple[float, float, float, float]  # min_lon, min_lat, max_lon, max_lat

    @classmethod
    def from_rings(cls, zone_id: str, polygons) -> "Zone":
        """Build from ``[(outer_coords, [hole_coords, ...]), ...]`` in (lon, lat) order."""
        polys = []
        for outer, holes in polygons:
            polys.append(Polygon(_normalize_ring(outer), tuple(_normalize_ring(h) for h in holes)))
        if not polys:
            raise InvalidInputError(f"zone {zone_id!r} has no polygons")
        allpts = np.vstack([p.outer for p in polys])
        bbox = (
            float(allpts[:, 0].min()),
            float(allpts[:, 1].min()),
            float(allpts[:, 0].max()),
            float(allpts[:, 1].max()),
        )
        return cls(zone_id, tuple(polys), bbox)

    @classmethod
    def from_points(cls, zone_id: str, ring: Sequence[GeoPoint], holes=()) -> "Zone":
        outer = [(p.lon, p.lat) for p in ring]
        hole_coords = [[(p.lon, p.lat) for p in h] for h in holes]
        return cls.from_rings(zone_id, [(outer, hole_coords)])


@dataclass(frozen=True)
class SubzoneMap:
    zones: tuple[Zone, ...]
    _bboxes: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        ids = [z.zone_id for z in self.zones]
        if len(set(ids)) != len(ids):
            raise InvalidInputError("duplicate zone_id in subzone map")
        # sort once so overlapping zones resolve to the smallest id first
        ordered = tuple(sorted(self.zones, key=lambda z: z.zone_id))
        object.__setattr__(self, "zones", ordered)
        boxes = np.array([z.bbox for z in ordered], dtype=np.float64).reshape(-1, 4)
        object.__setattr__(self, "_bboxes", boxes)

    def __len__(self) -> int:
        return len(self.zones)

    def candidates(self, p: GeoPoint) -> np.ndarray:
        b = self._bboxes
        hit = (b[:, 0] <= p.lon) & (p.lon <= b[:, 2]) & (b[:, 1] <= p.lat) & (p.lat <= b[:, 3])
        return np.flatnonzero(hit)


EMPTY_SUBZONES = SubzoneMap(())


def locate_subzone(p: GeoPoint, subzones: SubzoneMap) -> str | None:
    """Return the id of the zone containing ``p``, or None.

    Boundary points are inside. When zones overlap the lexicographically
    smallest id wins.
    """
    for idx in subzones.candidates(p):
        zone = subzones.zones[idx]
        if any(poly.contains(p.lon, p.lat) for poly in zone.polygons):
            return zone.zone_id
    return None


def subzones_from_geojson(obj: dict, id_key: str = "SUBZONE_N") -> SubzoneMap:
    if obj.get("type") != "FeatureCollection":
        raise InvalidInputError("subzone file must be a GeoJSON FeatureCollection")
    zones = []
    for i, feat in enumerate(obj.get("features", [])):
        props = feat.get("properties") or {}
        if id_key not in props:
            raise InvalidInputError(f"feature {i} lacks property {id_key!r}")
        geom = feat.get("geometry") or {}
        gtype = geom.get("type")
        coords = geom.get("coordinates")
        if gtype == "Polygon":
            parts = [coords]
        elif gtype == "MultiPolygon":
            parts = coords
        else:
            raise InvalidInputError(f"feature {i}: unsupported geometry {gtype!r}")
        rings = [(part[0], part[1:]) for part in parts]
        zones.append(Zone.from_rings(str(props[id_key]), rings))
    return SubzoneMap(tuple(zones))


def load_subzones(path: str | Path, id_key: str = "SUBZONE_N") -> SubzoneMap:
    with open(path, encoding="utf-8") as fh:
        return subzones_from_geojson(json.load(fh), id_key=id_key)
