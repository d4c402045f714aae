"""POI category and subzone labelling."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from ._kernels import haversine_km_vec
from .errors import InvalidInputError
from .geo import EMPTY_SUBZONES, GeoPoint, SubzoneMap, locate_subzone
from .poi import Poi, with_labels

CATALOG_COLUMNS = ("lat", "lon", "category", "name")

# distances closer than this (km) are treated as ties
_TIE_KM = 1e-9


class PoiCategory(str, Enum):
    ATTRACTION = "Attraction"
    HEALTHCARE = "Healthcare"
    NEIGHBORHOOD_CENTER = "NeighborhoodCenter"
    PARK = "Park"
    PLACES_OF_WORSHIP = "PlacesOfWorship"
    PLAYGROUND = "Playground"
    RECREATIONAL = "Recreational"
    SHOPPING_MALL = "ShoppingMall"
    TRANSPORTATION = "Transportation"
    RESIDENTIAL = "Residential"


CATEGORIES: tuple[str, ...] = tuple(c.value for c in PoiCategory)
CATEGORY_INDEX = {name: i for i, name in enumerate(CATEGORIES)}


@dataclass(frozen=True)
class CatalogEntry:
    point: GeoPoint
    category: PoiCategory
    name: str = ""


class LabelCatalog:
    def __init__(self, entries: Sequence[CatalogEntry]):
        self.entries = tuple(entries)
        self.lat = np.array([e.point.lat for e in self.entries], dtype=np.float64)
        self.lon = np.array([e.point.lon for e in self.entries], dtype=np.float64)
        self.cat_rank = np.array([CATEGORY_INDEX[e.category.value] for e in self.entries], dtype=np.int64)

    def __len__(self) -> int:
        return len(self.entries)


def load_catalog(path: str | Path) -> LabelCatalog:
    entries = []
    bad: list[str] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != CATALOG_COLUMNS:
            raise InvalidInputError(f"catalog header must be {','.join(CATALOG_COLUMNS)}")
        for row in reader:
            cat = row["category"].strip()
            if cat not in CATEGORY_INDEX:
                bad.append(f"line {reader.line_num}: {cat!r}")
                continue
            point = GeoPoint(float(row["lat"]), float(row["lon"]))
            entries.append(CatalogEntry(point, PoiCategory(cat), row["name"]))
    if bad:
        raise InvalidInputError("unknown catalog categories: " + "; ".join(bad))
    return LabelCatalog(entries)


def write_catalog(catalog: LabelCatalog, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CATALOG_COLUMNS)
        for e in catalog.entries:
            w.writerow([repr(e.point.lat), repr(e.point.lon), e.category.value, e.name])


def nearest_entry(point: GeoPoint, catalog: LabelCatalog, max_m: float = 400.0) -> int | None:
    """Index of the nearest catalog entry within ``max_m`` metres, or None."""
    if len(catalog) == 0:
        return None
    max_km = max_m / 1000.0
    # bounding-box prefilter; a degree of latitude is never shorter than 110.5 km
    dlat = max_km / 110.5 + 1e-9
    dlon = dlat / max(math.cos(math.radians(min(89.9, abs(point.lat) + dlat))), 1e-6)
    cand = np.flatnonzero((np.abs(catalog.lat - point.lat) <= dlat) & (np.abs(catalog.lon - point.lon) <= dlon))
    if cand.size == 0:
        return None
    d = haversine_km_vec(point.lat, point.lon, catalog.lat[cand], catalog.lon[cand])
    dmin = d.min()
    if dmin > max_km:
        return None
    tied = cand[d <= dmin + _TIE_KM]
    # category enumeration order first, then catalog position
    order = np.lexsort((tied, catalog.cat_rank[tied]))
    return int(tied[order[0]])


def assign_category(poi: Poi, catalog: LabelCatalog, max_m: float = 400.0) -> str | None:
    if len(catalog) == 0:
        warnings.warn("empty label catalog; every POI stays unlabeled", stacklevel=2)
        return None
    idx = nearest_entry(poi.centroid, catalog, max_m)
    return None if idx is None else catalog.entries[idx].category.value


def label_all(
    pois: Sequence[Poi],
    catalog: LabelCatalog,
    subzones: SubzoneMap = EMPTY_SUBZONES,
    max_m: float = 400.0,
) -> list[Poi]:
    if len(catalog) == 0 and pois:
        warnings.warn("empty label catalog; every POI stays unlabeled", stacklevel=2)
    out = []
    for p in pois:
        idx = nearest_entry(p.centroid, catalog, max_m)
        cat = None if idx is None else catalog.entries[idx].category.value
        out.append(with_labels(p, locate_subzone(p.centroid, subzones), cat))
    return out
