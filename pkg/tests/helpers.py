"""Shared builders and independent brute-force oracles for the test suite.

The oracles here deliberately avoid the package's own geometry code.
"""

from __future__ import annotations

import datetime as dt
import itertools
import math

import numpy as np

from mobiscope.geo import GeoPoint
from mobiscope.poi import DayRecord, DayType, Poi, UserProfile, Visit

R_KM = 6371.0088
KM_PER_DEG = 111.195
SG = (1.3521, 103.8198)


def hav(lat1, lon1, lat2, lon2) -> float:
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dp = p2 - p1
    dl = math.radians(lon2 - lon1)
    a = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2 * R_KM * math.asin(min(1.0, math.sqrt(a)))


def offset(origin, km: float, bearing_deg: float = 90.0) -> GeoPoint:
    lat, lon = origin
    b = math.radians(bearing_deg)
    return GeoPoint(
        lat + km * math.cos(b) / KM_PER_DEG,
        lon + km * math.sin(b) / (KM_PER_DEG * math.cos(math.radians(lat))),
    )


def profile(home: GeoPoint, work: GeoPoint | None = None, home_id=0, work_id=None, uid="u") -> UserProfile:
    hw = hav(home.lat, home.lon, work.lat, work.lon) if work is not None else None
    return UserProfile(uid, home_id, work_id if work is not None else None, hw, home, work)


def day(visits, date=dt.date(2021, 1, 4), day_type=DayType.OFFDAY) -> DayRecord:
    return DayRecord(date, day_type, tuple(visits))


def visits_of(poi_ids, start=0.0, step=3600.0) -> list[Visit]:
    return [Visit(p, start + i * step, start + i * step + step / 2) for i, p in enumerate(poi_ids)]


# --------------------------------------------------------------------------
# oracles
# --------------------------------------------------------------------------


def oracle_rg(points) -> float:
    """Direct radius of gyration: arithmetic mean centre, RMS haversine."""
    n = len(points)
    clat = sum(p[0] for p in points) / n
    clon = sum(p[1] for p in points) / n
    return math.sqrt(sum(hav(p[0], p[1], clat, clon) ** 2 for p in points) / n)


def oracle_dcd(visit_ids, coords: dict, home_id, work_id, home_xy) -> float:
    """Literal daily characteristic distance from raw visit ids."""
    counts: dict = {}
    for pid in visit_ids:
        if pid == home_id or pid == work_id:
            continue
        counts[pid] = counts.get(pid, 0) + 1
    n_d = len(counts)
    if n_d == 0:
        return 0.0
    total = sum(f * hav(*coords[pid], *home_xy) ** 2 for pid, f in counts.items())
    return math.sqrt(total / n_d)


def oracle_optimal_sse(X: np.ndarray, k: int) -> float:
    """Exhaustive minimum SSE over every assignment of the rows to k groups.

    Uses SSE = sum ||x||^2 - sum_g ||S_g||^2 / n_g over all k^(n-1) labelings
    with the first point pinned to group 0.
    """
    n = X.shape[0]
    labs = np.array(list(itertools.product(range(k), repeat=n - 1)), dtype=np.int64).reshape(-1, n - 1)
    labs = np.hstack([np.zeros((labs.shape[0], 1), dtype=np.int64), labs])
    onehot = (labs[:, :, None] == np.arange(k)).astype(np.float64)
    sums = np.einsum("lnk,nd->lkd", onehot, X)
    counts = onehot.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        between = np.where(counts > 0, (sums**2).sum(axis=2) / counts, 0.0)
    sse = float((X**2).sum()) - between.sum(axis=1)
    return float(max(sse.min(), 0.0))


def oracle_commonality(cells_by_user: dict) -> np.ndarray:
    grid = np.zeros((4, 10))
    n = len(cells_by_user)
    for j in range(4):
        for k in range(10):
            hits = sum(1 for cells in cells_by_user.values() if any(c[0] == j and c[1] == k for c in cells))
            grid[j, k] = hits / n
    return grid


def oracle_frequency(cells_by_user: dict) -> np.ndarray | None:
    grids = []
    for cells in cells_by_user.values():
        if not cells:
            continue
        g = np.zeros((4, 10))
        for c in cells:
            g[c[0], c[1]] += 1
        grids.append(g / len(cells))
    if not grids:
        return None
    return sum(grids) / len(grids)


def stationary_pois(coords: dict) -> dict[int, Poi]:
    return {pid: Poi(pid, GeoPoint(*xy)) for pid, xy in coords.items()}
