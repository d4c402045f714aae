"""Stay points, POIs, Home/Work inference and Workday/Offday segmentation."""

from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Sequence

import numpy as np

from . import _kernels
from .errors import PreconditionError
from .geo import GeoPoint, haversine_km
from .ingest import SECONDS_PER_DAY, UserDataset

EPOCH_DATE = dt.date(1970, 1, 1)


class DayType(str, Enum):
    WORKDAY = "Workday"
    OFFDAY = "Offday"


@dataclass(frozen=True)
class StayPoint:
    centroid: GeoPoint
    arrival: float
    departure: float
    n_fixes: int = 1

    @property
    def dwell(self) -> float:
        return self.departure - self.arrival


@dataclass(frozen=True)
class Poi:
    poi_id: int
    centroid: GeoPoint
    subzone: str | None = None
    category: str | None = None  # a PoiCategory value, or None when unlabeled


@dataclass(frozen=True, slots=True)
class Visit:
    poi_id: int
    arrival: float
    departure: float


@dataclass(frozen=True)
class UserProfile:
    user_id: str
    home_poi: int
    work_poi: int | None
    home_work_km: float | None
    home: GeoPoint
    work: GeoPoint | None = None
    home_fallback: bool = False

    @property
    def working(self) -> bool:
        return self.work_poi is not None


@dataclass(frozen=True)
class DayRecord:
    date: dt.date
    day_type: DayType
    visits: tuple[Visit, ...]


@dataclass(frozen=True)
class HomeWorkConfig:
    home_window_h: tuple[float, float] = (0.0, 6.0)
    work_window_h: tuple[float, float] = (10.0, 17.0)
    work_weekdays: tuple[int, ...] = (0, 1, 2, 3, 4)  # Monday == 0
    work_presence_ratio: float = 0.4


# --------------------------------------------------------------------------
# stay points
# --------------------------------------------------------------------------


def detect_stay_points(
    fixes: UserDataset,
    dist_m: float = 200.0,
    time_min: float = 20.0,
    gap_min: float = 5.0,
) -> list[StayPoint]:
    """Scan a user's fixes for dwell episodes.

    A run is a maximal block of consecutive fixes all within ``dist_m`` of the
    block's first fix; runs spanning at least ``time_min`` become stay points.
    A second pass merges neighbouring stays closer than ``dist_m`` whose gap is
    under ``gap_min``.
    """
    if not isinstance(fixes, UserDataset):
        fixes = UserDataset.from_fixes(list(fixes))
    if not fixes.is_sorted():
        raise PreconditionError("fixes must be sorted by start time")
    if len(fixes) == 0:
        return []
    a, b = _kernels.stay_runs(
        fixes.lat, fixes.lon, fixes.start, fixes.end, dist_m / 1000.0, time_min * 60.0
    )
    if a.size == 0:
        return []
    csum_lat = np.concatenate(([0.0], np.cumsum(fixes.lat)))
    csum_lon = np.concatenate(([0.0], np.cumsum(fixes.lon)))

    # (sum_lat, sum_lon, count, arrival, departure) per raw run
    runs = [
        [csum_lat[j] - csum_lat[i], csum_lon[j] - csum_lon[i], j - i, fixes.start[i], fixes.end[j - 1]]
        for i, j in zip(a.tolist(), b.tolist())
    ]
    merged = [runs[0]]
    gap_s = gap_min * 60.0
    for r in runs[1:]:
        prev = merged[-1]
        c_prev = GeoPoint(prev[0] / prev[2], prev[1] / prev[2])
        c_cur = GeoPoint(r[0] / r[2], r[1] / r[2])
        if r[3] - prev[4] < gap_s and haversine_km(c_prev, c_cur) * 1000.0 <= dist_m:
            prev[0] += r[0]
            prev[1] += r[1]
            prev[2] += r[2]
            prev[4] = max(prev[4], r[4])
        else:
            merged.append(r)
    return [
        StayPoint(GeoPoint(s_lat / n, s_lon / n), float(arr), float(dep), int(n))
        for s_lat, s_lon, n, arr, dep in merged
    ]


# --------------------------------------------------------------------------
# POIs
# --------------------------------------------------------------------------


def merge_to_pois(stays: Sequence[StayPoint], merge_m: float = 100.0) -> tuple[list[Poi], list[Visit]]:
    """Greedy, time-ordered agglomeration of stays into POIs."""
    lat_sum: list[float] = []
    lon_sum: list[float] = []
    count: list[int] = []
    visits: list[Visit] = []
    for sp in stays:
        pid = -1
        if count:
            n = np.asarray(count, dtype=np.float64)
            d = _kernels.haversine_km_vec(
                sp.centroid.lat, sp.centroid.lon, np.asarray(lat_sum) / n, np.asarray(lon_sum) / n
            )
            best = int(np.argmin(d))
            if d[best] * 1000.0 <= merge_m:
                pid = best
        if pid < 0:
            pid = len(count)
            lat_sum.append(0.0)
            lon_sum.append(0.0)
            count.append(0)
        lat_sum[pid] += sp.centroid.lat
        lon_sum[pid] += sp.centroid.lon
        count[pid] += 1
        visits.append(Visit(pid, sp.arrival, sp.departure))
    pois = [Poi(i, GeoPoint(lat_sum[i] / count[i], lon_sum[i] / count[i])) for i in range(len(count))]
    return pois, visits


def pois_by_id(pois: Sequence[Poi]) -> dict[int, Poi]:
    return {p.poi_id: p for p in pois}


# --------------------------------------------------------------------------
# Home / Work
# --------------------------------------------------------------------------


def _weekday(day_index: int) -> int:
    # 1970-01-01 was a Thursday
    return (day_index + 3) % 7


def _window_overlaps(visit: Visit, off_s: float, window_h: tuple[float, float]):
    """Yield (local_day_index, seconds) of the visit inside the daily window."""
    a = visit.arrival + off_s
    d = visit.departure + off_s
    first = math.floor(a / SECONDS_PER_DAY)
    last = math.floor(d / SECONDS_PER_DAY)
    w0, w1 = window_h[0] * 3600.0, window_h[1] * 3600.0
    for day in range(first, last + 1):
        base = day * SECONDS_PER_DAY
        ov = min(d, base + w1) - max(a, base + w0)
        if ov > 0:
            yield day, ov


def _touched_days(visit: Visit, off_s: float) -> range:
    a = visit.arrival + off_s
    d = visit.departure + off_s
    first = math.floor(a / SECONDS_PER_DAY)
    last = math.floor(d / SECONDS_PER_DAY)
    if d > a and d == last * SECONDS_PER_DAY:
        last -= 1
    return range(first, max(first, last) + 1)


def detect_home_work(
    pois: Sequence[Poi],
    visits: Sequence[Visit],
    cfg: HomeWorkConfig | None = None,
    tz_offset_minutes: int = 480,
    user_id: str = "",
) -> UserProfile:
    """Infer Home and (optional) Work POIs from dwell time per time-of-day window.

    Home maximises night-window dwell; Work maximises weekday office-window
    dwell among POIs present in that window on enough recorded weekdays.
    """
    cfg = cfg or HomeWorkConfig()
    if not pois:
        raise PreconditionError("detect_home_work needs at least one POI")
    off = tz_offset_minutes * 60.0
    ids = sorted(p.poi_id for p in pois)
    total = dict.fromkeys(ids, 0.0)
    night = dict.fromkeys(ids, 0.0)
    office = dict.fromkeys(ids, 0.0)
    presence: dict[int, set[int]] = {i: set() for i in ids}
    weekdays_seen: set[int] = set()
    work_days = set(cfg.work_weekdays)

    for v in visits:
        total[v.poi_id] += v.departure - v.arrival
        for _, sec in _window_overlaps(v, off, cfg.home_window_h):
            night[v.poi_id] += sec
        for day, sec in _window_overlaps(v, off, cfg.work_window_h):
            if _weekday(day) in work_days:
                office[v.poi_id] += sec
                presence[v.poi_id].add(day)
        for day in _touched_days(v, off):
            if _weekday(day) in work_days:
                weekdays_seen.add(day)

    fallback = max(night.values()) <= 0.0
    if fallback:
        home = min(ids, key=lambda i: (-total[i], i))
    else:
        home = min(ids, key=lambda i: (-night[i], -total[i], i))

    work = None
    if weekdays_seen:
        need = cfg.work_presence_ratio * len(weekdays_seen)
        qualified = [i for i in ids if i != home and office[i] > 0 and len(presence[i]) >= need]
        if qualified:
            work = min(qualified, key=lambda i: (-office[i], i))

    lookup = pois_by_id(pois)
    home_pt = lookup[home].centroid
    work_pt = lookup[work].centroid if work is not None else None
    hw = haversine_km(home_pt, work_pt) if work_pt is not None else None
    return UserProfile(user_id, home, work, hw, home_pt, work_pt, fallback)


# --------------------------------------------------------------------------
# day segmentation
# --------------------------------------------------------------------------


def day_index_to_date(day: int) -> dt.date:
    return EPOCH_DATE + dt.timedelta(days=int(day))


def segment_days(
    visits: Sequence[Visit], profile: UserProfile, tz_offset_minutes: int = 480
) -> list[DayRecord]:
    """Split a visit history into local calendar days typed Workday/Offday.

    A visit belongs to the date of its arrival. Dates that are only covered by
    a visit that began earlier (e.g. a whole day spent at Home) still get a
    record, with no visits of their own.
    """
    off = tz_offset_minutes * 60.0
    by_day: dict[int, list[Visit]] = {}
    for v in sorted(visits, key=lambda v: (v.arrival, v.departure)):
        d = math.floor((v.arrival + off) / SECONDS_PER_DAY)
        by_day.setdefault(d, []).append(v)
        for t in _touched_days(v, off):
            by_day.setdefault(t, [])
    out = []
    for day in sorted(by_day):
        vs = tuple(by_day[day])
        is_work = profile.work_poi is not None and any(v.poi_id == profile.work_poi for v in vs)
        out.append(DayRecord(day_index_to_date(day), DayType.WORKDAY if is_work else DayType.OFFDAY, vs))
    return out


def with_labels(poi: Poi, subzone: str | None, category: str | None) -> Poi:
    return replace(poi, subzone=subzone, category=category)
