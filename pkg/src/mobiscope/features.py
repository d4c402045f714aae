"""Distance-based mobility features: radius of gyration, DCD, OD matrices."""

from __future__ import annotations

import csv
import datetime as dt
import math
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import IO, Iterable, Mapping, Sequence

import numpy as np

from ._kernels import haversine_km_vec
from .errors import EmptyInputError, ExclusionError, ParameterError, PreconditionError
from .geo import GeoPoint, haversine_km, mean_latlon
from .poi import DayRecord, DayType, Poi, UserProfile

N_BINS = 4
OD_CELLS = N_BINS * N_BINS
FEATURE_DIM = OD_CELLS + N_BINS
SUM_TOL = 1e-9

FEATURE_HEADER = (
    ["user_id", "day_type"]
    + [f"od_{r}{c}" for r in range(N_BINS) for c in range(N_BINS)]
    + [f"dcd_{i}" for i in range(N_BINS)]
)


class SchemeContext(str, Enum):
    DCD_WORKDAY = "DcdWorkday"
    DCD_OFFDAY = "DcdOffday"
    OD_WORKDAY = "OdWorkday"
    OD_OFFDAY = "OdOffday"


_EDGE_COUNT = {
    SchemeContext.DCD_WORKDAY: 2,
    SchemeContext.DCD_OFFDAY: 2,
    SchemeContext.OD_WORKDAY: 2,
    SchemeContext.OD_OFFDAY: 3,
}

DEFAULT_EDGES = {
    SchemeContext.DCD_WORKDAY: (5.0, 15.0),
    SchemeContext.DCD_OFFDAY: (5.0, 15.0),
    SchemeContext.OD_WORKDAY: (2.0, 8.0),
    SchemeContext.OD_OFFDAY: (1.0, 5.0, 15.0),
}


@dataclass(frozen=True)
class ThresholdScheme:
    """Distance-bin edges (km) for one feature context.

    Every scheme has four bins. DCD contexts reserve bin 0 for an exact zero,
    OdWorkday reserves it for the Home/Work POIs themselves, and OdOffday
    starts binning at 0 km.
    """

    context: SchemeContext
    edges: tuple[float, ...]

    def __post_init__(self):
        ctx = SchemeContext(self.context)
        object.__setattr__(self, "context", ctx)
        edges = tuple(float(e) for e in self.edges)
        object.__setattr__(self, "edges", edges)
        if len(edges) != _EDGE_COUNT[ctx]:
            raise ParameterError(f"{ctx.value} needs {_EDGE_COUNT[ctx]} edges, got {len(edges)}")
        if any(not math.isfinite(e) or e <= 0 for e in edges):
            raise ParameterError(f"edges must be positive and finite: {edges}")
        if any(b <= a for a, b in zip(edges, edges[1:])):
            raise ParameterError(f"edges must be strictly ascending: {edges}")

    @classmethod
    def default(cls, context) -> "ThresholdScheme":
        ctx = SchemeContext(context)
        return cls(ctx, DEFAULT_EDGES[ctx])

    def bin(self, km: float) -> int:
        """Bin index of a distance; the identity bin of OdWorkday is not handled here."""
        if km < 0 or not math.isfinite(km):
            raise ParameterError(f"distance must be finite and non-negative: {km}")
        above = sum(1 for e in self.edges if km > e)
        if self.context is SchemeContext.OD_OFFDAY:
            return above
        if self.context is SchemeContext.OD_WORKDAY:
            return 1 + above
        return 0 if km == 0 else 1 + above

    def labels(self) -> list[str]:
        e = [f"{x:g}" for x in self.edges]
        if self.context is SchemeContext.OD_OFFDAY:
            return [f"0-{e[0]}km", f"{e[0]}-{e[1]}km", f"{e[1]}-{e[2]}km", f">{e[2]}km"]
        first = "Home/Work" if self.context is not SchemeContext.DCD_OFFDAY else "Home"
        return [first, f"0-{e[0]}km", f"{e[0]}-{e[1]}km", f">{e[1]}km"]


def scheme_for(kind: str, day_type: DayType, edges: Sequence[float] | None = None) -> ThresholdScheme:
    """Helper: ``kind`` is "dcd" or "od"."""
    day_type = DayType(day_type)
    ctx = {
        ("dcd", DayType.WORKDAY): SchemeContext.DCD_WORKDAY,
        ("dcd", DayType.OFFDAY): SchemeContext.DCD_OFFDAY,
        ("od", DayType.WORKDAY): SchemeContext.OD_WORKDAY,
        ("od", DayType.OFFDAY): SchemeContext.OD_OFFDAY,
    }[(kind, day_type)]
    return ThresholdScheme(ctx, tuple(edges) if edges is not None else DEFAULT_EDGES[ctx])


# --------------------------------------------------------------------------
# radius of gyration / DCD
# --------------------------------------------------------------------------


def radius_of_gyration(positions: Sequence[GeoPoint]) -> float:
    """RMS haversine distance (km) of positions from their mean coordinate.

    Repeated positions count with their multiplicity.
    """
    if len(positions) == 0:
        raise EmptyInputError("radius_of_gyration needs at least one position")
    lat = np.array([p.lat for p in positions], dtype=np.float64)
    lon = np.array([p.lon for p in positions], dtype=np.float64)
    if np.all(lat == lat[0]) and np.all(lon == lon[0]):
        return 0.0
    cm_lat, cm_lon = mean_latlon(lat, lon)
    d = haversine_km_vec(lat, lon, cm_lat, cm_lon)
    return float(np.sqrt(np.mean(d * d)))


def daily_characteristic_distance(day: DayRecord, profile: UserProfile, pois: Mapping[int, Poi]) -> float:
    """Visit-weighted RMS distance from Home over the day's non-Home/Work POIs.

    The squared distances are weighted by visit counts but divided by the
    number of *distinct* POIs, so a POI visited twice weighs in at twice its
    squared distance. A day with only Home/Work visits scores 0.
    """
    if profile is None or profile.home is None:
        raise PreconditionError("profile has no Home location")
    skip = {profile.home_poi, profile.work_poi}
    counts = Counter(v.poi_id for v in day.visits if v.poi_id not in skip)
    if not counts:
        return 0.0
    acc = 0.0
    for pid, f in counts.items():
        d = haversine_km(pois[pid].centroid, profile.home)
        acc += f * d * d
    return math.sqrt(acc / len(counts))


@dataclass(frozen=True)
class DcdSeries:
    day_type: DayType
    values: tuple[tuple[dt.date, float], ...]

    @property
    def km(self) -> np.ndarray:
        return np.array([v for _, v in self.values], dtype=np.float64)

    def __len__(self) -> int:
        return len(self.values)


def dcd_series(
    days: Iterable[DayRecord], profile: UserProfile, pois: Mapping[int, Poi], day_type: DayType
) -> DcdSeries:
    day_type = DayType(day_type)
    vals = tuple(
        (d.date, daily_characteristic_distance(d, profile, pois)) for d in days if d.day_type is day_type
    )
    return DcdSeries(day_type, vals)


@dataclass(frozen=True)
class DcdFeatures:
    shares: tuple[float, float, float, float]


def dcd_features(series: DcdSeries | Sequence[float], scheme: ThresholdScheme, zero_snap_km: float = 0.0) -> DcdFeatures:
    """Share of days falling into each DCD bin.

    Values below ``zero_snap_km`` count as exact zeros.
    """
    values = series.km if isinstance(series, DcdSeries) else np.asarray(series, dtype=np.float64)
    if values.size == 0:
        raise EmptyInputError("DCD series is empty")
    counts = [0] * N_BINS
    for v in values.tolist():
        counts[scheme.bin(0.0 if v < zero_snap_km else v)] += 1
    n = float(values.size)
    return DcdFeatures(tuple(c / n for c in counts))


# --------------------------------------------------------------------------
# trips and OD matrices
# --------------------------------------------------------------------------


def min_distance(poi: Poi, profile: UserProfile, day_type: DayType) -> float:
    """Distance to Home (Offday) or to the nearer of Home and Work (Workday)."""
    day_type = DayType(day_type)
    if profile.home is None:
        raise PreconditionError("profile has no Home location")
    if day_type is DayType.WORKDAY and profile.work is None:
        raise PreconditionError("Workday minimum distance needs a Work location")
    if poi.poi_id == profile.home_poi:
        return 0.0
    if day_type is DayType.WORKDAY:
        if poi.poi_id == profile.work_poi:
            return 0.0
        return min(haversine_km(poi.centroid, profile.home), haversine_km(poi.centroid, profile.work))
    return haversine_km(poi.centroid, profile.home)


def od_bin(poi: Poi, profile: UserProfile, scheme: ThresholdScheme, day_type: DayType) -> int:
    day_type = DayType(day_type)
    if scheme.context is SchemeContext.OD_WORKDAY:
        if poi.poi_id in (profile.home_poi, profile.work_poi):
            return 0
    return scheme.bin(min_distance(poi, profile, day_type))


@dataclass(frozen=True)
class Trip:
    origin: Poi
    dest: Poi
    date: dt.date


def extract_trips(days: Iterable[DayRecord], pois: Mapping[int, Poi]) -> list[Trip]:
    """Consecutive same-day visit pairs, skipping pairs within one subzone."""
    trips = []
    for day in days:
        vs = day.visits
        for a, b in zip(vs, vs[1:]):
            pa, pb = pois[a.poi_id], pois[b.poi_id]
            if pa.subzone is not None and pa.subzone == pb.subzone:
                continue
            trips.append(Trip(pa, pb, day.date))
    return trips


@dataclass(frozen=True)
class OdMatrix:
    cells: np.ndarray
    n_trips: int
    degenerate: bool = False

    @classmethod
    def from_cells(cls, cells, n_trips: int = 1) -> "OdMatrix":
        arr = np.asarray(cells, dtype=np.float64).reshape(N_BINS, N_BINS)
        return cls(arr, n_trips, False)


def od_matrix(
    trips: Sequence[Trip], profile: UserProfile, scheme: ThresholdScheme, day_type: DayType
) -> OdMatrix:
    day_type = DayType(day_type)
    want = SchemeContext.OD_WORKDAY if day_type is DayType.WORKDAY else SchemeContext.OD_OFFDAY
    if scheme.context is not want:
        raise ParameterError(f"{scheme.context.value} scheme used for {day_type.value} trips")
    cells = np.zeros((N_BINS, N_BINS))
    if not trips:
        return OdMatrix(cells, 0, True)
    for t in trips:
        cells[od_bin(t.origin, profile, scheme, day_type), od_bin(t.dest, profile, scheme, day_type)] += 1
    return OdMatrix(cells / len(trips), len(trips), False)


# --------------------------------------------------------------------------
# feature vectors
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class FeatureVector:
    user_id: str
    day_type: DayType
    values: np.ndarray = field(repr=False)

    def as_row(self) -> list[str]:
        return [self.user_id, self.day_type.value] + [f"{v:.6f}" for v in self.values]


def _check_distribution(x: np.ndarray, what: str) -> None:
    if np.any(~np.isfinite(x)) or np.any(x < -SUM_TOL) or np.any(x > 1 + SUM_TOL):
        raise ExclusionError(f"{what} has entries outside [0, 1]")
    if abs(float(x.sum()) - 1.0) > SUM_TOL:
        raise ExclusionError(f"{what} sums to {float(x.sum()):.12f}, not 1")


def build_feature_vector(
    od: OdMatrix, dcd: DcdFeatures, user_id: str = "", day_type: DayType = DayType.OFFDAY
) -> FeatureVector:
    """16 OD cells (origin-major) followed by the 4 DCD shares, unscaled."""
    if od.degenerate:
        raise ExclusionError(f"user {user_id!r} has no {DayType(day_type).value} trips")
    cells = np.asarray(od.cells, dtype=np.float64).reshape(-1)
    shares = np.asarray(dcd.shares, dtype=np.float64)
    _check_distribution(cells, "OD matrix")
    _check_distribution(shares, "DCD shares")
    return FeatureVector(user_id, DayType(day_type), np.concatenate([cells, shares]))


def write_features_csv(vectors: Iterable[FeatureVector], stream: IO[str]) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(FEATURE_HEADER)
    for fv in vectors:
        w.writerow(fv.as_row())


def read_features_csv(stream: IO[str]) -> list[FeatureVector]:
    reader = csv.reader(stream)
    header = next(reader, None)
    if header != FEATURE_HEADER:
        raise ParameterError("feature CSV header mismatch")
    out = []
    for row in reader:
        if not row:
            continue
        out.append(FeatureVector(row[0], DayType(row[1]), np.array([float(x) for x in row[2:]])))
    return out


# --------------------------------------------------------------------------
# threshold assistance
# --------------------------------------------------------------------------


def histogram(values: Sequence[float], bin_width_km: float) -> np.ndarray:
    """Fixed-width counts starting at 0 km."""
    vals = np.asarray(values, dtype=np.float64)
    if vals.size == 0:
        raise EmptyInputError("histogram of no values")
    if bin_width_km <= 0:
        raise ParameterError("bin width must be positive")
    if np.any(vals < 0) or not np.all(np.isfinite(vals)):
        raise ParameterError("values must be finite and non-negative")
    idx = np.floor(vals / bin_width_km).astype(np.int64)
    return np.bincount(idx, minlength=int(idx.max()) + 1)


def smooth_counts(counts: Sequence[float], window: int) -> np.ndarray:
    """Centered moving average; edge bins average over the bins available."""
    c = np.asarray(counts, dtype=np.float64)
    if window <= 1:
        return c.copy()
    kern = np.ones(int(window))
    num = np.convolve(c, kern, mode="same")
    den = np.convolve(np.ones_like(c), kern, mode="same")
    return num / den


def suggest_valleys(counts: Sequence[float], smooth_window: int = 3, bin_width_km: float = 1.0) -> list[float]:
    """Interior local minima of the smoothed histogram, as bin-centre km values.

    Advisory only: bin edges are always taken from configuration.
    """
    s = smooth_counts(counts, smooth_window)
    n = s.size
    out: list[float] = []
    i = 1
    while i < n - 1:
        # extend across a plateau of equal values
        j = i
        while j + 1 < n and math.isclose(s[j + 1], s[i], rel_tol=1e-12, abs_tol=1e-12):
            j += 1
        left_higher = s[i - 1] > s[i] and not math.isclose(s[i - 1], s[i], rel_tol=1e-12, abs_tol=1e-12)
        right_higher = j + 1 < n and s[j + 1] > s[j]
        if left_higher and right_higher:
            out.append(((i + j) / 2 + 0.5) * bin_width_km)
        i = j + 1
    return out
