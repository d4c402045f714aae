"""Seeded synthetic GPS populations with ground truth.

Three behavioural archetypes are generated: HomeBody users rarely leave
Home (and Work), ShortTrippers make frequent excursions within a few km of
Home, LongTrippers make frequent excursions 5-15 km out. For working users the
Home-Work distance is constructed so that, within the generated sample, its
Pearson correlation with the typical Workday excursion radius equals
``target_r``.
"""

from __future__ import annotations

import datetime as dt
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .geo import GeoPoint, haversine_km
from .ingest import UserDataset
from .labeling import CatalogEntry, LabelCatalog, PoiCategory, write_catalog

ARCHETYPES = ("HomeBody", "ShortTripper", "LongTripper")
KM_PER_DEG = 111.195

# excursion-day share, chance of a second stop, excursion radius range (km)
_ARCHETYPE_PARAMS = {
    "HomeBody": (0.10, 0.0, (1.5, 4.5)),
    "ShortTripper": (0.80, 0.3, (1.5, 4.5)),
    "LongTripper": (0.80, 0.3, (6.5, 13.5)),
}
_N_SITES = 8
_SITE_RADIUS_JITTER = 0.10
_MIN_PLACE_SEP_KM = 0.5
_DWELL_SAMPLE_S = 300
_TRANSIT_SAMPLE_S = 60
_LABELED_SITE_SHARE = 0.85
_GRID_DEG = 0.01

# category mix for excursion sites; Residential is reserved for Home
_SITE_CATEGORIES = [c for c in PoiCategory if c is not PoiCategory.RESIDENTIAL]
_SITE_WEIGHTS = np.array([1, 1, 3, 1.5, 1, 1, 1.5, 3, 1.5], dtype=np.float64)
_SITE_WEIGHTS /= _SITE_WEIGHTS.sum()


@dataclass(frozen=True)
class SynthSpec:
    seed: int = 7
    n_homebody: int = 10
    n_short: int = 10
    n_long: int = 10
    days: int = 60
    working_fraction: float = 0.6
    # min_lat, min_lon, max_lat, max_lon
    home_box: tuple[float, float, float, float] = (1.30, 103.70, 1.42, 103.95)
    target_r: float = 0.75
    gps_jitter_m: float = 15.0
    schedule_jitter_min: float = 20.0
    home_work_mean_km: float = 9.0
    home_work_sd_km: float = 3.5
    start_date: str = "2021-01-04"
    tz_offset_minutes: int = 480

    def __post_init__(self):
        for name in ("n_homebody", "n_short", "n_long", "days"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not -1.0 <= self.target_r <= 1.0:
            raise ValueError("target_r must lie in [-1, 1]")
        if self.gps_jitter_m < 0 or self.schedule_jitter_min < 0:
            raise ValueError("jitter must be >= 0")
        if not 0.0 <= self.working_fraction <= 1.0:
            raise ValueError("working_fraction must lie in [0, 1]")

    @property
    def n_users(self) -> int:
        return self.n_homebody + self.n_short + self.n_long


@dataclass
class UserTruth:
    user_id: str
    archetype: str
    working: bool
    home: tuple[float, float]
    work: tuple[float, float] | None
    excursion_radius_km: float
    sites: list[tuple[float, float]]
    # (place, arrival_utc, departure_utc); place is "home", "work" or "site<i>"
    visits: list[tuple[str, int, int]] = field(default_factory=list)

    @property
    def home_work_km(self) -> float | None:
        if self.work is None:
            return None
        return haversine_km(GeoPoint(*self.home), GeoPoint(*self.work))


@dataclass
class GroundTruth:
    spec: SynthSpec
    users: list[UserTruth]

    def to_dict(self) -> dict:
        spec = asdict(self.spec)
        spec["home_box"] = list(spec["home_box"])
        return {
            "spec": spec,
            "users": [
                {
                    "user_id": u.user_id,
                    "archetype": u.archetype,
                    "working": u.working,
                    "home": list(u.home),
                    "work": list(u.work) if u.work else None,
                    "home_work_km": u.home_work_km,
                    "excursion_radius_km": u.excursion_radius_km,
                    "sites": [list(s) for s in u.sites],
                    "visits": [list(v) for v in u.visits],
                }
                for u in self.users
            ],
        }

    def by_user(self) -> dict[str, UserTruth]:
        return {u.user_id: u for u in self.users}


@dataclass
class SynthResult:
    datasets: dict[str, UserDataset]
    truth: GroundTruth
    catalog: LabelCatalog
    subzones_geojson: dict


# --------------------------------------------------------------------------
# geometry helpers
# --------------------------------------------------------------------------


def _offset(lat: float, lon: float, km: float, bearing: float) -> tuple[float, float]:
    dlat = km * math.cos(bearing) / KM_PER_DEG
    dlon = km * math.sin(bearing) / (KM_PER_DEG * math.cos(math.radians(lat)))
    return lat + dlat, lon + dlon


def _km(a: tuple[float, float], b: tuple[float, float]) -> float:
    return haversine_km(GeoPoint(*a), GeoPoint(*b))


def _place_at(rng, origin, km, avoid, tries: int = 64):
    """Point ``km`` from ``origin`` in a random direction, away from ``avoid``."""
    p = origin
    for _ in range(tries):
        p = _offset(origin[0], origin[1], km, rng.uniform(0, 2 * math.pi))
        if all(_km(p, q) >= _MIN_PLACE_SEP_KM for q in avoid):
            return p
    return p


def design_home_work_km(y: np.ndarray, target_r: float, mean: float, sd: float, rng) -> np.ndarray:
    """Distances whose in-sample Pearson correlation with ``y`` is ``target_r``.

    The noise component is orthogonalised against ``y`` before mixing, so the
    correlation is exact up to the final clipping.
    """
    y = np.asarray(y, dtype=np.float64)
    n = y.size
    if n < 3 or np.all(y == y[0]):
        return np.clip(mean + sd * rng.standard_normal(n), 1.0, 40.0)
    zy = (y - y.mean()) / y.std()
    e = rng.standard_normal(n)
    e -= e.mean()
    e -= (e @ zy) / (zy @ zy) * zy
    ze = e / e.std() if e.std() > 0 else np.zeros(n)
    z = target_r * zy + math.sqrt(max(0.0, 1.0 - target_r**2)) * ze
    return np.clip(mean + sd * z, 1.0, 40.0)


# --------------------------------------------------------------------------
# schedule and fixes
# --------------------------------------------------------------------------


class _Timeline:
    """Accumulates dwell/transit segments for one user, in local seconds."""

    def __init__(self, places, rng):
        self.places = places
        self.rng = rng
        self.t = 0
        self.at = "home"
        self.segments: list[tuple[str, int, int, str, str]] = []

    def stay_until(self, t_end: int):
        t_end = int(max(t_end, self.t + 60))
        self.segments.append(("dwell", self.t, t_end, self.at, self.at))
        self.t = t_end

    def move(self, dest: str):
        km = _km(self.places[self.at], self.places[dest])
        speed = self.rng.uniform(25.0, 35.0)
        dur = int(max(120, round(km / speed * 3600)))
        self.segments.append(("transit", self.t, self.t + dur, self.at, dest))
        self.t += dur
        self.at = dest


def _choose_days(rng, candidates: list[int], share: float) -> set[int]:
    if not candidates:
        return set()
    n = max(1, int(round(share * len(candidates))))
    picked = rng.choice(len(candidates), size=min(n, len(candidates)), replace=False)
    return {candidates[i] for i in picked}


def _build_schedule(truth: UserTruth, spec: SynthSpec, weekday0: int, rng) -> _Timeline:
    share, p_second, _ = _ARCHETYPE_PARAMS[truth.archetype]
    places = {"home": truth.home}
    if truth.work:
        places["work"] = truth.work
    for i, s in enumerate(truth.sites):
        places[f"site{i}"] = s
    tl = _Timeline(places, rng)
    jit = spec.schedule_jitter_min * 60.0

    def jitter():
        return rng.uniform(-jit, jit) if jit > 0 else 0.0

    work_days = [d for d in range(spec.days) if truth.working and (weekday0 + d) % 7 < 5]
    off_days = [d for d in range(spec.days) if d not in set(work_days)]
    outings = _choose_days(rng, work_days, share) | _choose_days(rng, off_days, share)
    n_sites = len(truth.sites)

    for d in range(spec.days):
        base = d * 86400
        if d in work_days:
            tl.stay_until(base + 8 * 3600 + jitter())
            tl.move("work")
            tl.stay_until(base + int(17.5 * 3600) + jitter())
            if d in outings:
                tl.move(f"site{int(rng.integers(n_sites))}")
                tl.stay_until(tl.t + rng.uniform(45, 90) * 60)
            tl.move("home")
        elif d in outings:
            tl.stay_until(base + rng.uniform(10 * 3600, 14 * 3600))
            first = int(rng.integers(n_sites))
            tl.move(f"site{first}")
            tl.stay_until(tl.t + rng.uniform(60, 150) * 60)
            if rng.random() < p_second and n_sites > 1:
                second = (first + 1 + int(rng.integers(n_sites - 1))) % n_sites
                tl.move(f"site{second}")
                tl.stay_until(tl.t + rng.uniform(45, 90) * 60)
            tl.move("home")
    tl.stay_until(spec.days * 86400)
    return tl


def _fixes_from_timeline(tl: _Timeline, jitter_m: float, rng):
    lat_parts, lon_parts, s_parts, e_parts = [], [], [], []
    for kind, t0, t1, a, b in tl.segments:
        pa = tl.places[a]
        if kind == "dwell":
            ts = np.arange(t0, t1, _DWELL_SAMPLE_S, dtype=np.int64)
            te = np.minimum(ts + _DWELL_SAMPLE_S, t1)
            lat = np.full(ts.size, pa[0])
            lon = np.full(ts.size, pa[1])
        else:
            pb = tl.places[b]
            ts = np.arange(t0 + _TRANSIT_SAMPLE_S, t1, _TRANSIT_SAMPLE_S, dtype=np.int64)
            te = np.minimum(ts + _TRANSIT_SAMPLE_S, t1)
            frac = (ts - t0) / float(t1 - t0)
            lat = pa[0] + (pb[0] - pa[0]) * frac
            lon = pa[1] + (pb[1] - pa[1]) * frac
        lat_parts.append(lat)
        lon_parts.append(lon)
        s_parts.append(ts)
        e_parts.append(te)
    lat = np.concatenate(lat_parts)
    lon = np.concatenate(lon_parts)
    if jitter_m > 0:
        lat = lat + rng.normal(0.0, jitter_m, lat.size) / (KM_PER_DEG * 1000.0)
        lon = lon + rng.normal(0.0, jitter_m, lon.size) / (KM_PER_DEG * 1000.0 * np.cos(np.radians(lat)))
    # 1e-7 degree resolution keeps CSV round trips exact
    return np.round(lat, 7), np.round(lon, 7), np.concatenate(s_parts), np.concatenate(e_parts)


def _visits_from_timeline(tl: _Timeline, utc_shift: int) -> list[tuple[str, int, int]]:
    return [(a, t0 + utc_shift, t1 + utc_shift) for kind, t0, t1, a, _ in tl.segments if kind == "dwell"]


# --------------------------------------------------------------------------
# labels and zones
# --------------------------------------------------------------------------


def _build_catalog(users: list[UserTruth], rng) -> LabelCatalog:
    entries = []
    for u in users:
        hp = _offset(*u.home, rng.uniform(0, 0.05), rng.uniform(0, 2 * math.pi))
        entries.append(CatalogEntry(GeoPoint(*hp), PoiCategory.RESIDENTIAL, f"{u.user_id}-home"))
        if u.work:
            cat = _SITE_CATEGORIES[int(rng.choice(len(_SITE_CATEGORIES), p=_SITE_WEIGHTS))]
            wp = _offset(*u.work, rng.uniform(0, 0.05), rng.uniform(0, 2 * math.pi))
            entries.append(CatalogEntry(GeoPoint(*wp), cat, f"{u.user_id}-work"))
        for i, s in enumerate(u.sites):
            if rng.random() >= _LABELED_SITE_SHARE:
                continue
            cat = _SITE_CATEGORIES[int(rng.choice(len(_SITE_CATEGORIES), p=_SITE_WEIGHTS))]
            sp = _offset(*s, rng.uniform(0, 0.05), rng.uniform(0, 2 * math.pi))
            entries.append(CatalogEntry(GeoPoint(*sp), cat, f"{u.user_id}-site{i}"))
    return LabelCatalog(entries)


def grid_subzones(users: list[UserTruth], cell_deg: float = _GRID_DEG) -> dict:
    """Square-cell subzone GeoJSON covering every generated place."""
    pts = []
    for u in users:
        pts.append(u.home)
        if u.work:
            pts.append(u.work)
        pts.extend(u.sites)
    if not pts:
        return {"type": "FeatureCollection", "features": []}
    arr = np.array(pts)
    lat0 = math.floor((arr[:, 0].min() - 0.02) / cell_deg) * cell_deg
    lon0 = math.floor((arr[:, 1].min() - 0.02) / cell_deg) * cell_deg
    n_lat = int(math.ceil((arr[:, 0].max() + 0.02 - lat0) / cell_deg))
    n_lon = int(math.ceil((arr[:, 1].max() + 0.02 - lon0) / cell_deg))
    feats = []
    for r in range(n_lat):
        for c in range(n_lon):
            a, b = round(lat0 + r * cell_deg, 6), round(lat0 + (r + 1) * cell_deg, 6)
            x, y = round(lon0 + c * cell_deg, 6), round(lon0 + (c + 1) * cell_deg, 6)
            ring = [[x, a], [y, a], [y, b], [x, b], [x, a]]
            feats.append(
                {
                    "type": "Feature",
                    "properties": {"SUBZONE_N": f"SZ{r:03d}{c:03d}"},
                    "geometry": {"type": "Polygon", "coordinates": [ring]},
                }
            )
    return {"type": "FeatureCollection", "features": feats}


# --------------------------------------------------------------------------
# entry points
# --------------------------------------------------------------------------


def _population_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), 2**31 - 1]))


def _user_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


def generate(spec: SynthSpec) -> SynthResult:
    """Generate fixes, ground truth, a label catalog and a subzone grid."""
    prng = _population_rng(spec.seed)
    archetypes = (
        ["HomeBody"] * spec.n_homebody + ["ShortTripper"] * spec.n_short + ["LongTripper"] * spec.n_long
    )
    working = []
    for n in (spec.n_homebody, spec.n_short, spec.n_long):
        n_work = int(round(spec.working_fraction * n))
        working += [i < n_work for i in range(n)]

    lat_lo, lon_lo, lat_hi, lon_hi = spec.home_box
    homes = [(prng.uniform(lat_lo, lat_hi), prng.uniform(lon_lo, lon_hi)) for _ in archetypes]
    radii = np.array([prng.uniform(*_ARCHETYPE_PARAMS[a][2]) for a in archetypes])
    w_idx = [i for i, w in enumerate(working) if w]
    hw_km = design_home_work_km(
        radii[w_idx], spec.target_r, spec.home_work_mean_km, spec.home_work_sd_km, prng
    )
    hw_of = dict(zip(w_idx, hw_km.tolist()))

    start = dt.date.fromisoformat(spec.start_date)
    local0 = (start - dt.date(1970, 1, 1)).days * 86400
    utc_shift = local0 - spec.tz_offset_minutes * 60
    weekday0 = start.weekday()

    users: list[UserTruth] = []
    datasets: dict[str, UserDataset] = {}
    width = max(3, len(str(len(archetypes))))
    for i, arch in enumerate(archetypes):
        rng = _user_rng(spec.seed, i)
        uid = f"u{i:0{width}d}"
        home = homes[i]
        work = None
        if working[i]:
            work = _place_at(rng, home, hw_of[i], [home])
        avoid = [home] + ([work] if work else [])
        sites = []
        for _ in range(_N_SITES):
            km = radii[i] * rng.uniform(1 - _SITE_RADIUS_JITTER, 1 + _SITE_RADIUS_JITTER)
            s = _place_at(rng, home, km, avoid + sites)
            sites.append(s)
        truth = UserTruth(uid, arch, bool(working[i]), home, work, float(radii[i]), sites)
        tl = _build_schedule(truth, spec, weekday0, rng)
        truth.visits = _visits_from_timeline(tl, utc_shift)
        lat, lon, s_loc, e_loc = _fixes_from_timeline(tl, spec.gps_jitter_m, rng)
        datasets[uid] = UserDataset(uid, lat, lon, s_loc + utc_shift, e_loc + utc_shift, spec.tz_offset_minutes)
        users.append(truth)

    catalog = _build_catalog(users, prng)
    return SynthResult(datasets, GroundTruth(spec, users), catalog, grid_subzones(users))


def write_synth(result: SynthResult, out_dir: str | Path) -> dict[str, Path]:
    """Write fixes.csv, ground_truth.json, catalog.csv and subzones.geojson."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "fixes": out / "fixes.csv",
        "ground_truth": out / "ground_truth.json",
        "catalog": out / "catalog.csv",
        "subzones": out / "subzones.geojson",
    }
    with open(paths["fixes"], "w", encoding="utf-8", newline="") as fh:
        fh.write("user_id,lat,lon,start_epoch_s,end_epoch_s\n")
        for uid in sorted(result.datasets):
            ds = result.datasets[uid]
            fh.writelines(
                f"{uid},{a:.7f},{b:.7f},{int(s)},{int(e)}\n"
                for a, b, s, e in zip(ds.lat.tolist(), ds.lon.tolist(), ds.start.tolist(), ds.end.tolist())
            )
    with open(paths["ground_truth"], "w", encoding="utf-8") as fh:
        json.dump(result.truth.to_dict(), fh, indent=1, sort_keys=True)
        fh.write("\n")
    write_catalog(result.catalog, paths["catalog"])
    with open(paths["subzones"], "w", encoding="utf-8") as fh:
        json.dump(result.subzones_geojson, fh, separators=(",", ":"), sort_keys=True)
        fh.write("\n")
    return paths
