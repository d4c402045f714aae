"""Stage functions and the file-based run-all driver."""

from __future__ import annotations

import hashlib
import json
import logging
import shutil
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
import tomli_w

from . import analysis, cluster
from .config import FeaturesConfig, PipelineConfig
from .errors import (
    DegenerateGridError,
    EmptyInputError,
    ExclusionError,
    MobiscopeError,
    ParameterError,
    PreconditionError,
    StageError,
    UndefinedCorrelationError,
)
from .features import (
    OD_CELLS,
    DcdSeries,
    FeatureVector,
    build_feature_vector,
    dcd_features,
    dcd_series,
    extract_trips,
    od_matrix,
    read_features_csv,
    write_features_csv,
)
from .geo import EMPTY_SUBZONES, GeoPoint, SubzoneMap, load_subzones
from .ingest import (
    RecordError,
    UserDataset,
    ValidityReport,
    group_users,
    parse_fixes,
    read_dataset_csv,
    validity_filter,
    write_dataset_csv,
)
from .labeling import LabelCatalog, label_all, load_catalog
from .poi import (
    DayRecord,
    DayType,
    Poi,
    UserProfile,
    Visit,
    detect_home_work,
    detect_stay_points,
    merge_to_pois,
    pois_by_id,
    segment_days,
)

log = logging.getLogger(__name__)

STAGES = ("ingest", "pois", "label", "features", "cluster", "analyze")
DAY_TYPES = (DayType.WORKDAY, DayType.OFFDAY)


def _map(fn: Callable, items: Sequence, threads: int = 1) -> list:
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def _dump_json(obj, path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _load_json(path: Path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


# --------------------------------------------------------------------------
# per-user records
# --------------------------------------------------------------------------


@dataclass
class UserPois:
    user_id: str
    tz_offset_minutes: int
    pois: list[Poi]
    visits: list[Visit]
    profile: UserProfile

    def to_dict(self) -> dict:
        p = self.profile
        return {
            "user_id": self.user_id,
            "tz_offset_minutes": self.tz_offset_minutes,
            "home_poi": p.home_poi,
            "work_poi": p.work_poi,
            "home_work_km": p.home_work_km,
            "home_fallback": p.home_fallback,
            "pois": [
                {
                    "poi_id": x.poi_id,
                    "lat": x.centroid.lat,
                    "lon": x.centroid.lon,
                    "subzone": x.subzone,
                    "category": x.category,
                }
                for x in self.pois
            ],
            "visits": [
                {"poi_id": v.poi_id, "arrival": float(v.arrival), "departure": float(v.departure)}
                for v in self.visits
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "UserPois":
        pois = [Poi(int(x["poi_id"]), GeoPoint(x["lat"], x["lon"]), x["subzone"], x["category"]) for x in d["pois"]]
        visits = [Visit(int(v["poi_id"]), v["arrival"], v["departure"]) for v in d["visits"]]
        lookup = pois_by_id(pois)
        home_id, work_id = d["home_poi"], d["work_poi"]
        work = lookup[work_id].centroid if work_id is not None else None
        prof = UserProfile(
            d["user_id"], home_id, work_id, d["home_work_km"], lookup[home_id].centroid, work, d["home_fallback"]
        )
        return cls(d["user_id"], int(d["tz_offset_minutes"]), pois, visits, prof)

    def days(self) -> list[DayRecord]:
        return segment_days(self.visits, self.profile, self.tz_offset_minutes)


@dataclass
class UserFeatures:
    user_id: str
    rows: dict[DayType, FeatureVector] = field(default_factory=dict)
    excluded: dict[DayType, str] = field(default_factory=dict)
    series: dict[DayType, DcdSeries] = field(default_factory=dict)


def build_pois(ds: UserDataset, cfg: PipelineConfig) -> UserPois:
    p = cfg.poi
    stays = detect_stay_points(ds, p.dist_m, p.time_min, p.gap_min)
    pois, visits = merge_to_pois(stays, p.merge_m)
    if not pois:
        raise PreconditionError(f"user {ds.user_id}: no stay points detected")
    prof = detect_home_work(pois, visits, p.home_work(), ds.tz_offset_minutes, ds.user_id)
    return UserPois(ds.user_id, ds.tz_offset_minutes, pois, visits, prof)


def label_pois(up: UserPois, catalog: LabelCatalog, subzones: SubzoneMap, max_m: float) -> UserPois:
    labeled = label_all(up.pois, catalog, subzones, max_m)
    return UserPois(up.user_id, up.tz_offset_minutes, labeled, up.visits, up.profile)


def is_eligible(fv: FeatureVector) -> bool:
    """False for the all-zero OD rows written for users without trips.

    Rows read back from CSV carry 6-decimal rounding, so this only tests for
    OD mass rather than an exact sum of 1.
    """
    return float(np.sum(fv.values[:OD_CELLS])) > 0.5


def compute_features(up: UserPois, fcfg: FeaturesConfig) -> UserFeatures:
    """Feature rows per day type the user has days for.

    A user with days but no counted trips still gets a row, with all OD cells
    zero; such rows are left out of clustering.
    """
    days = up.days()
    pmap = pois_by_id(up.pois)
    out = UserFeatures(up.user_id)
    snap = fcfg.zero_snap_m / 1000.0
    for dt in DAY_TYPES:
        todays = [d for d in days if d.day_type is dt]
        if not todays:
            continue
        series = dcd_series(todays, up.profile, pmap, dt)
        out.series[dt] = series
        dcd = dcd_features(series, fcfg.dcd_scheme(dt), snap)
        od = od_matrix(extract_trips(todays, pmap), up.profile, fcfg.od_scheme(dt), dt)
        try:
            out.rows[dt] = build_feature_vector(od, dcd, up.user_id, dt)
        except ExclusionError as exc:
            out.excluded[dt] = str(exc)
            vals = np.concatenate([np.zeros(OD_CELLS), np.asarray(dcd.shares)])
            out.rows[dt] = FeatureVector(up.user_id, dt, vals)
    return out


def fit_day_type(vectors: Sequence[FeatureVector], cfg: PipelineConfig, day_type: DayType) -> dict:
    """Model JSON for one day type: k-means at cfg k plus the SSE scan."""
    day_type = DayType(day_type)
    rows = sorted((v for v in vectors if v.day_type is day_type), key=lambda v: v.user_id)
    eligible = [v for v in rows if is_eligible(v)]
    excluded = [v.user_id for v in rows if not is_eligible(v)]
    c = cfg.cluster
    base = {"day_type": day_type.value, "excluded": excluded, "restarts": c.restarts}
    if len(eligible) < c.k:
        return dict(base, status="insufficient_users", k=c.k, n_users=len(eligible), seed=cfg.seed)
    X = np.vstack([v.values for v in eligible])
    ids = [v.user_id for v in eligible]
    model = cluster.kmeans(X, c.k, cfg.seed, c.restarts, c.max_iter, c.tol, ids)
    k_hi = min(c.k_max, X.shape[0])
    curve = cluster.sse_curve(X, c.k_min, k_hi, cfg.seed, c.restarts) if k_hi >= c.k_min else None
    suggested = cluster.suggest_k(curve) if curve is not None and len(curve.points) >= 3 else None
    return dict(
        base,
        **model.to_dict(),
        status="ok",
        n_users=len(ids),
        sse_curve=curve.to_list() if curve else [],
        suggested_k=suggested,
    )


@dataclass
class AnalysisResult:
    heatmaps: dict[DayType, list[analysis.HeatmapGrid]]
    violins: dict[DayType, list[dict]]
    correlation: dict
    notes: list[str]


def median_nonzero_dcd(series: DcdSeries | None, zero_snap_km: float = 0.0) -> float | None:
    if series is None:
        return None
    vals = [v for v in series.km.tolist() if v > 0 and v >= zero_snap_km]
    return float(statistics.median(vals)) if vals else None


def correlation_summary(
    users: Mapping[str, UserPois], feats: Mapping[str, UserFeatures], cfg: PipelineConfig
) -> dict:
    """Pearson r between Home-Work distance and median nonzero Workday DCD."""
    snap = cfg.features.zero_snap_m / 1000.0
    pairs = []
    for uid in sorted(users):
        prof = users[uid].profile
        if prof.home_work_km is None:
            continue
        med = median_nonzero_dcd(feats[uid].series.get(DayType.WORKDAY), snap)
        if med is not None:
            pairs.append((uid, prof.home_work_km, med))
    out = {
        "x": "home_work_km",
        "y": "median_nonzero_workday_dcd_km",
        "n": len(pairs),
        "permutations": cfg.analysis.permutations,
        "seed": cfg.seed,
        "users": [{"user_id": u, "home_work_km": x, "median_dcd_km": y} for u, x, y in pairs],
    }
    try:
        r, p = cluster.pearson_r(
            [x for _, x, _ in pairs], [y for _, _, y in pairs], cfg.analysis.permutations, cfg.seed
        )
        out.update(r=r, p=p)
    except (UndefinedCorrelationError, ParameterError) as exc:
        out.update(r=None, p=None, reason=str(exc))
    return out


def analyze(
    users: Mapping[str, UserPois],
    feats: Mapping[str, UserFeatures],
    models: Mapping[DayType, dict],
    cfg: PipelineConfig,
) -> AnalysisResult:
    heatmaps: dict[DayType, list[analysis.HeatmapGrid]] = {}
    violins: dict[DayType, list[dict]] = {}
    notes: list[str] = []
    snap = cfg.features.zero_snap_m / 1000.0
    for dt, model in models.items():
        if model.get("status") != "ok":
            notes.append(f"{dt.value}: no model ({model.get('status')})")
            continue
        scheme = cfg.features.od_scheme(dt)
        members: dict[int, list[str]] = {}
        for uid, c in sorted(model["assignments"].items()):
            members.setdefault(int(c), []).append(uid)
        grids = []
        vrecs = []
        for cid in sorted(members):
            cells = {}
            for uid in members[cid]:
                up = users[uid]
                cells[uid] = analysis.visit_cells(up.days(), up.profile, pois_by_id(up.pois), scheme, dt)
            grids.append(analysis.user_commonality(cells, cid))
            try:
                grids.append(analysis.average_frequency(cells, cid, cfg.analysis.frequency_unit))
            except DegenerateGridError as exc:
                notes.append(f"{dt.value}: {exc}")
            series = {u: feats[u].series[dt] for u in members[cid] if dt in feats[u].series}
            profiles = {u: users[u].profile for u in members[cid]}
            export = analysis.violin_export(members[cid], series, profiles, dt, snap)
            vrecs += [dict(r, cluster_id=cid) for r in export.to_list()]
        heatmaps[dt] = grids
        violins[dt] = vrecs
    corr = correlation_summary(users, feats, cfg)
    return AnalysisResult(heatmaps, violins, corr, notes)


# --------------------------------------------------------------------------
# in-memory composition
# --------------------------------------------------------------------------


@dataclass
class PipelineResult:
    users: dict[str, UserPois]
    features: dict[str, UserFeatures]
    models: dict[DayType, dict]
    analysis: AnalysisResult


def run_pipeline(
    datasets: Mapping[str, UserDataset],
    catalog: LabelCatalog,
    subzones: SubzoneMap = EMPTY_SUBZONES,
    cfg: PipelineConfig | None = None,
) -> PipelineResult:
    """pois -> label -> features -> cluster -> analyze, without touching disk."""
    cfg = cfg or PipelineConfig()
    ids = sorted(datasets)
    ups = _map(lambda u: build_pois(datasets[u], cfg), ids, cfg.threads)
    ups = _map(lambda up: label_pois(up, catalog, subzones, cfg.labeling.max_m), ups, cfg.threads)
    users = {up.user_id: up for up in ups}
    feats = {uf.user_id: uf for uf in _map(lambda up: compute_features(up, cfg.features), ups, cfg.threads)}
    rows = [fv for uf in feats.values() for fv in uf.rows.values()]
    models = {dt: fit_day_type(rows, cfg, dt) for dt in DAY_TYPES}
    return PipelineResult(users, feats, models, analyze(users, feats, models, cfg))


# --------------------------------------------------------------------------
# file stages
# --------------------------------------------------------------------------


def stage_ingest(inputs: Sequence[str | Path], out_dir: Path, cfg: PipelineConfig) -> dict:
    ic = cfg.ingest
    if not inputs:
        raise EmptyInputError("no input files given")
    fixes = []
    errors: list[RecordError] = []
    for path in inputs:
        with open(path, "rb") as fh:
            f, e = parse_fixes(fh, ic.format)
        fixes += f
        errors += e
    if not fixes:
        raise EmptyInputError("no valid fixes in input")
    grouped = group_users(fixes, ic.tz_offset_minutes, ic.overlap_tolerance_s)
    out_dir.mkdir(parents=True, exist_ok=True)
    index = {"tz_offset_minutes": ic.tz_offset_minutes, "record_errors": len(errors), "users": {}}
    for uid, ds in grouped.items():
        rep: ValidityReport = validity_filter(ds, ic.min_valid_days, ic.min_coverage, ic.valid_day_hours)
        index["users"][uid] = rep.to_dict()
        if rep.accepted:
            with open(out_dir / f"{uid}.csv", "w", encoding="utf-8", newline="") as fh:
                write_dataset_csv(ds, fh)
    if errors:
        index["errors"] = [{"line": e.line, "reason": e.reason} for e in errors[:1000]]
    _dump_json(index, out_dir / "index.json")
    return index


def load_users_dir(users_dir: Path) -> dict[str, UserDataset]:
    index_path = users_dir / "index.json"
    tz = _load_json(index_path)["tz_offset_minutes"] if index_path.exists() else 480
    out = {}
    for path in sorted(users_dir.glob("*.csv")):
        with open(path, encoding="utf-8", newline="") as fh:
            ds = read_dataset_csv(fh, tz)
        out[ds.user_id] = ds
    return out


def _write_user_dir(ups: Iterable[UserPois], out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    for up in ups:
        _dump_json(up.to_dict(), out_dir / f"{up.user_id}.json")


def load_user_dir(d: Path) -> dict[str, UserPois]:
    return {p.stem: UserPois.from_dict(_load_json(p)) for p in sorted(d.glob("*.json"))}


def stage_pois(users_dir: Path, out_dir: Path, cfg: PipelineConfig) -> int:
    datasets = load_users_dir(users_dir)
    ids = sorted(datasets)
    ups = _map(lambda u: build_pois(datasets[u], cfg), ids, cfg.threads)
    _write_user_dir(ups, out_dir)
    return len(ups)


def stage_label(pois_dir: Path, out_dir: Path, cfg: PipelineConfig, catalog_path, subzones_path) -> int:
    catalog = load_catalog(catalog_path) if catalog_path else LabelCatalog([])
    subzones = load_subzones(subzones_path, cfg.labeling.subzone_key) if subzones_path else EMPTY_SUBZONES
    ups = list(load_user_dir(pois_dir).values())
    labeled = _map(lambda up: label_pois(up, catalog, subzones, cfg.labeling.max_m), ups, cfg.threads)
    _write_user_dir(labeled, out_dir)
    return len(labeled)


def stage_features(labeled_dir: Path, out_path: Path, cfg: PipelineConfig) -> list[FeatureVector]:
    ups = list(load_user_dir(labeled_dir).values())
    feats = _map(lambda up: compute_features(up, cfg.features), ups, cfg.threads)
    rows = [uf.rows[dt] for dt in DAY_TYPES for uf in feats if dt in uf.rows]
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", encoding="utf-8", newline="") as fh:
        write_features_csv(rows, fh)
    return rows


def model_path(out: Path, day_type: DayType) -> Path:
    return out.with_name(f"{out.stem}.{DayType(day_type).value.lower()}{out.suffix}")


def stage_cluster(features_path: Path, out_path: Path, cfg: PipelineConfig, day_type=None) -> dict[DayType, Path]:
    with open(features_path, encoding="utf-8") as fh:
        rows = read_features_csv(fh)
    written = {}
    out_path.parent.mkdir(parents=True, exist_ok=True)
    for dt in [DayType(day_type)] if day_type else DAY_TYPES:
        path = out_path if day_type else model_path(out_path, dt)
        _dump_json(fit_day_type(rows, cfg, dt), path)
        written[dt] = path
    return written


def stage_analyze(labeled_dir: Path, model_paths: Mapping[DayType, Path], out_dir: Path, cfg: PipelineConfig):
    users = load_user_dir(labeled_dir)
    feats = {uid: compute_features(up, cfg.features) for uid, up in users.items()}
    models = {dt: _load_json(p) for dt, p in model_paths.items()}
    res = analyze(users, feats, models, cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    for dt, grids in res.heatmaps.items():
        tag = dt.value.lower()
        labels = cfg.features.od_scheme(dt).labels()
        with open(out_dir / f"heatmaps.{tag}.csv", "w", encoding="utf-8", newline="") as fh:
            analysis.write_heatmaps_csv(grids, fh, labels)
        _dump_json(res.violins[dt], out_dir / f"violins.{tag}.json")
        if cfg.analysis.plot_spec:
            specs = [analysis.heatmap_plot_spec(g, labels, dt) for g in grids]
            _dump_json(specs, out_dir / f"heatmaps.{tag}.plot.json")
            recs = tuple(
                analysis.ViolinRecord(r["user_id"], r["working"], r["home_work_km"], tuple(r["values"]), r["median"])
                for r in res.violins[dt]
            )
            _dump_json(analysis.violin_plot_spec(analysis.ViolinExport(dt, recs)), out_dir / f"violins.{tag}.plot.json")
    _dump_json(res.correlation, out_dir / "correlation.json")
    if res.notes:
        _dump_json(res.notes, out_dir / "notes.json")
    return res


# --------------------------------------------------------------------------
# run-all
# --------------------------------------------------------------------------

_OWNED = ("users", "pois", "labeled", "analysis", "failed")
_OWNED_FILES = ("features.csv", "model.workday.json", "model.offday.json", "manifest.json", "config.toml")


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out: Path) -> Path:
    files = sorted(
        p for p in out.rglob("*") if p.is_file() and p.name != "manifest.json" and "failed" not in p.relative_to(out).parts
    )
    manifest = {"files": {p.relative_to(out).as_posix(): sha256_file(p) for p in files}}
    path = out / "manifest.json"
    _dump_json(manifest, path)
    return path


def _clean(out: Path) -> None:
    for name in _OWNED:
        if (out / name).exists():
            shutil.rmtree(out / name)
    for name in _OWNED_FILES:
        (out / name).unlink(missing_ok=True)


def _quarantine(out: Path) -> Path:
    failed = out / "failed"
    failed.mkdir(parents=True, exist_ok=True)
    for name in _OWNED[:-1] + _OWNED_FILES:
        src = out / name
        if src.exists():
            shutil.move(str(src), str(failed / name))
    return failed


def run_all(cfg: PipelineConfig, out: str | Path) -> Path:
    """Run every stage into ``out`` and return the manifest path.

    On a stage failure the partial outputs are moved to ``out/failed`` and a
    StageError naming the stage is raised.
    """
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    _clean(out)
    paths = cfg.paths
    # threads only affects scheduling, so it stays out of the hashed snapshot
    snapshot = {k: v for k, v in cfg.to_dict().items() if k != "threads"}
    (out / "config.toml").write_text(tomli_w.dumps(snapshot), encoding="utf-8")
    plan = [
        ("ingest", lambda: stage_ingest(list(paths.fixes), out / "users", cfg)),
        ("pois", lambda: stage_pois(out / "users", out / "pois", cfg)),
        ("label", lambda: stage_label(out / "pois", out / "labeled", cfg, paths.catalog, paths.subzones)),
        ("features", lambda: stage_features(out / "labeled", out / "features.csv", cfg)),
        ("cluster", lambda: stage_cluster(out / "features.csv", out / "model.json", cfg)),
        (
            "analyze",
            lambda: stage_analyze(
                out / "labeled", {dt: model_path(out / "model.json", dt) for dt in DAY_TYPES}, out / "analysis", cfg
            ),
        ),
    ]
    for name, fn in plan:
        log.info("stage %s", name)
        try:
            fn()
        except (MobiscopeError, OSError, KeyError, ValueError) as exc:
            _quarantine(out)
            raise StageError(name, exc) from exc
    return write_manifest(out)
