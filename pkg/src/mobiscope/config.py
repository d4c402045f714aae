"""Pipeline configuration: TOML in, dataclasses out, unknown keys rejected."""

from __future__ import annotations

import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import tomli_w

from .errors import ConfigError, ParameterError
from .features import scheme_for
from .poi import DayType, HomeWorkConfig
from .synth import SynthSpec

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


@dataclass(frozen=True)
class IngestConfig:
    format: str = "csv"
    tz_offset_minutes: int = 480
    min_valid_days: int = 30
    min_coverage: float = 0.5
    valid_day_hours: float = 8.0
    overlap_tolerance_s: float = 0.0


@dataclass(frozen=True)
class PoiConfig:
    dist_m: float = 200.0
    time_min: float = 20.0
    gap_min: float = 5.0
    merge_m: float = 100.0
    home_window_h: tuple[float, ...] = (0.0, 6.0)
    work_window_h: tuple[float, ...] = (10.0, 17.0)
    work_weekdays: tuple[int, ...] = (0, 1, 2, 3, 4)
    work_presence_ratio: float = 0.4

    def home_work(self) -> HomeWorkConfig:
        return HomeWorkConfig(
            tuple(self.home_window_h), tuple(self.work_window_h), tuple(self.work_weekdays), self.work_presence_ratio
        )


@dataclass(frozen=True)
class LabelingConfig:
    max_m: float = 400.0
    subzone_key: str = "SUBZONE_N"


@dataclass(frozen=True)
class FeaturesConfig:
    dcd_edges: tuple[float, ...] = (5.0, 15.0)
    od_workday_edges: tuple[float, ...] = (2.0, 8.0)
    od_offday_edges: tuple[float, ...] = (1.0, 5.0, 15.0)
    zero_snap_m: float = 10.0

    def dcd_scheme(self, day_type: DayType):
        return scheme_for("dcd", day_type, self.dcd_edges)

    def od_scheme(self, day_type: DayType):
        edges = self.od_workday_edges if DayType(day_type) is DayType.WORKDAY else self.od_offday_edges
        return scheme_for("od", day_type, edges)


@dataclass(frozen=True)
class ClusterConfig:
    k: int = 3
    restarts: int = 50
    max_iter: int = 300
    tol: float = 1e-6
    k_min: int = 1
    k_max: int = 10


@dataclass(frozen=True)
class AnalysisConfig:
    frequency_unit: str = "visits"
    permutations: int = 10000
    plot_spec: bool = False


@dataclass(frozen=True)
class PathsConfig:
    fixes: tuple[str, ...] = ()
    catalog: str = ""
    subzones: str = ""


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 42
    threads: int = 1
    ingest: IngestConfig = field(default_factory=IngestConfig)
    poi: PoiConfig = field(default_factory=PoiConfig)
    labeling: LabelingConfig = field(default_factory=LabelingConfig)
    features: FeaturesConfig = field(default_factory=FeaturesConfig)
    cluster: ClusterConfig = field(default_factory=ClusterConfig)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    synth: SynthSpec = field(default_factory=SynthSpec)
    paths: PathsConfig = field(default_factory=PathsConfig)

    def to_dict(self) -> dict:
        d = asdict(self)
        return _listify(d)

    def to_toml(self) -> str:
        return tomli_w.dumps(self.to_dict())

    def validate(self) -> "PipelineConfig":
        try:
            _validate(self)
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc
        return self

    def with_overrides(self, **top) -> "PipelineConfig":
        return replace(self, **{k: v for k, v in top.items() if v is not None})


_SECTIONS = {f.name: f for f in fields(PipelineConfig) if f.name not in ("seed", "threads")}
_SECTION_TYPES = {
    "ingest": IngestConfig,
    "poi": PoiConfig,
    "labeling": LabelingConfig,
    "features": FeaturesConfig,
    "cluster": ClusterConfig,
    "analysis": AnalysisConfig,
    "synth": SynthSpec,
    "paths": PathsConfig,
}


def _listify(obj):
    if isinstance(obj, dict):
        return {k: _listify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_listify(v) for v in obj]
    return obj


def _coerce(value, default, where: str):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected a boolean, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    if isinstance(default, tuple):
        if isinstance(value, str) or not isinstance(value, (list, tuple)):
            raise ConfigError(f"{where}: expected an array, got {value!r}")
        proto = default[0] if default else ""
        return tuple(_coerce(v, proto, f"{where}[{i}]") for i, v in enumerate(value))
    raise ConfigError(f"{where}: unsupported value {value!r}")


def _section(cls, data, name: str):
    if not isinstance(data, dict):
        raise ConfigError(f"[{name}] must be a table")
    proto = cls()
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{name}]: {', '.join(unknown)}")
    kwargs = {k: _coerce(v, getattr(proto, k), f"{name}.{k}") for k, v in data.items()}
    try:
        return cls(**kwargs)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"[{name}]: {exc}") from exc


def config_from_dict(data: dict) -> PipelineConfig:
    unknown = sorted(set(data) - set(_SECTIONS) - {"seed", "threads"})
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")
    proto = PipelineConfig()
    kwargs = {}
    for key in ("seed", "threads"):
        if key in data:
            kwargs[key] = _coerce(data[key], getattr(proto, key), key)
    for name, cls in _SECTION_TYPES.items():
        if name in data:
            kwargs[name] = _section(cls, data[name], name)
    return PipelineConfig(**kwargs).validate()


def load_config(path: str | Path | None) -> PipelineConfig:
    if path is None:
        return PipelineConfig().validate()
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
    return config_from_dict(data)


def loads_config(text: str) -> PipelineConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}") from exc
    return config_from_dict(data)


def _window(w, name):
    if len(w) != 2 or not 0 <= w[0] < w[1] <= 24:
        raise ValueError(f"{name} must be [start_hour, end_hour] within 0..24")


def _validate(cfg: PipelineConfig) -> None:
    if cfg.threads < 1:
        raise ValueError("threads must be >= 1")
    ig = cfg.ingest
    if ig.format not in ("csv", "jsonl"):
        raise ValueError(f"ingest.format must be csv or jsonl, got {ig.format!r}")
    if ig.min_valid_days < 0 or not 0 <= ig.min_coverage <= 1 or not 0 < ig.valid_day_hours <= 24:
        raise ValueError("ingest thresholds out of range")
    if ig.overlap_tolerance_s < 0:
        raise ValueError("ingest.overlap_tolerance_s must be >= 0")
    p = cfg.poi
    if p.dist_m <= 0 or p.time_min <= 0 or p.gap_min < 0 or p.merge_m < 0:
        raise ValueError("poi thresholds must be positive")
    _window(p.home_window_h, "poi.home_window_h")
    _window(p.work_window_h, "poi.work_window_h")
    if any(d < 0 or d > 6 for d in p.work_weekdays):
        raise ValueError("poi.work_weekdays must be in 0..6 (Monday = 0)")
    if not 0 < p.work_presence_ratio <= 1:
        raise ValueError("poi.work_presence_ratio must lie in (0, 1]")
    if cfg.labeling.max_m <= 0:
        raise ValueError("labeling.max_m must be positive")
    f = cfg.features
    try:
        for dt in DayType:
            f.dcd_scheme(dt)
            f.od_scheme(dt)
    except ParameterError as exc:
        raise ValueError(f"features: {exc}") from exc
    if f.zero_snap_m < 0:
        raise ValueError("features.zero_snap_m must be >= 0")
    c = cfg.cluster
    if c.k < 1 or c.restarts < 1 or c.max_iter < 1 or c.tol < 0:
        raise ValueError("cluster parameters out of range")
    if not 1 <= c.k_min <= c.k_max:
        raise ValueError("cluster k scan must satisfy 1 <= k_min <= k_max")
    a = cfg.analysis
    if a.frequency_unit not in ("visits", "pois"):
        raise ValueError("analysis.frequency_unit must be 'visits' or 'pois'")
    if a.permutations < 0:
        raise ValueError("analysis.permutations must be >= 0")
