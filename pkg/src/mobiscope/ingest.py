"""Reading raw GPS fix files and selecting users with enough valid data."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from typing import IO, Iterable, Iterator, Sequence

import numpy as np

from . import _kernels
from .errors import CorruptInputError, InvalidInputError
from .geo import GeoPoint

FIX_COLUMNS = ("user_id", "lat", "lon", "start_epoch_s", "end_epoch_s")
SECONDS_PER_DAY = 86400
DEFAULT_TZ_OFFSET_MIN = 480


@dataclass(frozen=True, slots=True)
class GpsFix:
    user_id: str
    point: GeoPoint
    start: float
    end: float


@dataclass(frozen=True, slots=True)
class RecordError:
    line: int
    reason: str


@dataclass(frozen=True)
class ValidityReport:
    recording_days: int
    valid_days: int
    coverage_ratio: float
    accepted: bool

    def to_dict(self) -> dict:
        return {
            "recording_days": self.recording_days,
            "valid_days": self.valid_days,
            "coverage_ratio": self.coverage_ratio,
            "accepted": self.accepted,
        }


class UserDataset:
    """One user's fixes as parallel numpy arrays, sorted by start time."""

    def __init__(self, user_id, lat, lon, start, end, tz_offset_minutes=DEFAULT_TZ_OFFSET_MIN):
        self.user_id = str(user_id)
        self.lat = np.ascontiguousarray(lat, dtype=np.float64)
        self.lon = np.ascontiguousarray(lon, dtype=np.float64)
        self.start = np.ascontiguousarray(start, dtype=np.float64)
        self.end = np.ascontiguousarray(end, dtype=np.float64)
        self.tz_offset_minutes = int(tz_offset_minutes)
        n = self.lat.size
        if not (self.lon.size == self.start.size == self.end.size == n):
            raise InvalidInputError("fix arrays must have equal length")

    def __len__(self) -> int:
        return self.lat.size

    @property
    def tz_offset_s(self) -> int:
        return self.tz_offset_minutes * 60

    @property
    def fixes(self) -> list[GpsFix]:
        return [
            GpsFix(self.user_id, GeoPoint(a, b), s, e)
            for a, b, s, e in zip(
                self.lat.tolist(), self.lon.tolist(), self.start.tolist(), self.end.tolist()
            )
        ]

    def is_sorted(self) -> bool:
        return bool(np.all(np.diff(self.start) >= 0))

    @classmethod
    def from_fixes(
        cls,
        fixes: Sequence[GpsFix],
        tz_offset_minutes: int = DEFAULT_TZ_OFFSET_MIN,
        overlap_tolerance_s: float = 0.0,
    ) -> "UserDataset":
        users = {f.user_id for f in fixes}
        if len(users) > 1:
            raise InvalidInputError(f"fixes from several users: {sorted(users)[:3]}")
        uid = next(iter(users)) if users else ""
        lat = np.array([f.point.lat for f in fixes], dtype=np.float64)
        lon = np.array([f.point.lon for f in fixes], dtype=np.float64)
        start = np.array([f.start for f in fixes], dtype=np.float64)
        end = np.array([f.end for f in fixes], dtype=np.float64)
        return cls.from_arrays(uid, lat, lon, start, end, tz_offset_minutes, overlap_tolerance_s)

    @classmethod
    def from_arrays(
        cls,
        user_id,
        lat,
        lon,
        start,
        end,
        tz_offset_minutes=DEFAULT_TZ_OFFSET_MIN,
        overlap_tolerance_s=0.0,
    ) -> "UserDataset":
        """Sort by start time and clip overlaps longer than the tolerance."""
        start = np.asarray(start, dtype=np.float64)
        end = np.asarray(end, dtype=np.float64)
        order = np.lexsort((end, start))
        lat, lon = np.asarray(lat)[order], np.asarray(lon)[order]
        start, end = start[order], end[order].copy()
        if start.size > 1:
            nxt = start[1:]
            over = end[:-1] > nxt + overlap_tolerance_s
            end[:-1][over] = nxt[over] + overlap_tolerance_s
        return cls(user_id, lat, lon, start, end, tz_offset_minutes)


# --------------------------------------------------------------------------
# parsing
# --------------------------------------------------------------------------


def _as_text(stream) -> IO[str]:
    if isinstance(stream, (io.TextIOBase,)):
        return stream
    if hasattr(stream, "read"):
        probe = stream.read(0)
        if isinstance(probe, bytes):
            return io.TextIOWrapper(stream, encoding="utf-8", newline="")
        return stream
    raise InvalidInputError("parse_fixes expects a readable stream")


def _parse_number(raw) -> float:
    if isinstance(raw, bool):
        raise ValueError("boolean is not a number")
    val = float(raw)
    if not math.isfinite(val):
        raise ValueError(f"non-finite value {raw!r}")
    return val


def _record(uid, lat, lon, start, end) -> GpsFix:
    uid = str(uid).strip()
    if not uid:
        raise ValueError("empty user_id")
    lat_v = _parse_number(lat)
    lon_v = _parse_number(lon)
    if not -90.0 <= lat_v <= 90.0:
        raise ValueError(f"out-of-range latitude {lat_v}")
    if not -180.0 <= lon_v <= 180.0:
        raise ValueError(f"out-of-range longitude {lon_v}")
    s = _parse_number(start)
    e = _parse_number(end)
    if s > e:
        raise ValueError(f"start {s} after end {e}")
    return GpsFix(uid, GeoPoint(lat_v, lon_v), s, e)


def _csv_rows(text: IO[str]) -> Iterator[tuple[int, object]]:
    reader = csv.reader(text)
    header = None
    for row in reader:
        if not row or all(not c.strip() for c in row):
            continue
        if header is None:
            header = [c.strip() for c in row]
            if tuple(header) != FIX_COLUMNS:
                raise CorruptInputError(f"CSV header must be {','.join(FIX_COLUMNS)}, got {row}")
            continue
        if len(row) != len(FIX_COLUMNS):
            yield reader.line_num, ValueError(f"expected {len(FIX_COLUMNS)} fields, got {len(row)}")
            continue
        yield reader.line_num, row


def _jsonl_rows(text: IO[str]) -> Iterator[tuple[int, object]]:
    for lineno, line in enumerate(text, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            yield lineno, ValueError(f"bad JSON: {exc.msg}")
            continue
        if not isinstance(obj, dict):
            yield lineno, ValueError("JSON line is not an object")
            continue
        missing = [k for k in FIX_COLUMNS if k not in obj]
        if missing:
            yield lineno, ValueError(f"missing keys {missing}")
            continue
        yield lineno, [obj[k] for k in FIX_COLUMNS]


def parse_fixes(stream, format: str = "csv") -> tuple[list[GpsFix], list[RecordError]]:
    """Parse a CSV or JSONL fix stream.

    Malformed rows become :class:`RecordError` entries instead of aborting, but
    if more than half the rows are malformed the input is treated as corrupt.
    The result is sorted by (user_id, start, end).
    """
    text = _as_text(stream)
    if format == "csv":
        rows = _csv_rows(text)
    elif format == "jsonl":
        rows = _jsonl_rows(text)
    else:
        raise InvalidInputError(f"unknown format {format!r}")

    fixes: list[GpsFix] = []
    errors: list[RecordError] = []
    for lineno, row in rows:
        if isinstance(row, Exception):
            errors.append(RecordError(lineno, str(row)))
            continue
        try:
            fixes.append(_record(*row))
        except (ValueError, TypeError) as exc:
            errors.append(RecordError(lineno, str(exc)))
    total = len(fixes) + len(errors)
    if total and len(errors) * 2 > total:
        raise CorruptInputError(f"{len(errors)} of {total} rows malformed")
    fixes.sort(key=lambda f: (f.user_id, f.start, f.end))
    return fixes, errors


def _fmt(x: float) -> str:
    if float(x).is_integer() and abs(x) < 2**53:
        return str(int(x))
    return repr(float(x))


def write_fixes(fixes: Iterable[GpsFix], stream: IO[str], format: str = "csv") -> None:
    if format == "csv":
        w = csv.writer(stream, lineterminator="\n")
        w.writerow(FIX_COLUMNS)
        for f in fixes:
            w.writerow([f.user_id, _fmt(f.point.lat), _fmt(f.point.lon), _fmt(f.start), _fmt(f.end)])
    elif format == "jsonl":
        for f in fixes:
            rec = dict(zip(FIX_COLUMNS, (f.user_id, f.point.lat, f.point.lon, f.start, f.end)))
            stream.write(json.dumps(rec) + "\n")
    else:
        raise InvalidInputError(f"unknown format {format!r}")


def write_dataset_csv(ds: UserDataset, stream: IO[str]) -> None:
    """Fast CSV writer for array-backed datasets (same schema as write_fixes)."""
    stream.write(",".join(FIX_COLUMNS) + "\n")
    uid = ds.user_id
    lines = [
        f"{uid},{_fmt(a)},{_fmt(b)},{_fmt(s)},{_fmt(e)}\n"
        for a, b, s, e in zip(ds.lat.tolist(), ds.lon.tolist(), ds.start.tolist(), ds.end.tolist())
    ]
    stream.writelines(lines)


def read_dataset_csv(stream: IO[str], tz_offset_minutes: int = DEFAULT_TZ_OFFSET_MIN) -> UserDataset:
    """Vectorised reader for single-user files written by write_dataset_csv.

    Unlike parse_fixes there is no per-row recovery: any malformed value or
    invalid coordinate raises.
    """
    reader = csv.reader(stream)
    if tuple(next(reader, ())) != FIX_COLUMNS:
        raise InvalidInputError("fix CSV header mismatch")
    rows = [r for r in reader if r]
    if not rows:
        return UserDataset("", np.zeros(0), np.zeros(0), np.zeros(0), np.zeros(0), tz_offset_minutes)
    uids, lat, lon, start, end = zip(*rows)
    if len(set(uids)) != 1:
        raise InvalidInputError("dataset file mixes several users")
    try:
        lat, lon, start, end = (np.array(c, dtype=np.float64) for c in (lat, lon, start, end))
    except ValueError as exc:
        raise InvalidInputError(f"malformed number: {exc}") from exc
    bad = (
        ~np.isfinite(lat) | ~np.isfinite(lon) | ~np.isfinite(start) | ~np.isfinite(end)
        | (np.abs(lat) > 90) | (np.abs(lon) > 180) | (end < start)
    )
    if bad.any():
        raise InvalidInputError(f"invalid fix on data row {int(np.argmax(bad)) + 1}")
    return UserDataset.from_arrays(uids[0], lat, lon, start, end, tz_offset_minutes)


def group_users(
    fixes: Sequence[GpsFix],
    tz_offset_minutes: int = DEFAULT_TZ_OFFSET_MIN,
    overlap_tolerance_s: float = 0.0,
) -> dict[str, UserDataset]:
    by_user: dict[str, list[GpsFix]] = {}
    for f in fixes:
        by_user.setdefault(f.user_id, []).append(f)
    return {
        uid: UserDataset.from_fixes(by_user[uid], tz_offset_minutes, overlap_tolerance_s)
        for uid in sorted(by_user)
    }


# --------------------------------------------------------------------------
# validity
# --------------------------------------------------------------------------


def local_day(t, tz_offset_minutes: int):
    """Local calendar day index (days since 1970-01-01 local)."""
    return np.floor((np.asarray(t, dtype=np.float64) + tz_offset_minutes * 60) / SECONDS_PER_DAY).astype(
        np.int64
    )


def day_coverage_seconds(ds: UserDataset) -> tuple[int, np.ndarray]:
    """Seconds of recorded (union) interval time per local day.

    Returns the first local day index and one entry per day up to the last
    day touched by any fix.
    """
    if len(ds) == 0:
        return 0, np.zeros(0)
    off = ds.tz_offset_s
    first = int(local_day(ds.start.min(), ds.tz_offset_minutes))
    # an interval ending exactly on midnight does not touch the next day
    last_t = max(float(ds.start.max()), float(ds.end.max()))
    last = int(np.ceil((last_t + off) / SECONDS_PER_DAY)) - 1
    last = max(last, int(local_day(ds.start.max(), ds.tz_offset_minutes)))
    n_days = last - first + 1
    cov = _kernels.day_coverage(ds.start, ds.end, float(off), first, n_days)
    return first, cov


def validity_filter(
    ds: UserDataset,
    min_valid_days: int = 30,
    min_coverage: float = 0.5,
    valid_day_hours: float = 8.0,
) -> ValidityReport:
    """Apply the user-selection rule: enough valid days, covering enough of the span."""
    if len(ds) == 0:
        return ValidityReport(0, 0, 0.0, False)
    _, cov = day_coverage_seconds(ds)
    recording = int(cov.size)
    valid = int(np.count_nonzero(cov >= valid_day_hours * 3600.0))
    ratio = valid / recording if recording else 0.0
    accepted = valid >= min_valid_days and ratio >= min_coverage
    return ValidityReport(recording, valid, ratio, accepted)
