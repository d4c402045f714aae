"""Post-clustering analytics: User Commonality, Average Frequency, violin data."""

from __future__ import annotations

import csv
import statistics
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import IO, Iterable, Mapping, Sequence

import numpy as np

from .errors import DegenerateGridError, ParameterError
from .features import N_BINS, DcdSeries, ThresholdScheme, od_bin
from .labeling import CATEGORIES, CATEGORY_INDEX
from .poi import DayRecord, DayType, Poi, UserProfile

N_CATEGORIES = len(CATEGORIES)
HEATMAP_HEADER = ["cluster_id", "kind", "row_bin", "category", "value"]

# colour-scale caps used for the frequency heatmaps (plot metadata only)
FREQUENCY_CAP = {DayType.WORKDAY: 0.25, DayType.OFFDAY: 0.17}

# (distance-bin row, category column, poi_id) for one labeled visit
CellVisit = tuple[int, int, int]


class GridKind(str, Enum):
    COMMONALITY = "Commonality"
    FREQUENCY = "Frequency"


@dataclass(frozen=True)
class HeatmapGrid:
    cluster_id: int
    kind: GridKind
    cells: np.ndarray  # (4, 10)
    n_users: int
    skipped: tuple[str, ...] = ()

    def rows(self, row_labels: Sequence[str] | None = None) -> list[list]:
        labels = list(row_labels) if row_labels is not None else [str(i) for i in range(N_BINS)]
        return [
            [self.cluster_id, self.kind.value, labels[j], CATEGORIES[k], f"{self.cells[j, k]:.6f}"]
            for j in range(N_BINS)
            for k in range(N_CATEGORIES)
        ]


def visit_cells(
    days: Iterable[DayRecord],
    profile: UserProfile,
    pois: Mapping[int, Poi],
    scheme: ThresholdScheme,
    day_type: DayType,
) -> list[CellVisit]:
    """Bin every labeled visit of the given day type by (distance bin, category)."""
    day_type = DayType(day_type)
    out: list[CellVisit] = []
    for day in days:
        if day.day_type is not day_type:
            continue
        for v in day.visits:
            poi = pois[v.poi_id]
            if poi.category is None:
                continue
            out.append((od_bin(poi, profile, scheme, day_type), CATEGORY_INDEX[poi.category], poi.poi_id))
    return out


def user_commonality(cells_by_user: Mapping[str, Sequence[CellVisit]], cluster_id: int = 0) -> HeatmapGrid:
    """Fraction of the cluster's users who hit each cell at least once."""
    n_c = len(cells_by_user)
    if n_c == 0:
        raise ParameterError("empty cluster")
    grid = np.zeros((N_BINS, N_CATEGORIES))
    for cells in cells_by_user.values():
        for j, k in {(c[0], c[1]) for c in cells}:
            grid[j, k] += 1
    return HeatmapGrid(cluster_id, GridKind.COMMONALITY, grid / n_c, n_c)


def user_frequency_grid(cells: Sequence[CellVisit], unit: str = "visits") -> np.ndarray | None:
    """One user's share of labeled visits (or distinct POIs) per cell; None if no labeled visits."""
    if unit == "visits":
        counts = Counter((c[0], c[1]) for c in cells)
    elif unit == "pois":
        counts = Counter((c[0], c[1]) for c in set(cells))
    else:
        raise ParameterError(f"frequency unit must be 'visits' or 'pois', got {unit!r}")
    total = sum(counts.values())
    if total == 0:
        return None
    grid = np.zeros((N_BINS, N_CATEGORIES))
    for (j, k), n in counts.items():
        grid[j, k] = n
    return grid / total


def average_frequency(
    cells_by_user: Mapping[str, Sequence[CellVisit]], cluster_id: int = 0, unit: str = "visits"
) -> HeatmapGrid:
    """Cluster mean of each user's per-cell visit share.

    Users without labeled visits are left out of the mean and listed in
    ``skipped``.
    """
    if not cells_by_user:
        raise ParameterError("empty cluster")
    acc = np.zeros((N_BINS, N_CATEGORIES))
    counted = 0
    skipped = []
    for uid in sorted(cells_by_user):
        g = user_frequency_grid(cells_by_user[uid], unit)
        if g is None:
            skipped.append(uid)
            continue
        acc += g
        counted += 1
    if counted == 0:
        raise DegenerateGridError(f"cluster {cluster_id}: no user has labeled visits")
    return HeatmapGrid(cluster_id, GridKind.FREQUENCY, acc / counted, counted, tuple(skipped))


def write_heatmaps_csv(grids: Iterable[HeatmapGrid], stream: IO[str], row_labels: Sequence[str] | None = None):
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(HEATMAP_HEADER)
    for g in grids:
        w.writerows(g.rows(row_labels))


# --------------------------------------------------------------------------
# violins
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ViolinRecord:
    user_id: str
    working: bool
    home_work_km: float | None
    values: tuple[float, ...]
    median: float | None

    def to_dict(self) -> dict:
        return {
            "user_id": self.user_id,
            "working": self.working,
            "home_work_km": self.home_work_km,
            "values": list(self.values),
            "median": self.median,
        }


@dataclass(frozen=True)
class ViolinExport:
    day_type: DayType
    records: tuple[ViolinRecord, ...]

    def to_list(self) -> list[dict]:
        return [dict(r.to_dict(), day_type=self.day_type.value) for r in self.records]


def violin_export(
    members: Iterable[str],
    series: Mapping[str, DcdSeries],
    profiles: Mapping[str, UserProfile],
    day_type: DayType,
    zero_snap_km: float = 0.0,
) -> ViolinExport:
    """Per-user nonzero DCD values and medians, in plotting order.

    Workday records are ordered by Home-Work distance, Offday records by
    median; users with no nonzero day have an empty list and go last.
    """
    day_type = DayType(day_type)
    recs = []
    for uid in members:
        prof = profiles[uid]
        s = series.get(uid)
        raw = s.km.tolist() if s is not None else []
        vals = tuple(sorted(v for v in raw if v > 0 and v >= zero_snap_km))
        med = float(statistics.median(vals)) if vals else None
        recs.append(ViolinRecord(uid, prof.working, prof.home_work_km, vals, med))
    inf = float("inf")
    if day_type is DayType.WORKDAY:
        recs.sort(key=lambda r: (r.home_work_km if r.home_work_km is not None else inf, r.user_id))
    else:
        recs.sort(key=lambda r: (r.median is None, r.median if r.median is not None else inf, r.user_id))
    return ViolinExport(day_type, tuple(recs))


# --------------------------------------------------------------------------
# chart specifications for external renderers
# --------------------------------------------------------------------------


def heatmap_plot_spec(grid: HeatmapGrid, row_labels: Sequence[str], day_type: DayType) -> dict:
    day_type = DayType(day_type)
    values = [
        {"row_bin": row_labels[j], "category": CATEGORIES[k], "value": float(grid.cells[j, k])}
        for j in range(N_BINS)
        for k in range(N_CATEGORIES)
    ]
    cap = FREQUENCY_CAP[day_type] if grid.kind is GridKind.FREQUENCY else 1.0
    return {
        "title": f"{day_type.value} cluster {grid.cluster_id}: {grid.kind.value}",
        "data": {"values": values},
        "mark": "rect",
        "encoding": {
            "x": {"field": "category", "type": "nominal", "sort": list(CATEGORIES)},
            "y": {"field": "row_bin", "type": "ordinal", "sort": list(row_labels)},
            "color": {"field": "value", "type": "quantitative", "scale": {"domain": [0, cap]}},
        },
        "meta": {"color_cap": cap, "n_users": grid.n_users},
    }


def violin_plot_spec(export: ViolinExport) -> dict:
    values = [
        {"user_id": r.user_id, "working": r.working, "dcd_km": v} for r in export.records for v in r.values
    ]
    return {
        "title": f"{export.day_type.value} DCD distributions",
        "data": {"values": values},
        "mark": "violin",
        "encoding": {
            "x": {"field": "user_id", "type": "nominal", "sort": [r.user_id for r in export.records]},
            "y": {"field": "dcd_km", "type": "quantitative"},
            "color": {"field": "working", "type": "nominal"},
        },
    }
