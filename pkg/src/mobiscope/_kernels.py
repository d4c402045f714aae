"""Hot numeric loops, compiled with numba when available.

Every kernel exists twice: a ``_jit`` variant compiled with ``@njit`` and a
``_np`` variant in plain numpy. The public names bind to one or the other at
import time. Set ``MOBISCOPE_DISABLE_JIT=1`` to force the numpy path (useful
for debugging and for checking that both paths agree).
"""

from __future__ import annotations

import math
import os

import numpy as np

EARTH_RADIUS_KM = 6371.0088
SECONDS_PER_DAY = 86400

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        return wrap


def _jit_requested() -> bool:
    flag = os.environ.get("MOBISCOPE_DISABLE_JIT", "").strip().lower()
    return flag not in ("1", "true", "yes", "on")


USE_JIT = HAVE_NUMBA and _jit_requested()


# --------------------------------------------------------------------------
# haversine
# --------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def _hav_scalar(lat1, lon1, lat2, lon2):
    p1 = math.radians(lat1)
    p2 = math.radians(lat2)
    dp = p2 - p1
    dl = math.radians(lon2) - math.radians(lon1)
    h = math.sin(dp * 0.5) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl * 0.5) ** 2
    return 2.0 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(h)))


def haversine_km_np(lat1, lon1, lat2, lon2):
    """Vectorised haversine in km; arguments broadcast like numpy ufuncs."""
    p1 = np.radians(lat1)
    p2 = np.radians(lat2)
    dp = p2 - p1
    dl = np.radians(lon2) - np.radians(lon1)
    h = np.sin(dp * 0.5) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dl * 0.5) ** 2
    return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.minimum(1.0, np.sqrt(h)))


# --------------------------------------------------------------------------
# stay-point run scan
# --------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def _stay_runs_jit(lat, lon, start, end, dist_km, min_span_s):
    n = lat.shape[0]
    run_a = np.empty(n, dtype=np.int64)
    run_b = np.empty(n, dtype=np.int64)
    m = 0
    i = 0
    while i < n:
        j = i + 1
        while j < n and _hav_scalar(lat[i], lon[i], lat[j], lon[j]) <= dist_km:
            j += 1
        if end[j - 1] - start[i] >= min_span_s:
            run_a[m] = i
            run_b[m] = j
            m += 1
            i = j
        else:
            i += 1
    return run_a[:m].copy(), run_b[:m].copy()


def _stay_runs_np(lat, lon, start, end, dist_km, min_span_s):
    n = lat.shape[0]
    run_a: list[int] = []
    run_b: list[int] = []
    i = 0
    while i < n:
        # grow a look-ahead chunk until a fix falls outside the radius
        chunk = 16
        j = n
        while True:
            hi = min(n, i + 1 + chunk)
            d = haversine_km_np(lat[i], lon[i], lat[i + 1 : hi], lon[i + 1 : hi])
            out = np.flatnonzero(d > dist_km)
            if out.size:
                j = i + 1 + int(out[0])
                break
            if hi == n:
                j = n
                break
            chunk *= 4
        if end[j - 1] - start[i] >= min_span_s:
            run_a.append(i)
            run_b.append(j)
            i = j
        else:
            i += 1
    return np.asarray(run_a, dtype=np.int64), np.asarray(run_b, dtype=np.int64)


# --------------------------------------------------------------------------
# per-day interval coverage
# --------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def _add_segment(cov, first_day, s, e, offset_s):
    day = math.floor((s + offset_s) / SECONDS_PER_DAY)
    t = s
    while t < e:
        boundary = (day + 1) * SECONDS_PER_DAY - offset_s
        stop = min(e, boundary)
        cov[day - first_day] += stop - t
        t = stop
        day += 1


@njit(cache=True, nogil=True)
def _day_coverage_jit(start, end, offset_s, first_day, n_days):
    cov = np.zeros(n_days, dtype=np.float64)
    n = start.shape[0]
    if n == 0:
        return cov
    cur_s = start[0]
    cur_e = end[0]
    for i in range(1, n):
        if start[i] > cur_e:
            _add_segment(cov, first_day, cur_s, cur_e, offset_s)
            cur_s = start[i]
            cur_e = end[i]
        elif end[i] > cur_e:
            cur_e = end[i]
    _add_segment(cov, first_day, cur_s, cur_e, offset_s)
    return cov


def _day_coverage_np(start, end, offset_s, first_day, n_days):
    cov = np.zeros(n_days, dtype=np.float64)
    if start.size == 0:
        return cov
    run_end = np.maximum.accumulate(end)
    breaks = np.flatnonzero(start[1:] > run_end[:-1]) + 1
    seg_s = start[np.concatenate(([0], breaks))]
    seg_e = run_end[np.concatenate((breaks - 1, [start.size - 1]))]
    for s, e in zip(seg_s.tolist(), seg_e.tolist()):
        day = math.floor((s + offset_s) / SECONDS_PER_DAY)
        t = s
        while t < e:
            stop = min(e, (day + 1) * SECONDS_PER_DAY - offset_s)
            cov[day - first_day] += stop - t
            t = stop
            day += 1
    return cov


# --------------------------------------------------------------------------
# nearest-centroid assignment
# --------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def _assign_nearest_jit(X, C):
    n, d = X.shape
    k = C.shape[0]
    labels = np.empty(n, dtype=np.int64)
    best_d2 = np.empty(n, dtype=np.float64)
    for i in range(n):
        best = np.inf
        arg = 0
        for c in range(k):
            acc = 0.0
            for t in range(d):
                diff = X[i, t] - C[c, t]
                acc += diff * diff
            if acc < best:
                best = acc
                arg = c
        labels[i] = arg
        best_d2[i] = best
    return labels, best_d2


def _assign_nearest_np(X, C):
    diff = X[:, None, :] - C[None, :, :]
    d2 = np.einsum("nkd,nkd->nk", diff, diff)
    labels = np.argmin(d2, axis=1).astype(np.int64)
    return labels, d2[np.arange(X.shape[0]), labels]


if USE_JIT:
    stay_runs = _stay_runs_jit
    day_coverage = _day_coverage_jit
    assign_nearest = _assign_nearest_jit
else:
    stay_runs = _stay_runs_np
    day_coverage = _day_coverage_np
    assign_nearest = _assign_nearest_np

haversine_km_vec = haversine_km_np

__all__ = [
    "EARTH_RADIUS_KM",
    "USE_JIT",
    "assign_nearest",
    "day_coverage",
    "haversine_km_vec",
    "stay_runs",
]
