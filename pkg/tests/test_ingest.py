import io
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mobiscope.errors import CorruptInputError, InvalidInputError
from mobiscope.geo import GeoPoint
from mobiscope.ingest import (
    GpsFix,
    UserDataset,
    group_users,
    parse_fixes,
    read_dataset_csv,
    validity_filter,
    write_dataset_csv,
    write_fixes,
)

HEADER = "user_id,lat,lon,start_epoch_s,end_epoch_s\n"
DAY = 86400
TZ = 480
# local midnight 2021-01-04 in UTC seconds
T0 = 1609689600


def _csv(*rows):
    return io.BytesIO((HEADER + "".join(r + "\n" for r in rows)).encode())


def test_parse_single_row():
    fixes, errors = parse_fixes(_csv("u1,1.3521,103.8198,1609459200,1609459500"))
    assert errors == []
    assert fixes == [GpsFix("u1", GeoPoint(1.3521, 103.8198), 1609459200, 1609459500)]


def test_bad_latitude_becomes_record_error():
    fixes, errors = parse_fixes(_csv("u1,95,103.8,0,10", "u1,1.3,103.8,0,10", "u1,1.3,103.8,20,30"))
    assert len(fixes) == 2
    assert len(errors) == 1 and errors[0].line == 2 and "latitude" in errors[0].reason


def test_empty_file():
    assert parse_fixes(io.BytesIO(b"")) == ([], [])


def test_start_after_end_rejected():
    _, errors = parse_fixes(_csv("u1,1.3,103.8,50,10", "u1,1.3,103.8,0,10", "u1,1.3,103.8,10,20"))
    assert len(errors) == 1


def test_majority_malformed_is_corrupt():
    with pytest.raises(CorruptInputError):
        parse_fixes(_csv("u1,x,103.8,0,10", "u1,1.3,y,0,10", "u1,1.3,103.8,0,10"))


def test_header_required():
    with pytest.raises(CorruptInputError):
        parse_fixes(io.BytesIO(b"u1,1.3,103.8,0,10\n"))


def test_unknown_format():
    with pytest.raises(InvalidInputError):
        parse_fixes(io.BytesIO(b""), format="xml")


def test_jsonl_and_text_streams():
    lines = [
        json.dumps({"user_id": "b", "lat": 1.3, "lon": 103.8, "start_epoch_s": 10, "end_epoch_s": 20}),
        "not json",
        json.dumps({"user_id": "a", "lat": 1.3, "lon": 103.8, "start_epoch_s": 5, "end_epoch_s": 6}),
        json.dumps({"user_id": "a", "lat": 1.3, "lon": 103.8, "start_epoch_s": 1, "end_epoch_s": 2}),
    ]
    fixes, errors = parse_fixes(io.StringIO("\n".join(lines)), format="jsonl")
    assert [(f.user_id, f.start) for f in fixes] == [("a", 1), ("a", 5), ("b", 10)]
    assert len(errors) == 1 and errors[0].line == 2


fix_s = st.builds(
    lambda u, lat, lon, s, d: GpsFix(u, GeoPoint(lat, lon), float(s), float(s + d)),
    st.sampled_from(["a", "b", "c"]),
    st.floats(-90, 90, allow_nan=False),
    st.floats(-180, 180, allow_nan=False),
    st.integers(0, 2**40),
    st.integers(0, 10**6),
)


@settings(max_examples=100)
@given(st.lists(fix_s, max_size=30), st.sampled_from(["csv", "jsonl"]))
def test_round_trip_fixed_point(fixes, fmt):
    once, err = parse_fixes(_write(fixes, fmt), fmt)
    assert err == []
    twice, _ = parse_fixes(_write(once, fmt), fmt)
    assert once == twice
    assert sorted(fixes, key=lambda f: (f.user_id, f.start, f.end)) == once


def _write(fixes, fmt):
    buf = io.StringIO()
    write_fixes(fixes, buf, fmt)
    return io.BytesIO(buf.getvalue().encode())


def _dataset(day_hours, tz=TZ, shift=0):
    """One fix interval per local day, lasting the given hours from 09:00."""
    starts, ends = [], []
    for d, h in enumerate(day_hours):
        if h <= 0:
            continue
        s = T0 + d * DAY + 9 * 3600 + shift
        starts.append(s)
        ends.append(s + h * 3600)
    n = len(starts)
    return UserDataset.from_arrays("u", np.full(n, 1.3), np.full(n, 103.8), starts, ends, tz)


def test_validity_accepts_32_of_40():
    rep = validity_filter(_dataset([8] * 32 + [1] * 8))
    assert (rep.recording_days, rep.valid_days, rep.accepted) == (40, 32, True)
    assert rep.coverage_ratio == pytest.approx(0.8)


def test_validity_rejects_24_of_40():
    rep = validity_filter(_dataset([8] * 24 + [1] * 16))
    assert not rep.accepted


def test_validity_rejects_too_few_days():
    rep = validity_filter(_dataset([10] * 20))
    assert (rep.recording_days, rep.valid_days, rep.accepted) == (20, 20, False)


def test_validity_inclusive_boundaries():
    rep = validity_filter(_dataset([8, 1] * 30))
    assert (rep.recording_days, rep.valid_days) == (60, 30)
    assert rep.coverage_ratio == 0.5 and rep.accepted


def test_validity_empty_dataset():
    rep = validity_filter(UserDataset("u", [], [], [], []))
    assert (rep.recording_days, rep.valid_days, rep.coverage_ratio, rep.accepted) == (0, 0, 0.0, False)


def test_recording_span_counts_gap_days():
    # days 0 and 9 valid, nothing in between: 10 recording days
    rep = validity_filter(_dataset([9] + [0] * 8 + [9]), min_valid_days=1)
    assert (rep.recording_days, rep.valid_days) == (10, 2)


def test_overlapping_intervals_use_union():
    # two overlapping 6 h intervals -> 9 h union, valid
    ds = UserDataset.from_arrays(
        "u", [1.3, 1.3], [103.8, 103.8], [T0 + 3600, T0 + 4 * 3600], [T0 + 7 * 3600, T0 + 10 * 3600], TZ, 1e9
    )
    rep = validity_filter(ds, min_valid_days=1, min_coverage=0)
    assert rep.valid_days == 1


def test_coverage_split_at_local_midnight():
    # 20:00 -> 08:00 local spans two days with 4 h and 8 h
    s = T0 + 20 * 3600
    ds = UserDataset.from_arrays("u", [1.3], [103.8], [s], [s + 12 * 3600], TZ)
    rep = validity_filter(ds, min_valid_days=1, min_coverage=0)
    assert (rep.recording_days, rep.valid_days) == (2, 1)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 12), min_size=1, max_size=45), st.integers(-720, 720))
def test_tz_shift_invariance(hours, tz):
    hours = [max(h, 1) for h in hours]
    base = validity_filter(_dataset(hours, tz=TZ), 5, 0.3)
    shifted = validity_filter(_dataset(hours, tz=tz, shift=(TZ - tz) * 60), 5, 0.3)
    assert base == shifted


@settings(max_examples=50, deadline=None)
@given(st.lists(st.sampled_from([1, 9]), min_size=30, max_size=60), st.integers(0, 59))
def test_validity_monotone_in_valid_days(hours, idx):
    before = validity_filter(_dataset(hours), 15, 0.4)
    hours = list(hours)
    hours[idx % len(hours)] = 9
    after = validity_filter(_dataset(hours), 15, 0.4)
    assert not (before.accepted and not after.accepted)


def test_group_users_sorts_and_clips_overlaps():
    fixes = [
        GpsFix("u", GeoPoint(1.3, 103.8), 100.0, 400.0),
        GpsFix("u", GeoPoint(1.3, 103.8), 0.0, 200.0),
        GpsFix("v", GeoPoint(1.3, 103.8), 0.0, 10.0),
    ]
    users = group_users(fixes)
    assert list(users) == ["u", "v"]
    u = users["u"]
    assert u.is_sorted()
    assert list(u.start) == [0.0, 100.0] and list(u.end) == [100.0, 400.0]


def test_dataset_csv_round_trip():
    ds = _dataset([8, 9, 10])
    buf = io.StringIO()
    write_dataset_csv(ds, buf)
    back = read_dataset_csv(io.StringIO(buf.getvalue()), TZ)
    np.testing.assert_array_equal(back.start, ds.start)
    np.testing.assert_array_equal(back.lat, ds.lat)
    assert back.user_id == "u"


def test_dataset_csv_rejects_bad_rows():
    with pytest.raises(InvalidInputError):
        read_dataset_csv(io.StringIO(HEADER + "u,100,103.8,0,1\n"))
