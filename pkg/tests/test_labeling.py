import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import SG, hav, offset
from mobiscope.errors import InvalidInputError
from mobiscope.geo import GeoPoint, SubzoneMap, Zone
from mobiscope.labeling import (
    CATEGORIES,
    CatalogEntry,
    LabelCatalog,
    PoiCategory,
    assign_category,
    label_all,
    load_catalog,
    nearest_entry,
    write_catalog,
)
from mobiscope.poi import Poi

HOME = Poi(0, GeoPoint(*SG))


def test_category_order_is_fixed():
    assert CATEGORIES == (
        "Attraction",
        "Healthcare",
        "NeighborhoodCenter",
        "Park",
        "PlacesOfWorship",
        "Playground",
        "Recreational",
        "ShoppingMall",
        "Transportation",
        "Residential",
    )


def test_nearest_within_400m():
    cat = LabelCatalog([CatalogEntry(offset(SG, 0.1), PoiCategory.SHOPPING_MALL)])
    assert assign_category(HOME, cat) == "ShoppingMall"


def test_beyond_400m_unlabeled():
    cat = LabelCatalog([CatalogEntry(offset(SG, 0.45), PoiCategory.PARK)])
    assert assign_category(HOME, cat) is None


def test_tie_breaks_by_category_order():
    p = offset(SG, 0.05, 0)
    q = offset(SG, 0.05, 180)
    cat = LabelCatalog([CatalogEntry(q, PoiCategory.PLAYGROUND), CatalogEntry(p, PoiCategory.PARK)])
    d1 = hav(*SG, p.lat, p.lon)
    d2 = hav(*SG, q.lat, q.lon)
    assert abs(d1 - d2) < 1e-9
    assert assign_category(HOME, cat) == "Park"


def test_tie_breaks_by_catalog_index():
    p = offset(SG, 0.05)
    cat = LabelCatalog([CatalogEntry(p, PoiCategory.PARK, "b"), CatalogEntry(p, PoiCategory.PARK, "a")])
    assert nearest_entry(HOME.centroid, cat) == 0


def test_empty_catalog_warns():
    with pytest.warns(UserWarning):
        assert assign_category(HOME, LabelCatalog([])) is None


def test_label_all_examples():
    zone = Zone.from_points(
        "Z", [GeoPoint(1.30, 103.80), GeoPoint(1.30, 103.85), GeoPoint(1.40, 103.85), GeoPoint(1.40, 103.80)]
    )
    sz = SubzoneMap([zone])
    inside = Poi(1, offset(SG, 0.0))
    outside = Poi(2, GeoPoint(1.5, 104.0))
    cat = LabelCatalog([CatalogEntry(offset(SG, 0.05), PoiCategory.HEALTHCARE)])
    out = label_all([inside, outside], cat, sz)
    assert (out[0].category, out[0].subzone) == ("Healthcare", "Z")
    assert (out[1].category, out[1].subzone) == (None, None)
    assert label_all(out, cat, sz) == out


entry_s = st.tuples(st.floats(0, 0.8), st.floats(0, 360), st.sampled_from(list(PoiCategory)))


@settings(max_examples=100, deadline=None)
@given(st.lists(entry_s, min_size=1, max_size=25), st.floats(50, 800))
def test_nearest_matches_brute_force(entries, max_m):
    cat = LabelCatalog([CatalogEntry(offset(SG, km, b), c) for km, b, c in entries])
    idx = nearest_entry(HOME.centroid, cat, max_m)
    dists = [hav(*SG, e.point.lat, e.point.lon) for e in cat.entries]
    best = min(dists)
    if best * 1000 > max_m + 1e-6:
        assert idx is None
    elif best * 1000 < max_m - 1e-6:
        assert idx is not None
        assert dists[idx] <= best + 1e-9
    # shrinking the radius only ever unlabels
    small = nearest_entry(HOME.centroid, cat, max_m / 2)
    assert small is None or small == idx


def test_catalog_round_trip(tmp_path):
    cat = LabelCatalog(
        [CatalogEntry(GeoPoint(1.3, 103.8), PoiCategory.PARK, "p"), CatalogEntry(GeoPoint(1.31, 103.81), PoiCategory.RESIDENTIAL, "r")]
    )
    path = tmp_path / "c.csv"
    write_catalog(cat, path)
    back = load_catalog(path)
    assert back.entries == cat.entries
    np.testing.assert_array_equal(back.cat_rank, [3, 9])


def test_catalog_unknown_categories_listed(tmp_path):
    path = tmp_path / "c.csv"
    path.write_text("lat,lon,category,name\n1.3,103.8,Park,a\n1.3,103.8,Mall,b\n1.3,103.8,Zoo,c\n")
    with pytest.raises(InvalidInputError) as ei:
        load_catalog(path)
    assert "Mall" in str(ei.value) and "Zoo" in str(ei.value)


def test_label_all_keeps_count_without_warning_when_catalog_nonempty():
    cat = LabelCatalog([CatalogEntry(GeoPoint(*SG), PoiCategory.PARK)])
    pois = [Poi(i, offset(SG, i * 0.3)) for i in range(5)]
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        out = label_all(pois, cat)
    assert len(out) == 5
    assert [p.category for p in out] == ["Park", "Park", None, None, None]
