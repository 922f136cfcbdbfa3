import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from quakefit.catalog import (Catalog, ClusterType, classify_cluster,
                              great_circle_km, load_catalog,
                              select_window, single_link_cluster)
from quakefit.errors import CatalogError

from conftest import make_catalog


def _write(tmp_path, text, name="cat.csv"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_load_csv_three_rows(tmp_path):
    path = _write(tmp_path, "time,lon,lat,depth_km,mag\n"
                            "0.5,135.0,35.0,10.0,4.2\n"
                            "1.5,135.1,35.1,12.0,3.9\n"
                            "2.5,135.2,35.2,8.0,5.1\n")
    cat = load_catalog(path)
    assert len(cat) == 3
    assert np.all(np.diff(cat.t) >= 0)
    assert cat.mag[2] == 5.1


def test_load_csv_sorts_out_of_order_rows(tmp_path):
    path = _write(tmp_path, "time,lon,lat,depth_km,mag\n"
                            "2.5,135.2,35.2,8.0,5.1\n"
                            "0.5,135.0,35.0,10.0,4.2\n"
                            "1.5,135.1,35.1,12.0,3.9\n")
    cat = load_catalog(path)
    assert list(cat.mag) == [4.2, 3.9, 5.1]


def test_load_csv_bad_latitude_names_row(tmp_path):
    path = _write(tmp_path, "time,lon,lat,depth_km,mag\n"
                            "0.5,135.0,95.0,10.0,4.2\n")
    with pytest.raises(CatalogError, match="line 2.*lat"):
        load_catalog(path)


def test_load_csv_unparsable_rows_listed(tmp_path):
    rows = "\n".join(f"{i},135.0,35.0,oops,4.2" for i in range(12))
    path = _write(tmp_path, "time,lon,lat,depth_km,mag\n" + rows + "\n")
    with pytest.raises(CatalogError) as err:
        load_catalog(path)
    # at most the first 10 offenders are listed
    assert str(err.value).count("line ") == 10
    assert "12 malformed" in str(err.value)


def test_load_empty_file_errors(tmp_path):
    path = _write(tmp_path, "")
    with pytest.raises(CatalogError, match="empty"):
        load_catalog(path)
    path = _write(tmp_path, "time,lon,lat,depth_km,mag\n", name="c2.csv")
    with pytest.raises(CatalogError, match="empty"):
        load_catalog(path)


def test_load_iso_times(tmp_path):
    path = _write(tmp_path, "time,lon,lat,depth_km,mag\n"
                            "2020-01-01T12:00:00,135.0,35.0,10.0,4.2\n"
                            "2020-01-03T00:00:00,135.1,35.1,12.0,3.9\n")
    cat = load_catalog(path)
    assert cat.t[0] == pytest.approx(0.5)
    assert cat.t[1] == pytest.approx(2.0)
    assert cat.epoch is not None


def test_load_fixed_width(tmp_path):
    line1 = f"{0.5:<16.3f}{35.0:<10.3f}{135.0:<11.3f}{10.0:<7.1f}{4.2:<6.1f}\n"
    line2 = f"{1.5:<16.3f}{35.1:<10.3f}{135.1:<11.3f}{12.0:<7.1f}{3.9:<6.1f}\n"
    p = tmp_path / "hypo.dat"
    p.write_text(line1 + line2)
    cat = load_catalog(str(p), format="hypo_fixed_width")
    assert len(cat) == 2
    assert cat.lat[0] == pytest.approx(35.0)
    assert cat.mag[1] == pytest.approx(3.9)


def test_select_window_identity_when_m_min_below_all():
    cat = make_catalog([1.0, 2.0], mag=[4.0, 5.0])
    out = select_window(cat, m_min=3.0)
    assert len(out) == 2


def test_select_window_depth_cut():
    # shallow selection: depth <= 100 km retained
    cat = make_catalog([1, 2, 3, 4], depth=[5.0, 99.0, 100.0, 300.0])
    out = select_window(cat, depth_max=100.0)
    assert list(out.depth) == [5.0, 99.0, 100.0]


def test_select_window_empty_intersection_ok():
    cat = make_catalog([1.0, 2.0], mag=[4.0, 5.0])
    out = select_window(cat, m_min=9.0)
    assert len(out) == 0


def test_select_window_inverted_interval_errors():
    cat = make_catalog([1.0, 2.0])
    with pytest.raises(ValueError):
        select_window(cat, t_range=(5.0, 1.0))


def test_select_window_region_polygon():
    cat = make_catalog([1, 2, 3], lon=[130.0, 135.0, 140.0],
                       lat=[33.0, 35.0, 37.0])
    poly = [(134.0, 34.0), (136.0, 34.0), (136.0, 36.0), (134.0, 36.0)]
    out = select_window(cat, region=poly)
    assert list(out.lon) == [135.0]


def test_slc_two_close_events_one_cluster():
    cat = make_catalog([0.0, 1.0], lon=[135.0, 135.0],
                       lat=[35.0, 35.009], mag=[4.0, 4.5])
    clusters = single_link_cluster(cat, 30.0, 5.0)
    assert len(clusters) == 1
    assert len(clusters[0]) == 2


def test_slc_chain_links_transitively():
    # A-B and B-C within thresholds; A-C beyond both in time
    cat = make_catalog([0.0, 4.0, 8.0], lon=[135.0, 135.2, 135.4],
                       lat=[35.0, 35.0, 35.0])
    clusters = single_link_cluster(cat, 30.0, 5.0)
    assert len(clusters) == 1
    assert len(clusters[0]) == 3


def test_slc_matches_bruteforce_union_find(rng):
    n = 400
    cat = make_catalog(np.sort(rng.uniform(0, 50.0, n)),
                       lon=rng.uniform(134.0, 136.0, n),
                       lat=rng.uniform(34.0, 36.0, n),
                       mag=rng.uniform(3.0, 6.0, n))
    clusters = single_link_cluster(cat, 20.0, 2.0)

    # O(N^2) pairwise oracle
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if abs(cat.t[j] - cat.t[i]) <= 2.0 and \
                    great_circle_km(cat.lon[i], cat.lat[i],
                                    cat.lon[j], cat.lat[j]) <= 20.0:
                parent[find(j)] = find(i)
    oracle = {}
    for i in range(n):
        oracle.setdefault(find(i), set()).add(i)
    got = {frozenset(c.member_ids.tolist()) for c in clusters}
    want = {frozenset(s) for s in oracle.values()}
    assert got == want


def test_slc_row_order_invariance(rng):
    n = 120
    t = np.sort(rng.uniform(0, 30.0, n))
    lon = rng.uniform(134.0, 135.0, n)
    lat = rng.uniform(34.0, 35.0, n)
    cat = make_catalog(t, lon=lon, lat=lat)
    perm = rng.permutation(n)
    cat2 = make_catalog(t[perm], lon=lon[perm], lat=lat[perm])
    a = {frozenset(np.round(cat.t[c.member_ids], 9).tolist())
         for c in single_link_cluster(cat, 15.0, 1.0)}
    b = {frozenset(np.round(cat2.t[c.member_ids], 9).tolist())
         for c in single_link_cluster(cat2, 15.0, 1.0)}
    assert a == b


@given(st.integers(0, 10 ** 6))
@settings(max_examples=20, deadline=None)
def test_slc_coarsening_monotonicity(seed):
    rng = np.random.default_rng(seed)
    n = 60
    cat = make_catalog(np.sort(rng.uniform(0, 20.0, n)),
                       lon=rng.uniform(134.0, 135.0, n),
                       lat=rng.uniform(34.0, 35.0, n))
    n_prev = None
    for d_km, d_day in [(5.0, 0.5), (10.0, 1.0), (20.0, 2.0), (40.0, 4.0)]:
        n_clusters = len(single_link_cluster(cat, d_km, d_day))
        if n_prev is not None:
            assert n_clusters <= n_prev
        n_prev = n_clusters


def test_classify_foreshock_gap_half_magnitude():
    cat = make_catalog([0.0, 1.0], mag=[4.5, 5.0])
    cl = single_link_cluster(cat, 30.0, 5.0)[0]
    assert cl.cluster_type is ClusterType.FORESHOCK
    assert cl.mag_gap == pytest.approx(0.5)


def test_classify_swarm_small_gap():
    cat = make_catalog([0.0, 1.0], mag=[4.8, 5.0])
    cl = single_link_cluster(cat, 30.0, 5.0)[0]
    assert cl.cluster_type is ClusterType.SWARM


def test_classify_mainshock_first():
    cat = make_catalog([0.0, 1.0, 2.0], mag=[5.0, 4.0, 3.5])
    cl = single_link_cluster(cat, 30.0, 5.0)[0]
    assert cl.cluster_type is ClusterType.MAINSHOCK_AFTERSHOCK
    assert cl.mainshock_id == 0


def test_classify_gap_exactly_threshold_is_foreshock():
    cat = make_catalog([0.0, 1.0], mag=[4.55, 5.0])
    cl = single_link_cluster(cat, 30.0, 5.0)[0]
    assert cl.mag_gap == pytest.approx(0.45)
    assert cl.cluster_type is ClusterType.FORESHOCK


def test_classify_singleton_isolated():
    cat = make_catalog([0.0], mag=[5.0])
    cl = single_link_cluster(cat, 30.0, 5.0)[0]
    assert cl.cluster_type is ClusterType.ISOLATED


def test_mainshock_tie_broken_by_earliest():
    cat = make_catalog([0.0, 1.0, 2.0], mag=[4.0, 5.0, 5.0])
    cl = single_link_cluster(cat, 30.0, 5.0)[0]
    assert cl.mainshock_id == 1


def test_classify_cluster_respects_custom_threshold():
    cat = make_catalog([0.0, 1.0], mag=[4.8, 5.0])
    cl = single_link_cluster(cat, 30.0, 5.0)[0]
    reclassified = classify_cluster(cl, cat, gap_threshold=0.1)
    assert reclassified.cluster_type is ClusterType.FORESHOCK
