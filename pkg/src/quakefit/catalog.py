"""Catalog ingestion, space-time-magnitude windowing and single-link clusters.

Catalogs are column arrays (time in decimal days from the declared epoch,
lon/lat in degrees, depth in km, magnitude), always sorted by time.
"""

import csv
import enum
import math
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Optional, Sequence

import numpy as np

from .errors import CatalogError

EARTH_RADIUS_KM = 6371.0
KM_PER_DEG = 2.0 * math.pi * EARTH_RADIUS_KM / 360.0  # 111.195 km

# default SLC linkage, mirroring the 5-day / 30-km declustering rule
DEFAULT_LINK_KM = 30.0
DEFAULT_LINK_DAYS = 5.0


@dataclass(frozen=True)
class Event:
    t: float
    lon: float
    lat: float
    depth: float
    mag: float


class ClusterType(str, enum.Enum):
    FORESHOCK = "foreshock_type"
    SWARM = "swarm"
    MAINSHOCK_AFTERSHOCK = "mainshock_aftershock"
    ISOLATED = "isolated"
    UNCLASSIFIED = "unclassified"


@dataclass
class ClusterRecord:
    member_ids: np.ndarray            # indices into the catalog, time order
    mainshock_id: int                 # largest member; ties -> earliest
    cluster_type: ClusterType = ClusterType.UNCLASSIFIED
    mag_gap: float = math.nan         # M(main) - M(largest pre-shock)

    def __len__(self):
        return len(self.member_ids)


@dataclass
class Catalog:
    t: np.ndarray
    lon: np.ndarray
    lat: np.ndarray
    depth: np.ndarray
    mag: np.ndarray
    epoch: Optional[str] = None
    mc: Optional[float] = None
    region: Optional[np.ndarray] = None   # polygon vertices (lon, lat)
    t_span: Optional[tuple] = None

    def __post_init__(self):
        cols = [np.asarray(c, dtype=float) for c in
                (self.t, self.lon, self.lat, self.depth, self.mag)]
        n = cols[0].size
        if any(c.size != n for c in cols):
            raise CatalogError("catalog columns have unequal lengths")
        order = np.argsort(cols[0], kind="stable")
        self.t, self.lon, self.lat, self.depth, self.mag = \
            (c[order] for c in cols)
        if self.t_span is None:
            self.t_span = (0.0, float(self.t[-1]) if n else 0.0)

    def __len__(self):
        return self.t.size

    def __getitem__(self, i) -> Event:
        return Event(float(self.t[i]), float(self.lon[i]), float(self.lat[i]),
                     float(self.depth[i]), float(self.mag[i]))

    @property
    def events(self):
        return [self[i] for i in range(len(self))]

    def subset(self, mask_or_idx) -> "Catalog":
        return Catalog(self.t[mask_or_idx], self.lon[mask_or_idx],
                       self.lat[mask_or_idx], self.depth[mask_or_idx],
                       self.mag[mask_or_idx], epoch=self.epoch, mc=self.mc,
                       region=self.region, t_span=self.t_span)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time", "lon", "lat", "depth_km", "mag"])
            for i in range(len(self)):
                w.writerow([repr(float(self.t[i])), repr(float(self.lon[i])),
                            repr(float(self.lat[i])),
                            repr(float(self.depth[i])),
                            repr(float(self.mag[i]))])


def great_circle_km(lon1, lat1, lon2, lat2):
    """Great-circle distance (km) on the mean-radius sphere, vectorized."""
    rl1, rl2 = np.radians(lat1), np.radians(lat2)
    dlon = np.radians(np.asarray(lon2) - np.asarray(lon1))
    dlat = rl2 - rl1
    h = np.sin(dlat / 2.0) ** 2 + np.cos(rl1) * np.cos(rl2) * np.sin(dlon / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))


def flat_distance_km(lon1, lat1, lon2, lat2):
    """Flat-earth separation sqrt((dx cos(mean lat))^2 + dy^2) in km.

    Used only inside the foreshock statistics, which were calibrated with
    this approximation.
    """
    mean_lat = np.radians(0.5 * (np.asarray(lat1) + np.asarray(lat2)))
    dx = (np.asarray(lon2) - np.asarray(lon1)) * np.cos(mean_lat)
    dy = np.asarray(lat2) - np.asarray(lat1)
    return KM_PER_DEG * np.sqrt(dx ** 2 + dy ** 2)


def _parse_time(raw: str, epoch: Optional[datetime]):
    try:
        return float(raw), epoch
    except ValueError:
        pass
    stamp = datetime.fromisoformat(raw.strip().replace("Z", "+00:00"))
    if stamp.tzinfo is None:
        stamp = stamp.replace(tzinfo=timezone.utc)
    if epoch is None:
        epoch = stamp.replace(hour=0, minute=0, second=0, microsecond=0)
    return (stamp - epoch).total_seconds() / 86400.0, epoch


def _validate_row(t, lon, lat, depth, mag):
    if not math.isfinite(t):
        return "time not finite"
    if not (-180.0 <= lon <= 360.0):
        return f"lon {lon} outside [-180, 360]"
    if not (-90.0 <= lat <= 90.0):
        return f"lat {lat} outside [-90, 90]"
    if depth < 0.0:
        return f"depth {depth} negative"
    if not math.isfinite(mag):
        return "mag not finite"
    return None


# default fixed-width layout: cols 1-16 time, 17-26 lat, 27-37 lon,
# 38-44 depth, 45-50 magnitude (0-based half-open offsets below)
DEFAULT_HYPO_COLSPEC = {
    "time": (0, 16),
    "lat": (16, 26),
    "lon": (26, 37),
    "depth_km": (37, 44),
    "mag": (44, 50),
}


def load_catalog(path, format: str = "csv", epoch: Optional[str] = None,
                 colspec: Optional[dict] = None) -> Catalog:
    """Read a catalog file and return it sorted by time.

    csv expects a `time, lon, lat, depth_km, mag` header; time is decimal
    days or ISO-8601 (converted at the declared epoch).  hypo_fixed_width
    reads by column offsets (`colspec` overrides DEFAULT_HYPO_COLSPEC).
    Malformed rows are a hard error listing up to the first 10 offenders.
    """
    epoch_dt = None
    if epoch is not None:
        epoch_dt = datetime.fromisoformat(epoch)
        if epoch_dt.tzinfo is None:
            epoch_dt = epoch_dt.replace(tzinfo=timezone.utc)

    rows = []
    bad = []
    if format == "csv":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise CatalogError(f"{path}: empty catalog file") from None
            header = [h.strip().lower() for h in header]
            want = ["time", "lon", "lat", "depth_km", "mag"]
            try:
                cols = [header.index(w) for w in want]
            except ValueError:
                raise CatalogError(
                    f"{path}: header must contain {want}, got {header}")
            for ln, row in enumerate(reader, start=2):
                if not row or all(not c.strip() for c in row):
                    continue
                try:
                    t, epoch_dt = _parse_time(row[cols[0]], epoch_dt)
                    lon = float(row[cols[1]])
                    lat = float(row[cols[2]])
                    depth = float(row[cols[3]])
                    mag = float(row[cols[4]])
                except (ValueError, IndexError) as exc:
                    bad.append(f"line {ln}: {exc}")
                    continue
                msg = _validate_row(t, lon, lat, depth, mag)
                if msg:
                    bad.append(f"line {ln}: {msg}")
                    continue
                rows.append((t, lon, lat, depth, mag))
    elif format == "hypo_fixed_width":
        spec = dict(DEFAULT_HYPO_COLSPEC)
        if colspec:
            spec.update(colspec)
        with open(path) as fh:
            for ln, line in enumerate(fh, start=1):
                if not line.strip() or line.lstrip().startswith("#"):
                    continue
                try:
                    t, epoch_dt = _parse_time(
                        line[slice(*spec["time"])].strip(), epoch_dt)
                    lat = float(line[slice(*spec["lat"])])
                    lon = float(line[slice(*spec["lon"])])
                    depth = float(line[slice(*spec["depth_km"])])
                    mag = float(line[slice(*spec["mag"])])
                except (ValueError, IndexError) as exc:
                    bad.append(f"line {ln}: {exc}")
                    continue
                msg = _validate_row(t, lon, lat, depth, mag)
                if msg:
                    bad.append(f"line {ln}: {msg}")
                    continue
                rows.append((t, lon, lat, depth, mag))
    else:
        raise ValueError(f"unknown catalog format {format!r}")

    if bad:
        shown = "; ".join(bad[:10])
        raise CatalogError(f"{path}: {len(bad)} malformed row(s): {shown}")
    if not rows:
        raise CatalogError(f"{path}: empty catalog")
    arr = np.array(rows, dtype=float)
    epoch_str = epoch_dt.isoformat() if epoch_dt is not None else epoch
    return Catalog(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3], arr[:, 4],
                   epoch=epoch_str)


def _point_in_polygon(lon, lat, poly):
    # ray casting; poly is (k, 2) lon/lat vertices
    x, y = lon, lat
    inside = np.zeros(np.shape(x), dtype=bool)
    k = len(poly)
    for i in range(k):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % k]
        crosses = ((y1 > y) != (y2 > y)) & \
            (x < (x2 - x1) * (y - y1) / (y2 - y1 + 1e-300) + x1)
        inside ^= crosses
    return inside


def select_window(catalog: Catalog, m_min: Optional[float] = None,
                  t_range: Optional[tuple] = None,
                  region: Optional[Sequence] = None,
                  depth_max: Optional[float] = None) -> Catalog:
    """Apply magnitude / time / region / depth filters; ordering preserved."""
    mask = np.ones(len(catalog), dtype=bool)
    if m_min is not None:
        mask &= catalog.mag >= m_min
    if t_range is not None:
        t0, t1 = t_range
        if t0 > t1:
            raise ValueError(f"inverted time interval {t_range}")
        mask &= (catalog.t >= t0) & (catalog.t <= t1)
    if depth_max is not None:
        mask &= catalog.depth <= depth_max
    if region is not None:
        poly = np.asarray(region, dtype=float)
        mask &= _point_in_polygon(catalog.lon, catalog.lat, poly)
    out = catalog.subset(mask)
    if m_min is not None:
        out.mc = m_min if catalog.mc is None else max(catalog.mc, m_min)
    if t_range is not None:
        out.t_span = (float(t_range[0]), float(t_range[1]))
    return out


class _UnionFind:
    def __init__(self, n):
        self.parent = np.arange(n)

    def find(self, i):
        p = self.parent
        while p[i] != i:
            p[i] = p[p[i]]
            i = p[i]
        return i

    def union(self, i, j):
        ri, rj = self.find(i), self.find(j)
        if ri != rj:
            self.parent[rj] = ri


def _mainshock(catalog, ids):
    mags = catalog.mag[ids]
    best = np.flatnonzero(mags == mags.max())
    # ids are in time order, so the first maximal entry is the earliest
    return int(ids[best[0]])


def single_link_cluster(catalog: Catalog, d_space_km: float = DEFAULT_LINK_KM,
                        d_time_days: float = DEFAULT_LINK_DAYS,
                        gap_threshold: float = 0.45):
    """Partition the catalog into single-link clusters.

    Two events belong to one cluster iff a chain of links exists in which
    every link spans <= d_space_km epicentral distance AND <= d_time_days.
    Every event lands in exactly one cluster; singletons come back as
    isolated records.  Records are classified before return.
    """
    if d_space_km <= 0 or d_time_days <= 0:
        raise ValueError("linkage thresholds must be positive")
    n = len(catalog)
    uf = _UnionFind(n)
    t = catalog.t
    j_start = 0
    for i in range(n):
        # only pairs within the time threshold can link
        while t[i] - t[j_start] > d_time_days:
            j_start += 1
        if j_start < i:
            dist = great_circle_km(catalog.lon[j_start:i], catalog.lat[j_start:i],
                                   catalog.lon[i], catalog.lat[i])
            for j in np.flatnonzero(dist <= d_space_km):
                uf.union(j_start + int(j), i)
    roots = np.array([uf.find(i) for i in range(n)])
    clusters = []
    for r in np.unique(roots):
        ids = np.flatnonzero(roots == r)
        rec = ClusterRecord(member_ids=ids, mainshock_id=_mainshock(catalog, ids))
        clusters.append(classify_cluster(rec, catalog, gap_threshold))
    clusters.sort(key=lambda c: catalog.t[c.member_ids[0]])
    return clusters


def classify_cluster(cluster: ClusterRecord, catalog: Catalog,
                     gap_threshold: float = 0.45) -> ClusterRecord:
    """Assign the cluster type from the mainshock position and magnitude gap.

    Singletons are isolated; a mainshock that occurs first makes the
    cluster mainshock-aftershock type; otherwise the gap between the
    mainshock and the largest pre-shock decides foreshock type (gap >=
    threshold, inclusive) versus swarm.
    """
    ids = np.asarray(cluster.member_ids)
    if ids.size == 0:
        raise ValueError("empty cluster")
    main = cluster.mainshock_id if cluster.mainshock_id in ids \
        else _mainshock(catalog, ids)
    cluster.mainshock_id = int(main)
    if ids.size == 1:
        cluster.cluster_type = ClusterType.ISOLATED
        cluster.mag_gap = math.nan
        return cluster
    t_main = catalog.t[main]
    pre = ids[catalog.t[ids] < t_main]
    if pre.size == 0:
        cluster.cluster_type = ClusterType.MAINSHOCK_AFTERSHOCK
        cluster.mag_gap = math.nan
        return cluster
    gap = float(catalog.mag[main] - catalog.mag[pre].max())
    cluster.mag_gap = gap
    cluster.cluster_type = (ClusterType.FORESHOCK if gap >= gap_threshold
                            else ClusterType.SWARM)
    return cluster
