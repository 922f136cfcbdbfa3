"""Probabilistic foreshock discrimination.

Pairwise statistics inside a growing cluster are standardized into [0, 1]:

    tau   = clamp(log(100 dt) / log(3000), 0, 1)        time difference
    rho   = 1 - exp(-min(dr, 50) / 20)                  epicentral separation
    gamma = (2/3) e^(g / 0.6709)             for g <= 0 magnitude difference
          = 2/3 + (1/3)(1 - e^(-g / 0.4456)) for g > 0

and feed the logit update
    logit p = logit mu(x1, y1) + mean over pairs of
              (mu0 + sum_k b_k gamma^k + c_k rho^k + d_k tau^k),
with the convention f = logit p = log((1-p)/p), p = 1/(1+e^f).
"""

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import numerics
from .catalog import Catalog, ClusterRecord, flat_distance_km
from .errors import QuakefitError

SIGMA_1 = 0.6709   # magnitude-difference scale, g <= 0 branch
SIGMA_2 = 0.4456   # magnitude-difference scale, g > 0 branch
JAPAN_MEAN_FORESHOCK_RATE = 0.038


@dataclass
class PairStatistics:
    tau_std: float
    rho_std: float
    gamma_std: float


@dataclass
class LocationPrior:
    """Gridded probability that a cluster's first event is a foreshock."""
    grid: np.ndarray
    bounds: tuple               # (lon0, lon1, lat0, lat1)

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        if np.any((self.grid <= 0) | (self.grid >= 1)):
            raise ValueError("prior probabilities must lie in (0, 1)")

    @classmethod
    def constant(cls, p: float = JAPAN_MEAN_FORESHOCK_RATE,
                 bounds=(-180.0, 360.0, -90.0, 90.0)):
        return cls(np.full((1, 1), p), bounds)

    def value_at(self, lon, lat):
        lon0, lon1, lat0, lat1 = self.bounds
        nx, ny = self.grid.shape
        if not (lon0 <= lon <= lon1 and lat0 <= lat <= lat1):
            raise QuakefitError(
                f"location ({lon}, {lat}) outside the prior grid")
        ix = min(int((lon - lon0) / (lon1 - lon0) * nx), nx - 1)
        iy = min(int((lat - lat0) / (lat1 - lat0) * ny), ny - 1)
        return float(self.grid[ix, iy])


@dataclass
class ForeshockModel:
    location_prior: LocationPrior
    mu0: float = 0.0
    b_coef: np.ndarray = field(default_factory=lambda: np.zeros(3))
    c_coef: np.ndarray = field(default_factory=lambda: np.zeros(3))
    d_coef: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        for name in ("b_coef", "c_coef", "d_coef"):
            v = np.zeros(3)
            got = np.asarray(getattr(self, name), dtype=float)
            v[:got.size] = got
            setattr(self, name, v)


def standardize_pair(dt: float, dr: float, dg: float) -> PairStatistics:
    """Map a pair's (time, distance, magnitude) differences into [0, 1]."""
    if dt < 0 or dr < 0:
        raise ValueError("dt and dr must be >= 0")
    if dt <= 0:
        tau = 0.0
    else:
        tau = min(max(math.log(100.0 * dt) / math.log(3000.0), 0.0), 1.0)
    rho = 1.0 - math.exp(-min(dr, 50.0) / 20.0)
    if dg <= 0:
        gamma = (2.0 / 3.0) * math.exp(dg / SIGMA_1)
    else:
        gamma = 2.0 / 3.0 + (1.0 / 3.0) * (1.0 - math.exp(-dg / SIGMA_2))
    return PairStatistics(tau_std=tau, rho_std=rho, gamma_std=gamma)


def _logit(p):
    # f = log((1-p)/p); inverse p = 1/(1+e^f)
    return math.log1p(-p) - math.log(p)


def _inv_logit(f):
    return 1.0 / (1.0 + math.exp(f)) if f > -500 else 1.0


def cluster_pair_features(times, lons, lats, mags) -> np.ndarray:
    """Mean of (gamma^k, rho^k, tau^k), k = 1..3, over all member pairs.

    Returns the 9-vector of pair-averaged powers in b/c/d order; empty
    clusters of one event return zeros (no pairs).
    """
    n = len(times)
    feats = np.zeros(9)
    if n < 2:
        return feats
    cnt = 0
    for i in range(n - 1):
        for j in range(i + 1, n):
            dr = float(flat_distance_km(lons[i], lats[i], lons[j], lats[j]))
            st = standardize_pair(abs(times[j] - times[i]), dr,
                                  mags[j] - mags[i])
            for k in (1, 2, 3):
                feats[k - 1] += st.gamma_std ** k
                feats[2 + k] += st.rho_std ** k
                feats[5 + k] += st.tau_std ** k
            cnt += 1
    return feats / cnt


def foreshock_probability(catalog_or_arrays, members, model: ForeshockModel,
                          n: Optional[int] = None) -> float:
    """Forecast probability that the cluster observed so far is foreshocks.

    `members` indexes the cluster's events in occurrence order (or a
    ClusterRecord); n limits the update to the first n members.  A single
    event returns the location prior at its epicenter.
    """
    if isinstance(members, ClusterRecord):
        members = members.member_ids
    if isinstance(catalog_or_arrays, Catalog):
        cat = catalog_or_arrays
        ids = np.asarray(members)[:n] if n else np.asarray(members)
        times, lons = cat.t[ids], cat.lon[ids]
        lats, mags = cat.lat[ids], cat.mag[ids]
    else:
        times, lons, lats, mags = (np.asarray(a)[:n] if n else np.asarray(a)
                                   for a in catalog_or_arrays)
    if len(times) < 1:
        raise ValueError("need at least one member")
    prior = model.location_prior.value_at(float(lons[0]), float(lats[0]))
    if len(times) == 1:
        return prior
    feats = cluster_pair_features(times, lons, lats, mags)
    adj = model.mu0 + float(np.concatenate([model.b_coef, model.c_coef,
                                            model.d_coef]) @ feats)
    return _inv_logit(_logit(prior) + adj)


@dataclass
class ForeshockFit:
    model: ForeshockModel
    loglik: float
    aic: float
    se: dict
    converged: bool
    separation_flagged: bool
    order: int


def _shrunk_prior_grid(first_lon, first_lat, labels, bounds, shape,
                       shrink: float = 20.0) -> LocationPrior:
    """Per-cell foreshock class rate shrunk toward the global mean."""
    lon0, lon1, lat0, lat1 = bounds
    nx, ny = shape
    global_rate = float(np.mean(labels))
    global_rate = min(max(global_rate, 1e-4), 1 - 1e-4)
    grid = np.full((nx, ny), global_rate)
    ix = np.clip(((first_lon - lon0) / (lon1 - lon0) * nx).astype(int), 0, nx - 1)
    iy = np.clip(((first_lat - lat0) / (lat1 - lat0) * ny).astype(int), 0, ny - 1)
    for cx in range(nx):
        for cy in range(ny):
            sel = (ix == cx) & (iy == cy)
            cnt = int(sel.sum())
            if cnt:
                rate = float(np.mean(labels[sel]))
                grid[cx, cy] = (cnt * rate + shrink * global_rate) / (cnt + shrink)
    grid = np.clip(grid, 1e-4, 1 - 1e-4)
    return LocationPrior(grid, bounds)


_COEF_CAP = 30.0


def fit_foreshock_model(clusters: Sequence, labels: Sequence[bool],
                        order: int = 1, prior_bounds=None,
                        prior_shape=(1, 1)) -> ForeshockFit:
    """Bernoulli MLE of the logit-adjustment coefficients.

    `clusters` holds (times, lons, lats, mags) tuples per cluster (first
    n observed members); labels mark true foreshock clusters.  The
    location prior is the shrunken per-cell class rate.  Perfect
    separation is flagged and the coefficients capped at +/-30.
    """
    labels = np.asarray(labels, dtype=float)
    if len(clusters) != labels.size:
        raise ValueError("one label per cluster required")
    if len(clusters) < 100:
        raise ValueError("need >= 100 labelled clusters")
    if labels.min() == labels.max():
        raise QuakefitError("both classes must be present")
    if order not in (1, 2, 3):
        raise ValueError("polynomial order must be 1, 2 or 3")

    first_lon = np.array([float(np.asarray(c[1])[0]) for c in clusters])
    first_lat = np.array([float(np.asarray(c[2])[0]) for c in clusters])
    if prior_bounds is None:
        pad = 0.5
        prior_bounds = (first_lon.min() - pad, first_lon.max() + pad,
                        first_lat.min() - pad, first_lat.max() + pad)
    prior = _shrunk_prior_grid(first_lon, first_lat, labels, prior_bounds,
                               prior_shape)

    feats = np.array([cluster_pair_features(*c) for c in clusters])
    has_pairs = np.array([len(c[0]) > 1 for c in clusters])
    offs = np.array([_logit(prior.value_at(lo, la))
                     for lo, la in zip(first_lon, first_lat)])

    # active columns: constant + the chosen powers of each statistic
    cols = [k for base in (0, 3, 6) for k in range(base, base + order)]
    X = feats[:, cols]

    def nll_grad(w):
        f = offs + has_pairs * (w[0] + X @ w[1:])
        # p = 1/(1+e^f) = sigmoid(-f)
        logp = -np.logaddexp(0.0, f)
        log1mp = -np.logaddexp(0.0, -f)
        ll = float(labels @ logp + (1.0 - labels) @ log1mp)
        # d ll / d f = -(y - p)
        p = np.exp(logp)
        df = -(labels - p) * has_pairs
        g = np.concatenate([[df.sum()], X.T @ df])
        return -ll, g

    w0 = np.zeros(1 + len(cols))
    res = numerics.minimize(nll_grad, w0, bounds=None, tol=1e-10, jac=True)
    w = np.clip(res.x_opt, -_COEF_CAP, _COEF_CAP)
    separated = bool(np.any(np.abs(res.x_opt) >= _COEF_CAP))
    if separated:
        warnings.warn("possible separation: coefficients capped at +/-30")

    def expand(w):
        b = np.zeros(3); c = np.zeros(3); d = np.zeros(3)
        b[:order] = w[1:1 + order]
        c[:order] = w[1 + order:1 + 2 * order]
        d[:order] = w[1 + 2 * order:1 + 3 * order]
        return b, c, d

    b, c, d = expand(w)
    model = ForeshockModel(location_prior=prior, mu0=float(w[0]),
                           b_coef=b, c_coef=c, d_coef=d)
    ll = -res.f_opt
    k_par = w.size
    names = ["mu0"] + [f"b_{k+1}" for k in range(order)] \
        + [f"c_{k+1}" for k in range(order)] + [f"d_{k+1}" for k in range(order)]
    return ForeshockFit(model=model, loglik=ll, aic=-2 * ll + 2 * k_par,
                        se=dict(zip(names, res.se)), converged=res.converged,
                        separation_flagged=separated, order=order)
