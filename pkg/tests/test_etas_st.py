import math

import numpy as np
import pytest
from scipy.integrate import quad

from quakefit.catalog import KM_PER_DEG
from quakefit.etas_st import (BackgroundField, ClusterShape, StEtasParams,
                              background_weights, estimate_cluster_shape,
                              fit_st_etas, iterate_background,
                              kernel_spatial_mass, simulate_st_etas,
                              st_intensity, st_loglik, update_background)
from quakefit.magnitude import GrParams

from conftest import make_catalog

GR = GrParams(b=1.0, mc=4.0)
REGION = (130.0, 133.0, -1.5, 1.5)   # near the equator: cos(lat) ~ 1


def _params(**kw):
    base = dict(nu_scale=1.0, k_prod=0.1, c_off=0.02, alpha_m=1.0,
                p_exp=1.3, d_spread=10.0, q_exp=1.8, m_ref=4.0)
    base.update(kw)
    return StEtasParams(**base)


def _uniform_bg(total_rate=0.15):
    lon0, lon1, lat0, lat1 = REGION
    area = (lon1 - lon0) * (lat1 - lat0)
    return BackgroundField.uniform(REGION, value=total_rate / area)


def test_cluster_shape_identity_quadratic_form():
    s = ClusterShape((135.0, 35.0))
    assert s.quad_form(3.0, 0.0) == pytest.approx(9.0)
    assert s.quad_form(1.0, 2.0) == pytest.approx(5.0)
    assert np.allclose(s.matrix(), np.eye(2))


def test_cluster_shape_unit_determinant():
    s = ClusterShape((0.0, 0.0), sigma1=5.0, sigma2=1.0, rho=0.4)
    assert np.linalg.det(s.matrix()) == pytest.approx(1.0, rel=1e-12)
    assert s.sigma1 * s.sigma2 == pytest.approx(1.0)
    # positive definite whenever |rho| < 1
    assert np.all(np.linalg.eigvalsh(s.matrix()) > 0)


def test_cluster_shape_validation():
    with pytest.raises(ValueError):
        ClusterShape((0.0, 0.0), sigma1=-1.0)
    with pytest.raises(ValueError):
        ClusterShape((0.0, 0.0), rho=1.0)


def test_spatial_mass_closed_form_vs_radial_quadrature():
    par = _params(d_spread=20.0, q_exp=1.6)
    m_exc = 1.3
    closed = kernel_spatial_mass(par, m_exc)
    E = math.exp(par.alpha_m * m_exc)
    # polar reduction of the plane integral; adaptive quadrature to infinity
    num, _ = quad(lambda r: 2 * math.pi * r * (r * r / E + par.d_spread) ** -par.q_exp,
                  0.0, math.inf, epsabs=1e-12, epsrel=1e-12, limit=400)
    assert closed == pytest.approx(num, rel=1e-10)


def test_spatial_mass_vs_2d_quadrature():
    from quakefit.numerics import integrate2d
    par = _params(d_spread=5.0, q_exp=2.0)
    closed = kernel_spatial_mass(par, 0.0)

    def f(X, Y):
        return (X ** 2 + Y ** 2 + par.d_spread) ** -par.q_exp

    L = 4.0e3  # km; tail mass ~ (L^2/d)^(1-q) ~ 3e-7 relative
    num = integrate2d(f, (-L, L), (-L, L), tol=1e-9)
    assert closed == pytest.approx(num, rel=1e-6)


def test_st_intensity_background_only_far_away():
    par = _params()
    bg = _uniform_bg()
    cat = make_catalog([5.0], lon=[130.5], lat=[0.0], mag=[5.0])
    lam = st_intensity(400.0, 132.9, 1.4, cat, par, bg)
    # ~300 km and 395 days away: triggering term is negligible
    assert lam == pytest.approx(par.nu_scale * bg.grid[0, 0], rel=1e-4)


def test_st_intensity_errors_on_future_history():
    par = _params()
    bg = _uniform_bg()
    cat = make_catalog([5.0, 10.0], lon=[131.0, 131.0], lat=[0.0, 0.0],
                       mag=[5.0, 4.5])
    with pytest.raises(ValueError):
        st_intensity(7.0, 131.0, 0.0, cat, par, bg)


def test_window_rule_for_magnitude_six():
    side = 3.33 * 10 ** (0.5 * 6.0 - 2.0)
    days = 10 ** (0.5 * 6.0 - 1.0)
    assert side == pytest.approx(33.3)
    assert days == pytest.approx(100.0)


def test_estimate_cluster_shape_window_and_moments(rng):
    # isotropic members inside the M6 window: ratio -> 1, rho -> 0
    n = 4000
    lat0 = 0.0
    sd_km = 4.0
    dx = rng.normal(0, sd_km, n)
    dy = rng.normal(0, sd_km, n)
    lon = 131.0 + dx / KM_PER_DEG
    lat = lat0 + dy / KM_PER_DEG
    t = np.concatenate([[0.0], np.sort(rng.uniform(0.1, 99.0, n))])
    cat = make_catalog(t, lon=np.concatenate([[131.0], lon]),
                       lat=np.concatenate([[0.0], lat]),
                       mag=np.concatenate([[6.0], np.full(n, 4.2)]))
    shape = estimate_cluster_shape(cat, 0, mode="fit")
    assert shape.sigma2 / shape.sigma1 == pytest.approx(1.0, abs=0.1)
    assert abs(shape.rho) < 0.06
    assert shape.centroid[0] == pytest.approx(131.0, abs=0.01)


def test_estimate_cluster_shape_too_few_members():
    cat = make_catalog([0.0, 1.0, 2.0, 3.0],
                       lon=[131.0, 131.01, 131.02, 130.99],
                       lat=[0.0, 0.01, -0.01, 0.0],
                       mag=[6.0, 4.0, 4.0, 4.0])
    shape = estimate_cluster_shape(cat, 0)
    assert shape.sigma1 == shape.sigma2 == 1.0 and shape.rho == 0.0


def test_estimate_cluster_shape_collinear_warns():
    lon = 131.0 + np.linspace(0, 0.05, 8)
    cat = make_catalog(np.linspace(0, 1, 8), lon=lon,
                       lat=np.zeros(8), mag=[6.0] + [4.0] * 7)
    with pytest.warns(UserWarning, match="degenerate"):
        shape = estimate_cluster_shape(cat, 0)
    assert shape.sigma1 == shape.sigma2 == 1.0


def test_estimate_cluster_shape_anisotropy_recovered(rng):
    # members stretched 3:1 along lon: quadratic form contracts that axis
    n = 3000
    dx = rng.normal(0, 5.0, n)
    dy = rng.normal(0, 5.0 / 3.0, n)
    t = np.concatenate([[0.0], np.sort(rng.uniform(0.1, 99.0, n))])
    cat = make_catalog(t,
                       lon=np.concatenate([[131.0], 131.0 + dx / KM_PER_DEG]),
                       lat=np.concatenate([[0.0], dy / KM_PER_DEG]),
                       mag=np.concatenate([[6.0], np.full(n, 4.2)]))
    shape = estimate_cluster_shape(cat, 0)
    # S ~ unit-det inverse covariance: S11/S22 = (sd_y/sd_x)^2 = 1/9
    mat = shape.matrix()
    assert mat[0, 0] / mat[1, 1] == pytest.approx(1.0 / 9.0, rel=0.15)


def test_st_loglik_collapses_to_temporal(rng):
    # all events at one point: the spatial bracket is d^-q for every pair
    # (the magnitude scaling acts only through the spatial offset), so
    # the event terms match a temporal ETAS with alpha = 0, K' = K d^-q
    from quakefit.etas import EtasParams, etas_loglik
    from quakefit.etas_st import _h_time
    par = _params(k_prod=0.05)
    n = 300
    t = np.sort(rng.uniform(0, 500, n))
    mags = 4.0 + rng.exponential(1 / GR.beta, n)
    cat = make_catalog(t, lon=np.full(n, 131.5), lat=np.zeros(n), mag=mags)
    bg = _uniform_bg(0.3)
    ll_st = st_loglik(cat, par, bg, (0.0, 500.0))
    spatial0 = par.d_spread ** -par.q_exp
    mu_eff = par.nu_scale * float(bg.value_at(131.5, 0.0))
    par_t = EtasParams(mu_eff, par.k_prod * spatial0, par.c_off,
                       0.0, par.p_exp, m_ref=4.0)
    ll_t = etas_loglik(cat, par_t, (0.0, 500.0))
    # event sums are identical; integral terms differ and are closed form
    Ht = _h_time(500.0 - t, par.c_off, par.p_exp)
    E = np.exp(par.alpha_m * (mags - 4.0))
    int_st = par.nu_scale * bg.total_rate() * 500.0 + par.k_prod * float(
        ((np.pi * par.d_spread ** (1 - par.q_exp) / (par.q_exp - 1)) * E * Ht
         / KM_PER_DEG ** 2).sum())
    int_t = mu_eff * 500.0 + par.k_prod * spatial0 * float(Ht.sum())
    assert ll_st + int_st == pytest.approx(ll_t + int_t, rel=1e-9)


def test_simulate_and_fit_st_etas():
    par = _params(nu_scale=1.0, k_prod=450.0, c_off=0.02, alpha_m=1.0,
                  p_exp=1.3, d_spread=8.0, q_exp=1.9)
    bg = _uniform_bg(0.25)
    cat = simulate_st_etas(par, bg, (0.0, 4000.0), GR, seed=42)
    assert len(cat) >= 1200
    fit = fit_st_etas(cat, bg, (0.0, 4000.0))
    assert fit.converged
    for name in ("nu_scale", "k_prod", "c_off", "alpha_m", "p_exp",
                 "d_spread", "q_exp"):
        got = getattr(fit.params, name)
        true = getattr(par, name)
        se = fit.se[name]
        assert abs(got - true) <= max(4 * se, 0.25 * true), name


def test_background_weights_isolated_vs_aftershock():
    par = _params(k_prod=300.0, d_spread=4.0)
    bg = _uniform_bg(0.02)
    cat = make_catalog([10.0, 10.01, 900.0],
                       lon=[131.0, 131.0, 132.5],
                       lat=[0.0, 0.001, 1.0],
                       mag=[6.5, 4.2, 4.5])
    dec = background_weights(cat, par, bg, seed=1)
    assert dec.phi[1] < 0.01          # immediate aftershock at the epicenter
    assert dec.phi[2] > 0.95          # far and late: background
    assert np.all((dec.phi >= 0) & (dec.phi <= 1))
    assert set(dec.kept).issubset(range(3))


def test_background_weights_mass_balance_smoke():
    par = _params(k_prod=400.0, d_spread=8.0, q_exp=1.9)
    bg = _uniform_bg(0.3)
    cat = simulate_st_etas(par, bg, (0.0, 3000.0), GR, seed=5)
    dec = background_weights(cat, par, bg)
    expected_bg = par.nu_scale * bg.total_rate() * 3000.0
    assert dec.phi.sum() == pytest.approx(expected_bg, rel=0.12)


def test_update_background_flat_field_recovery():
    par = _params(k_prod=300.0, d_spread=8.0, q_exp=1.9)
    bg = _uniform_bg(0.5)
    cat = simulate_st_etas(par, bg, (0.0, 2000.0), GR, seed=11)
    new = update_background(cat, par, BackgroundField.uniform(
        REGION, value=bg.grid[0, 0], shape=(6, 6)), bandwidth_km=60.0,
        window=(0.0, 2000.0))
    inner = new.grid[1:-1, 1:-1]  # edge cells lose KDE mass off-grid
    rms = float(np.sqrt(np.mean((inner - bg.grid[0, 0]) ** 2)))
    assert rms < 0.2 * bg.grid[0, 0]


def test_update_background_point_concentration():
    par = _params(k_prod=0.0)
    n = 200
    cat = make_catalog(np.linspace(0, 999, n), lon=np.full(n, 131.5),
                       lat=np.zeros(n), mag=np.full(n, 4.5))
    bg0 = BackgroundField.uniform(REGION, value=0.01, shape=(12, 12))
    narrow = update_background(cat, par, bg0, bandwidth_km=5.0,
                               window=(0.0, 1000.0),
                               phi=np.ones(n))
    wide = update_background(cat, par, bg0, bandwidth_km=80.0,
                             window=(0.0, 1000.0), phi=np.ones(n))
    # shrinking the bandwidth concentrates mass in the point's cell
    assert narrow.grid.max() > 4 * wide.grid.max()


def test_iterate_background_contracts():
    par = _params(nu_scale=1.0, k_prod=350.0, d_spread=8.0, q_exp=1.9)
    bg = _uniform_bg(0.4)
    cat = simulate_st_etas(par, bg, (0.0, 1500.0), GR, seed=3)
    bg0 = BackgroundField.uniform(REGION, value=bg.grid[0, 0], shape=(4, 4))
    fit, bg_out, phi, changes = iterate_background(
        cat, bg0, (0.0, 1500.0), bandwidth_km=80.0, max_iter=4)
    assert len(changes) >= 2
    assert changes[-1] <= changes[1] + 1e-9
    assert np.all(bg_out.grid >= 0)


def test_background_field_csv_roundtrip(tmp_path):
    bg = BackgroundField(np.array([[0.1, 0.2], [0.3, 0.4]]),
                         (130.0, 132.0, 0.0, 1.0))
    path = tmp_path / "bg.csv"
    bg.to_csv(path)
    rows = path.read_text().strip().splitlines()
    assert rows[0] == "x,y,mu"
    assert len(rows) == 5
    assert bg.total_rate() == pytest.approx((0.1 + 0.2 + 0.3 + 0.4) * 0.5)
