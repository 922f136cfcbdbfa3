import math

import numpy as np
import pytest
from scipy.integrate import quad

from quakefit.errors import ExplosionError, QuakefitError
from quakefit.etas import (EtasParams, branching_ratio, detect_anomaly,
                           etas_cumulative, etas_intensity, etas_loglik,
                           fit_etas, simulate_etas, transform_times)
from quakefit.magnitude import GrParams

from conftest import make_catalog

GR = GrParams(b=1.0, mc=4.0)


def _params(**kw):
    base = dict(mu_bg=0.3, k_prod=0.02, c_off=0.01, alpha_m=0.9, p_exp=1.15,
                m_ref=4.0)
    base.update(kw)
    return EtasParams(**base)


def test_intensity_empty_history_is_background():
    par = _params()
    assert etas_intensity(5.0, [], [], par) == pytest.approx(par.mu_bg)


def test_intensity_single_event_direct_arithmetic():
    par = EtasParams(0.1, 0.02, 0.01, 1.0, 1.2, m_ref=4.0)
    lam = etas_intensity(1.0, [0.0], [4.0], par)
    assert lam == pytest.approx(0.1 + 0.02 * 1.01 ** (-1.2), rel=1e-12)
    assert lam == pytest.approx(0.11976261213263639, rel=1e-12)


def test_intensity_unit_alpha_exponent():
    par = _params()
    m = par.m_ref + 1.0 / par.alpha_m
    lam = etas_intensity(2.0, [0.0], [m], par)
    kernel = par.k_prod / (2.0 + par.c_off) ** par.p_exp
    assert lam - par.mu_bg == pytest.approx(math.e * kernel, rel=1e-12)


def test_intensity_unsorted_history_errors():
    with pytest.raises(ValueError):
        etas_intensity(5.0, [2.0, 1.0], [4.0, 4.0], _params())


def test_intensity_additive_over_history_partition(rng):
    par = _params()
    t_all = np.sort(rng.uniform(0, 10, 40))
    mags = 4.0 + rng.exponential(0.4, 40)
    half = rng.random(40) < 0.5
    lam_all = etas_intensity(11.0, t_all, mags, par)
    lam_a = etas_intensity(11.0, t_all[half], mags[half], par)
    lam_b = etas_intensity(11.0, t_all[~half], mags[~half], par)
    assert lam_all - par.mu_bg == pytest.approx(
        (lam_a - par.mu_bg) + (lam_b - par.mu_bg), rel=1e-10)


def test_loglik_degenerate_poisson():
    par = _params(k_prod=0.0)
    cat = make_catalog(np.linspace(0.5, 99.5, 60), mag=np.full(60, 4.5))
    want = 60 * math.log(par.mu_bg) - par.mu_bg * 100.0
    assert etas_loglik(cat, par, (0.0, 100.0)) == pytest.approx(want,
                                                                rel=1e-12)


def test_loglik_zero_intensity_guarded():
    par = _params(mu_bg=0.0, k_prod=0.0)
    cat = make_catalog([1.0, 2.0], mag=[4.5, 4.5])
    with pytest.raises(QuakefitError):
        etas_loglik(cat, par, (0.0, 10.0))


def test_cumulative_closed_form_vs_quadrature():
    par = _params()
    cat = simulate_etas(par, (0.0, 400.0), GR, seed=2)
    S, T = 50.0, 400.0
    closed = float(etas_cumulative(cat, par, (S, T), t_eval=[T])[0])
    # piecewise adaptive quadrature between event times
    knots = np.concatenate([[S], cat.t[(cat.t > S) & (cat.t < T)], [T]])
    total = 0.0
    for a, b in zip(knots[:-1], knots[1:]):
        val, _ = quad(lambda u: float(etas_intensity(u, cat.t, cat.mag, par)),
                      a, b, epsabs=1e-12, epsrel=1e-12, limit=200)
        total += val
    assert closed == pytest.approx(total, rel=1e-8)


def test_loglik_true_beats_perturbed(rng):
    par = _params(mu_bg=0.2, k_prod=0.03, alpha_m=1.0)
    wins = 0
    for seed in range(5):
        cat = simulate_etas(par, (0.0, 4000.0), GR, seed=seed)
        ll_true = etas_loglik(cat, par, (0.0, 4000.0))
        ll_pert = etas_loglik(cat, par.replace(k_prod=par.k_prod * 1.5),
                              (0.0, 4000.0))
        wins += ll_true > ll_pert
    assert wins >= 4


def test_fit_etas_requires_events():
    cat = make_catalog(np.linspace(1, 9, 10), mag=np.full(10, 4.5))
    with pytest.raises(ValueError):
        fit_etas(cat, (0.0, 10.0))


def test_fit_etas_recover_and_idempotent():
    par = _params(mu_bg=0.25, k_prod=0.03, c_off=0.02, alpha_m=1.0,
                  p_exp=1.12)
    cat = simulate_etas(par, (0.0, 6000.0), GR, seed=9)
    fit = fit_etas(cat, (0.0, 6000.0))
    assert fit.converged
    for name in ("mu_bg", "k_prod", "c_off", "alpha_m", "p_exp"):
        assert abs(getattr(fit.params, name) - getattr(par, name)) \
            <= 3.5 * fit.se[name], name
    refit = fit_etas(cat, (0.0, 6000.0), init=fit.params)
    assert refit.loglik == pytest.approx(fit.loglik, abs=1e-4)
    for name in ("mu_bg", "k_prod", "c_off", "alpha_m", "p_exp"):
        assert getattr(refit.params, name) == pytest.approx(
            getattr(fit.params, name), rel=1e-3), name
    assert fit.aic == pytest.approx(-2 * fit.loglik + 10)


def test_fit_etas_nested_window():
    # high-rate catalog so every event term adds positive log-likelihood
    par = _params(mu_bg=2.0, k_prod=0.02, alpha_m=1.0)
    cat = simulate_etas(par, (0.0, 1200.0), GR, seed=13)
    full = fit_etas(cat, (0.0, 1200.0))
    half = fit_etas(cat, (0.0, 600.0))
    assert half.loglik < full.loglik
    for name in ("mu_bg", "k_prod", "c_off", "alpha_m", "p_exp"):
        assert abs(getattr(half.params, name) - getattr(full.params, name)) \
            <= 4.0 * half.se[name], name


def test_transform_times_identity_for_poisson():
    par = _params(mu_bg=1.0, k_prod=0.0)
    t = np.linspace(2.0, 48.0, 30)
    cat = make_catalog(t, mag=np.full(30, 4.5))
    res = transform_times(cat, par, (1.0, 50.0))
    assert np.allclose(res.tau, t - 1.0)
    assert res.lam_total == pytest.approx(49.0)
    assert np.allclose(res.band_hi - res.tau, 2 * np.sqrt(res.tau))


def test_transform_times_ks_under_truth():
    par = _params(mu_bg=0.3, k_prod=0.025, alpha_m=1.0)
    # 1%-level KS critical value ~ 1.63 / sqrt(n)
    passes = 0
    for seed in range(6):
        cat = simulate_etas(par, (0.0, 2000.0), GR, seed=seed)
        res = transform_times(cat, par, (0.0, 2000.0))
        n = res.tau.size
        passes += res.ks_stat < 1.63 / math.sqrt(n)
    assert passes >= 5


def test_transform_times_misspecified_mu_exits_band():
    par = _params(mu_bg=0.5, k_prod=0.01, alpha_m=0.8)
    cat = simulate_etas(par, (0.0, 2000.0), GR, seed=4)
    res = transform_times(cat, par.replace(mu_bg=1.0), (0.0, 2000.0))
    counts = np.arange(1, res.tau.size + 1)
    # doubled mu: predicted cumulative runs ahead; staircase leaves +2 sqrt
    assert np.any(counts < res.tau - 2.0 * np.sqrt(res.tau))


def test_transform_monotone_and_counts():
    par = _params()
    cat = simulate_etas(par, (0.0, 500.0), GR, seed=21)
    res = transform_times(cat, par, (100.0, 500.0))
    n_win = int(np.sum((cat.t > 100.0) & (cat.t <= 500.0)))
    assert res.tau.size == n_win
    assert np.all(np.diff(res.tau) > 0)
    assert res.tau.max() <= res.lam_total + 1e-9


def test_simulate_poisson_limit():
    mu, T = 0.4, 200.0
    counts = [len(simulate_etas(_params(mu_bg=mu, k_prod=0.0), (0.0, T), GR,
                                seed=s)) for s in range(300)]
    assert abs(np.mean(counts) - mu * T) < 3 * math.sqrt(mu * T / 300)


def test_simulate_branching_expectation():
    # short-memory kernel: horizon truncation negligible
    par = _params(mu_bg=0.4, k_prod=0.03, c_off=0.05, alpha_m=0.5, p_exp=1.6)
    beta = GR.beta
    ratio = branching_ratio(par, beta)
    assert ratio < 0.5
    T = 600.0
    want = par.mu_bg * T / (1.0 - ratio)
    counts = [len(simulate_etas(par, (0.0, T), GR, seed=s))
              for s in range(400)]
    assert np.mean(counts) == pytest.approx(want, rel=0.05)


def test_simulate_deterministic_by_seed():
    par = _params()
    a = simulate_etas(par, (0.0, 300.0), GR, seed=7)
    b = simulate_etas(par, (0.0, 300.0), GR, seed=7)
    assert np.array_equal(a.t, b.t) and np.array_equal(a.mag, b.mag)
    c = simulate_etas(par, (0.0, 300.0), GR, seed=8)
    assert not np.array_equal(a.t, c.t)


def test_simulate_supercritical_refused():
    par = _params(k_prod=1.0, alpha_m=1.0, p_exp=1.2)
    assert branching_ratio(par, GR.beta) > 1.0
    with pytest.raises(ExplosionError):
        simulate_etas(par, (0.0, 1000.0), GR, seed=0)


def test_simulate_with_seed_history():
    par = _params(mu_bg=0.05, k_prod=0.015, alpha_m=1.2)
    hist_t = np.array([-0.5])
    hist_m = np.array([8.0])  # large mainshock just before the window
    cat = simulate_etas(par, (0.0, 50.0), GR, history=(hist_t, hist_m),
                        seed=3)
    lone = simulate_etas(par, (0.0, 50.0), GR, seed=3)
    assert len(cat) > len(lone)  # aftershocks of the seed dominate


def test_branching_ratio_formula():
    par = _params(k_prod=0.04, c_off=0.02, alpha_m=1.2, p_exp=1.1)
    beta = math.log(10.0)
    want = 0.04 * beta / ((beta - 1.2) * 0.1 * 0.02 ** 0.1)
    assert branching_ratio(par, beta) == pytest.approx(want, rel=1e-12)
    assert branching_ratio(par, beta, horizon=1e4) < 1.0 < want
    assert math.isinf(branching_ratio(_params(p_exp=0.9), beta))
    assert math.isinf(branching_ratio(_params(alpha_m=3.0), beta))


def test_aic_favors_etas_over_poisson():
    par = _params(mu_bg=0.25, k_prod=0.04, alpha_m=1.0)
    cat = simulate_etas(par, (0.0, 4000.0), GR, seed=17)
    assert len(cat) >= 500
    fit = fit_etas(cat, (0.0, 4000.0))
    n = int(np.sum((cat.t > 0) & (cat.t <= 4000.0)))
    mu_hat = n / 4000.0
    ll_pois = n * math.log(mu_hat) - n
    aic_pois = -2 * ll_pois + 2
    assert fit.aic < aic_pois


def test_detect_anomaly_empty_when_no_prediction_window():
    par = _params()
    cat = simulate_etas(par, (0.0, 1500.0), GR, seed=5)
    rep = detect_anomaly(cat, (0.0, 1500.0), (1500.0, 1500.0))
    assert rep.t_eval.size == 0
    assert not rep.quiescence and not rep.activation


def test_detect_anomaly_null_smoke():
    par = _params(mu_bg=0.5, k_prod=0.015, c_off=0.01, alpha_m=0.8,
                  p_exp=1.2)
    flagged = 0
    for seed in range(8):
        cat = simulate_etas(par, (0.0, 2100.0), GR, seed=seed)
        rep = detect_anomaly(cat, (0.0, 1500.0), (1500.0, 2100.0))
        flagged += rep.quiescence
    assert flagged <= 1


def test_detect_anomaly_quiescence_power_smoke():
    par = _params(mu_bg=0.5, k_prod=0.015, c_off=0.01, alpha_m=0.8,
                  p_exp=1.2)
    halved = par.replace(mu_bg=par.mu_bg / 2.0)
    flagged = 0
    for seed in range(6):
        pre = simulate_etas(par, (0.0, 1500.0), GR, seed=seed)
        post = simulate_etas(halved, (1500.0, 2100.0), GR,
                             history=(pre.t, pre.mag), seed=1000 + seed)
        cat = make_catalog(np.concatenate([pre.t, post.t]),
                           mag=np.concatenate([pre.mag, post.mag]))
        rep = detect_anomaly(cat, (0.0, 1500.0), (1500.0, 2100.0))
        flagged += rep.quiescence
    assert flagged >= 5


def test_detect_anomaly_reports_band_series():
    par = _params(mu_bg=0.5, k_prod=0.015, alpha_m=0.8)
    cat = simulate_etas(par, (0.0, 1200.0), GR, seed=2)
    rep = detect_anomaly(cat, (0.0, 900.0), (900.0, 1200.0))
    assert rep.t_eval.size == rep.observed.size == rep.predicted.size
    assert np.all(rep.band_lo <= rep.band_hi)
    assert rep.t_eval[-1] == pytest.approx(1200.0)
    assert rep.fit is not None and rep.fit.converged
