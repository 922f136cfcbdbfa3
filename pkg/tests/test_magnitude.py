import math

import numpy as np
import pytest
from scipy.integrate import quad

from quakefit.aftershock import OmoriParams, rj_intensity, RjParams
from quakefit.magnitude import (DetectionParams, EarlyDetectionModel,
                                GrParams, detection_prob,
                                early_aftershock_intensity,
                                fit_detected_magnitudes, fit_gr, sample_gr)

LOG10_E = math.log10(math.e)


def test_gr_params_beta_identity():
    gr = GrParams(b=1.3, mc=3.0)
    assert gr.beta == 1.3 * math.log(10.0)


def test_fit_gr_algebraic_inversion():
    # mean(M) - mc = log10(e) inverts the continuous Aki formula to b = 1
    mc = 3.0
    mags = [mc + LOG10_E - 0.1, mc + LOG10_E + 0.1]
    gr = fit_gr(mags, mc, bin=0.0)
    assert gr.b == pytest.approx(1.0, abs=1e-12)
    assert gr.se_b == pytest.approx(gr.b / math.sqrt(2))


def test_fit_gr_simulate_and_recover(rng):
    beta = math.log(10.0)
    mags = sample_gr(100_000, beta, 3.0, rng)
    gr = fit_gr(mags, 3.0, bin=0.0)
    assert 0.98 <= gr.b <= 1.02


def test_fit_gr_binned_beats_naive(rng):
    # 0.1-binned magnitudes: events in [mc - 0.05, mc + 0.05) land in bin mc
    beta, mc, width = math.log(10.0), 3.0, 0.1
    bias_corr, bias_naive = [], []
    for _ in range(12):
        cont = mc - width / 2 + rng.exponential(1.0 / beta, 20_000)
        binned = mc + width * np.floor((cont - (mc - width / 2)) / width)
        bias_corr.append(fit_gr(binned, mc, bin=width).b - 1.0)
        bias_naive.append(fit_gr(binned, mc, bin=0.0).b - 1.0)
    assert abs(np.mean(bias_corr)) < abs(np.mean(bias_naive))


def test_fit_gr_errors():
    with pytest.raises(ValueError):
        fit_gr([4.0], 3.0)
    with pytest.raises(ValueError):
        fit_gr([3.0, 3.0], 3.0, bin=0.0)  # degenerate mean
    with pytest.raises(ValueError):
        fit_gr([2.0, 4.0], 3.0)  # below cutoff


def test_detection_prob_half_at_mu():
    par = DetectionParams(mu_d=2.0, sigma_d=0.3)
    assert detection_prob(2.0, par) == pytest.approx(0.5)
    assert detection_prob(50.0, par) == pytest.approx(1.0)
    # frozen from the series-erf oracle
    assert detection_prob(2.0 + 1.96 * 0.3, par) == pytest.approx(
        0.9750021048517794, abs=1e-12)


def test_detection_prob_monotone():
    par = DetectionParams(mu_d=2.0, sigma_d=0.3)
    m = np.linspace(0, 5, 101)
    q = detection_prob(m, par)
    assert np.all(np.diff(q) >= 0)
    par_hi = DetectionParams(mu_d=2.5, sigma_d=0.3)
    assert np.all(detection_prob(m, par_hi) <= q + 1e-15)


def test_detected_normalization_identity_vs_quadrature():
    # Z = exp(-beta mu + beta^2 sigma^2 / 2) / beta
    beta, mu_d, sigma_d = 2.3, 2.0, 0.3
    closed = math.exp(-beta * mu_d + 0.5 * beta ** 2 * sigma_d ** 2) / beta
    val, _ = quad(lambda m: math.exp(-beta * m)
                  * 0.5 * math.erfc(-(m - mu_d) / sigma_d / math.sqrt(2)),
                  -10.0, 40.0, epsabs=1e-13, epsrel=1e-13, limit=200)
    assert val == pytest.approx(closed, rel=1e-10)


def _sample_thinned(rng, n, beta, mu_d, sigma_d):
    # rejection: propose exp(beta) above a low floor, accept w.p. Phi(z)
    floor = mu_d - 6 * sigma_d
    out = []
    while len(out) < n:
        m = floor + rng.exponential(1.0 / beta, 4 * n)
        z = (m - mu_d) / sigma_d
        keep = rng.random(m.size) < 0.5 * (1 + np.vectorize(math.erf)(z / math.sqrt(2)))
        out.extend(m[keep].tolist())
    return np.asarray(out[:n])


def test_fit_detected_fully_detected_matches_gr(rng):
    beta = 2.3
    mags = 3.0 + rng.exponential(1.0 / beta, 5000)
    # detection roll-off far below every observed magnitude
    fit = fit_detected_magnitudes(np.concatenate([mags, [2.9, 2.95]]))
    gr = fit_gr(mags, 3.0, bin=0.0)
    assert fit.beta == pytest.approx(gr.beta, rel=0.02)


def test_fit_detected_simulate_and_recover(rng):
    truth = dict(beta=2.3, mu_d=2.0, sigma_d=0.3)
    mags = _sample_thinned(rng, 10_000, **truth)
    fit = fit_detected_magnitudes(mags)
    assert fit.converged
    for name, true in (("beta", 2.3), ("mu_d", 2.0), ("sigma_d", 0.3)):
        got = fit.beta if name == "beta" else getattr(fit.detection, name)
        assert abs(got - true) < 3 * fit.se[name], name


def test_fit_detected_profile_consistency(rng):
    from quakefit import numerics
    from quakefit.magnitude import _detected_logdensity
    mags = _sample_thinned(rng, 4000, 2.3, 2.0, 0.3)
    joint = fit_detected_magnitudes(mags)

    def nll_profile(x):
        return -float(np.sum(_detected_logdensity(mags, joint.beta, x[0], x[1])))

    prof = numerics.minimize(nll_profile, [1.8, 0.4],
                             bounds=[None, (0.0, None)], tol=1e-10)
    assert prof.x_opt[0] == pytest.approx(joint.detection.mu_d, abs=1e-3)
    assert prof.x_opt[1] == pytest.approx(joint.detection.sigma_d, abs=1e-3)


def _early_model():
    gr = GrParams(b=0.9, mc=3.0, a_rate=4.0)
    om = OmoriParams(k_prod=1.0, c_off=0.05, p_exp=1.1)
    return EarlyDetectionModel(gr=gr, omori=om, m0=6.5, mu0=4.0, mu_inf=2.0,
                               tau_d=0.5, sigma_d=0.35)


def test_early_intensity_asymptote_matches_detection_prob():
    model = _early_model()
    t = 200.0  # >> tau_d
    m = 2.5
    full = 10 ** (model.gr.a_rate + model.gr.b * (model.m0 - m)) \
        / (t + model.omori.c_off) ** model.omori.p_exp
    want = full * detection_prob(m, DetectionParams(model.mu_inf,
                                                    model.sigma_d))
    assert early_aftershock_intensity(t, m, model) == pytest.approx(want,
                                                                    rel=1e-9)


def test_early_intensity_fully_detected_limit_is_rj():
    model = _early_model()
    t, m = 0.3, 8.0  # m far above mu(t): q -> 1
    rj = RjParams(a_rj=model.gr.a_rate, b_rj=model.gr.b,
                  c_rj=model.omori.c_off, p_rj=model.omori.p_exp, m0=model.m0)
    assert early_aftershock_intensity(t, m, model) == pytest.approx(
        float(rj_intensity(t, m, rj)), rel=1e-9)


def test_early_intensity_magnitude_integral_vs_quadrature():
    model = _early_model()
    t = 0.2
    closed, _ = quad(lambda m: early_aftershock_intensity(t, m, model),
                     -4.0, 12.0, epsabs=1e-10, epsrel=1e-10, limit=300)
    grid, _ = quad(lambda m: (10 ** (model.gr.a_rate + model.gr.b * (model.m0 - m))
                              / (t + model.omori.c_off) ** model.omori.p_exp)
                   * 0.5 * math.erfc(-(m - float(model.mu_t(t)))
                                     / model.sigma_d / math.sqrt(2)),
                   -4.0, 12.0, epsabs=1e-10, epsrel=1e-10, limit=300)
    assert closed == pytest.approx(grid, rel=1e-6)


def test_early_intensity_rejects_nonpositive_time():
    with pytest.raises(ValueError):
        early_aftershock_intensity(0.0, 3.0, _early_model())


def test_early_model_validates_improving_detection():
    gr = GrParams(b=0.9, mc=3.0, a_rate=4.0)
    om = OmoriParams(1.0, 0.05, 1.1)
    with pytest.raises(ValueError):
        EarlyDetectionModel(gr=gr, omori=om, m0=6.5, mu0=1.0, mu_inf=2.0,
                            tau_d=0.5, sigma_d=0.3)
