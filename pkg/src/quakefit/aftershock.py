"""Omori-Utsu decay fitting and Reasenberg-Jones aftershock forecasts."""

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import numerics
from .numerics import FitResult

LN10 = math.log(10.0)


@dataclass
class OmoriParams:
    k_prod: float
    c_off: float
    p_exp: float

    def __post_init__(self):
        if self.k_prod <= 0 or self.c_off <= 0 or self.p_exp <= 0:
            raise ValueError("K, c and p must all be positive")


@dataclass
class RjParams:
    a_rj: float
    b_rj: float
    c_rj: float
    p_rj: float
    m0: float

    def __post_init__(self):
        if self.b_rj <= 0 or self.c_rj <= 0:
            raise ValueError("b and c must be positive")


def omori_rate(t, params: OmoriParams):
    """Aftershock rate K/(t+c)^p at lag t >= 0 (events/day)."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be >= 0 (days since mainshock)")
    return params.k_prod / (t + params.c_off) ** params.p_exp


def omori_integral(t1, t2, params: OmoriParams) -> float:
    """Closed-form expected count int_{t1}^{t2} K/(t+c)^p dt.

    The p=1 case switches to the logarithmic antiderivative.
    """
    if t1 < 0 or t2 < t1:
        raise ValueError("need 0 <= t1 <= t2")
    K, c, p = params.k_prod, params.c_off, params.p_exp
    if abs(p - 1.0) < 1e-12:
        return K * (math.log(t2 + c) - math.log(t1 + c))
    return K * ((t2 + c) ** (1.0 - p) - (t1 + c) ** (1.0 - p)) / (1.0 - p)


def _omori_h(u, c, p):
    # int_0^u (s+c)^-p ds, vectorized
    u = np.asarray(u, dtype=float)
    if abs(p - 1.0) < 1e-12:
        return np.log(u + c) - math.log(c)
    return ((u + c) ** (1.0 - p) - c ** (1.0 - p)) / (1.0 - p)


def omori_loglik(times: np.ndarray, params: OmoriParams, window) -> float:
    """Nonstationary-Poisson log-likelihood of Eq.-(2)-type decay."""
    S, T = window
    t = np.asarray(times, dtype=float)
    inside = t[(t > S) & (t <= T)]
    K, c, p = params.k_prod, params.c_off, params.p_exp
    return (inside.size * math.log(K) - p * float(np.log(inside + c).sum())
            - omori_integral(S, T, params))


def fit_omori(times: Sequence[float], window) -> FitResult:
    """MLE of (K, c, p) for an aftershock sequence in (S, T].

    K is profiled out in closed form (K = N / int (t+c)^-p dt); the
    reported covariance is for the full three-parameter likelihood.
    """
    S, T = window
    if not 0 <= S < T:
        raise ValueError("need 0 <= S < T")
    t = np.sort(np.asarray(times, dtype=float))
    t = t[(t > S) & (t <= T)]
    n = t.size
    if n < 10:
        raise ValueError("need at least 10 events to fit the decay")
    if np.ptp(t) == 0:
        raise ValueError("all events at one instant; decay is unidentified")

    def prof_nll(x):
        c, p = x
        denom = omori_integral(S, T, _quiet_params(1.0, c, p))
        if denom <= 0:
            return np.inf
        K = n / denom
        return -(n * math.log(K) - p * float(np.log(t + c).sum()) - n)

    res = numerics.minimize(prof_nll, [0.05, 1.1],
                            bounds=[(0.0, None), (0.0, None)], tol=1e-10)
    c_hat, p_hat = res.x_opt
    K_hat = n / omori_integral(S, T, _quiet_params(1.0, c_hat, p_hat))
    params = OmoriParams(K_hat, float(c_hat), float(p_hat))
    ll = omori_loglik(t, params, (S, T))

    def nll3(x):
        return -omori_loglik(t, _quiet_params(*x), (S, T))

    H = numerics._hessian_fd(nll3, np.array([K_hat, c_hat, p_hat]))
    se, _ = numerics.standard_errors(H)
    return FitResult(params=params, loglik=ll, aic=-2.0 * ll + 2.0 * 3,
                     se=dict(zip(("k_prod", "c_off", "p_exp"), se)),
                     window=(S, T), converged=res.converged,
                     n_eval=res.n_eval)


def _quiet_params(K, c, p):
    # OmoriParams without validation overhead during optimization sweeps
    obj = OmoriParams.__new__(OmoriParams)
    obj.k_prod, obj.c_off, obj.p_exp = float(K), float(c), float(p)
    return obj


def simulate_omori(params: OmoriParams, window, rng) -> np.ndarray:
    """Exact sampling by inverse time-rescaling of a unit Poisson stream."""
    S, T = window
    K, c, p = params.k_prod, params.c_off, params.p_exp
    lam0 = omori_integral(0.0, S, params) if S > 0 else 0.0
    lam1 = omori_integral(0.0, T, params)
    out = []
    g = lam0
    while True:
        g += rng.exponential(1.0)
        if g >= lam1:
            break
        x = g / K
        if abs(p - 1.0) < 1e-12:
            u = c * (math.exp(x) - 1.0)
        else:
            u = ((1.0 - p) * x + c ** (1.0 - p)) ** (1.0 / (1.0 - p)) - c
        out.append(u)
    return np.asarray(out)


def rj_intensity(t, m, params: RjParams):
    """Joint aftershock rate 10^(a + b (M0 - m)) / (t + c)^p."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be >= 0")
    return 10.0 ** (params.a_rj + params.b_rj * (params.m0 - np.asarray(m))) \
        / (t + params.c_rj) ** params.p_rj


def rj_equivalent_omori(params: RjParams, m_thresh: float) -> OmoriParams:
    """Omori law for counts above m_thresh implied by the joint intensity."""
    K = 10.0 ** (params.a_rj + params.b_rj * (params.m0 - m_thresh)) \
        / (params.b_rj * LN10)
    return OmoriParams(K, params.c_rj, params.p_rj)


@dataclass
class AftershockForecast:
    probability: float
    n_expected: float
    window: tuple
    m_thresh: float


def forecast_probability(params: RjParams, t_window, m_thresh: float
                         ) -> AftershockForecast:
    """P(at least one aftershock with M >= m_thresh in (t1, t2]).

    Closed form in both variables; returns the expected count as well.
    """
    t1, t2 = t_window
    if not 0 <= t1 < t2:
        raise ValueError("need 0 <= t1 < t2")
    nbar = omori_integral(t1, t2, rj_equivalent_omori(params, m_thresh))
    return AftershockForecast(probability=-math.expm1(-nbar), n_expected=nbar,
                              window=(t1, t2), m_thresh=m_thresh)
