"""Magnitude-frequency law, b-value estimation and detection-rate models.

The magnitude intensity is 10^(a - b M) = A exp(-beta M); above the
completeness cutoff the magnitudes are exponential with rate beta = b ln 10.
Detection is modelled as thinning by q(M) = Phi((M - mu_d) / sigma_d).
"""

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import numerics
from .aftershock import OmoriParams
from .numerics import std_normal_cdf, std_normal_logcdf

LN10 = math.log(10.0)
LOG10_E = 1.0 / LN10


@dataclass
class GrParams:
    b: float
    mc: float
    se_b: float = math.nan
    a_rate: Optional[float] = None    # log10 of the total rate above mc
    beta: float = field(init=False)

    def __post_init__(self):
        if self.b <= 0:
            raise ValueError("b must be positive")
        self.beta = self.b * LN10


@dataclass
class DetectionParams:
    mu_d: float
    sigma_d: float

    def __post_init__(self):
        if self.sigma_d <= 0:
            raise ValueError("sigma_d must be positive")


@dataclass
class EarlyDetectionModel:
    """Joint early-aftershock rate with an improving detection magnitude.

    The fully-detected rate is 10^(a + b (m0 - M)) / (t + c)^p with b from
    `gr` (a from gr.a_rate), (c, p) from `omori`, thinned by a Gaussian
    detection curve whose 50% point relaxes exponentially from mu0 to
    mu_inf with e-folding time tau_d.
    """
    gr: GrParams
    omori: OmoriParams
    m0: float
    mu0: float
    mu_inf: float
    tau_d: float
    sigma_d: float

    def __post_init__(self):
        if self.tau_d <= 0:
            raise ValueError("tau_d must be positive")
        if self.mu0 < self.mu_inf:
            raise ValueError("mu0 must be >= mu_inf (detection improves)")

    def mu_t(self, t):
        return self.mu_inf + (self.mu0 - self.mu_inf) * np.exp(-np.asarray(t) / self.tau_d)


def fit_gr(mags: Sequence[float], mc: float, bin: float = 0.0) -> GrParams:
    """Maximum-likelihood b-value with the half-bin-width correction.

    b = log10(e) / (mean(M) - mc + bin/2); bin=0 recovers the continuous
    estimator.  se_b = b / sqrt(N).
    """
    m = np.asarray(mags, dtype=float)
    if m.size < 2:
        raise ValueError("need at least 2 magnitudes")
    if bin < 0:
        raise ValueError("bin width must be >= 0")
    if np.any(m < mc - bin / 2.0 - 1e-9):
        raise ValueError("magnitudes below the cutoff mc")
    denom = float(m.mean()) - mc + bin / 2.0
    if denom <= 0:
        raise ValueError("degenerate magnitude sample: mean(M) <= mc - bin/2")
    b = LOG10_E / denom
    se = b / math.sqrt(m.size)
    a = math.log10(m.size) + b * mc
    return GrParams(b=b, mc=mc, se_b=se, a_rate=a)


def sample_gr(n: int, beta: float, mc: float, rng) -> np.ndarray:
    """i.i.d. magnitudes above mc with exponential rate beta."""
    return mc + rng.exponential(1.0 / beta, size=n)


def detection_prob(m, params: DetectionParams):
    """q(M) = Phi((M - mu_d) / sigma_d)."""
    return std_normal_cdf((np.asarray(m, dtype=float) - params.mu_d) / params.sigma_d)


@dataclass
class DetectedMagnitudeFit:
    beta: float
    detection: DetectionParams
    loglik: float
    se: dict
    converged: bool
    n: int = 0


def _detected_logdensity(m, beta, mu_d, sigma_d):
    # density prop. to exp(-beta M) Phi((M-mu_d)/sigma_d); the closed-form
    # normalizer exp(-beta mu_d + beta^2 sigma_d^2 / 2) / beta follows from
    # integration by parts and the Gaussian MGF.
    logz = -beta * mu_d + 0.5 * beta ** 2 * sigma_d ** 2 - math.log(beta)
    return -beta * m + std_normal_logcdf((m - mu_d) / sigma_d) - logz


def fit_detected_magnitudes(mags: Sequence[float]) -> DetectedMagnitudeFit:
    """Joint MLE of (beta, mu_d, sigma_d) for thinned G-R magnitudes."""
    m = np.asarray(mags, dtype=float)
    if m.size < 50:
        raise ValueError("need at least 50 magnitudes spanning the roll-off")

    # initials: beta from the upper half (fully detected), mu_d near the
    # histogram mode where the roll-off bends the distribution over
    med = float(np.median(m))
    upper = m[m >= med]
    beta0 = 1.0 / max(float(upper.mean()) - med, 0.05)
    hist, edges = np.histogram(m, bins=30)
    mu0 = 0.5 * (edges[np.argmax(hist)] + edges[np.argmax(hist) + 1])

    def nll(x):
        beta, mu_d, sigma_d = x
        return -float(np.sum(_detected_logdensity(m, beta, mu_d, sigma_d)))

    res = numerics.minimize(nll, [beta0, mu0, 0.3],
                            bounds=[(0.0, None), None, (0.0, None)],
                            tol=1e-9)
    beta, mu_d, sigma_d = res.x_opt
    se = dict(zip(("beta", "mu_d", "sigma_d"), res.se))
    return DetectedMagnitudeFit(beta=float(beta),
                                detection=DetectionParams(float(mu_d), float(sigma_d)),
                                loglik=-res.f_opt, se=se,
                                converged=res.converged, n=m.size)


def early_aftershock_intensity(t, m, model: EarlyDetectionModel):
    """Observed early-aftershock rate (events/day/magnitude) at lag t."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("t must be positive (days since mainshock)")
    if model.gr.a_rate is None:
        raise ValueError("model.gr.a_rate is required")
    full = 10.0 ** (model.gr.a_rate + model.gr.b * (model.m0 - np.asarray(m))) \
        / (t + model.omori.c_off) ** model.omori.p_exp
    q = std_normal_cdf((np.asarray(m) - model.mu_t(t)) / model.sigma_d)
    return full * q
