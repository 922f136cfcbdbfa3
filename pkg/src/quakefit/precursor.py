"""Multi-precursor probability combination and covariate point-process
models with AIC-based causality testing.

The exact combination rule for N conditionally independent anomalies is

    P = [ 1 + prod_k (1/P_k - 1) / (1/P_0 - 1)^(N-1) ]^-1,

approximated for small probabilities by the product-of-gains rule
P0 prod_k (P_k / P0).  The covariate intensity family is

    lambda(t) = mu + sum_j a_j t^j + sum_{t_i<t} g(t - t_i)
                + sum_{s<t} h(t - s) xi_s^a ds + Fourier terms,

with single-exponential kernels g and h and the covariate integral
discretized at the series' native sampling step (rectangle rule).
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import numerics
from .errors import QuakefitError
from .numerics import FitResult

ANNUAL_PERIOD_DAYS = 365.24


@dataclass
class PrecursorSet:
    p0: float
    conditionals: Sequence[float]

    def __post_init__(self):
        probs = [self.p0, *self.conditionals]
        if len(self.conditionals) < 1:
            raise ValueError("need at least one conditional probability")
        if any(not 0.0 < p < 1.0 for p in probs):
            raise ValueError("probabilities must lie strictly in (0, 1)")


def combine_exact(pset: PrecursorSet) -> float:
    """Bayes-exact combined probability under conditional independence."""
    n = len(pset.conditionals)
    log_odds = sum(math.log1p(-p) - math.log(p) for p in pset.conditionals)
    log_base = math.log1p(-pset.p0) - math.log(pset.p0)
    ratio = math.exp(log_odds - (n - 1) * log_base)
    return 1.0 / (1.0 + ratio)


@dataclass
class CombinedProbability:
    p: float
    gains: np.ndarray
    total_gain: float


def combine_approx(pset: PrecursorSet) -> CombinedProbability:
    """Product-of-gains approximation P0 prod(P_k / P0), with the gains."""
    gains = np.array([p / pset.p0 for p in pset.conditionals])
    total = float(np.prod(gains))
    return CombinedProbability(p=pset.p0 * total, gains=gains, total_gain=total)


@dataclass
class ExpKernel:
    amplitude: float
    decay: float

    def __post_init__(self):
        if self.decay <= 0:
            raise ValueError("decay rate must be positive")


@dataclass
class CovariateModel:
    mu0: float
    trend: np.ndarray = field(default_factory=lambda: np.zeros(0))
    self_kernel: Sequence[ExpKernel] = field(default_factory=list)
    transfer_kernel: Optional[ExpKernel] = None
    covariate_power: float = 1.0
    fourier: np.ndarray = field(default_factory=lambda: np.zeros(0))
    period: float = ANNUAL_PERIOD_DAYS

    def __post_init__(self):
        self.trend = np.asarray(self.trend, dtype=float)
        self.fourier = np.asarray(self.fourier, dtype=float)
        if self.fourier.size % 2:
            raise ValueError("fourier coefficients come in (cos, sin) pairs")


@dataclass
class CovariateSeries:
    """Sampled geophysical series xi(t) on a uniform grid."""
    t: np.ndarray
    value: np.ndarray

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.value = np.asarray(self.value, dtype=float)
        if self.t.size != self.value.size:
            raise ValueError("series columns differ in length")
        if self.t.size >= 2:
            steps = np.diff(self.t)
            if np.any(steps <= 0):
                raise ValueError("series must be strictly increasing in time")
            self.dt = float(np.median(steps))
        else:
            self.dt = 1.0


def _trend_value(trend, t):
    out = np.zeros_like(np.asarray(t, dtype=float))
    for j, a in enumerate(trend, start=1):
        out = out + a * np.asarray(t) ** j
    return out


def _fourier_value(coefs, period, t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    for k in range(coefs.size // 2):
        w = 2.0 * math.pi * (k + 1) * t / period
        out = out + coefs[2 * k] * np.cos(w) + coefs[2 * k + 1] * np.sin(w)
    return out


def covariate_intensity(t, event_history, series: Optional[CovariateSeries],
                        model: CovariateModel):
    """lambda(t) for scalar or array t; negative values raise."""
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    lam = model.mu0 + _trend_value(model.trend, t_arr) \
        + _fourier_value(model.fourier, model.period, t_arr)
    hist = np.asarray(event_history, dtype=float) if event_history is not None \
        else np.empty(0)
    for ker in model.self_kernel:
        dt = t_arr[:, None] - hist[None, :]
        lam = lam + np.where(dt > 0, ker.amplitude * np.exp(-ker.decay * np.where(dt > 0, dt, 0.0)), 0.0).sum(axis=1)
    if model.transfer_kernel is not None:
        if series is None:
            raise ValueError("transfer kernel configured but no series given")
        ker = model.transfer_kernel
        ds = t_arr[:, None] - series.t[None, :]
        xi_a = np.power(np.maximum(series.value, 0.0), model.covariate_power)
        lam = lam + np.where(
            ds > 0,
            ker.amplitude * np.exp(-ker.decay * np.where(ds > 0, ds, 0.0))
            * xi_a[None, :] * series.dt,
            0.0).sum(axis=1)
    if np.any(lam < 0):
        bad = float(t_arr[np.argmin(lam)])
        raise QuakefitError(f"negative intensity at t={bad:g}")
    return float(lam[0]) if np.isscalar(t) else lam


def _covariate_loglik(times, window, series, model):
    """Sum log lambda(t_i) - int_S^T lambda, all terms in closed form."""
    S, T = window
    times = np.asarray(times, dtype=float)
    inside = times[(times > S) & (times <= T)]
    lam_ev = covariate_intensity(inside, times, series, model)
    if np.any(lam_ev <= 0):
        return -np.inf
    ll = float(np.log(lam_ev).sum())
    integral = model.mu0 * (T - S)
    for j, a in enumerate(model.trend, start=1):
        integral += a * (T ** (j + 1) - S ** (j + 1)) / (j + 1)
    coefs = model.fourier
    for k in range(coefs.size // 2):
        w = 2.0 * math.pi * (k + 1) / model.period
        integral += coefs[2 * k] / w * (math.sin(w * T) - math.sin(w * S))
        integral += -coefs[2 * k + 1] / w * (math.cos(w * T) - math.cos(w * S))
    for ker in model.self_kernel:
        dt0 = np.maximum(S - times, 0.0)
        dt1 = T - times
        live = dt1 > 0
        integral += ker.amplitude / ker.decay * float(
            (np.exp(-ker.decay * dt0[live]) - np.exp(-ker.decay * dt1[live])).sum())
    if model.transfer_kernel is not None:
        ker = model.transfer_kernel
        xi_a = np.power(np.maximum(series.value, 0.0), model.covariate_power)
        dt0 = np.maximum(S - series.t, 0.0)
        dt1 = T - series.t
        live = dt1 > 0
        integral += ker.amplitude / ker.decay * series.dt * float(
            (xi_a[live] * (np.exp(-ker.decay * dt0[live])
                           - np.exp(-ker.decay * dt1[live]))).sum())
    # the trend polynomial can drive lambda negative between events
    grid = np.linspace(S, T, 201)
    lam_grid = covariate_intensity(grid, times, series, model)
    if np.any(lam_grid < 0):
        return -np.inf
    return ll - integral


def _build_model(x, layout, series, trend_order, harmonics, period):
    i = 0
    mu0 = x[i]; i += 1
    trend = x[i:i + trend_order]; i += trend_order
    self_k = []
    if layout["self"]:
        self_k = [ExpKernel(x[i], x[i + 1])]
        i += 2
    transfer = None
    power = 1.0
    if layout["transfer"]:
        transfer = ExpKernel(x[i], x[i + 1])
        i += 2
        if layout["power"]:
            power = x[i]; i += 1
    fourier = x[i:i + 2 * harmonics]; i += 2 * harmonics
    return CovariateModel(mu0=mu0, trend=trend, self_kernel=self_k,
                          transfer_kernel=transfer, covariate_power=power,
                          fourier=np.asarray(fourier), period=period)


def _fit_family(times, window, series, with_transfer, trend_order=0,
                harmonics=0, self_kernel=True, fit_power=True,
                period=ANNUAL_PERIOD_DAYS, tol=1e-7) -> FitResult:
    S, T = window
    times = np.asarray(times, dtype=float)
    n = int(np.sum((times > S) & (times <= T)))
    layout = {"self": self_kernel, "transfer": with_transfer,
              "power": with_transfer and fit_power}
    rate0 = max(n / (T - S), 1e-8)
    x0 = [0.5 * rate0]
    bounds = [(0.0, None)]
    names = ["mu0"]
    for j in range(trend_order):
        x0.append(0.0)
        bounds.append(None)
        names.append(f"trend_{j + 1}")
    if self_kernel:
        x0 += [0.3 * rate0 if n else 1e-4, 1.0]
        bounds += [(0.0, None), (0.0, None)]
        names += ["g_amp", "g_decay"]
    if with_transfer:
        mean_xi = float(np.mean(np.maximum(series.value, 0.0))) if series else 1.0
        x0 += [0.2 * rate0 / max(mean_xi, 1e-9), 0.2]
        bounds += [(0.0, None), (0.0, None)]
        names += ["h_amp", "h_decay"]
        if fit_power:
            x0.append(1.0)
            bounds.append((0.0, None))
            names.append("power")
    for k in range(harmonics):
        x0 += [0.0, 0.0]
        bounds += [None, None]
        names += [f"cos_{k + 1}", f"sin_{k + 1}"]

    def nll(x):
        try:
            model = _build_model(x, layout, series, trend_order, harmonics,
                                 period)
            ll = _covariate_loglik(times, window, series, model)
        except (QuakefitError, ValueError):
            return np.inf
        return -ll if np.isfinite(ll) else np.inf

    res = numerics.minimize(nll, x0, bounds=bounds, tol=tol)
    model = _build_model(res.x_opt, layout, series, trend_order, harmonics,
                         period)
    ll = -res.f_opt
    k_par = len(x0)
    return FitResult(params=model, loglik=ll, aic=-2 * ll + 2 * k_par,
                     se=dict(zip(names, res.se)), window=(S, T),
                     converged=res.converged, n_eval=res.n_eval,
                     extra={"names": names, "x": res.x_opt})


@dataclass
class CausalityTest:
    with_transfer: FitResult
    without_transfer: FitResult
    delta_aic: float
    significant: bool     # delta_aic < -2 flags the covariate as precursor


def fit_covariate(times, series: CovariateSeries, window,
                  trend_order=0, self_kernel=True, fit_power=True,
                  min_events: int = 30) -> CausalityTest:
    """Fit the nested pair (with / without transfer term) and compare AIC.

    Swapping the roles of the two series (opposite causality) is done by
    the caller exchanging inputs.
    """
    S, T = window
    t = np.asarray(times, dtype=float)
    n = int(np.sum((t > S) & (t <= T)))
    if n < min_events:
        raise ValueError(f"need >= {min_events} events, got {n}")
    without = _fit_family(t, window, series, with_transfer=False,
                          trend_order=trend_order, self_kernel=self_kernel)
    with_t = _fit_family(t, window, series, with_transfer=True,
                         trend_order=trend_order, self_kernel=self_kernel,
                         fit_power=fit_power)
    delta = with_t.aic - without.aic
    return CausalityTest(with_transfer=with_t, without_transfer=without,
                         delta_aic=delta, significant=delta < -2.0)


def select_trend_order(times, series, window, orders=(0, 1, 2, 3), **kw):
    """Pick the trend degree by AIC over the no-transfer family."""
    fits = [_fit_family(np.asarray(times, float), window, series,
                        with_transfer=False, trend_order=j, **kw)
            for j in orders]
    best = int(np.argmin([f.aic for f in fits]))
    return orders[best], fits[best]


@dataclass
class StationCombination:
    intensity: Callable
    gain: Callable
    base_rate: float


def combine_stations(station_intensities: Sequence[Callable],
                     station_means: Sequence[float],
                     base_rate) -> StationCombination:
    """Multiply per-station probability gains onto a common base rate.

    Declustered mode passes scalar base_rate (the common region's mean
    rate); clustered mode passes a callable base intensity lambda_0(t|H)
    and per-station callables already conditioned on their histories.
    """
    if len(station_intensities) != len(station_means):
        raise ValueError("one mean per station intensity required")
    if not station_intensities:
        raise ValueError("need at least one station model")
    means = np.asarray(station_means, dtype=float)
    if np.any(means <= 0):
        raise QuakefitError("station mean intensities must be positive")
    base_fn = base_rate if callable(base_rate) else (lambda t: base_rate)

    def gain(t):
        g = np.ones_like(np.asarray(t, dtype=float))
        base = np.asarray(base_fn(t), dtype=float)
        for fn, mean in zip(station_intensities, means):
            lam_m = np.asarray(fn(t), dtype=float)
            if np.any(lam_m <= 0) or np.any(base <= 0):
                raise QuakefitError("station intensity must stay positive")
            if callable(base_rate):
                g = g * (lam_m / base)
            else:
                g = g * (lam_m / mean)
        return g

    def intensity(t):
        return np.asarray(base_fn(t), dtype=float) * gain(t)

    base_scalar = float(base_rate) if not callable(base_rate) else math.nan
    return StationCombination(intensity=intensity, gain=gain,
                              base_rate=base_scalar)


def fit_periodic(times, window, period: float = ANNUAL_PERIOD_DAYS,
                 harmonics: int = 1, trend_order: int = 0,
                 self_kernel: bool = True) -> FitResult:
    """Joint MLE of trend + Fourier modulation + optional clustering term.

    Reports each harmonic's amplitude and phase (delta method for the
    amplitude SE) in `extra`.
    """
    S, T = window
    if T - S < 3 * period:
        raise ValueError("window must span at least three periods")
    fit = _fit_family(np.asarray(times, float), window, None,
                      with_transfer=False, trend_order=trend_order,
                      harmonics=harmonics, self_kernel=self_kernel,
                      period=period)
    names = fit.extra["names"]
    x = fit.extra["x"]
    amps = []
    for k in range(harmonics):
        c = x[names.index(f"cos_{k + 1}")]
        s = x[names.index(f"sin_{k + 1}")]
        amp = math.hypot(c, s)
        phase = math.atan2(s, c)
        se_c = fit.se.get(f"cos_{k + 1}", math.nan)
        se_s = fit.se.get(f"sin_{k + 1}", math.nan)
        if amp > 0 and np.isfinite(se_c) and np.isfinite(se_s):
            se_amp = math.sqrt((c * se_c) ** 2 + (s * se_s) ** 2) / amp
        else:
            se_amp = math.nan
        amps.append({"amplitude": amp, "phase": phase, "se_amplitude": se_amp})
    fit.extra["harmonics"] = amps
    return fit
