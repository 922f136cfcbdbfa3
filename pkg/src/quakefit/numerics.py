"""Shared optimization, quadrature and special-function kernel.

All fitting modules funnel through `minimize`; positivity bounds are
enforced by optimizing the log of the constrained coordinates, which keeps
the line searches away from the K/c/p/mu/alpha boundaries.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import optimize as _sopt
from scipy import special as _sspec
from scipy.integrate import quad as _quad

from .errors import IntegrationError, InvalidStartError

__all__ = [
    "OptimResult", "FitResult", "minimize", "integrate", "integrate2d",
    "std_normal_cdf", "std_normal_logcdf", "hessian_from_grad",
    "standard_errors",
]


@dataclass
class OptimResult:
    x_opt: np.ndarray
    f_opt: float
    n_eval: int
    converged: bool
    hessian_approx: np.ndarray
    se: np.ndarray
    hessian_pd: bool
    message: str = ""


@dataclass
class FitResult:
    """Model-level fit record shared by every fitting module."""
    params: object
    loglik: float
    aic: float
    se: dict
    window: tuple
    converged: bool
    n_eval: int = 0
    extra: dict = field(default_factory=dict)


def _make_transform(bounds, x0):
    """Per-coordinate maps between external and internal coordinates.

    Positivity intervals (0, None) go to log space; anything else stays
    linear (finite boxes are passed to the optimizer as-is).
    """
    n = len(x0)
    is_log = np.zeros(n, dtype=bool)
    box = []
    if bounds is not None:
        if len(bounds) != n:
            raise ValueError("bounds length does not match x0")
        for k, b in enumerate(bounds):
            if b is None:
                box.append((None, None))
                continue
            lo, hi = b
            if lo is not None and hi is not None and lo >= hi:
                raise ValueError(f"inconsistent bounds for coordinate {k}: {b}")
            if lo is not None and lo == 0.0 and hi is None:
                is_log[k] = True
                box.append((None, None))
            else:
                box.append((lo, hi))
    else:
        box = [(None, None)] * n

    def to_internal(x):
        z = np.array(x, dtype=float)
        z[is_log] = np.log(z[is_log])
        return z

    def to_external(z):
        x = np.array(z, dtype=float)
        x[is_log] = np.exp(x[is_log])
        return x

    def grad_chain(z):
        # d external / d internal, diagonal
        g = np.ones_like(z)
        g[is_log] = np.exp(z[is_log])
        return g

    any_box = any(b != (None, None) for b in box)
    return to_internal, to_external, grad_chain, (box if any_box else None)


def minimize(objective: Callable, x0: Sequence[float],
             bounds: Optional[Sequence] = None, tol: float = 1e-8,
             jac=None, max_eval: int = 100000, restarts: int = 1,
             compute_hessian: bool = True) -> OptimResult:
    """Minimize a scalar function of a parameter vector.

    bounds: per-parameter (lo, hi) or None.  (0, None) entries are handled
    by an internal log transform.  jac=True means `objective` returns
    (value, gradient); a callable jac is used as a separate gradient.
    Derivative-free calls run a simplex search with one restart and fall
    back to quasi-Newton with finite-difference gradients if the simplex
    stalls; calls with gradients lead with quasi-Newton.  restarts=0 and
    compute_hessian=False trim work for callers that need neither.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    to_int, to_ext, chain, box = _make_transform(bounds, x0)
    n_eval = [0]

    fused = jac is True

    def f_int(z):
        n_eval[0] += 1
        v = objective(to_ext(z))
        if fused:
            v = v[0]
        return v if np.isfinite(v) else np.inf

    def fg_int(z):
        n_eval[0] += 1
        x = to_ext(z)
        if fused:
            v, g = objective(x)
        else:
            v = objective(x)
            g = jac(x)
        g = np.asarray(g, dtype=float) * chain(z)
        if not np.isfinite(v):
            return np.inf, np.zeros_like(g)
        return v, g

    z0 = to_int(x0)
    f00 = f_int(z0)
    if not np.isfinite(f00):
        raise InvalidStartError("objective is not finite at the initial point")

    use_grad = jac is not None
    converged = False
    message = ""

    def budget():
        return max(max_eval - n_eval[0], 0)

    if use_grad:
        res = _sopt.minimize(fg_int, z0, jac=True, method="L-BFGS-B",
                             bounds=box, tol=tol,
                             options={"maxfun": max_eval, "maxiter": max_eval})
        z_best, f_best = res.x, res.fun
        converged = bool(res.success)
        message = str(res.message)
        if not converged and budget() > 0:
            res2 = _sopt.minimize(f_int, z_best, method="Nelder-Mead",
                                  bounds=box, options={
                                      "xatol": tol, "fatol": tol,
                                      "maxfev": min(budget(), 4000)})
            if res2.fun <= f_best:
                z_best, f_best = res2.x, res2.fun
                converged = bool(res2.success)
                message = str(res2.message)
    else:
        res = _sopt.minimize(f_int, z0, method="Nelder-Mead", bounds=box,
                             options={"xatol": tol, "fatol": tol,
                                      "maxfev": max_eval})
        z_best, f_best = res.x, res.fun
        converged = bool(res.success)
        message = str(res.message)
        for _ in range(restarts):
            if budget() <= 0:
                break
            # restart from the incumbent; a fresh simplex escapes stalls
            res = _sopt.minimize(f_int, z_best, method="Nelder-Mead",
                                 bounds=box,
                                 options={"xatol": tol, "fatol": tol,
                                          "maxfev": budget()})
            if res.fun <= f_best:
                stalled = f_best - res.fun > max(tol, 1e-10) * (1.0 + abs(f_best))
                z_best, f_best = res.x, res.fun
                converged = bool(res.success)
                message = str(res.message)
                if stalled and budget() > 0:
                    # simplex was still moving: polish with quasi-Newton
                    res = _sopt.minimize(f_int, z_best, method="L-BFGS-B",
                                         bounds=box, tol=tol,
                                         options={"maxfun": budget()})
                    if res.fun <= f_best:
                        z_best, f_best = res.x, res.fun
                        converged = bool(res.success) or converged

    x_opt = to_ext(z_best)
    if compute_hessian:
        if use_grad:
            H = hessian_from_grad(
                lambda x: fg_int(to_int(x))[1] / chain(to_int(x)), x_opt)
        else:
            H = _hessian_fd(lambda x: f_int(to_int(x)), x_opt)
        se, pd_ok = standard_errors(H)
    else:
        H = np.full((x0.size, x0.size), np.nan)
        se, pd_ok = np.full(x0.size, np.nan), False
    return OptimResult(x_opt=x_opt, f_opt=float(f_best), n_eval=n_eval[0],
                       converged=converged, hessian_approx=H, se=se,
                       hessian_pd=pd_ok, message=message)


def _hessian_fd(f, x, rel_step: float = 3e-5):
    """Central second differences; symmetric by construction."""
    x = np.asarray(x, dtype=float)
    n = x.size
    h = rel_step * np.maximum(np.abs(x), 1.0)
    H = np.empty((n, n))
    f0 = f(x)
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = h[i]
        fpp = f(x + ei)
        fmm = f(x - ei)
        H[i, i] = (fpp - 2.0 * f0 + fmm) / h[i] ** 2
        for j in range(i + 1, n):
            ej = np.zeros(n)
            ej[j] = h[j]
            fa = f(x + ei + ej)
            fb = f(x + ei - ej)
            fc = f(x - ei + ej)
            fd = f(x - ei - ej)
            H[i, j] = H[j, i] = (fa - fb - fc + fd) / (4.0 * h[i] * h[j])
    return H


def hessian_from_grad(grad, x, rel_step: float = 1e-5):
    """Hessian by central differences of an analytic gradient."""
    x = np.asarray(x, dtype=float)
    n = x.size
    h = rel_step * np.maximum(np.abs(x), 1.0)
    H = np.empty((n, n))
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = h[i]
        gp = np.asarray(grad(x + ei), dtype=float)
        gm = np.asarray(grad(x - ei), dtype=float)
        H[i] = (gp - gm) / (2.0 * h[i])
    return 0.5 * (H + H.T)


def standard_errors(hessian):
    """sqrt(diag(H^-1)); NaN vector and a flag when H is not pos. definite."""
    n = hessian.shape[0]
    try:
        L = np.linalg.cholesky(hessian)
    except np.linalg.LinAlgError:
        return np.full(n, np.nan), False
    inv = np.linalg.inv(L.T) @ np.linalg.inv(L)
    d = np.diag(inv)
    if np.any(d <= 0):
        return np.full(n, np.nan), False
    return np.sqrt(d), True


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------

def _checked(f):
    def g(x):
        v = f(x)
        if not np.all(np.isfinite(v)):
            raise IntegrationError(f"non-finite integrand sample at x={x!r}")
        return v
    return g


def integrate(f: Callable[[float], float], a: float, b: float,
              tol: float = 1e-10) -> float:
    """Adaptive quadrature of f on [a, b]; b may be +inf.

    Infinite upper limits use the change of variable u = x/(1+x) on the
    positive part.  Non-finite samples raise IntegrationError.
    """
    if a > b:
        raise ValueError("integration interval is inverted")
    g = _checked(f)
    if not math.isinf(b):
        val, _ = _quad(g, a, b, epsabs=tol, epsrel=tol, limit=200)
        return val
    total = 0.0
    if a < 0.0:
        val, _ = _quad(g, a, 0.0, epsabs=tol, epsrel=tol, limit=200)
        total += val
        a = 0.0
    # u = x/(1+x): x = u/(1-u), dx = du/(1-u)^2
    u0 = a / (1.0 + a)

    def h(u):
        w = 1.0 - u
        return g(u / w) / (w * w)

    val, _ = _quad(h, u0, 1.0, epsabs=tol, epsrel=tol, limit=200)
    return total + val


# Gauss-Legendre nodes for the 2-D panels
_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)
_GL_X2, _GL_W2 = np.polynomial.legendre.leggauss(16)


def _panel_est(f, x0, x1, y0, y1, nodes, weights):
    cx = 0.5 * (x0 + x1)
    hx = 0.5 * (x1 - x0)
    cy = 0.5 * (y0 + y1)
    hy = 0.5 * (y1 - y0)
    X, Y = np.meshgrid(cx + hx * nodes, cy + hy * nodes, indexing="ij")
    V = f(X, Y)
    if not np.all(np.isfinite(V)):
        raise IntegrationError("non-finite integrand sample in 2-D panel")
    return hx * hy * float((weights[:, None] * weights[None, :] * V).sum())


def integrate2d(f, xlim, ylim, tol: float = 1e-9, max_panels: int = 20000):
    """Adaptive tensor-product quadrature of f(X, Y) over a rectangle.

    f must accept array arguments (meshgrid evaluation).  Panels are kept
    in a worst-first heap and split in four until the summed error
    estimate is below tol * (1 + |integral|).
    """
    x0, x1 = xlim
    y0, y1 = ylim
    if x0 > x1 or y0 > y1:
        raise ValueError("integration rectangle is inverted")
    if x0 == x1 or y0 == y1:
        return 0.0

    def estimates(a, b, cc, dd):
        coarse = _panel_est(f, a, b, cc, dd, _GL_X, _GL_W)
        fine = _panel_est(f, a, b, cc, dd, _GL_X2, _GL_W2)
        return fine, abs(fine - coarse)

    import heapq
    val, err = estimates(x0, x1, y0, y1)
    heap = [(-err, x0, x1, y0, y1, val, err)]
    total = val
    total_err = err
    n_panels = 1
    while total_err > tol * (1.0 + abs(total)) and n_panels < max_panels:
        neg, a, b, cc, dd, v, e = heapq.heappop(heap)
        total -= v
        total_err -= e
        xm = 0.5 * (a + b)
        ym = 0.5 * (cc + dd)
        for (qa, qb, qc, qd) in ((a, xm, cc, ym), (xm, b, cc, ym),
                                 (a, xm, ym, dd), (xm, b, ym, dd)):
            v2, e2 = estimates(qa, qb, qc, qd)
            total += v2
            total_err += e2
            heapq.heappush(heap, (-e2, qa, qb, qc, qd, v2, e2))
            n_panels += 1
    if total_err > tol * (1.0 + abs(total)) and n_panels >= max_panels:
        raise IntegrationError("2-D quadrature failed to reach tolerance")
    return total


def std_normal_cdf(x):
    """Standard normal CDF, vectorized, |error| < 1e-12 over the real line."""
    return _sspec.ndtr(x)


def std_normal_logcdf(x):
    """log of the standard normal CDF (stable far into the lower tail)."""
    return _sspec.log_ndtr(x)
