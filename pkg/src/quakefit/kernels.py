"""Hot numeric kernels, in numba and pure-numpy variants.

Every kernel ships as a loop implementation (jit-compiled when numba is
available) and a chunked numpy twin.  The module-level names dispatch on
the QUAKEFIT_NUMBA flag; `get_impl(name, backend)` fetches a specific
variant for cross-checks and benchmarks.

Conventions shared by the ETAS kernels:
  times   sorted occurrence times (days), full history included
  mexc    magnitudes minus the reference magnitude M0
  kappa   per-event triggering weights K * exp(alpha * mexc)
  (S, T)  target window; events at t <= S act as history only
  H(u)    int_0^u (s+c)^-p ds, the Omori kernel antiderivative
"""

import numpy as np

from ._backend import HAVE_NUMBA, USE_NUMBA

_CHUNK_ELEMS = 4_000_000  # pair-matrix budget per numpy block (~32 MB)


# ---------------------------------------------------------------------------
# loop implementations (numba targets)
# ---------------------------------------------------------------------------

def _etas_loglik_grad_loop(times, mexc, S, T, mu, K, c, alpha, p):
    """Eq.-(6)-style log-likelihood and its gradient wrt (mu,K,c,alpha,p).

    Returns (loglik, gmu, gK, gc, galpha, gp, min_lam).  min_lam <= 0
    signals a zero-intensity event; the caller turns that into an error.
    """
    n = times.size
    sum_log = 0.0
    gmu = 0.0
    gK = 0.0
    gc = 0.0
    ga = 0.0
    gp = 0.0
    min_lam = np.inf
    for i in range(n):
        ti = times[i]
        if ti <= S or ti > T:
            continue
        lam = mu
        sK = 0.0
        sc = 0.0
        sa = 0.0
        sp = 0.0
        for j in range(i):
            dt = ti - times[j]
            if dt <= 0.0:
                continue
            dtc = dt + c
            l = np.log(dtc)
            w0 = np.exp(alpha * mexc[j] - p * l)   # kernel without K
            w = K * w0
            lam += w
            sK += w0
            sa += w * mexc[j]
            sc += -p * w / dtc
            sp += -l * w
        if lam < min_lam:
            min_lam = lam
        if lam <= 0.0:
            return -np.inf, 0.0, 0.0, 0.0, 0.0, 0.0, lam
        sum_log += np.log(lam)
        inv = 1.0 / lam
        gmu += inv
        gK += sK * inv
        gc += sc * inv
        ga += sa * inv
        gp += sp * inv
    # integral term, closed form per triggering kernel
    omp = 1.0 - p
    A = mu * (T - S)
    aK = 0.0
    ac = 0.0
    aa = 0.0
    ap = 0.0
    for j in range(n):
        tj = times[j]
        if tj >= T:
            break
        em = np.exp(alpha * mexc[j])
        b = T - tj
        a = S - tj
        if a < 0.0:
            a = 0.0
        ub = b + c
        ua = a + c
        lb = np.log(ub)
        la = np.log(ua)
        eb = np.exp(omp * lb)
        ea = np.exp(omp * la)
        H = (eb - ea) / omp
        dHdc = eb / ub - ea / ua
        dHdp = (-lb * eb + la * ea) / omp + (eb - ea) / (omp * omp)
        A += K * em * H
        aK += em * H
        aa += K * em * mexc[j] * H
        ac += K * em * dHdc
        ap += K * em * dHdp
    loglik = sum_log - A
    return (loglik, gmu - (T - S), gK - aK, gc - ac, ga - aa, gp - ap, min_lam)


def _etas_intensity_loop(ts, times, kappa, mu, c, p):
    """lambda(t|H_t) at each t in ts (history strictly before t)."""
    out = np.empty(ts.size)
    n = times.size
    for k in range(ts.size):
        t = ts[k]
        lam = mu
        for j in range(n):
            dt = t - times[j]
            if dt <= 0.0:
                break
            lam += kappa[j] * (dt + c) ** (-p)
        out[k] = lam
    return out


def _etas_transform_loop(t_eval, times, kappa, S, mu, c, p):
    """Lambda(S, t) at each t in t_eval (all >= S), closed form per event."""
    out = np.empty(t_eval.size)
    n = times.size
    logp1 = abs(p - 1.0) < 1e-12
    omp = 1.0 - p
    for k in range(t_eval.size):
        te = t_eval[k]
        acc = mu * (te - S)
        for j in range(n):
            if times[j] >= te:
                break
            b = te - times[j]
            a = S - times[j]
            if a < 0.0:
                a = 0.0
            if logp1:
                acc += kappa[j] * (np.log(b + c) - np.log(a + c))
            else:
                acc += kappa[j] * ((b + c) ** omp - (a + c) ** omp) / omp
        out[k] = acc
    return out


def _etas_thin_loop(times, mags, kappa, n0, t0, T, mu, K, c, alpha, p, beta,
                    m_ref, u, iu):
    """Ogata thinning with the just-after-last-event piecewise bound.

    Consumes uniforms from u starting at index iu; appends accepted events
    in place.  Returns (n, t, iu, status): status 0 = uniforms exhausted,
    1 = horizon reached, 2 = buffers full.  The uniform-consumption order
    (wait, accept, magnitude) is identical across backends.
    """
    n = n0
    t = t0
    cap = times.size
    while True:
        if n >= cap:
            return n, t, iu, 2
        if iu + 3 > u.size:
            return n, t, iu, 0
        lam_b = mu
        for j in range(n):
            lam_b += kappa[j] * (t - times[j] + c) ** (-p)
        t_new = t - np.log(u[iu]) / lam_b
        iu += 1
        if t_new > T:
            return n, t_new, iu, 1
        lam = mu
        for j in range(n):
            lam += kappa[j] * (t_new - times[j] + c) ** (-p)
        acc = u[iu]
        iu += 1
        t = t_new
        if acc * lam_b <= lam:
            m = m_ref - np.log(u[iu]) / beta
            iu += 1
            times[n] = t
            mags[n] = m
            kappa[n] = K * np.exp(alpha * (m - m_ref))
            n += 1


def _st_loglik_loop(times, lon, lat, mexc, cen_lon, cen_lat, coslat,
                    s11, s12, s22, bg_ev, bg_total, S, T,
                    nu, K, c, alpha, p, d, q, kmdeg):
    """Space-time log-likelihood (value only) and the minimum event intensity.

    Event term per deg^2; each kernel's spatial plane mass (km^2 measure)
    pi d^(1-q) e^(alpha m)/(q-1) is converted to deg^2 with the local
    equirectangular Jacobian at its centroid.
    """
    n = times.size
    sum_log = 0.0
    min_lam = np.inf
    for i in range(n):
        ti = times[i]
        if ti <= S or ti > T:
            continue
        lam = nu * bg_ev[i]
        for j in range(i):
            dt = ti - times[j]
            if dt <= 0.0:
                continue
            dx = (lon[i] - cen_lon[j]) * kmdeg * coslat[j]
            dy = (lat[i] - cen_lat[j]) * kmdeg
            Q = s11[j] * dx * dx + 2.0 * s12[j] * dx * dy + s22[j] * dy * dy
            E = np.exp(alpha * mexc[j])
            lam += K * (dt + c) ** (-p) * (Q / E + d) ** (-q)
        if lam < min_lam:
            min_lam = lam
        if lam <= 0.0:
            return -np.inf, lam
        sum_log += np.log(lam)
    omp = 1.0 - p
    A = nu * bg_total * (T - S)
    for j in range(n):
        tj = times[j]
        if tj >= T:
            break
        b = T - tj
        a = S - tj
        if a < 0.0:
            a = 0.0
        H = ((b + c) ** omp - (a + c) ** omp) / omp
        mass_km = np.pi * d ** (1.0 - q) / (q - 1.0) * np.exp(alpha * mexc[j])
        A += K * H * mass_km / (kmdeg * kmdeg * coslat[j])
    return sum_log - A, min_lam


def _st_intensity_events_loop(times, lon, lat, mexc, cen_lon, cen_lat,
                              coslat, s11, s12, s22, bg_ev,
                              nu, K, c, alpha, p, d, q, kmdeg):
    """lambda(t_i, x_i, y_i | H) at every event; returns the total array."""
    n = times.size
    out = np.empty(n)
    for i in range(n):
        ti = times[i]
        lam = nu * bg_ev[i]
        for j in range(i):
            dt = ti - times[j]
            if dt <= 0.0:
                continue
            dx = (lon[i] - cen_lon[j]) * kmdeg * coslat[j]
            dy = (lat[i] - cen_lat[j]) * kmdeg
            Q = s11[j] * dx * dx + 2.0 * s12[j] * dx * dy + s22[j] * dy * dy
            E = np.exp(alpha * mexc[j])
            lam += K * (dt + c) ** (-p) * (Q / E + d) ** (-q)
        out[i] = lam
    return out


# ---------------------------------------------------------------------------
# numpy twins
# ---------------------------------------------------------------------------

def _etas_loglik_grad_numpy(times, mexc, S, T, mu, K, c, alpha, p):
    n = times.size
    emags = np.exp(alpha * mexc)
    kappa = K * emags
    target = np.nonzero((times > S) & (times <= T))[0]
    sum_log = 0.0
    gmu = gK = gc = ga = gp = 0.0
    min_lam = np.inf
    block = max(1, _CHUNK_ELEMS // max(n, 1))
    for b0 in range(0, target.size, block):
        I = target[b0:b0 + block]
        dt = times[I][:, None] - times[None, :]
        live = dt > 0.0
        dtc = np.where(live, dt + c, 1.0)
        w0 = np.where(live, emags[None, :] * dtc ** (-p), 0.0)
        w = K * w0
        lam = mu + w.sum(axis=1)
        m = lam.min()
        if m < min_lam:
            min_lam = m
        if m <= 0.0:
            return -np.inf, 0.0, 0.0, 0.0, 0.0, 0.0, m
        sum_log += np.log(lam).sum()
        inv = 1.0 / lam
        gmu += inv.sum()
        gK += (w0.sum(axis=1) * inv).sum()
        ga += ((w * mexc[None, :]).sum(axis=1) * inv).sum()
        gc += ((-p * w / dtc).sum(axis=1) * inv).sum()
        gp += ((-np.log(dtc) * w).sum(axis=1) * inv).sum()
    omp = 1.0 - p
    before = times < T
    tj = times[before]
    em = emags[before]
    mex = mexc[before]
    b = T - tj
    a = np.maximum(S - tj, 0.0)
    ub = b + c
    ua = a + c
    lb = np.log(ub)
    la = np.log(ua)
    eb = ub ** omp
    ea = ua ** omp
    H = (eb - ea) / omp
    dHdc = eb / ub - ea / ua
    dHdp = (-lb * eb + la * ea) / omp + (eb - ea) / omp ** 2
    A = mu * (T - S) + K * float(em @ H)
    aK = float(em @ H)
    aa = K * float((em * mex) @ H)
    ac = K * float(em @ dHdc)
    ap = K * float(em @ dHdp)
    loglik = sum_log - A
    return (loglik, gmu - (T - S), gK - aK, gc - ac, ga - aa, gp - ap,
            min_lam)


def _etas_intensity_numpy(ts, times, kappa, mu, c, p):
    out = np.empty(ts.size)
    n = times.size
    block = max(1, _CHUNK_ELEMS // max(n, 1))
    for b0 in range(0, ts.size, block):
        t = ts[b0:b0 + block]
        dt = t[:, None] - times[None, :]
        live = dt > 0.0
        dtc = np.where(live, dt, 1.0) + c
        out[b0:b0 + block] = mu + np.where(live, kappa[None, :] * dtc ** (-p), 0.0).sum(axis=1)
    return out


def _etas_transform_numpy(t_eval, times, kappa, S, mu, c, p):
    out = np.empty(t_eval.size)
    n = times.size
    logp1 = abs(p - 1.0) < 1e-12
    omp = 1.0 - p
    block = max(1, _CHUNK_ELEMS // max(n, 1))
    for b0 in range(0, t_eval.size, block):
        te = t_eval[b0:b0 + block]
        bmat = te[:, None] - times[None, :]
        live = bmat > 0.0
        bmat = np.where(live, bmat, 0.0)
        amat = np.maximum(S - times[None, :], 0.0) * np.ones_like(bmat)
        if logp1:
            Hd = np.log(bmat + c) - np.log(amat + c)
        else:
            Hd = ((bmat + c) ** omp - (amat + c) ** omp) / omp
        out[b0:b0 + block] = mu * (te - S) + np.where(live, kappa[None, :] * Hd, 0.0).sum(axis=1)
    return out


def _etas_thin_numpy(times, mags, kappa, n0, t0, T, mu, K, c, alpha, p, beta,
                     m_ref, u, iu):
    n = n0
    t = t0
    cap = times.size
    while True:
        if n >= cap:
            return n, t, iu, 2
        if iu + 3 > u.size:
            return n, t, iu, 0
        lam_b = mu + float(np.sum(kappa[:n] * (t - times[:n] + c) ** (-p)))
        t_new = t - np.log(u[iu]) / lam_b
        iu += 1
        if t_new > T:
            return n, t_new, iu, 1
        lam = mu + float(np.sum(kappa[:n] * (t_new - times[:n] + c) ** (-p)))
        acc = u[iu]
        iu += 1
        t = t_new
        if acc * lam_b <= lam:
            m = m_ref - np.log(u[iu]) / beta
            iu += 1
            times[n] = t
            mags[n] = m
            kappa[n] = K * np.exp(alpha * (m - m_ref))
            n += 1


def _st_loglik_numpy(times, lon, lat, mexc, cen_lon, cen_lat, coslat,
                     s11, s12, s22, bg_ev, bg_total, S, T,
                     nu, K, c, alpha, p, d, q, kmdeg):
    n = times.size
    E = np.exp(alpha * mexc)
    target = np.nonzero((times > S) & (times <= T))[0]
    sum_log = 0.0
    min_lam = np.inf
    block = max(1, _CHUNK_ELEMS // max(n, 1))
    for b0 in range(0, target.size, block):
        I = target[b0:b0 + block]
        dt = times[I][:, None] - times[None, :]
        live = dt > 0.0
        dx = (lon[I][:, None] - cen_lon[None, :]) * kmdeg * coslat[None, :]
        dy = (lat[I][:, None] - cen_lat[None, :]) * kmdeg
        Q = s11[None, :] * dx ** 2 + 2.0 * s12[None, :] * dx * dy + s22[None, :] * dy ** 2
        w = np.where(live,
                     K * (np.where(live, dt, 1.0) + c) ** (-p)
                     * (Q / E[None, :] + d) ** (-q),
                     0.0)
        lam = nu * bg_ev[I] + w.sum(axis=1)
        m = lam.min()
        if m < min_lam:
            min_lam = m
        if m <= 0.0:
            return -np.inf, m
        sum_log += np.log(lam).sum()
    omp = 1.0 - p
    before = times < T
    tj = times[before]
    b = T - tj
    a = np.maximum(S - tj, 0.0)
    H = ((b + c) ** omp - (a + c) ** omp) / omp
    mass = np.pi * d ** (1.0 - q) / (q - 1.0) * E[before]
    A = nu * bg_total * (T - S) + K * float(
        (H * mass / (kmdeg * kmdeg * coslat[before])).sum())
    return sum_log - A, min_lam


def _st_intensity_events_numpy(times, lon, lat, mexc, cen_lon, cen_lat,
                               coslat, s11, s12, s22, bg_ev,
                               nu, K, c, alpha, p, d, q, kmdeg):
    n = times.size
    E = np.exp(alpha * mexc)
    out = np.empty(n)
    block = max(1, _CHUNK_ELEMS // max(n, 1))
    for b0 in range(0, n, block):
        I = np.arange(b0, min(b0 + block, n))
        dt = times[I][:, None] - times[None, :]
        live = dt > 0.0
        dx = (lon[I][:, None] - cen_lon[None, :]) * kmdeg * coslat[None, :]
        dy = (lat[I][:, None] - cen_lat[None, :]) * kmdeg
        Q = s11[None, :] * dx ** 2 + 2.0 * s12[None, :] * dx * dy + s22[None, :] * dy ** 2
        w = np.where(live,
                     K * (np.where(live, dt, 1.0) + c) ** (-p)
                     * (Q / E[None, :] + d) ** (-q),
                     0.0)
        out[I] = nu * bg_ev[I] + w.sum(axis=1)
    return out


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

_NUMPY_IMPLS = {
    "etas_loglik_grad": _etas_loglik_grad_numpy,
    "etas_intensity": _etas_intensity_numpy,
    "etas_transform": _etas_transform_numpy,
    "etas_thin": _etas_thin_numpy,
    "st_loglik": _st_loglik_numpy,
    "st_intensity_events": _st_intensity_events_numpy,
}

_LOOP_IMPLS = {
    "etas_loglik_grad": _etas_loglik_grad_loop,
    "etas_intensity": _etas_intensity_loop,
    "etas_transform": _etas_transform_loop,
    "etas_thin": _etas_thin_loop,
    "st_loglik": _st_loglik_loop,
    "st_intensity_events": _st_intensity_events_loop,
}

_JITTED: dict = {}


def _jit(name):
    if name not in _JITTED:
        from numba import njit
        _JITTED[name] = njit(cache=True)(_LOOP_IMPLS[name])
    return _JITTED[name]


def get_impl(name: str, backend: str):
    """Fetch a kernel by backend ("numba" or "numpy"), for tests/benchmarks."""
    if backend == "numpy":
        return _NUMPY_IMPLS[name]
    if backend == "numba":
        if not HAVE_NUMBA:
            raise RuntimeError("numba backend requested but numba is missing")
        return _jit(name)
    raise ValueError(f"unknown backend {backend!r}")


if USE_NUMBA:
    etas_loglik_grad = _jit("etas_loglik_grad")
    etas_intensity = _jit("etas_intensity")
    etas_transform = _jit("etas_transform")
    etas_thin = _jit("etas_thin")
    st_loglik = _jit("st_loglik")
    st_intensity_events = _jit("st_intensity_events")
else:  # pragma: no cover - depends on environment flag
    etas_loglik_grad = _etas_loglik_grad_numpy
    etas_intensity = _etas_intensity_numpy
    etas_transform = _etas_transform_numpy
    etas_thin = _etas_thin_numpy
    st_loglik = _st_loglik_numpy
    st_intensity_events = _st_intensity_events_numpy
