"""Command-line surface: fit / simulate / forecast / diagnose subcommands.

Every command writes a machine-readable JSON envelope (command, seed,
effective config, result) plus CSV series into the output directory.
Configuration precedence is flags > config file > built-in defaults; the
effective configuration is echoed into every output.  Exit codes: 0 on
success, 1 on model/data errors (message printed verbatim), 2 on usage
errors.
"""

import argparse
import csv
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .errors import QuakefitError
from . import aftershock, catalog as cat_mod, etas, etas_st, foreshock, \
    magnitude, precursor, renewal

OUTDIR_ENV = "QUAKEFIT_OUTDIR"

# built-in defaults, overridable by --config and flags
DEFAULTS = {
    "format": "csv",
    "bin": 0.1,
    "gap_threshold": 0.45,
    "d_space_km": 30.0,
    "d_time_days": 5.0,
    "rj_b": 0.85,
    "rj_c": 0.01,
    "rj_p": 1.1,
    "alpha_bpt": renewal.DEFAULT_APERIODICITY,
    "bandwidth_km": 20.0,
}


def _window(text):
    a, b = (float(x) for x in text.split(","))
    return a, b


def _flt_list(text):
    return [float(x) for x in text.split(",")]


def _load_config(path):
    if path is None:
        return {}
    with open(path) as fh:
        return json.load(fh)


def _effective(args, config, keys):
    """flags > config file > DEFAULTS."""
    out = {}
    for k in keys:
        v = getattr(args, k, None)
        if v is None:
            v = config.get(k, DEFAULTS.get(k))
        out[k] = v
    return out


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_json_safe(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return obj


def _emit(outdir, command, seed, config, result, series=None):
    os.makedirs(outdir, exist_ok=True)
    outputs = []
    for name, (header, rows) in (series or {}).items():
        fname = f"{command}_{name}.csv"
        with open(os.path.join(outdir, fname), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for row in rows:
                w.writerow([repr(float(v)) if isinstance(v, (float, np.floating))
                            else v for v in row])
        outputs.append(fname)
    envelope = {
        "command": command,
        "seed": seed if seed is None else int(seed),
        "config": _json_safe(config),
        "result": _json_safe(result),
        "outputs": outputs,
    }
    path = os.path.join(outdir, f"{command}.json")
    with open(path, "w") as fh:
        json.dump(envelope, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(path)
    return envelope


def _read_catalog(args, config):
    eff = _effective(args, config, ["format"])
    return cat_mod.load_catalog(args.catalog, format=eff["format"],
                                epoch=getattr(args, "epoch", None))


def _fit_payload(fit):
    params = {k: getattr(fit.params, k) for k in vars(fit.params)
              if not k.startswith("_")} if hasattr(fit.params, "__dict__") \
        else {}
    return {
        "params": _json_safe(params),
        "loglik": fit.loglik,
        "aic": fit.aic,
        "se": _json_safe(fit.se),
        "window": list(fit.window),
        "converged": fit.converged,
    }


# --------------------------------------------------------------------------
# subcommand handlers
# --------------------------------------------------------------------------

def _cmd_fit_gr(args, config, outdir):
    cat = _read_catalog(args, config)
    eff = _effective(args, config, ["format", "bin"])
    mc = args.mc if args.mc is not None else config.get("mc")
    if mc is None:
        raise QuakefitError("fit-gr requires --mc")
    sel = cat.mag[cat.mag >= mc - eff["bin"] / 2.0]
    gr = magnitude.fit_gr(sel, mc, bin=eff["bin"])
    result = {"b": gr.b, "beta": gr.beta, "se_b": gr.se_b, "n": int(sel.size),
              "a_rate": gr.a_rate, "mc": mc}
    cfg = {**eff, "mc": mc, "catalog": args.catalog}
    return _emit(outdir, "fit-gr", None, cfg, result)


def _cmd_fit_omori(args, config, outdir):
    cat = _read_catalog(args, config)
    window = args.window or (0.0, float(cat.t.max()))
    fit = aftershock.fit_omori(cat.t, window)
    cfg = {"catalog": args.catalog, "window": list(window)}
    return _emit(outdir, "fit-omori", None, cfg, _fit_payload(fit))


def _cmd_forecast_aftershock(args, config, outdir):
    eff = _effective(args, config, ["rj_b", "rj_c", "rj_p"])
    a = args.a if args.a is not None else config.get("rj_a")
    if a is None or args.m0 is None:
        raise QuakefitError("forecast-aftershock requires --a and --m0")
    params = aftershock.RjParams(a_rj=a, b_rj=eff["rj_b"], c_rj=eff["rj_c"],
                                 p_rj=eff["rj_p"], m0=args.m0)
    fc = aftershock.forecast_probability(params, tuple(args.window),
                                         args.mthresh)
    result = {"probability": fc.probability, "n_expected": fc.n_expected,
              "window": list(fc.window), "m_thresh": fc.m_thresh}
    cfg = {**eff, "rj_a": a, "m0": args.m0, "window": list(args.window),
           "mthresh": args.mthresh}
    return _emit(outdir, "forecast-aftershock", None, cfg, result)


def _cmd_fit_etas(args, config, outdir):
    cat = _read_catalog(args, config)
    window = args.window or (0.0, float(cat.t.max()))
    if args.mc is not None:
        cat = cat_mod.select_window(cat, m_min=args.mc)
    fit = etas.fit_etas(cat, window)
    cfg = {"catalog": args.catalog, "window": list(window), "mc": args.mc}
    return _emit(outdir, "fit-etas", None, cfg, _fit_payload(fit))


def _etas_params_from(args, config):
    if args.params is not None:
        mu, K, c, alpha, p = _flt_list(args.params)
        return etas.EtasParams(mu, K, c, alpha, p, m_ref=args.mref or 0.0)
    if args.fit_json is not None:
        with open(args.fit_json) as fh:
            payload = json.load(fh)
        pr = payload["result"]["params"]
        return etas.EtasParams(pr["mu_bg"], pr["k_prod"], pr["c_off"],
                               pr["alpha_m"], pr["p_exp"], m_ref=pr["m_ref"])
    return None


def _cmd_simulate_etas(args, config, outdir):
    params = _etas_params_from(args, config)
    if params is None:
        raise QuakefitError("simulate-etas requires --params mu,K,c,alpha,p")
    gr = magnitude.GrParams(b=args.b, mc=params.m_ref)
    cat = etas.simulate_etas(params, tuple(args.horizon), gr, seed=args.seed)
    rows = [(cat.t[i], cat.lon[i], cat.lat[i], cat.depth[i], cat.mag[i])
            for i in range(len(cat))]
    cfg = {"params": args.params, "mref": params.m_ref, "b": args.b,
           "horizon": list(args.horizon)}
    result = {"n_events": len(cat)}
    return _emit(outdir, "simulate-etas", args.seed, cfg, result,
                 series={"catalog": (("time", "lon", "lat", "depth_km", "mag"),
                                     rows)})


def _cmd_residuals(args, config, outdir):
    cat = _read_catalog(args, config)
    window = args.window or (0.0, float(cat.t.max()))
    params = _etas_params_from(args, config)
    fit_payload = None
    if params is None:
        fit = etas.fit_etas(cat, window)
        params = fit.params
        fit_payload = _fit_payload(fit)
    res = etas.transform_times(cat, params, window)
    cum = np.arange(1, res.tau.size + 1)
    rows = list(zip(res.t, res.tau, cum.astype(float), res.band_lo,
                    res.band_hi))
    result = {"ks_stat": res.ks_stat, "lam_total": res.lam_total,
              "n_events": int(res.tau.size)}
    if fit_payload:
        result["fit"] = fit_payload
    cfg = {"catalog": args.catalog, "window": list(window)}
    return _emit(outdir, "residuals", None, cfg, result,
                 series={"series": (("t", "tau", "cumulative", "band_lo",
                                     "band_hi"), rows)})


def _cmd_detect_anomaly(args, config, outdir):
    cat = _read_catalog(args, config)
    window = args.window or (0.0, float(cat.t.max()))
    S, T = window
    rep = etas.detect_anomaly(cat, (S, args.changepoint),
                              (args.changepoint, T))
    rows = list(zip(rep.t_eval, rep.observed, rep.predicted, rep.band_lo,
                    rep.band_hi))
    result = {
        "quiescence": rep.quiescence,
        "activation": rep.activation,
        "end_z": rep.end_z,
        "first_exit_time": rep.first_exit_time,
        "fit": _fit_payload(rep.fit) if rep.fit else None,
    }
    cfg = {"catalog": args.catalog, "window": list(window),
           "changepoint": args.changepoint}
    return _emit(outdir, "detect-anomaly", None, cfg, result,
                 series={"series": (("t", "observed_cum", "predicted_cum",
                                     "band_lo", "band_hi"), rows)})


def _background_from(args, cat):
    if args.background is not None:
        data = np.genfromtxt(args.background, delimiter=",", names=True)
        xs = np.unique(data["x"])
        ys = np.unique(data["y"])
        grid = np.zeros((xs.size, ys.size))
        for row in data:
            i = int(np.searchsorted(xs, row["x"]))
            j = int(np.searchsorted(ys, row["y"]))
            grid[i, j] = row["mu"]
        dx = (xs[1] - xs[0]) / 2 if xs.size > 1 else 0.5
        dy = (ys[1] - ys[0]) / 2 if ys.size > 1 else 0.5
        bounds = (xs[0] - dx, xs[-1] + dx, ys[0] - dy, ys[-1] + dy)
        return etas_st.BackgroundField(grid, bounds)
    if args.region is not None:
        lon0, lon1, lat0, lat1 = args.region
    else:
        lon0, lon1 = float(cat.lon.min()) - 0.1, float(cat.lon.max()) + 0.1
        lat0, lat1 = float(cat.lat.min()) - 0.1, float(cat.lat.max()) + 0.1
    area = (lon1 - lon0) * (lat1 - lat0)
    return etas_st.BackgroundField.uniform((lon0, lon1, lat0, lat1),
                                           value=1.0 / area)


def _cmd_fit_st_etas(args, config, outdir):
    cat = _read_catalog(args, config)
    window = args.window or (0.0, float(cat.t.max()))
    bg = _background_from(args, cat)
    fit = etas_st.fit_st_etas(cat, bg, window)
    cfg = {"catalog": args.catalog, "window": list(window)}
    return _emit(outdir, "fit-st-etas", None, cfg, _fit_payload(fit))


def _cmd_decluster(args, config, outdir):
    cat = _read_catalog(args, config)
    window = args.window or (0.0, float(cat.t.max()))
    bg = _background_from(args, cat)
    fit = etas_st.fit_st_etas(cat, bg, window)
    dec = etas_st.background_weights(cat, fit.params, bg, seed=args.seed)
    phi_rows = [(cat.t[i], cat.lon[i], cat.lat[i], cat.mag[i], dec.phi[i])
                for i in range(len(cat))]
    bgc = dec.background
    bg_rows = [(bgc.t[i], bgc.lon[i], bgc.lat[i], bgc.depth[i], bgc.mag[i])
               for i in range(len(bgc))]
    result = {"fit": _fit_payload(fit), "sum_phi": float(dec.phi.sum()),
              "n_background_sampled": len(bgc)}
    cfg = {"catalog": args.catalog, "window": list(window)}
    return _emit(outdir, "decluster", args.seed, cfg, result,
                 series={"phi": (("time", "lon", "lat", "mag", "phi"),
                                 phi_rows),
                         "background": (("time", "lon", "lat", "depth_km",
                                         "mag"), bg_rows)})


def _read_segments(args):
    intervals = {}
    with open(args.intervals, newline="") as fh:
        for row in csv.DictReader(fh):
            intervals.setdefault(row["segment_id"], []).append(
                float(row["interval_years"]))
    meta = {}
    if args.segments:
        with open(args.segments, newline="") as fh:
            for row in csv.DictReader(fh):
                meta[row["segment_id"]] = row
    segs = []
    for sid in sorted(set(intervals) | set(meta)):
        m = meta.get(sid, {})
        tail = m.get("open_tail_years")
        geo = m.get("geodetic_T_years")
        segs.append(renewal.SegmentData(
            np.asarray(intervals.get(sid, []), dtype=float),
            open_tail=float(tail) if tail not in (None, "") else None,
            geodetic_mean=float(geo) if geo not in (None, "") else None,
            name=sid))
    return segs


def _cmd_renewal_forecast(args, config, outdir):
    eff = _effective(args, config, ["alpha_bpt"])
    segs = _read_segments(args)
    per_segment = {}
    if args.bayes:
        hier = renewal.fit_hier_bayes(segs)
        for seg, post in zip(segs, hier.posteriors):
            if seg.open_tail is None:
                continue
            per_segment[seg.name] = renewal.forecast_interval_prob(
                seg, post, args.horizon)
        result = {"mode": "bayes", "abic": hier.abic,
                  "hyper": {"phi_mu": list(hier.hyper.phi_mu),
                            "phi_alpha": list(hier.hyper.phi_alpha)},
                  "probabilities": per_segment}
    else:
        for seg in segs:
            if seg.open_tail is None:
                continue
            if seg.intervals.size:
                mu = float(np.mean(seg.intervals))
            elif seg.geodetic_mean is not None:
                mu = seg.geodetic_mean
            else:
                continue
            params = renewal.BptParams(mu, eff["alpha_bpt"])
            per_segment[seg.name] = renewal.forecast_interval_prob(
                seg, params, args.horizon)
        result = {"mode": "plugin", "alpha": eff["alpha_bpt"],
                  "probabilities": per_segment}
    cfg = {**eff, "horizon": args.horizon, "bayes": bool(args.bayes)}
    return _emit(outdir, "renewal-forecast", None, cfg, result)


def _cmd_combine_precursors(args, config, outdir):
    pset = precursor.PrecursorSet(p0=args.p0, conditionals=args.pk)
    exact = precursor.combine_exact(pset)
    approx = precursor.combine_approx(pset)
    result = {"exact": exact, "approx": approx.p,
              "gains": list(approx.gains), "total_gain": approx.total_gain}
    cfg = {"p0": args.p0, "pk": list(args.pk)}
    return _emit(outdir, "combine-precursors", None, cfg, result)


def _read_covariate(path):
    data = np.genfromtxt(path, delimiter=",", names=True)
    return precursor.CovariateSeries(np.atleast_1d(data["t_days"]),
                                     np.atleast_1d(data["value"]))


def _cmd_fit_covariate(args, config, outdir):
    cat = _read_catalog(args, config)
    series = _read_covariate(args.covariate)
    window = args.window or (0.0, float(cat.t.max()))
    if args.with_transfer and args.without_transfer:
        raise QuakefitError("choose one of --with-transfer/--without-transfer")
    if args.with_transfer or args.without_transfer:
        fit = precursor._fit_family(cat.t, window, series,
                                    with_transfer=bool(args.with_transfer),
                                    trend_order=args.trend_order or 0)
        result = {"fit": _fit_payload(fit),
                  "with_transfer": bool(args.with_transfer)}
    else:
        test = precursor.fit_covariate(cat.t, series, window,
                                       trend_order=args.trend_order or 0)
        result = {"delta_aic": test.delta_aic,
                  "significant": test.significant,
                  "with": _fit_payload(test.with_transfer),
                  "without": _fit_payload(test.without_transfer)}
    cfg = {"catalog": args.catalog, "covariate": args.covariate,
           "window": list(window), "trend_order": args.trend_order or 0}
    return _emit(outdir, "fit-covariate", None, cfg, result)


def _cmd_fit_periodic(args, config, outdir):
    cat = _read_catalog(args, config)
    window = args.window or (0.0, float(cat.t.max()))
    fit = precursor.fit_periodic(cat.t, window, period=args.period,
                                 harmonics=args.harmonics,
                                 trend_order=args.trend_order or 0)
    payload = _fit_payload(fit)
    payload["harmonics"] = _json_safe(fit.extra["harmonics"])
    cfg = {"catalog": args.catalog, "window": list(window),
           "period": args.period, "harmonics": args.harmonics}
    return _emit(outdir, "fit-periodic", None, cfg, payload)


def _cmd_classify_clusters(args, config, outdir):
    cat = _read_catalog(args, config)
    eff = _effective(args, config, ["d_space_km", "d_time_days",
                                    "gap_threshold"])
    clusters = cat_mod.single_link_cluster(cat, eff["d_space_km"],
                                           eff["d_time_days"],
                                           eff["gap_threshold"])
    rows = []
    counts = {}
    for cid, cl in enumerate(clusters):
        counts[cl.cluster_type.value] = counts.get(cl.cluster_type.value, 0) + 1
        for mid in cl.member_ids:
            rows.append((float(cat.t[mid]), float(cat.lon[mid]),
                         float(cat.lat[mid]), float(cat.mag[mid]), cid,
                         int(mid == cl.mainshock_id), cl.cluster_type.value,
                         cl.mag_gap if math.isfinite(cl.mag_gap) else ""))
    result = {"n_clusters": len(clusters), "type_counts": counts}
    cfg = {**eff, "catalog": args.catalog}
    return _emit(outdir, "classify-clusters", None, cfg, result,
                 series={"clusters": (("time", "lon", "lat", "mag",
                                       "cluster_id", "is_mainshock", "type",
                                       "mag_gap"), rows)})


def _cmd_foreshock_prob(args, config, outdir):
    rows = []
    with open(args.cluster_file, newline="") as fh:
        for row in csv.DictReader(fh):
            rows.append((float(row["time"]), float(row["lon"]),
                         float(row["lat"]), float(row["mag"])))
    if not rows:
        raise QuakefitError(f"{args.cluster_file}: no cluster members")
    if args.coeffs:
        with open(args.coeffs) as fh:
            cf = json.load(fh)
        prior = foreshock.LocationPrior.constant(
            cf.get("prior", foreshock.JAPAN_MEAN_FORESHOCK_RATE))
        model = foreshock.ForeshockModel(
            location_prior=prior, mu0=cf.get("mu0", 0.0),
            b_coef=np.asarray(cf.get("b", [0, 0, 0]), dtype=float),
            c_coef=np.asarray(cf.get("c", [0, 0, 0]), dtype=float),
            d_coef=np.asarray(cf.get("d", [0, 0, 0]), dtype=float))
    else:
        model = foreshock.ForeshockModel(foreshock.LocationPrior.constant())
    arrays = tuple(np.array(col) for col in zip(*rows))
    stream = []
    for n in range(1, len(rows) + 1):
        p = foreshock.foreshock_probability(arrays, list(range(len(rows))),
                                            model, n=n)
        stream.append((n, float(arrays[0][n - 1]), p))
        print(f"n={n} t={arrays[0][n - 1]:g} p_foreshock={p:.6f}")
    result = {"final_probability": stream[-1][2], "n_members": len(rows)}
    cfg = {"cluster_file": args.cluster_file, "coeffs": args.coeffs}
    return _emit(outdir, "foreshock-prob", None, cfg, result,
                 series={"stream": (("n", "t", "p_foreshock"), stream)})


# --------------------------------------------------------------------------

def _build_parser():
    ap = argparse.ArgumentParser(
        prog="quakefit",
        description="Point-process fitting, simulation and forecasting "
                    "for earthquake catalogs")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, fn, **kw):
        p = sub.add_parser(name, **kw)
        p.set_defaults(handler=fn)
        p.add_argument("--output-dir", default=None,
                       help=f"output directory (default ${OUTDIR_ENV} or .)")
        p.add_argument("--config", default=None,
                       help="JSON config file (flags take precedence)")
        return p

    p = add("fit-gr", _cmd_fit_gr, help="b-value MLE with bin correction")
    p.add_argument("--catalog", required=True)
    p.add_argument("--mc", type=float)
    p.add_argument("--bin", type=float, default=None)

    p = add("fit-omori", _cmd_fit_omori, help="Omori-Utsu decay MLE")
    p.add_argument("--catalog", required=True)
    p.add_argument("--window", type=_window, default=None)

    p = add("forecast-aftershock", _cmd_forecast_aftershock,
            help="Reasenberg-Jones probability forecast")
    p.add_argument("--a", type=float, default=None)
    p.add_argument("--b", dest="rj_b", type=float, default=None)
    p.add_argument("--c", dest="rj_c", type=float, default=None)
    p.add_argument("--p", dest="rj_p", type=float, default=None)
    p.add_argument("--m0", type=float, required=True)
    p.add_argument("--window", type=_window, required=True)
    p.add_argument("--mthresh", type=float, required=True)

    p = add("fit-etas", _cmd_fit_etas, help="temporal ETAS MLE")
    p.add_argument("--catalog", required=True)
    p.add_argument("--window", type=_window, default=None)
    p.add_argument("--mc", type=float, default=None)

    p = add("simulate-etas", _cmd_simulate_etas,
            help="thinning simulation of the ETAS model")
    p.add_argument("--params", default=None, help="mu,K,c,alpha,p")
    p.add_argument("--fit-json", default=None)
    p.add_argument("--mref", type=float, default=None)
    p.add_argument("--b", type=float, default=1.0)
    p.add_argument("--horizon", type=_window, required=True)
    p.add_argument("--seed", type=int, default=0)

    p = add("residuals", _cmd_residuals,
            help="transformed-time residual series")
    p.add_argument("--catalog", required=True)
    p.add_argument("--window", type=_window, default=None)
    p.add_argument("--params", default=None, help="mu,K,c,alpha,p")
    p.add_argument("--fit-json", default=None)
    p.add_argument("--mref", type=float, default=None)

    p = add("detect-anomaly", _cmd_detect_anomaly,
            help="relative quiescence/activation diagnosis")
    p.add_argument("--catalog", required=True)
    p.add_argument("--window", type=_window, default=None)
    p.add_argument("--changepoint", type=float, required=True)

    p = add("fit-st-etas", _cmd_fit_st_etas, help="space-time ETAS MLE")
    p.add_argument("--catalog", required=True)
    p.add_argument("--window", type=_window, default=None)
    p.add_argument("--region", type=_flt_list, default=None,
                   help="lon0,lon1,lat0,lat1 (uniform background)")
    p.add_argument("--background", default=None, help="CSV grid x,y,mu")

    p = add("decluster", _cmd_decluster,
            help="stochastic declustering weights and one sample")
    p.add_argument("--catalog", required=True)
    p.add_argument("--window", type=_window, default=None)
    p.add_argument("--region", type=_flt_list, default=None)
    p.add_argument("--background", default=None)
    p.add_argument("--seed", type=int, default=0)

    p = add("renewal-forecast", _cmd_renewal_forecast,
            help="BPT renewal probability per fault segment")
    p.add_argument("--intervals", required=True,
                   help="CSV segment_id,interval_years")
    p.add_argument("--segments", default=None,
                   help="CSV segment_id,open_tail_years,geodetic_T_years")
    p.add_argument("--horizon", type=float, required=True)
    p.add_argument("--alpha", dest="alpha_bpt", type=float, default=None)
    p.add_argument("--bayes", action="store_true")

    p = add("combine-precursors", _cmd_combine_precursors,
            help="multi-precursor probability combination")
    p.add_argument("--p0", type=float, required=True)
    p.add_argument("--pk", type=float, action="append", required=True)

    p = add("fit-covariate", _cmd_fit_covariate,
            help="covariate transfer-term causality test")
    p.add_argument("--catalog", required=True)
    p.add_argument("--covariate", required=True, help="CSV t_days,value")
    p.add_argument("--window", type=_window, default=None)
    p.add_argument("--trend-order", type=int, default=None)
    p.add_argument("--with-transfer", action="store_true")
    p.add_argument("--without-transfer", action="store_true")

    p = add("fit-periodic", _cmd_fit_periodic,
            help="seasonality with a clustering term")
    p.add_argument("--catalog", required=True)
    p.add_argument("--window", type=_window, default=None)
    p.add_argument("--period", type=float,
                   default=precursor.ANNUAL_PERIOD_DAYS)
    p.add_argument("--harmonics", type=int, default=1)
    p.add_argument("--trend-order", type=int, default=None)

    p = add("classify-clusters", _cmd_classify_clusters,
            help="single-link clustering and cluster typing")
    p.add_argument("--catalog", required=True)
    p.add_argument("--d-space-km", dest="d_space_km", type=float, default=None)
    p.add_argument("--d-time-days", dest="d_time_days", type=float,
                   default=None)
    p.add_argument("--gap-threshold", dest="gap_threshold", type=float,
                   default=None)

    p = add("foreshock-prob", _cmd_foreshock_prob,
            help="streamed foreshock probability for a growing cluster")
    p.add_argument("--cluster-file", required=True,
                   help="CSV time,lon,lat,mag in occurrence order")
    p.add_argument("--coeffs", default=None,
                   help="JSON {prior, mu0, b, c, d}")

    return ap


def run(argv=None) -> int:
    ap = _build_parser()
    args = ap.parse_args(argv)
    config = _load_config(args.config)
    outdir = args.output_dir or config.get("output_dir") \
        or os.environ.get(OUTDIR_ENV) or "."
    try:
        args.handler(args, config, outdir)
    except (QuakefitError, ValueError, OSError) as exc:
        print(str(exc), file=sys.stderr)
        return 1
    return 0


def main():  # console entry point
    sys.exit(run())


if __name__ == "__main__":
    main()
