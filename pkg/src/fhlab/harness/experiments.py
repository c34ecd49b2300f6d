"""Experiment runners: each turns a validated config into a ComparisonReport."""

from __future__ import annotations

import json
import math
import platform
import time
import warnings

import numpy as np
import scipy
from scipy import stats

from .. import __version__
from ..dynamics import (
    linear_statistic,
    log_mean_exp,
    mc_joint_moment,
    rigidity_statistic,
    sample_trajectories,
)
from ..errors import ConfigError, ExperimentError, FHLabError
from ..gmc import (
    empirical_gmc,
    field_G_M,
    gmc_replicas,
    gmc_second_moment,
    mc_mean,
    riemann_integral,
)
from ..kernels import extended_kernel, fredholm_laplace
from ..predictor import arg_mass, predict_joint
from ..transforms import Charge, FunctionSpec, evaluate
from .config import ExperimentConfig, derive_seed, grid
from .report import ComparisonReport, make_row

LIMIT_MAX_LOG = math.sqrt(2.0)
LIMIT_RIGIDITY = math.sqrt(2.0) / math.pi
PERCENTILES = (5, 25, 50, 75, 95)


def _charge_labels(cfg: ExperimentConfig) -> list:
    raw = cfg.raw.get("charges", [cfg.raw["charge"]] if "charge" in cfg.raw else [])
    return [d.get("label", f"charge{i}") for i, d in enumerate(raw)] or ["charge0"]


def _compact(d) -> str:
    return json.dumps(d, sort_keys=True, separators=(",", ":"))


def _wrap(inputs: dict, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except (FHLabError, ArithmeticError, ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
        raise ExperimentError(f"{type(exc).__name__}: {exc}", inputs) from exc


def _metadata(cfg: ExperimentConfig, t0: float) -> dict:
    return {
        "fhlab": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
        "python": platform.python_version(), "seed": cfg.seed, "workers": cfg.workers,
        "runtime_s": round(time.time() - t0, 3), "config": cfg.raw,
    }


# --------------------------------------------------------------------------
# predict / simulate / compare


def _charge_rows(cfg: ExperimentConfig, want_pred: bool, want_mc: bool) -> ComparisonReport:
    rep = ComparisonReport(cfg.experiment)
    tol = cfg.tolerance
    pc = cfg.predictor
    charges = cfg.charges or [Charge()]
    labels = _charge_labels(cfg)
    series = []
    for ci, ch in enumerate(charges):
        for ni, N in enumerate(cfg.N):
            inputs = {"label": labels[ci], "N": N, "n_samples": cfg.samples if want_mc else 0,
                      "charge": _compact(ch.to_dict())}
            pred = mc = None
            if want_pred:
                if ch.is_empty():
                    pred = 0.0
                else:
                    with warnings.catch_warnings():
                        warnings.simplefilter("ignore")
                        fp = _wrap(inputs, predict_joint, ch, N, pc["separation_exponent"],
                                   pc["gamma5_reading"])
                    pred = fp.total(N)
                    rep.extras.setdefault("predictions", {})[f"{ci}:{N}"] = fp.to_dict()
            if want_mc:
                seed = derive_seed(cfg.seed, 1, ci, ni)
                mc = _wrap(inputs, mc_joint_moment, ch, N, cfg.samples, seed, cfg.n_batches, cfg.workers,
                           method=cfg.method)
            rep.rows.append(make_row(inputs, pred, None if mc is None else mc.mean,
                                     None if mc is None else mc.stderr, tol["abs_floor"], tol["n_sigma"]))
            series.append([inputs["label"], N, pred, None if mc is None else mc.mean,
                           None if mc is None else mc.stderr])
    rep.plotdata[cfg.experiment] = {"columns": ["label", "N", "predicted", "mc_mean", "mc_stderr"],
                                    "rows": series}
    return rep


# --------------------------------------------------------------------------
# kernel


def _kernel_rows(cfg: ExperimentConfig) -> ComparisonReport:
    rep = ComparisonReport("kernel")
    sec = cfg.section("kernel")
    tol = cfg.tolerance
    syms = [(float(s["t"]), FunctionSpec.from_dict(s["f"])) for s in sec.get("symbols", [])]
    if not syms:
        raise ConfigError("kernel experiment needs at least one symbol", "/kernel/symbols")
    nodes = sec.get("nodes_per_symbol")
    times = sorted({t for t, _ in syms})
    for ni, N in enumerate(cfg.N):
        inputs = {"check": "fredholm_vs_mc", "N": N, "n_samples": cfg.samples,
                  "symbols": _compact([{"t": t, "f": f.to_dict()} for t, f in syms])}
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            fr = _wrap(inputs, fredholm_laplace, syms, N, nodes, tol["kernel_tol"])
            fr2 = _wrap(inputs, fredholm_laplace, syms, N, 2 * fr.n_nodes // len(syms), tol["kernel_tol"])
        ens = _wrap(inputs, sample_trajectories, N, times, cfg.samples, derive_seed(cfg.seed, 2, ni),
                    cfg.workers, cfg.method)
        L = sum(linear_statistic(ens.at(t), f, centered=False) for t, f in syms)
        est = log_mean_exp(L, cfg.n_batches)
        rep.rows.append(make_row(inputs, fr.log_det, est.mean, est.stderr, tol["abs_floor"], tol["n_sigma"]))
        rep.rows.append(make_row({"check": "quadrature_doubling", "N": N, "n_samples": 0,
                                  "symbols": inputs["symbols"]}, fr.log_det, fr2.log_det, 0.0, 1e-4))
        rep.extras.setdefault("fredholm", {})[str(N)] = {
            "log_det": fr.log_det, "n_nodes": fr.n_nodes, "clip_events": fr.clip_events,
            "clip_rate": fr.clip_rate, "log_det_doubled": fr2.log_det}
    tab = sec.get("table")
    if tab:
        xs = grid(tab.get("x", {"start": -1.0, "stop": 1.0, "num": 101}))
        t, s, y = float(tab.get("t", 0.0)), float(tab.get("s", 0.0)), float(tab.get("y", 0.0))
        N = cfg.N[0]
        vals = np.atleast_1d(extended_kernel(t, xs, s, np.full_like(xs, y), N, tol["kernel_tol"]))
        rep.plotdata["kernel_table"] = {"columns": ["t", "x", "s", "y", "value"],
                                        "rows": [[t, float(x), s, y, float(v)] for x, v in zip(xs, vals)]}
    return rep


# --------------------------------------------------------------------------
# gmc


def _psi_callable(spec: dict | None):
    if spec is None:
        return None
    f = FunctionSpec.from_dict(spec)
    return lambda T, X: evaluate(f, X)


def _gmc_rows(cfg: ExperimentConfig) -> ComparisonReport:
    rep = ComparisonReport("gmc")
    sec = cfg.section("gmc")
    tol = cfg.tolerance
    M = int(sec.get("M", 64))
    gamma = float(sec.get("gamma", 1.0))
    nrep = int(sec.get("replicas", 2000))
    tg = grid(sec.get("t_grid", {"start": 0.0, "stop": 1.0, "num": 16}))
    xg = grid(sec.get("x_grid", {"start": -1.5, "stop": 1.5, "num": 16}))
    psi = _psi_callable(sec.get("psi"))
    base = {"M": M, "gamma": gamma, "replicas": nrep}
    target = riemann_integral(psi, tg, xg)
    r = _wrap(base, gmc_replicas, M, gamma, psi, tg, xg, nrep, derive_seed(cfg.seed, 3, 0))
    m1 = mc_mean(r, cfg.n_batches)
    rep.rows.append(make_row({"check": "mean", **base}, target, m1.mean, m1.stderr, 0.0, tol["n_sigma"]))
    m2 = mc_mean(r * r, cfg.n_batches)
    sm = _wrap(base, gmc_second_moment, M, gamma, psi, tg, xg)
    rep.rows.append(make_row({"check": "second_moment", **base}, sm, m2.mean, m2.stderr, 0.0, tol["n_sigma"]))
    fs = field_G_M(M, tg, xg, derive_seed(cfg.seed, 3, 1))
    rep.plotdata["field"] = {"columns": ["t", "x", "value"],
                             "rows": [[float(t), float(x), float(fs.values[i, j])]
                                      for i, t in enumerate(tg) for j, x in enumerate(xg)]}
    if sec.get("empirical", False):
        norm = sec.get("normalization", "mc")
        beta = float(sec.get("beta", 0.0))
        for ni, N in enumerate(cfg.N):
            inputs = {"check": "empirical_mean", "N": N, "gamma": 0.0 if beta else gamma, "beta": beta,
                      "normalization": norm, "n_samples": cfg.samples}
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                res = _wrap(inputs, empirical_gmc, N, psi, 0.0 if beta else gamma, beta, tg, xg,
                            cfg.samples, derive_seed(cfg.seed, 3, 2, ni), norm, None, cfg.n_batches,
                            cfg.workers)
            rep.rows.append(make_row(inputs, target, res.estimate.mean, res.estimate.stderr,
                                     tol["abs_floor"], tol["n_sigma"]))
            ratio = float(np.var(res.values, ddof=1) / np.var(r, ddof=1))
            rep.rows.append(make_row({**inputs, "check": "variance_ratio"}, 1.0, ratio, None,
                                     window=(0.5, 2.0)))
            rep.extras.setdefault("empirical", {})[str(N)] = {
                "mean": res.estimate.to_dict(), "off_spectrum_paths": res.off_spectrum_paths,
                "variance_empirical": float(np.var(res.values, ddof=1)),
                "variance_field": float(np.var(r, ddof=1))}
    return rep


# --------------------------------------------------------------------------
# max statistics


def _max_stats(eig: np.ndarray, Eg: np.ndarray, arg_m: np.ndarray, upsilon: float) -> tuple:
    N = eig.shape[-1]
    lmax, amax = -math.inf, 0.0
    logmass = N * (Eg ** 2 - 2.0) / 4.0
    for lam in eig:
        d = lam[:, None] - Eg[None, :]
        L = np.sum(np.log(np.abs(d)), axis=0) - logmass
        A = np.sum(d / 2.0 + np.where(d < 0, math.pi / 2.0, -math.pi / 2.0), axis=0) - N * arg_m
        lmax = max(lmax, float(np.max(L)))
        amax = max(amax, float(np.max(np.abs(A))))
    rig = float(np.max(rigidity_statistic(eig, upsilon)))
    ln = math.log(N)
    return lmax / ln, amax / ln, rig / ln


def max_statistic_experiment(N_list, samples: int, seed: int, E_range=(-1.5, 1.5), t_range=(0.0, 1.0),
                             E_points_per_N: float = 2.0, t_points_per_N: float = 0.125,
                             E_points: int | None = None, t_points: int | None = None,
                             upsilon: float = 0.5, workers: int = 1, samples_per_N=None) -> dict:
    """Trend table of the normalized maxima over a bulk (E, t) grid.

    For each N: max S_N(log^E)/log N, max |S_N(arg^E)|/log N and
    max_k N rho(gamma_k)|lambda_k - gamma_k|/log N over the grid, with
    percentile bands over ``samples`` trajectories.  Grid sizes default to
    ``*_points_per_N * N`` so the grid keeps pace with the microscopic scale.
    ``samples_per_N`` optionally maps N to its own sample count.
    """
    table, raw = [], {}
    for ni, N in enumerate(N_list):
        nE = E_points or max(1, int(round(E_points_per_N * N)))
        nt = t_points or max(1, int(round(t_points_per_N * N)))
        Eg = np.linspace(E_range[0], E_range[1], nE) if nE > 1 else np.array([float(E_range[0])])
        tg = np.linspace(t_range[0], t_range[1], nt) if nt > 1 else np.array([float(t_range[0])])
        S = int((samples_per_N or {}).get(N, samples))
        ens = sample_trajectories(N, tg, S, derive_seed(seed, 4, ni), workers)
        am = np.array([arg_mass(float(e)) for e in Eg])
        vals = np.array([_max_stats(ens.eigenvalues[i], Eg, am, upsilon) for i in range(S)])
        raw[N] = vals
        entry = {"N": N, "samples": S, "E_points": nE, "t_points": nt}
        for j, name in enumerate(("max_log", "max_arg", "rigidity")):
            col = vals[:, j]
            entry[name] = {f"p{p}": float(np.percentile(col, p)) for p in PERCENTILES}
            entry[name]["median_stderr"] = _median_stderr(col)
        table.append(entry)
    trend = {}
    if len(N_list) >= 2:
        for name in ("max_log", "max_arg", "rigidity"):
            med = [e[name]["p50"] for e in table]
            rho = float(stats.spearmanr(N_list, med)[0]) if len(N_list) >= 3 else float(
                np.sign(med[-1] - med[0]))
            trend[name] = {"medians": med, "spearman": rho}
    return {"table": table, "trend": trend, "raw": raw}


def _median_stderr(x: np.ndarray) -> float:
    # asymptotic stderr of the median from the interquartile range (normal reference)
    iqr = float(np.subtract(*np.percentile(x, [75, 25])))
    return 1.2533 * (iqr / 1.349) / math.sqrt(len(x))


def _maxstat_rows(cfg: ExperimentConfig) -> ComparisonReport:
    rep = ComparisonReport("maxstat")
    sec = cfg.section("maxstat")
    kw = {k: sec[k] for k in ("E_points_per_N", "t_points_per_N", "E_points", "t_points", "upsilon")
          if k in sec}
    if "E_range" in sec:
        kw["E_range"] = tuple(sec["E_range"])
    if "t_range" in sec:
        kw["t_range"] = tuple(sec["t_range"])
    out = _wrap({"N": cfg.N}, max_statistic_experiment, cfg.N, cfg.samples, cfg.seed,
                workers=cfg.workers, **kw)
    windows = {"max_log": (0.7, 2.0), "max_arg": (1e-12, math.inf), "rigidity": (0.2, 1.5)}
    limits = {"max_log": LIMIT_MAX_LOG, "max_arg": LIMIT_MAX_LOG, "rigidity": LIMIT_RIGIDITY}
    plot = []
    for e in out["table"]:
        for name in ("max_log", "max_arg", "rigidity"):
            b = e[name]
            rep.rows.append(make_row({"statistic": name, "N": e["N"], "n_samples": e["samples"]},
                                     limits[name], b["p50"], b["median_stderr"], window=windows[name]))
            plot.append([name, e["N"]] + [b[f"p{p}"] for p in PERCENTILES])
    for name, tr in out["trend"].items():
        rep.rows.append(make_row({"statistic": f"{name}_spearman", "N": "/".join(map(str, cfg.N)),
                                  "n_samples": cfg.samples}, None, tr["spearman"], None,
                                 window=(1e-12, 1.0) if name == "max_log" else (-1.0, 1.0)))
    rep.plotdata["maxstat"] = {"columns": ["statistic", "N"] + [f"p{p}" for p in PERCENTILES], "rows": plot}
    rep.extras["trend"] = out["trend"]
    rep.extras["table"] = out["table"]
    return rep


# --------------------------------------------------------------------------


def run_experiment(cfg: ExperimentConfig) -> ComparisonReport:
    """Run one configured experiment and return its report (files are written by the CLI)."""
    t0 = time.time()
    kind = cfg.experiment
    if kind == "predict":
        rep = _charge_rows(cfg, True, False)
    elif kind == "simulate":
        rep = _charge_rows(cfg, False, True)
    elif kind == "compare":
        rep = _charge_rows(cfg, True, True)
    elif kind == "kernel":
        rep = _kernel_rows(cfg)
    elif kind == "gmc":
        rep = _gmc_rows(cfg)
    elif kind == "maxstat":
        rep = _maxstat_rows(cfg)
    elif kind == "selftest":
        from .selftest import selftest_rows

        rep = ComparisonReport("selftest", selftest_rows(bool(cfg.section("selftest").get("quick", True))))
    else:  # schema forbids this
        raise ConfigError(f"unknown experiment {kind!r}", "/experiment")
    rep.metadata = _metadata(cfg, t0)
    return rep
