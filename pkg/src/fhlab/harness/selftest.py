"""Fast deterministic invariant checks, run by the ``selftest`` experiment."""

from __future__ import annotations

import math

import numpy as np

from ..kernels import extended_kernel, gue_kernel_cd, mehler_sum
from ..predictor import cue_moment, predict_joint, single_point_log_moment
from ..specfun import (
    ComplexPoint,
    characteristic_curve,
    chebyshev_eval,
    hermite_functions,
    log_barnes_g,
    stieltjes_msc,
    typical_location,
)
from ..transforms import (
    Charge,
    arg_sing,
    Singularity,
    cheb_first,
    cheb_second,
    covariance_C,
    covariance_C_closed,
    log_sing,
    u_transform,
    v_transform,
)
from .report import make_row


def _checks(quick: bool):
    x = np.linspace(-1.9, 1.9, 41)
    th = np.arccos(x / 2.0)
    yield "chebyshev_first_trig", 0.0, max(
        float(np.max(np.abs(chebyshev_eval("first", n, x) - np.cos(n * th)))) for n in range(0, 33)), 1e-10
    yield "chebyshev_second_trig", 0.0, max(
        float(np.max(np.abs(chebyshev_eval("second", n - 1, x) - np.sin(n * th) / np.sin(th))))
        for n in range(1, 33)), 1e-10
    z = ComplexPoint(0.3, 0.7)
    m = stieltjes_msc(z)
    yield "msc_fixed_point", 0.0, abs(m * m + z.z * m + 1.0), 1e-12
    zt = characteristic_curve(z, 0.8)
    yield "characteristic_curve", 0.0, abs(stieltjes_msc(ComplexPoint.from_complex(zt)) - math.exp(-0.4) * m), 1e-10
    yield "barnes_g_4", math.log(2.0), log_barnes_g(3.0), 1e-12
    yield "barnes_g_recursion", log_barnes_g(6.5) + math.lgamma(7.5), log_barnes_g(7.5), 1e-11
    yield "typical_location_half", 0.0, typical_location(50, 100), 1e-12
    xs = np.linspace(-1.5, 1.5, 25)
    for n in (1, 4, 9):
        yield f"v_transform_T{n}", 0.0, float(np.max(np.abs(
            v_transform(cheb_first(n), 0.5, xs) - 0.5 * math.exp(-0.25 * n) * chebyshev_eval("second", n - 1, xs)))), 1e-9
        yield f"u_transform_U{n - 1}", 0.0, float(np.max(np.abs(
            u_transform(cheb_second(n - 1), 0.5, xs) - 2.0 * math.exp(-0.25 * n) * chebyshev_eval("first", n, xs)))), 1e-9
    yield "C_log_log_tau1", -0.5 * math.log(1.0 - math.exp(-1.0)), covariance_C_closed("log", "log", 0.0, 0.0, 1.0), 1e-12
    yield "C_series_vs_closed", covariance_C_closed("log", "arg", 0.3, -0.4, 0.5), covariance_C(
        log_sing(0.3), 0.0, arg_sing(-0.4), 0.5,
        method="series"), 1e-9
    yield "cue_moment_gamma2", math.log(65.0), cue_moment(2.0, 0.0, 64), 1e-11 * math.log(65.0)
    ch = Charge([Singularity(0.0, 0.0, 2.0, 0.0)])
    yield "single_point_gamma2", math.log(100.0) + math.log(2.0), single_point_log_moment(2.0, 0.0, 0.0, 100), 1e-12
    yield "predict_order_N", -100.0, predict_joint(ch, 100).order_N_term * 100.0, 1e-12
    tab = hermite_functions(40, np.array([0.0]))
    yield "hermite_psi0", (2.0 * math.pi) ** -0.25, float(tab[0, 0]), 1e-14
    u = 0.6
    yield "mehler_origin", 1.0 / math.sqrt(2.0 * math.pi * (1.0 - u * u)), float(mehler_sum(0.0, 0.0, u)), 1e-14
    N = 40 if quick else 200
    pts = np.linspace(-1.2, 1.2, 9)
    yield "extended_equal_time", 0.0, float(np.max(np.abs(
        extended_kernel(0.2, pts, 0.2, pts[::-1], N, method="direct") - gue_kernel_cd(pts, pts[::-1], N)))), 1e-10


def selftest_rows(quick: bool = True) -> list:
    rows = []
    for name, expected, computed, tol in _checks(quick):
        rows.append(make_row({"check": name}, float(expected), float(computed), 0.0, abs_floor=tol))
    return rows
