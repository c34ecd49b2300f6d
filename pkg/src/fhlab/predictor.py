"""Closed-form Fisher-Hartwig predictions for the Hermitian OU process and
the exact CUE reference moment.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import loggamma

from .errors import AccuracyWarning, DivergenceError, DomainError
from .specfun import log_barnes_g, log_barnes_g_pair
from .transforms import (
    Charge,
    FunctionSpec,
    Singularity,
    arg_sing,
    c_ring,
    cheb_coeffs,
    covariance_C,
    covariance_C_closed,
    evaluate,
    log_sing,
    principal_value,
    scaled_sum,
    semicircle_mass,
)

GAMMA_NAMES = ("Gamma1", "Gamma2", "Gamma3", "Gamma4", "Gamma5", "Gamma6")


@dataclass
class FHPrediction:
    """Decomposed prediction N*order_N_term + log(N)*log_N_term + constant_term."""

    order_N_term: float
    log_N_term: float
    constant_term: float
    cross_term_Cring: float = 0.0
    per_singularity_constants: list = field(default_factory=list)
    gamma_breakdown: dict | None = None

    def total(self, N: int) -> float:
        return N * self.order_N_term + math.log(N) * self.log_N_term + self.constant_term

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "FHPrediction":
        return cls(**d)


def arg_mass(E: float) -> float:
    """Semicircle mass of arg^E: (pi-E)/2 + E sqrt(4-E^2)/4 - arccos(E/2)."""
    return (math.pi - E) / 2.0 + E * math.sqrt(4.0 - E * E) / 4.0 - math.acos(E / 2.0)


def log_mass(E: float) -> float:
    """Semicircle mass of log^E: (E^2-2)/4."""
    return (E * E - 2.0) / 4.0


def barnes_constant(gamma: float, beta: float) -> float:
    """log(G(1+gamma/2+i beta/2) G(1+gamma/2-i beta/2) / G(1+gamma))."""
    return log_barnes_g_pair(gamma / 2.0, beta / 2.0) - log_barnes_g(gamma)


def position_constant(gamma: float, beta: float, E: float) -> float:
    """The E-dependent part of the single-point constant."""
    r = 4.0 - E * E
    return (gamma * gamma / 8.0 * math.log(r)
            + beta * gamma / 4.0 * (math.pi - E - 2.0 * math.acos(E / 2.0))
            + beta * beta / 8.0 * (1.0 - 2.0 * math.sqrt(r) + 3.0 * math.log(r)))


def single_point_constant(gamma: float, beta: float, E: float) -> float:
    """Single-point log-moment with the log N term removed."""
    if gamma < 0:
        raise DomainError("gamma must be >= 0")
    if not -2.0 < E < 2.0:
        raise DomainError("E must lie in (-2, 2)")
    if gamma == 0.0 and beta == 0.0:
        return 0.0
    return barnes_constant(gamma, beta) + position_constant(gamma, beta, E)


def single_point_log_moment(gamma: float, beta: float, E: float, N: int) -> float:
    """Asymptotic log E[|det(H-E)|^gamma e^{beta Tr arg^E(H)}] minus its order-N part.

    (gamma^2+beta^2)/4 log N + log G-ratio + position terms.
    """
    return (gamma * gamma + beta * beta) / 4.0 * math.log(N) + single_point_constant(gamma, beta, E)


def order_N_term(charge: Charge) -> float:
    """Coefficient of N: the semicircle mass of the summed charge."""
    v = sum(p.gamma * log_mass(p.E) + p.beta * arg_mass(p.E) for p in charge.singularities)
    v += sum(semicircle_mass(q.f) for q in charge.smooth)
    return float(v)


def separation_threshold(N: int, exponent: float = 0.15) -> float:
    return N ** (-1.0 + exponent)


def predict_joint(charge: Charge, N: int, separation_exponent: float = 0.15,
                  gamma5_reading: str = "covariance", tol: float = 1e-12) -> FHPrediction:
    """Multi-time prediction: N mass + per-point constants + C-ring/2.

    When every factor sits at one time the Gamma decomposition is attached
    as ``gamma_breakdown``.

    Raises
    ------
    DivergenceError
        For coincident singular points.
    """
    sep = charge.min_separation
    if sep == 0.0:
        raise DivergenceError("coincident singular points")
    if sep < separation_threshold(N, separation_exponent):
        warnings.warn(
            f"singular points closer than N^(-1+{separation_exponent}) (distance {sep:.3g})",
            AccuracyWarning, stacklevel=2,
        )
    per = [single_point_constant(p.gamma, p.beta, p.E) for p in charge.singularities]
    cr = c_ring(charge, tol=tol) if not charge.is_empty() else 0.0
    pred = FHPrediction(
        order_N_term=order_N_term(charge),
        log_N_term=float(sum((p.gamma ** 2 + p.beta ** 2) / 4.0 for p in charge.singularities)),
        constant_term=float(sum(per) + 0.5 * cr),
        cross_term_Cring=cr,
        per_singularity_constants=per,
    )
    if len(charge.times) == 1:
        f = scaled_sum([q.f for q in charge.smooth], [1.0] * len(charge.smooth))
        pred.gamma_breakdown = _gamma_dict(charge.singularities, f, gamma5_reading, tol=tol)
    return pred


def _gamma_dict(sing, f: FunctionSpec, gamma5_reading: str, gamma4_density: str = "arcsine",
                tol: float = 1e-12) -> dict:
    pts = sorted(sing, key=lambda p: p.E)
    for a, b in zip(pts, pts[1:]):
        if a.E == b.E:
            raise DivergenceError(f"coincident centers at E={a.E}")
    g1 = sum(barnes_constant(p.gamma, p.beta) for p in pts if p.gamma or p.beta)
    g2 = sum(position_constant(p.gamma, p.beta, p.E) for p in pts)
    has_f = bool(f.children)
    g3 = 0.5 * covariance_C(f, 0.0, f, 0.0, tol=tol) if has_f else 0.0
    g4 = 0.0
    if has_f:
        c = cheb_coeffs(f, 2, tol=1e-13).coeffs
        for p in pts:
            fe = float(evaluate(f, p.E))
            pv = principal_value(f, p.E, density=gamma4_density)
            g4 += p.gamma * (c[0] / 2.0 - fe / 2.0)
            g4 += p.beta * (c[1] / 4.0 + math.sqrt(4.0 - p.E ** 2) / 2.0 * pv)
    g5 = 0.0
    g6 = 0.0
    for j in range(len(pts)):
        for k in range(j + 1, len(pts)):
            a, b = pts[j], pts[k]
            g5 -= a.gamma * b.gamma / 2.0 * math.log(abs(a.E - b.E))
            if gamma5_reading == "covariance":
                g5 += a.gamma * b.beta * covariance_C_closed("log", "arg", a.E, b.E, 0.0)
                g5 += a.beta * b.gamma * covariance_C_closed("arg", "log", a.E, b.E, 0.0)
            elif gamma5_reading == "display":
                s = (a.E + b.E) / 4.0
                g5 += a.gamma * b.beta * (math.pi / 4.0 - s - math.acos(b.E / 2.0) / 2.0)
                g5 += a.beta * b.gamma * (3.0 * math.pi / 4.0 - s - math.acos(a.E / 2.0) / 2.0)
            else:
                raise DomainError(f"unknown Gamma5 reading {gamma5_reading!r}")
            ra, rb = 4.0 - a.E ** 2, 4.0 - b.E ** 2
            num = 4.0 - a.E * b.E + math.sqrt(ra * rb)
            den = 4.0 - a.E * b.E - math.sqrt(ra * rb)
            g6 += a.beta * b.beta / 4.0 * (1.0 - math.sqrt(ra) - math.sqrt(rb)
                                           + math.log(abs(num / den)))
    return dict(zip(GAMMA_NAMES, (float(g1), float(g2), float(g3), float(g4), float(g5), float(g6))))


def gamma_terms(charge: Charge, f: FunctionSpec | None = None,
                gamma5_reading: str = "covariance",
                gamma4_density: str = "arcsine") -> FHPrediction:
    """Single-time prediction split into Gamma1..Gamma6.

    ``gamma5_reading='covariance'`` takes the gamma-beta cross terms from the
    closed-form covariances; ``'display'`` uses the pi/4, 3pi/4 display with
    arccos(E/2).  ``gamma4_density`` selects the weight inside the
    principal-value integral of the beta part of Gamma4.
    """
    ts = {p.t for p in charge.singularities} | {q.s for q in charge.smooth}
    if len(ts) > 1:
        raise DomainError("Gamma decomposition needs a single-time charge")
    fs = [q.f for q in charge.smooth] + ([f] if f is not None else [])
    fsum = scaled_sum(fs, [1.0] * len(fs))
    gd = _gamma_dict(charge.singularities, fsum, gamma5_reading, gamma4_density)
    full = Charge(charge.singularities, [])
    order = order_N_term(full) + (semicircle_mass(fsum) if fs else 0.0)
    per = [single_point_constant(p.gamma, p.beta, p.E) for p in charge.singularities]
    return FHPrediction(
        order_N_term=order,
        log_N_term=float(sum((p.gamma ** 2 + p.beta ** 2) / 4.0 for p in charge.singularities)),
        constant_term=float(sum(gd.values())),
        cross_term_Cring=float(2.0 * (gd["Gamma3"] + gd["Gamma4"] + gd["Gamma5"] + gd["Gamma6"])),
        per_singularity_constants=per,
        gamma_breakdown=gd,
    )


def cue_moment(gamma: float, beta: float, N: int) -> float:
    """Exact log E_CUE[|det(1-U)|^gamma e^{beta Im log det(1-U)}] at size N.

    The Selberg-integral G-ratio telescopes into
    sum_{k=1}^N [log Gamma(k) + log Gamma(k+gamma) - 2 Re log Gamma(k + gamma/2 + i beta/2)].

    Raises
    ------
    DomainError
        If gamma <= -1, where the moment is infinite.
    """
    if gamma <= -1.0:
        raise DomainError("the CUE moment is finite only for gamma > -1")
    if N < 0:
        raise DomainError("N must be >= 0")
    if N == 0 or (gamma == 0.0 and beta == 0.0):
        return 0.0
    k = np.arange(1, N + 1, dtype=float)
    a = complex(gamma / 2.0, beta / 2.0)
    terms = loggamma(k) + loggamma(k + gamma) - 2.0 * loggamma(k + a).real
    return float(np.sum(terms.real))


def cue_moment_asymptotic(gamma: float, beta: float, N: int) -> float:
    """(gamma^2+beta^2)/4 log N plus the Barnes G constant."""
    return (gamma ** 2 + beta ** 2) / 4.0 * math.log(N) + barnes_constant(gamma, beta)
