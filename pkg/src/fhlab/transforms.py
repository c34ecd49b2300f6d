"""Test-function descriptors, Chebyshev coefficients, the weighted Hilbert
transforms U_t / V_t and the covariance form C with its diagonal-free variant.

Conventions
-----------
x = 2cos(theta) on (-2, 2).  First-kind coefficients f_n satisfy
f = sum_n f_n T_n(x/2); the time-dependent transforms act diagonally::

    V_t T_n = e^{-tn/2} U_{n-1}(x/2) / 2,     U_t U_{n-1}(x/2) = 2 e^{-tn/2} T_n(x/2)

and C(f, t, h, s) = 1/4 sum_k e^{-|t-s|k/2} k f_k h_k.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import fft, integrate

from .errors import ConvergenceError, DivergenceError, DomainError, SingularValueError
from .specfun import chebyshev_eval

KINDS = (
    "cheb_first",
    "cheb_second",
    "log_sing",
    "arg_sing",
    "jump_sing",
    "bump",
    "series",
    "scaled_sum",
)
SINGULAR_KINDS = ("log_sing", "arg_sing", "jump_sing")
DIRECTIONS = ("right", "left", "none")

DEFAULT_TOL = 1e-10
MAX_TERMS = 2**22
_MAX_DCT = 2**24


# --------------------------------------------------------------------------
# smooth building blocks


def smoothstep(u):
    """Quintic smoothstep 6u^5 - 15u^4 + 10u^3 clamped to [0, 1]."""
    u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
    return u * u * u * (u * (6.0 * u - 15.0) + 10.0)


def bump_chi(x):
    """Even bump: 1 on [-1, 1], 0 outside [-2, 2], quintic transitions."""
    return smoothstep(2.0 - np.abs(np.asarray(x, dtype=float)))


def xi_right(x):
    """Right step regularization: pi/2 on (-inf, 0], -pi/2 on [1, inf)."""
    return np.pi / 2.0 - np.pi * smoothstep(x)


def xi_left(x):
    """Left step regularization: pi/2 on (-inf, -1], -pi/2 on [0, inf)."""
    return xi_right(np.asarray(x, dtype=float) + 1.0)


# --------------------------------------------------------------------------
# FunctionSpec


@dataclass(frozen=True)
class FunctionSpec:
    """Symbolic description of a test function on R.

    Use the module-level constructors (``cheb_first``, ``log_sing``, ...)
    rather than building instances directly.  Instances are immutable and
    hashable, and support ``+``, ``-`` and multiplication by scalars.
    """

    kind: str
    n: int = 0
    center: float = 0.0
    epsilon: float = 0.0
    direction: str = "none"
    coeffs: tuple = ()
    basis: str = "first"
    children: tuple = ()
    weights: tuple = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown function kind {self.kind!r}")
        if self.direction not in DIRECTIONS:
            raise DomainError(f"unknown direction {self.direction!r}")
        if self.kind in ("cheb_first", "cheb_second") and self.n < 0:
            raise DomainError("Chebyshev index must be >= 0")
        if self.kind in SINGULAR_KINDS or self.kind == "bump":
            if not math.isfinite(self.center) or not -2.0 < self.center < 2.0:
                raise DomainError(f"center {self.center} must lie in (-2, 2)")
            if not (self.epsilon >= 0.0 and math.isfinite(self.epsilon)):
                raise DomainError(f"regularization {self.epsilon} must be >= 0")
        if self.kind == "bump" and self.epsilon <= 0.0:
            raise DomainError("bump width must be > 0")
        if self.kind in ("arg_sing", "jump_sing"):
            if self.epsilon > 0 and self.direction == "none":
                raise DomainError("regularized arg/jump needs direction 'right' or 'left'")
            if self.epsilon == 0 and self.direction != "none":
                raise DomainError("unregularized arg/jump takes direction 'none'")
        if self.kind == "series" and self.basis not in ("first", "second"):
            raise DomainError(f"unknown series basis {self.basis!r}")
        if self.kind == "scaled_sum":
            if len(self.children) != len(self.weights):
                raise DomainError("scaled_sum needs one weight per child")
            if any(c.kind == "scaled_sum" for c in self.children):
                raise DomainError("scaled_sum children must be flattened")

    # algebra -------------------------------------------------------------
    def __add__(self, other):
        if not isinstance(other, FunctionSpec):
            return NotImplemented
        return scaled_sum([self, other], [1.0, 1.0])

    def __sub__(self, other):
        if not isinstance(other, FunctionSpec):
            return NotImplemented
        return scaled_sum([self, other], [1.0, -1.0])

    def __mul__(self, w):
        if isinstance(w, FunctionSpec):
            return NotImplemented
        return scaled_sum([self], [float(w)])

    __rmul__ = __mul__

    def __neg__(self):
        return scaled_sum([self], [-1.0])

    def __call__(self, x):
        return evaluate(self, x)

    # predicates ------------------------------------------------------------
    @property
    def is_singular(self) -> bool:
        """True for unregularized log/arg/jump atoms."""
        return self.kind in SINGULAR_KINDS and self.epsilon == 0.0

    @property
    def support_halfwidth(self) -> float | None:
        return 2.0 * self.epsilon if self.kind == "bump" else None

    def atoms(self) -> list[tuple[float, "FunctionSpec"]]:
        """(weight, atom) pairs whose weighted sum is this function."""
        if self.kind == "scaled_sum":
            return list(zip(self.weights, self.children))
        return [(1.0, self)]

    # serialization -----------------------------------------------------------
    def to_dict(self) -> dict:
        d: dict = {"kind": self.kind}
        if self.kind in ("cheb_first", "cheb_second"):
            d["n"] = self.n
        elif self.kind in SINGULAR_KINDS or self.kind == "bump":
            d["center"] = self.center
            d["epsilon"] = self.epsilon
            d["direction"] = self.direction
        elif self.kind == "series":
            d["coeffs"] = list(self.coeffs)
            d["basis"] = self.basis
        else:
            d["children"] = [c.to_dict() for c in self.children]
            d["weights"] = list(self.weights)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FunctionSpec":
        kind = d.get("kind")
        if kind in ("cheb_first", "cheb_second"):
            return cls(kind, n=int(d["n"]))
        if kind in SINGULAR_KINDS or kind == "bump":
            eps = float(d.get("epsilon", 0.0))
            default_dir = "right" if (kind != "log_sing" and kind != "bump" and eps > 0) else "none"
            return cls(kind, center=float(d["center"]), epsilon=eps,
                       direction=d.get("direction", default_dir))
        if kind == "series":
            return series(d["coeffs"], d.get("basis", "first"))
        if kind == "scaled_sum":
            return scaled_sum([cls.from_dict(c) for c in d["children"]], d["weights"])
        raise DomainError(f"unknown function kind {kind!r}")


def cheb_first(n: int) -> FunctionSpec:
    return FunctionSpec("cheb_first", n=int(n))


def cheb_second(n: int) -> FunctionSpec:
    return FunctionSpec("cheb_second", n=int(n))


def log_sing(center: float, epsilon: float = 0.0) -> FunctionSpec:
    """log|x - E|, or its regularization log_eps^E when ``epsilon > 0``."""
    return FunctionSpec("log_sing", center=float(center), epsilon=float(epsilon))


def arg_sing(center: float, epsilon: float = 0.0, direction: str | None = None) -> FunctionSpec:
    """arg^E(x) = (x-E)/2 + Xi^E(x), optionally with a right/left regularization."""
    if direction is None:
        direction = "right" if epsilon > 0 else "none"
    return FunctionSpec("arg_sing", center=float(center), epsilon=float(epsilon), direction=direction)


def jump_sing(center: float, epsilon: float = 0.0, direction: str | None = None) -> FunctionSpec:
    """Step Xi^E = pi/2 on x < E and -pi/2 on x >= E, optionally regularized."""
    if direction is None:
        direction = "right" if epsilon > 0 else "none"
    return FunctionSpec("jump_sing", center=float(center), epsilon=float(epsilon), direction=direction)


def bump(center: float, epsilon: float) -> FunctionSpec:
    """chi_eps^E(x) = chi((x-E)/eps), supported on [E-2eps, E+2eps]."""
    return FunctionSpec("bump", center=float(center), epsilon=float(epsilon))


def series(coeffs: Sequence[float], basis: str = "first") -> FunctionSpec:
    """Explicit expansion sum_n c_n T_n(x/2) (or U_n(x/2) for basis='second')."""
    c = tuple(float(v) for v in coeffs)
    return FunctionSpec("series", coeffs=c, basis=basis)


def constant(c: float) -> FunctionSpec:
    return series([c])


def scaled_sum(children: Iterable[FunctionSpec], weights: Iterable[float]) -> FunctionSpec:
    """Weighted sum of functions, flattened so children are never sums."""
    flat_c: list[FunctionSpec] = []
    flat_w: list[float] = []
    for c, w in zip(children, weights):
        for wc, a in c.atoms():
            flat_c.append(a)
            flat_w.append(float(w) * wc)
    return FunctionSpec("scaled_sum", children=tuple(flat_c), weights=tuple(flat_w))


# --------------------------------------------------------------------------
# pointwise evaluation


def _xi_step(y, eps, direction):
    if eps == 0.0:
        return np.where(y < 0.0, np.pi / 2.0, -np.pi / 2.0)
    if direction == "right":
        return xi_right(y / eps)
    return xi_left(y / eps)


def evaluate(f: FunctionSpec, x):
    """Pointwise value of ``f`` at ``x`` (scalar or array).

    Raises
    ------
    SingularValueError
        For an unregularized logarithm evaluated exactly at its center.
    """
    xa = np.asarray(x, dtype=float)
    k = f.kind
    if k == "cheb_first":
        out = np.asarray(chebyshev_eval("first", f.n, xa))
    elif k == "cheb_second":
        out = np.asarray(chebyshev_eval("second", f.n, xa))
    elif k == "series":
        out = _clenshaw(np.asarray(f.coeffs), xa, f.basis)
    elif k == "scaled_sum":
        out = np.zeros_like(xa)
        for w, c in zip(f.weights, f.children):
            out = out + w * evaluate(c, xa)
    elif k == "bump":
        out = bump_chi((xa - f.center) / f.epsilon)
    else:
        y = xa - f.center
        if k == "log_sing":
            if f.epsilon == 0.0:
                if np.any(y == 0.0):
                    raise SingularValueError(f"log|x-E| evaluated at its center E={f.center}")
                out = np.log(np.abs(y))
            else:
                chi = bump_chi(y / f.epsilon)
                with np.errstate(divide="ignore", invalid="ignore"):
                    ly = np.log(np.abs(y))
                    out = np.where(chi == 1.0, math.log(2.0 * f.epsilon),
                                   ly * (1.0 - chi) + math.log(2.0 * f.epsilon) * chi)
        elif k == "jump_sing":
            out = _xi_step(y, f.epsilon, f.direction)
        else:
            out = y / 2.0 + _xi_step(y, f.epsilon, f.direction)
    return float(out) if np.ndim(out) == 0 else out


def _clenshaw(c: np.ndarray, x, basis: str):
    x = np.asarray(x, dtype=float)
    if c.size == 0:
        return np.zeros_like(x)
    b1 = np.zeros_like(x)
    b2 = np.zeros_like(x)
    for ck in c[:0:-1]:
        b1, b2 = ck + x * b1 - b2, b1
    b0 = c[0] + x * b1 - b2
    if basis == "first":
        return b0 - x / 2.0 * b1
    return b0


# --------------------------------------------------------------------------
# Chebyshev coefficients


@dataclass(frozen=True)
class ChebyshevSeries:
    """First-kind coefficients f_0..f_{n_max} and a tail estimate."""

    coeffs: np.ndarray
    n_max: int
    tail: float

    def __call__(self, x):
        return _clenshaw(self.coeffs, x, "first")


def _tail_sup(c: np.ndarray) -> float:
    n = len(c) - 1
    if n < 1:
        return 0.0
    return float(np.max(np.abs(c[n // 10 + 1:]))) if n >= 1 else 0.0


def _second_to_first(a: np.ndarray) -> np.ndarray:
    """Convert sum_m a_m U_m to first-kind coefficients (U_m = sum of T_j, j = m mod 2)."""
    c = np.zeros(len(a))
    for parity in (0, 1):
        sub = a[parity::2]
        suffix = np.cumsum(sub[::-1])[::-1]
        c[parity::2] = 2.0 * suffix
    if len(a):
        c[0] = np.sum(a[0::2])
    return c


def first_to_second(c: np.ndarray) -> np.ndarray:
    """Second-kind coefficients a_m with sum a_m U_m = sum c_n T_n.

    Uses T_0 = U_0, T_1 = U_1/2 and T_n = (U_n - U_{n-2})/2; the result has
    two fewer reliable entries than ``c``.
    """
    c = np.asarray(c, dtype=float)
    a = np.zeros(len(c))
    a[: len(c)] += c / 2.0
    a[0] = c[0]
    a[: len(c) - 2] -= c[2:] / 2.0
    return a


def _analytic_coeffs(f: FunctionSpec, n_max: int) -> np.ndarray:
    # unregularized log / arg / jump at E = 2cos(alpha)
    alpha = math.acos(f.center / 2.0)
    n = np.arange(1, n_max + 1)
    c = np.zeros(n_max + 1)
    if f.kind == "log_sing":
        c[1:] = -2.0 * np.cos(n * alpha) / n
        return c
    c[1:] = -2.0 * np.sin(n * alpha) / n
    c[0] = np.pi / 2.0 - alpha
    if f.kind == "arg_sing":
        c[0] -= f.center / 2.0
        if n_max >= 1:
            c[1] += 1.0
    return c


@functools.lru_cache(maxsize=256)
def _dct_coeffs(f: FunctionSpec, m: int) -> np.ndarray:
    theta = np.pi * (np.arange(m) + 0.5) / m
    vals = evaluate(f, 2.0 * np.cos(theta))
    c = fft.dct(vals, type=2) / m
    c[0] /= 2.0
    c.setflags(write=False)
    return c


def _dct_converged(f: FunctionSpec, n_max: int, tol: float) -> tuple[np.ndarray, int]:
    m = max(256, 1 << int(math.ceil(math.log2(2 * (n_max + 1)))))
    prev = _dct_coeffs(f, m)
    while True:
        if 2 * m > _MAX_DCT:
            raise ConvergenceError(
                f"coefficient quadrature did not stabilize for {f.kind} "
                f"(center={f.center}, epsilon={f.epsilon})"
            )
        cur = _dct_coeffs(f, 2 * m)
        if np.max(np.abs(cur[: n_max + 1] - prev[: n_max + 1])) <= tol:
            return cur, 2 * m
        prev, m = cur, 2 * m


def _atom_coeffs(f: FunctionSpec, n_max: int, tol: float) -> np.ndarray:
    k = f.kind
    c = np.zeros(n_max + 1)
    if k == "cheb_first":
        if f.n <= n_max:
            c[f.n] = 1.0
        return c
    if k == "cheb_second":
        a = np.zeros(f.n + 1)
        a[f.n] = 1.0
        full = _second_to_first(a)
        m = min(n_max, f.n)
        c[: m + 1] = full[: m + 1]
        return c
    if k == "series":
        cc = np.asarray(f.coeffs)
        full = cc if f.basis == "first" else _second_to_first(cc)
        m = min(n_max + 1, len(full))
        c[:m] = full[:m]
        return c
    if f.is_singular:
        return _analytic_coeffs(f, n_max)
    full, _ = _dct_converged(f, n_max, tol)
    return np.array(full[: n_max + 1])


def cheb_coeffs(f: FunctionSpec, n_max: int | None = None, tol: float = 1e-12) -> ChebyshevSeries:
    """First-kind Chebyshev coefficients of ``f``.

    Polynomials and series are exact, unregularized singular kinds use closed
    formulas and everything else is computed by a midpoint-rule cosine
    transform on the theta grid, doubled until stable to ``tol``.  With
    ``n_max=None`` the length is chosen so that all later coefficients are
    below ``tol``.
    """
    if n_max is None:
        n_max = natural_length(f, tol)
        if n_max is None:
            raise ConvergenceError(
                "an unregularized singular function has no finite expansion; pass n_max"
            )
    c = np.zeros(n_max + 1)
    for w, a in f.atoms():
        c += w * _atom_coeffs(a, n_max, tol)
    return ChebyshevSeries(c, n_max, _tail_sup(c))


@functools.lru_cache(maxsize=256)
def _atom_natural_length(f: FunctionSpec, tol: float) -> int | None:
    k = f.kind
    if k in ("cheb_first", "cheb_second"):
        return f.n
    if k == "series":
        return max(len(f.coeffs) - 1, 0)
    if f.is_singular:
        return None
    n = max(64, int(8.0 / f.epsilon))
    while n <= MAX_TERMS:
        full, m = _dct_converged(f, n, tol)
        big = np.nonzero(np.abs(full[: m // 2]) > tol)[0]
        last = int(big[-1]) if big.size else 0
        if last < n:
            return last + 1
        n *= 4
    raise ConvergenceError(f"coefficients of {f.kind} (epsilon={f.epsilon}) decay too slowly")


def natural_length(f: FunctionSpec, tol: float = 1e-12) -> int | None:
    """Index beyond which all coefficients are below ``tol`` (None if infinite)."""
    out = 0
    for _, a in f.atoms():
        n = _atom_natural_length(a, tol)
        if n is None:
            return None
        out = max(out, n)
    return out


def arcsine_mass(f: FunctionSpec) -> float:
    """Integral of f against the arcsine law, i.e. f_0."""
    return float(cheb_coeffs(f, 2).coeffs[0])


def semicircle_mass(f: FunctionSpec) -> float:
    """Integral of f against the semicircle law, f_0 - f_2/2."""
    total = 0.0
    for w, a in f.atoms():
        if a.is_singular:
            E = a.center
            if a.kind == "log_sing":
                v = (E * E - 2.0) / 4.0
            else:
                v = ((np.pi - E) / 2.0 + E * math.sqrt(4.0 - E * E) / 4.0
                     - math.acos(E / 2.0))
                if a.kind == "jump_sing":
                    v -= -E / 2.0
            total += w * v
        else:
            c = _atom_coeffs(a, 2, 1e-13)
            total += w * (c[0] - c[2] / 2.0)
    return float(total)


# --------------------------------------------------------------------------
# V_t and U_t


def _check_bulk(x):
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(x) >= 2.0):
        raise DomainError("the transform is evaluated on (-2, 2) only")
    return x


def _im_log1m(q, phi):
    return np.angle(1.0 - q * np.exp(1j * phi))


def _abs_log1m(q, phi):
    return np.log(np.abs(1.0 - q * np.exp(1j * phi)))


def _v_closed(f: FunctionSpec, t: float, x: np.ndarray):
    q = math.exp(-t / 2.0)
    alpha = math.acos(f.center / 2.0)
    beta = np.arccos(x / 2.0)
    sb = np.sin(beta)
    if f.kind == "log_sing":
        return (_im_log1m(q, beta + alpha) + _im_log1m(q, beta - alpha)) / (2.0 * sb)
    if t == 0.0 and np.any(x == f.center):
        raise SingularValueError("V arg^E diverges at x = E for t = 0")
    v = (_abs_log1m(q, alpha - beta) - _abs_log1m(q, alpha + beta)) / (2.0 * sb)
    if f.kind == "arg_sing":
        v = v + q / 2.0
    return v


def _series_terms(f: FunctionSpec, t: float, tol: float, n_terms) -> int:
    if n_terms is not None:
        return int(n_terms)
    n = natural_length(f, tol)
    if t > 0:
        geo = int(math.ceil(2.0 * (math.log(1.0 / tol) + 2.0) / t)) + 1
        n = geo if n is None else min(n, geo)
    if n is None or n > MAX_TERMS:
        raise ConvergenceError("coefficient decay too slow for the requested tolerance")
    return max(n, 1)


def v_transform_coeffs(f: FunctionSpec, t: float = 0.0, tol: float = DEFAULT_TOL,
                       n_terms: int | None = None) -> np.ndarray:
    """Second-kind coefficients a_m of V_t f = sum_m a_m U_m(x/2)."""
    if t < 0:
        raise DomainError("time must be >= 0")
    K = _series_terms(f, t, tol, n_terms)
    c = cheb_coeffs(f, K, tol=min(tol, 1e-12)).coeffs
    n = np.arange(1, K + 1)
    return 0.5 * np.exp(-t * n / 2.0) * c[1:]


def v_transform(f: FunctionSpec, t: float, x, tol: float = DEFAULT_TOL,
                n_terms: int | None = None, method: str = "auto"):
    """V_t f(x) = 1/2 sum_n e^{-tn/2} f_n U_{n-1}(x/2) for x in (-2, 2).

    Unregularized log/arg/jump atoms use resummed closed forms for every t
    (``method='auto'``); ``method='series'`` forces the truncated series.
    """
    x = _check_bulk(x)
    out = np.zeros_like(x)
    rest = []
    for w, a in f.atoms():
        if a.is_singular and method == "auto":
            out = out + w * _v_closed(a, t, x)
        elif a.is_singular and n_terms is None:
            raise ConvergenceError("series for a singular function needs n_terms")
        else:
            rest.append((w, a))
    if rest:
        g = scaled_sum([a for _, a in rest], [w for w, _ in rest])
        coeffs = v_transform_coeffs(g, t, tol, n_terms)
        out = out + _clenshaw(coeffs, x, "second")
    return float(out) if out.ndim == 0 else out


def v_transform_spec(f: FunctionSpec, t: float = 0.0, tol: float = DEFAULT_TOL,
                     n_terms: int | None = None) -> FunctionSpec:
    """V_t f as an explicit second-kind series."""
    return series(v_transform_coeffs(f, t, tol, n_terms), basis="second")


def second_kind_coeffs(g: FunctionSpec, n_max: int, tol: float = 1e-12) -> np.ndarray:
    """a_0..a_{n_max} with g = sum_m a_m U_m(x/2)."""
    out = np.zeros(n_max + 1)
    for w, a in g.atoms():
        if a.kind == "cheb_second":
            if a.n <= n_max:
                out[a.n] += w
        elif a.kind == "series" and a.basis == "second":
            cc = np.asarray(a.coeffs)[: n_max + 1]
            out[: len(cc)] += w * cc
        else:
            c = _atom_coeffs(a, n_max + 2, tol)
            out += w * first_to_second(c)[: n_max + 1]
    return out


def u_transform(g: FunctionSpec, t: float, x, tol: float = DEFAULT_TOL,
                n_terms: int | None = None):
    """U_t g(x) = 2 sum_{n>=1} e^{-tn/2} a_{n-1} T_n(x/2) with g = sum a_m U_m."""
    if t < 0:
        raise DomainError("time must be >= 0")
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(x) > 2.0):
        raise DomainError("the transform is evaluated on [-2, 2] only")
    K = _series_terms(g, t, tol, n_terms) + 1
    a = second_kind_coeffs(g, K, tol=min(tol, 1e-12))
    n = np.arange(1, K + 1)
    c = np.zeros(K + 1)
    c[1:] = 2.0 * np.exp(-t * n / 2.0) * a[:K]
    out = _clenshaw(c, x, "first")
    return float(out) if np.ndim(out) == 0 else out


# --------------------------------------------------------------------------
# principal value integrals


def principal_value(g, E: float, density: str = "arcsine", limit: int = 400) -> float:
    """PV integral of g(y)/(E-y) against the arcsine or semicircle law.

    With y = 2cos(phi) the singular part integrates to zero against the
    arcsine weight, so the integrand G(phi) - G(alpha) over
    2(cos(alpha) - cos(phi)) is regular and handled by adaptive quadrature.
    """
    if not -2.0 < E < 2.0:
        raise DomainError("PV center must lie in (-2, 2)")
    fun = g if callable(g) else (lambda y: evaluate(g, y))
    alpha = math.acos(E / 2.0)
    ca = math.cos(alpha)
    if density == "arcsine":
        def G(phi):
            return fun(2.0 * math.cos(phi)) / math.pi
    elif density == "semicircle":
        def G(phi):
            return fun(2.0 * math.cos(phi)) * 2.0 * math.sin(phi) ** 2 / math.pi
    else:
        raise DomainError(f"unknown density {density!r}")
    Ga = G(alpha)

    def integrand(phi):
        d = ca - math.cos(phi)
        if abs(phi - alpha) < 1e-7:
            h = 1e-5
            d1 = ca - math.cos(alpha + h)
            return (G(alpha + h) - Ga) / (2.0 * d1)
        return (G(phi) - Ga) / (2.0 * d)

    val, _ = integrate.quad(integrand, 0.0, math.pi, points=[alpha], limit=limit,
                            epsabs=1e-12, epsrel=1e-12)
    return float(val)


# --------------------------------------------------------------------------
# covariance form


def covariance_C_closed(kind1: str, kind2: str, x: float, y: float, tau: float) -> float:
    """Closed forms of C between unregularized log/arg singularities.

    ``kind1`` sits at ``x`` and ``kind2`` at ``y``; ``tau`` is the time gap.
    """
    if tau < 0:
        raise DomainError("time gap must be >= 0")
    for v in (x, y):
        if not -2.0 < v < 2.0:
            raise DomainError("closed forms need centers in (-2, 2)")
    if tau == 0.0 and x == y:
        raise DivergenceError("C diverges at coincident singular points")
    th, om = math.acos(x / 2.0), math.acos(y / 2.0)
    q = math.exp(-tau / 2.0)
    kinds = (kind1, kind2)
    if kinds == ("log", "log"):
        return float(-0.5 * (_abs_log1m(q, th - om) + _abs_log1m(q, th + om)))
    if kinds == ("arg", "log"):
        return covariance_C_closed("log", "arg", y, x, tau)
    if kinds == ("log", "arg"):
        return float(-0.5 * (_im_log1m(q, th + om) + _im_log1m(q, om - th)) - q * x / 4.0)
    if kinds == ("arg", "arg"):
        r = -0.5 * (_abs_log1m(q, th - om) - _abs_log1m(q, th + om))
        return float(r + q * (1.0 - math.sqrt(4.0 - x * x) - math.sqrt(4.0 - y * y)) / 4.0)
    raise DomainError(f"no closed form for ({kind1}, {kind2})")


def covariance_series(fc: np.ndarray, hc: np.ndarray, tau: float) -> float:
    """1/4 sum_{k>=1} e^{-tau k/2} k f_k h_k over the common length."""
    K = min(len(fc), len(hc)) - 1
    if K < 1:
        return 0.0
    k = np.arange(1, K + 1)
    return float(0.25 * np.sum(np.exp(-tau * k / 2.0) * k * (fc[1:K + 1] * hc[1:K + 1])))


def _closed_pair(a: FunctionSpec, b: FunctionSpec, tau: float) -> float:
    ka = "log" if a.kind == "log_sing" else "arg"
    kb = "log" if b.kind == "log_sing" else "arg"
    parts = [covariance_C_closed(ka, kb, a.center, b.center, tau)]
    q = math.exp(-tau / 2.0)
    # Xi^E = arg^E - T_1 + const, and C(T_1, arg^y) = q/4 (1 - sqrt(4-y^2)), C(T_1, log^y) = -q y/4
    for j, other in ((a, b), (b, a)):
        if j.kind == "jump_sing":
            if other.kind == "log_sing":
                parts.append(q * other.center / 4.0)
            else:
                parts.append(-q * (1.0 - math.sqrt(4.0 - other.center ** 2)) / 4.0)
    if a.kind == "jump_sing" and b.kind == "jump_sing":
        parts.append(q / 4.0)
    return math.fsum(parts)


def _pair_terms(a: FunctionSpec, b: FunctionSpec, tau: float, tol: float) -> int:
    ctol = min(tol * 1e-2, 1e-12)
    lengths = [n for n in (natural_length(a, ctol), natural_length(b, ctol)) if n is not None]
    if tau > 0:
        lengths.append(int(math.ceil(2.0 * (math.log(1.0 / tol) + 3.0) / tau)) + 1)
    if not lengths:
        raise DivergenceError("no finite truncation for this pair")
    K = max(min(lengths), 1)
    if K > MAX_TERMS:
        raise ConvergenceError("series for C needs too many terms")
    return K


def _pair_C(a: FunctionSpec, b: FunctionSpec, tau: float, tol: float, n_terms, method) -> float:
    if a.is_singular and b.is_singular and method == "auto":
        return _closed_pair(a, b, tau)
    if a.is_singular and b.is_singular and tau == 0.0 and a.center == b.center:
        raise DivergenceError("C diverges at coincident singular points")
    K = int(n_terms) if n_terms is not None else _pair_terms(a, b, tau, tol)
    ctol = min(tol, 1e-12)
    return covariance_series(_atom_coeffs(a, K, ctol), _atom_coeffs(b, K, ctol), tau)


def covariance_C(f: FunctionSpec, t: float, h: FunctionSpec, s: float,
                 tol: float = DEFAULT_TOL, n_terms: int | None = None,
                 method: str = "auto") -> float:
    """Covariance form C(f(H_t), h(H_s)) = 1/4 sum e^{-|t-s|k/2} k f_k h_k.

    Bilinear over ``scaled_sum`` atoms.  Pairs of unregularized singular
    atoms use closed forms (``method='auto'``); otherwise the series is
    truncated where the coefficient decay or the time gap makes the tail
    smaller than ``tol``, or at ``n_terms`` if given.

    Raises
    ------
    DivergenceError
        For unregularized singular atoms at the same point and time.
    """
    tau = abs(float(t) - float(s))
    # fsum is exactly rounded, so the result does not depend on argument order
    parts = [(wa * wb) * _pair_C(a, b, tau, tol, n_terms, method)
             for wa, a in f.atoms() for wb, b in h.atoms() if wa != 0.0 and wb != 0.0]
    return float(math.fsum(parts))


# --------------------------------------------------------------------------
# charges


@dataclass(frozen=True)
class Singularity:
    """Space-time Fisher-Hartwig charge |det(H_t - E)|^gamma e^{beta Tr arg^E(H_t)}."""

    t: float
    E: float
    gamma: float = 0.0
    beta: float = 0.0

    def __post_init__(self):
        if self.gamma < 0:
            raise DomainError(f"gamma must be >= 0, got {self.gamma}")
        if not -2.0 < self.E < 2.0:
            raise DomainError(f"center {self.E} must lie in (-2, 2)")


@dataclass(frozen=True)
class SmoothTerm:
    """A factor e^{Tr f(H_s)}."""

    s: float
    f: FunctionSpec


@dataclass(frozen=True)
class Charge:
    singularities: tuple = ()
    smooth: tuple = ()

    def __init__(self, singularities=(), smooth=()):
        object.__setattr__(self, "singularities", tuple(singularities))
        object.__setattr__(self, "smooth", tuple(smooth))

    @property
    def times(self) -> list[float]:
        ts = {p.t for p in self.singularities} | {q.s for q in self.smooth}
        return sorted(ts)

    @property
    def min_separation(self) -> float:
        """Smallest space-time distance between singular points (inf if < 2)."""
        pts = self.singularities
        best = math.inf
        for i in range(len(pts)):
            for j in range(i + 1, len(pts)):
                d = math.hypot(pts[i].t - pts[j].t, pts[i].E - pts[j].E)
                best = min(best, d)
        return best

    def is_empty(self) -> bool:
        return not self.singularities and not self.smooth

    def terms(self) -> list[tuple[float, FunctionSpec, int | None]]:
        """(time, function, owner) with owner the singularity index or None."""
        out = []
        for j, p in enumerate(self.singularities):
            if p.gamma:
                out.append((p.t, p.gamma * log_sing(p.E), j))
            if p.beta:
                out.append((p.t, p.beta * arg_sing(p.E), j))
        for q in self.smooth:
            out.append((q.s, q.f, None))
        return out

    def to_dict(self) -> dict:
        return {
            "singularities": [
                {"t": p.t, "E": p.E, "gamma": p.gamma, "beta": p.beta} for p in self.singularities
            ],
            "smooth": [{"s": q.s, "f": q.f.to_dict()} for q in self.smooth],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Charge":
        sing = [Singularity(float(p["t"]), float(p["E"]), float(p.get("gamma", 0.0)),
                            float(p.get("beta", 0.0))) for p in d.get("singularities", [])]
        smooth = [SmoothTerm(float(q["s"]), FunctionSpec.from_dict(q["f"]))
                  for q in d.get("smooth", [])]
        return cls(sing, smooth)


def c_ring(charge: Charge, tol: float = DEFAULT_TOL) -> float:
    """C of the summed charge with every pair inside one singularity removed."""
    pts = charge.singularities
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            if pts[i].t == pts[j].t and pts[i].E == pts[j].E:
                raise DivergenceError("coincident singular points")
    terms = charge.terms()
    total = 0.0
    for i, (ti, fi, oi) in enumerate(terms):
        for j in range(i, len(terms)):
            tj, fj, oj = terms[j]
            if oi is not None and oi == oj:
                continue
            v = covariance_C(fi, ti, fj, tj, tol=tol)
            total += v if i == j else 2.0 * v
    return float(total)


# --------------------------------------------------------------------------
# dyadic scale decompositions


def decompose_to_scale_classes(f: FunctionSpec, top_scale: float = 1.0) -> list[tuple[float, FunctionSpec]]:
    """Dyadic splitting of a regularized singularity into scale pieces.

    Returns ``[(scale, piece), ...]`` from the finest scale ``eps`` upward.
    Every piece but the last is compactly supported on a window of width
    at most 2*scale (jumps) or 8*scale (logs) at the center; the last piece
    carries the order-one remainder at the top scale.
    """
    if f.kind not in SINGULAR_KINDS or f.epsilon <= 0:
        raise DomainError("decomposition applies to regularized singular functions")
    eps = f.epsilon
    J = max(0, int(math.floor(math.log2(top_scale / eps) + 1e-12)))
    E = f.center
    if f.kind == "log_sing":
        out = [(eps * 2 ** j, log_sing(E, eps * 2 ** j) - log_sing(E, eps * 2 ** (j + 1)))
               for j in range(J)]
        out.append((eps * 2 ** J, log_sing(E, eps * 2 ** J)))
        return out
    def step(j):
        return jump_sing(E, eps * 2 ** j, f.direction)

    out = [(eps * 2 ** j, step(j) - step(j + 1)) for j in range(J)]
    top = step(J)
    if f.kind == "arg_sing":
        top = top + series([-E / 2.0, 1.0])
    out.append((eps * 2 ** J, top))
    return out


@dataclass
class ScaleClassReport:
    """Smallest constant C for which a piece passes the scale-class tests."""

    scale: float
    support: tuple[float, float] | None
    c_support: float
    c_derivs: list[float] = field(default_factory=list)

    @property
    def constant(self) -> float:
        return max([self.c_support] + self.c_derivs)

    def passes(self, C: float) -> bool:
        return self.constant <= C


def scale_class_report(piece: FunctionSpec, scale: float, window: tuple[float, float] = (-2.0, 2.0),
                       n_grid: int = 200001, max_order: int = 2) -> ScaleClassReport:
    """Measure support width and sup|f^(k)| scale^k, k <= ``max_order``.

    The quintic transitions are C^2, so derivative checks stop at order 2.
    """
    x = np.linspace(window[0], window[1], n_grid)
    v = np.asarray(evaluate(piece, x))
    nz = np.nonzero(np.abs(v) > 1e-13)[0]
    if nz.size:
        supp = (float(x[nz[0]]), float(x[nz[-1]]))
        c_supp = (supp[1] - supp[0]) / (2.0 * scale)
    else:
        supp, c_supp = None, 0.0
    derivs = [float(np.max(np.abs(v)))]
    d = v
    h = x[1] - x[0]
    for k in range(1, max_order + 1):
        d = np.gradient(d, h)
        derivs.append(float(np.max(np.abs(d[k:-k]))) * scale ** k)
    return ScaleClassReport(scale, supp, c_supp, derivs)
