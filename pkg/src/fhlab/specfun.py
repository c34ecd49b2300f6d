"""Scalar special functions: rescaled Chebyshev polynomials, equilibrium
densities, the semicircle Stieltjes transform and its characteristic flow,
Hermite functions, the Barnes G-function and semicircle quantiles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import loggamma

from .errors import DomainError

__all__ = [
    "ComplexPoint",
    "HermiteEvalReport",
    "HERMITE_ENVELOPE_CONSTANT",
    "chebyshev_eval",
    "chebyshev_table",
    "equilibrium_density",
    "semicircle_cdf",
    "sqrt_z2m4",
    "stieltjes_msc",
    "characteristic_curve",
    "hermite_psi",
    "hermite_psi_array",
    "hermite_functions",
    "log_barnes_g",
    "log_barnes_g_pair",
    "typical_location",
    "ZETA_PRIME_MINUS_ONE",
]

# log of the Glaisher-Kinkelin constant A
LOG_GLAISHER = 0.2487544770337842625472529935761
ZETA_PRIME_MINUS_ONE = 1.0 / 12.0 - LOG_GLAISHER

# Bernoulli numbers B_4, B_6, ... used by the Barnes G asymptotic series
_BERNOULLI_EVEN = (
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
)

# sup_x |psi_k(x)| * k^(1/12): the turning-point peak, measured at 0.5423 for
# k = 2 and decreasing towards 0.5357 at k = 1e4.
HERMITE_ENVELOPE_CONSTANT = 0.5423

_RESCALE_HIGH = 1e280
_RESCALE_LOG = math.log(_RESCALE_HIGH)


@dataclass(frozen=True)
class ComplexPoint:
    """A point z = E + i*eta of the complex plane."""

    re: float
    im: float

    def __post_init__(self):
        if not (math.isfinite(self.re) and math.isfinite(self.im)):
            raise DomainError(f"non-finite complex point ({self.re}, {self.im})")

    @classmethod
    def from_complex(cls, z: complex) -> "ComplexPoint":
        return cls(float(np.real(z)), float(np.imag(z)))

    @property
    def z(self) -> complex:
        return complex(self.re, self.im)

    @property
    def energy(self) -> float:
        return self.re

    @property
    def eta(self) -> float:
        return self.im

    @property
    def kappa(self) -> float:
        """Distance of the real part to the closest spectral edge."""
        return min(abs(self.re - 2.0), abs(self.re + 2.0))

    def __complex__(self):
        return self.z


def _as_complex(z) -> complex | np.ndarray:
    if isinstance(z, ComplexPoint):
        return z.z
    return z


# --------------------------------------------------------------------------
# Chebyshev polynomials


def chebyshev_eval(kind: str, n: int, x):
    """Evaluate T_n(x/2) (``kind='first'``) or U_n(x/2) (``kind='second'``).

    Both families satisfy p_{n+1} = x p_n - p_{n-1}; the first kind starts
    from (1, x/2) and the second kind from (1, x).  Works on all of R and
    broadcasts over array ``x``.
    """
    if n < 0:
        raise DomainError(f"Chebyshev degree must be >= 0, got {n}")
    x = np.asarray(x, dtype=float)
    if kind == "first":
        prev, cur = np.ones_like(x), x / 2.0
    elif kind == "second":
        prev, cur = np.ones_like(x), x.copy()
    else:
        raise DomainError(f"unknown Chebyshev kind {kind!r}")
    if n == 0:
        out = prev
    else:
        for _ in range(n - 1):
            prev, cur = cur, x * cur - prev
        out = cur
    return float(out) if out.ndim == 0 else out


def chebyshev_table(kind: str, n_max: int, x) -> np.ndarray:
    """Rows 0..n_max of the rescaled Chebyshev family at the points ``x``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.empty((n_max + 1,) + x.shape)
    out[0] = 1.0
    if n_max >= 1:
        out[1] = x / 2.0 if kind == "first" else x
    for n in range(1, n_max):
        out[n + 1] = x * out[n] - out[n - 1]
    if kind not in ("first", "second"):
        raise DomainError(f"unknown Chebyshev kind {kind!r}")
    return out


# --------------------------------------------------------------------------
# densities and Stieltjes transform


def equilibrium_density(kind: str, x):
    """Semicircle sqrt(4-x^2)/(2 pi) or arcsine 1/(pi sqrt(4-x^2)) density."""
    x = np.asarray(x, dtype=float)
    inside = np.abs(x) < 2.0
    r = np.sqrt(np.where(inside, 4.0 - x * x, 1.0))
    if kind == "semicircle":
        out = np.where(inside, r / (2.0 * np.pi), 0.0)
    elif kind == "arcsine":
        out = np.where(inside, 1.0 / (np.pi * r), 0.0)
    else:
        raise DomainError(f"unknown density {kind!r}")
    return float(out) if out.ndim == 0 else out


def semicircle_cdf(x):
    """Semicircle distribution function."""
    x = np.clip(np.asarray(x, dtype=float), -2.0, 2.0)
    out = 0.5 + (x * np.sqrt(4.0 - x * x) + 4.0 * np.arcsin(x / 2.0)) / (4.0 * np.pi)
    return float(out) if out.ndim == 0 else out


def sqrt_z2m4(z):
    """sqrt(z^2 - 4) on the branch (z-2)^(1/2) (z+2)^(1/2) (principal roots)."""
    z = np.asarray(_as_complex(z), dtype=complex)
    out = np.sqrt(z - 2.0) * np.sqrt(z + 2.0)
    return complex(out) if out.ndim == 0 else out


def stieltjes_msc(z):
    """Stieltjes transform m_sc(z) = (-z + sqrt(z^2-4))/2 of the semicircle law.

    Raises
    ------
    DomainError
        If ``z`` lies on the cut [-2, 2].
    """
    zc = np.asarray(_as_complex(z), dtype=complex)
    if np.any((zc.imag == 0.0) & (np.abs(zc.real) <= 2.0)):
        raise DomainError("m_sc is undefined on the cut [-2, 2]")
    out = (-zc + sqrt_z2m4(zc)) / 2.0
    return complex(out) if np.ndim(out) == 0 else out


def characteristic_curve(z, t: float):
    """Characteristic z_t = (e^{t/2}(z+s) + e^{-t/2}(z-s))/2 with s = sqrt(z^2-4)."""
    if t < 0:
        raise DomainError(f"time must be >= 0, got {t}")
    zc = np.asarray(_as_complex(z), dtype=complex)
    if np.any(zc.imag < 0):
        raise DomainError("characteristic curve requires Im z >= 0")
    s = sqrt_z2m4(zc)
    out = (math.exp(t / 2.0) * (zc + s) + math.exp(-t / 2.0) * (zc - s)) / 2.0
    return complex(out) if np.ndim(out) == 0 else out


# --------------------------------------------------------------------------
# Hermite functions


@dataclass(frozen=True)
class HermiteEvalReport:
    """Value of psi_k(x) along with whether log-rescaling was needed."""

    k: int
    x: float
    value: float
    log_scale_applied: bool


def hermite_psi(k: int, x: float, max_degree: int = 10**6) -> HermiteEvalReport:
    """Hermite function psi_k(x) = He_k(x) e^{-x^2/4} / (sqrt(2 pi) k!)^{1/2}.

    Uses the normalized recurrence psi_{k+1} = (x psi_k - sqrt(k) psi_{k-1})
    / sqrt(k+1), carrying a separate logarithmic scale so the Gaussian tail
    neither underflows nor causes the recurrence to lose its state.
    """
    if k < 0 or k > max_degree:
        raise DomainError(f"degree {k} outside [0, {max_degree}]")
    x = float(x)
    log_scale = -x * x / 4.0 - 0.25 * math.log(2.0 * math.pi)
    rescaled = log_scale < -600.0
    if rescaled:
        prev, cur = 0.0, 1.0
    else:
        prev, cur = 0.0, math.exp(log_scale)
        log_scale = 0.0
    sqrt = math.sqrt
    for j in range(k):
        prev, cur = cur, (x * cur - sqrt(j) * prev) / sqrt(j + 1.0)
        if abs(cur) > _RESCALE_HIGH:
            prev /= _RESCALE_HIGH
            cur /= _RESCALE_HIGH
            log_scale += _RESCALE_LOG
            rescaled = True
    if not math.isfinite(log_scale):
        raise OverflowError(f"log-scale overflow in psi_{k}({x})")
    if cur == 0.0:
        value = 0.0
    else:
        lv = math.log(abs(cur)) + log_scale
        value = math.copysign(math.exp(lv), cur) if lv > -745.0 else 0.0
    return HermiteEvalReport(k, x, value, rescaled)


def _hermite_start(x: np.ndarray):
    log_scale = -x * x / 4.0 - 0.25 * math.log(2.0 * math.pi)
    shift = np.where(log_scale < -600.0, log_scale, 0.0)
    cur = np.exp(log_scale - shift)
    return cur, shift


def hermite_psi_array(k: int, x) -> np.ndarray:
    """Vectorized psi_k on an array of points (same recurrence as hermite_psi)."""
    x = np.asarray(x, dtype=float)
    cur, log_scale = _hermite_start(x)
    prev = np.zeros_like(x)
    for j in range(k):
        prev, cur = cur, (x * cur - math.sqrt(j) * prev) / math.sqrt(j + 1.0)
        big = np.abs(cur) > _RESCALE_HIGH
        if big.any():
            prev = np.where(big, prev / _RESCALE_HIGH, prev)
            cur = np.where(big, cur / _RESCALE_HIGH, cur)
            log_scale = log_scale + big * _RESCALE_LOG
    return _hermite_finish(cur, log_scale)


def _hermite_finish(mant, log_scale):
    with np.errstate(divide="ignore", under="ignore"):
        lv = np.log(np.abs(mant)) + log_scale
        return np.where(mant == 0.0, 0.0, np.sign(mant) * np.exp(np.minimum(lv, 709.0)))


def hermite_functions(n: int, x, return_state: bool = False):
    """Table psi_0..psi_{n-1} at points ``x``, shape (n, len(x)).

    With ``return_state`` also return ``(psi_n, psi_{n-1})`` at ``x``, which the
    Christoffel-Darboux formula needs.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    table = np.empty((n,) + x.shape)
    cur, log_scale = _hermite_start(x)
    prev = np.zeros_like(x)
    for j in range(n):
        table[j] = _hermite_finish(cur, log_scale)
        prev, cur = cur, (x * cur - math.sqrt(j) * prev) / math.sqrt(j + 1.0)
        big = np.abs(cur) > _RESCALE_HIGH
        if big.any():
            prev = np.where(big, prev / _RESCALE_HIGH, prev)
            cur = np.where(big, cur / _RESCALE_HIGH, cur)
            log_scale = log_scale + big * _RESCALE_LOG
    if return_state:
        return table, _hermite_finish(cur, log_scale), _hermite_finish(prev, log_scale)
    return table


# --------------------------------------------------------------------------
# Barnes G


def _log_g1p_asymptotic(z):
    lz = np.log(z)
    s = z * z * (lz / 2.0 - 0.75) + z / 2.0 * math.log(2.0 * math.pi) - lz / 12.0
    s = s + ZETA_PRIME_MINUS_ONE
    zinv2 = 1.0 / (z * z)
    p = zinv2
    for k, b in enumerate(_BERNOULLI_EVEN, start=1):
        s = s + b / (4.0 * k * (k + 1)) * p
        p = p * zinv2
    return s


def log_barnes_g(z, shift_to: float = 10.0):
    """log G(1+z) for real or complex ``z``.

    The argument is shifted upward with G(1+z) = Gamma(z) G(z) until its real
    part reaches ``shift_to``, then the Stirling-type expansion is applied.
    For real ``z`` the result is log|G(1+z)|; for complex ``z`` the real part
    is log|G(1+z)| and the imaginary part is a (not necessarily principal)
    argument.

    Raises
    ------
    DomainError
        When 1+z is a non-positive integer, where G vanishes.
    """
    is_complex = np.iscomplexobj(z) and np.imag(z) != 0
    zc = complex(z)
    if zc.imag == 0 and zc.real <= -1 and float(zc.real).is_integer():
        raise DomainError(f"G(1+z) vanishes at z = {zc.real:g}")
    m = max(0, math.ceil(shift_to - zc.real))
    total = _log_g1p_asymptotic(zc + m)
    if m:
        total -= complex(np.sum(loggamma(zc + 1.0 + np.arange(m))))
    return total if is_complex else float(total.real)


def log_barnes_g_pair(a: float, b: float) -> float:
    """log(G(1+a+ib) G(1+a-ib)) = 2 Re log G(1+a+ib), a real number."""
    if b == 0:
        return 2.0 * log_barnes_g(float(a))
    return 2.0 * log_barnes_g(complex(a, b)).real


# --------------------------------------------------------------------------
# semicircle quantiles


def typical_location(k: int, N: int, max_iter: int = 200) -> float:
    """Solve semicircle_cdf(x) = k/N by bisection seeded at 2cos(pi(1-k/N))."""
    if not 1 <= k <= N:
        raise DomainError(f"need 1 <= k <= N, got k={k}, N={N}")
    target = k / N
    if k == N:
        return 2.0
    if 2 * k == N:
        return 0.0
    lo, hi = -2.0, 2.0
    x = 2.0 * math.cos(math.pi * (1.0 - target))
    for _ in range(max_iter):
        r = semicircle_cdf(x) - target
        if abs(r) <= 1e-15 or hi - lo < 1e-15:
            break
        if r > 0:
            hi = x
        else:
            lo = x
        x = 0.5 * (lo + hi)
    return x
