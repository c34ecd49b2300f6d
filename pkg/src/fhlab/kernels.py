"""Determinantal kernels of CUE, GUE and the stationary OU process, and
Fredholm-determinant Laplace transforms of local linear statistics.

GUE eigenvalues (entry variance 1/N) form a determinantal process with
K(x, y) = sqrt(N) sum_{k<N} psi_k(x sqrt N) psi_k(y sqrt N).  With
tau = s - t the extended kernel of the OU process is::

    t <= s:   sqrt(N) sum_{k<N}  e^{-(N-1/2-k) tau/2} psi_k psi_k
    t >  s:  -sqrt(N) sum_{k>=N} e^{-(k-N+1/2)|tau|/2} psi_k psi_k
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import AccuracyWarning, ConvergenceError, DomainError, ResolutionError
from .specfun import equilibrium_density, hermite_functions
from .transforms import FunctionSpec, evaluate

DEFAULT_TOL = 1e-9
MAX_TAIL_TERMS = 200000


# --------------------------------------------------------------------------
# CUE


def cue_kernel(x, y, N: int):
    """sin(N(x-y)/2) / (2 pi sin((x-y)/2)), with the limit N/(2 pi) on the diagonal."""
    d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    u = d / 2.0
    s = np.sin(u)
    small = np.abs(s) < 1e-12
    safe = np.where(small, 1.0, s)
    out = np.where(small, N * np.cos(N * u) / np.where(small, np.cos(u), 1.0),
                   np.sin(N * u) / safe) / (2.0 * np.pi)
    return float(out) if out.ndim == 0 else out


# --------------------------------------------------------------------------
# GUE


def _cd_pair(a, b, n):
    pts = np.concatenate([np.atleast_1d(a), np.atleast_1d(b)])
    table, psi_n, _ = hermite_functions(n, pts, return_state=True)
    m = np.atleast_1d(a).size
    return table, psi_n, m


def gue_kernel_cd(x, y, N: int):
    """Exact finite-N GUE kernel by the Christoffel-Darboux formula.

    The diagonal (and |a-b| below 1e-8 in scaled units) uses the confluent
    form sqrt(n)(sqrt(n) psi_{n-1}^2 - sqrt(n-1) psi_n psi_{n-2}).
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    x, y = np.broadcast_arrays(x, y)
    shape = x.shape
    sq = math.sqrt(N)
    a, b = x.ravel() * sq, y.ravel() * sq
    table, psi_n, m = _cd_pair(a, b, N)
    pa, pb = table[:, :m], table[:, m:]
    na, nb = psi_n[:m], psi_n[m:]
    n1a, n1b = pa[N - 1], pb[N - 1]
    diff = a - b
    close = np.abs(diff) < 1e-8
    off = math.sqrt(N) * (na * n1b - n1a * nb) / np.where(close, 1.0, diff)
    n2a = pa[N - 2] if N >= 2 else np.zeros_like(a)
    diag = math.sqrt(N) * (math.sqrt(N) * n1a * n1a - math.sqrt(N - 1) * na * n2a)
    out = (sq * np.where(close, diag, off)).reshape(shape)
    return float(out[0]) if out.size == 1 and np.ndim(out) <= 1 else out


def gue_kernel_matrix(xs, ys, N: int, weights_k=None) -> np.ndarray:
    """Matrix sqrt(N) sum_k w_k psi_k(x_i sqrt N) psi_k(y_j sqrt N) by direct summation."""
    sq = math.sqrt(N)
    px = hermite_functions(N, np.asarray(xs) * sq)
    py = hermite_functions(N, np.asarray(ys) * sq)
    if weights_k is not None:
        px = px * np.asarray(weights_k)[:, None]
    return sq * (px.T @ py)


def gue_kernel_bulk_asymptotic(x, y, N: int):
    """Leading bulk asymptotic of the GUE kernel (sine-type form in theta variables)."""
    om = np.arccos(np.asarray(x, dtype=float) / 2.0)
    th = np.arccos(np.asarray(y, dtype=float) / 2.0)
    a_om = np.sin(2 * om) - 2 * om
    a_th = np.sin(2 * th) - 2 * th
    pref = 1.0 / (4.0 * np.pi * np.sqrt(np.sin(th) * np.sin(om)))
    d = 0.5 * (om - th)
    close = np.abs(d) < 1e-12
    ratio = np.where(close, 4.0 * N * np.sin(th) ** 2,
                     np.sin(N / 2.0 * (a_th - a_om)) / np.where(close, 1.0, np.sin(d)))
    out = pref * ratio
    return float(out) if np.ndim(out) == 0 else out


def mehler_sum(x, y, u):
    """sum_k u^k psi_k(x) psi_k(y) in closed form, |u| < 1."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    e = -(1.0 - u) / (1.0 + u) * (x + y) ** 2 / 8.0 - (1.0 + u) / (1.0 - u) * (x - y) ** 2 / 8.0
    return np.exp(e) / np.sqrt(2.0 * np.pi * (1.0 - u * u))


# --------------------------------------------------------------------------
# extended kernel


def _tail_direct(a, b, N, u, tol):
    # -sum_{k>=N} u^{k-N+1/2} psi_k(a) psi_k(b), recurrence up to the truncation index
    if u <= 0.0:
        return np.zeros(np.broadcast(a, b).shape)
    n_extra = int(math.ceil(math.log(tol * (1.0 - u)) / math.log(u))) + 1
    if n_extra > MAX_TAIL_TERMS:
        raise ConvergenceError(f"direct tail needs {n_extra} terms")
    K = N + n_extra
    pts = np.concatenate([np.atleast_1d(a), np.atleast_1d(b)])
    m = np.atleast_1d(a).size
    tab = hermite_functions(K, pts)
    w = u ** (np.arange(K - N) + 0.5)
    return -np.sum(w[:, None] * tab[N:, :m] * tab[N:, m:], axis=0)


def _tail_mehler(a, b, N, u):
    pts = np.concatenate([np.atleast_1d(a), np.atleast_1d(b)])
    m = np.atleast_1d(a).size
    tab = hermite_functions(N, pts)
    w = u ** np.arange(N)
    head = np.sum(w[:, None] * tab[:, :m] * tab[:, m:], axis=0)
    full = mehler_sum(np.atleast_1d(a), np.atleast_1d(b), u)
    return -(full - head) * u ** (-(N - 0.5))


def extended_kernel(t: float, x, s: float, y, N: int, tol: float = DEFAULT_TOL,
                    method: str = "auto"):
    """Space-time correlation kernel K(t, x; s, y) of the OU eigenvalues.

    ``method`` is 'auto', 'direct' or 'mehler' (the latter two for t > s);
    'auto' uses the Christoffel-Darboux form at equal times, the Mehler
    subtraction when 0 < t - s < 1/N^2, and direct tail truncation otherwise,
    falling back to Mehler if truncation would be too long.

    Raises
    ------
    ConvergenceError
        When neither route can meet ``tol``.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    x, y = np.broadcast_arrays(x, y)
    shape = x.shape
    sq = math.sqrt(N)
    a, b = x.ravel() * sq, y.ravel() * sq
    if t == s and method == "auto":
        out = np.asarray(gue_kernel_cd(x.ravel(), y.ravel(), N)).reshape(shape)
    elif t <= s:
        tau = s - t
        pts = np.concatenate([a, b])
        tab = hermite_functions(N, pts)
        m = a.size
        w = np.exp(-(N - 0.5 - np.arange(N)) * tau / 2.0)
        out = (sq * np.sum(w[:, None] * tab[:, :m] * tab[:, m:], axis=0)).reshape(shape)
    else:
        tau = t - s
        u = math.exp(-tau / 2.0)
        use_mehler = method == "mehler" or (method == "auto" and tau < 1.0 / N ** 2)
        if not use_mehler:
            try:
                tail = _tail_direct(a, b, N, u, tol)
            except ConvergenceError:
                if method == "direct":
                    raise
                use_mehler = True
        if use_mehler:
            # the subtraction amplifies rounding by e^{N tau / 2}
            if N * tau / 2.0 > max(math.log(tol / 1e-16), 1.0):
                raise ConvergenceError("Mehler subtraction loses too many digits for this gap")
            tail = _tail_mehler(a, b, N, u)
        out = (sq * tail).reshape(shape)
    return float(out.ravel()[0]) if out.size == 1 else out


def extended_kernel_matrix(t: float, xs, s: float, ys, N: int, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Matrix of K(t, x_i; s, y_j) (dense, by direct summation on both routes)."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    sq = math.sqrt(N)
    if t <= s:
        w = np.exp(-(N - 0.5 - np.arange(N)) * (s - t) / 2.0)
        return gue_kernel_matrix(xs, ys, N, weights_k=w)
    tau = t - s
    u = math.exp(-tau / 2.0)
    if tau >= 1.0 / N ** 2:
        n_extra = int(math.ceil(math.log(tol * (1.0 - u)) / math.log(u))) + 1
        if n_extra <= MAX_TAIL_TERMS:
            K = N + n_extra
            px = hermite_functions(K, xs * sq)[N:]
            py = hermite_functions(K, ys * sq)[N:]
            w = u ** (np.arange(K - N) + 0.5)
            return -sq * ((px * w[:, None]).T @ py)
    px = hermite_functions(N, xs * sq)
    py = hermite_functions(N, ys * sq)
    head = (px * (u ** np.arange(N))[:, None]).T @ py
    full = mehler_sum(xs[:, None] * sq, ys[None, :] * sq, u)
    return -sq * (full - head) * u ** (-(N - 0.5))


@dataclass
class KernelGrid:
    """Nystrom discretization: nodes/weights per time and the scaled block matrix."""

    times: list
    nodes: list
    weights: list
    matrix: np.ndarray

    def block(self, i: int, j: int) -> np.ndarray:
        off = np.cumsum([0] + [len(n) for n in self.nodes])
        return self.matrix[off[i]:off[i + 1], off[j]:off[j + 1]]


def kernel_table_csv(rows, path: str) -> None:
    """Write (t, x, s, y, value) rows as CSV."""
    with open(path, "w", newline="") as fh:
        fh.write("t,x,s,y,value\n")
        for t, x, s, y, v in rows:
            fh.write(f"{t!r},{x!r},{s!r},{y!r},{float(v)!r}\n")


# --------------------------------------------------------------------------
# Fredholm determinants


def support_breakpoints(f: FunctionSpec) -> list[float]:
    """Sorted non-smooth points of a compactly supported symbol (support ends included)."""
    pts: set[float] = set()
    for _, a in f.atoms():
        if a.kind != "bump":
            raise DomainError("Fredholm symbols must be built from bumps (compact support)")
        E, e = a.center, a.epsilon
        pts.update([E - 2 * e, E - e, E + e, E + 2 * e])
    return sorted(pts)


def _gauss_nodes(breaks: Sequence[float], n_total: int):
    lo, hi = breaks[0], breaks[-1]
    xs, ws = [], []
    for a, b in zip(breaks, breaks[1:]):
        if b <= a:
            continue
        m = max(8, int(math.ceil(n_total * (b - a) / (hi - lo))))
        g, w = np.polynomial.legendre.leggauss(m)
        xs.append((b - a) / 2.0 * g + (a + b) / 2.0)
        ws.append((b - a) / 2.0 * w)
    return np.concatenate(xs), np.concatenate(ws)


@dataclass
class FredholmResult:
    log_det: float
    n_nodes: int
    clip_events: int = 0
    clip_rate: float = 0.0
    eigenvalues: np.ndarray | None = None
    grid: KernelGrid | None = field(default=None, repr=False)


def min_nodes(f: FunctionSpec, N: int, per_oscillation: int = 8) -> int:
    """Node count putting ``per_oscillation`` nodes on each length 1/(N rho_sc)."""
    br = support_breakpoints(f)
    x = np.linspace(br[0], br[-1], 201)
    rho = np.max(equilibrium_density("semicircle", x))
    return int(math.ceil(per_oscillation * N * rho * (br[-1] - br[0])))


def fredholm_laplace(symbols: Sequence[tuple[float, FunctionSpec]], N: int,
                     nodes_per_symbol: int | None = None, tol: float = DEFAULT_TOL,
                     keep_grid: bool = False) -> FredholmResult:
    """log E[prod_j e^{Tr f_j(H_{t_j})}] = log det(I - k K k) by Nystrom quadrature.

    Each f_j must be a non-positive combination of bumps.  A single time
    uses the symmetric operator, whose eigenvalues are clipped to
    [0, 1 - e^{min f}]; several times use the block extended kernel and an
    LU log-determinant.

    Raises
    ------
    ResolutionError
        If ``nodes_per_symbol`` puts fewer than 8 nodes per oscillation length.
    """
    symbols = sorted(symbols, key=lambda p: p[0])
    if not symbols:
        return FredholmResult(0.0, 0)
    nodes, weights, kvals, fmins = [], [], [], []
    for t, f in symbols:
        need = min_nodes(f, N)
        n = nodes_per_symbol if nodes_per_symbol is not None else max(2 * need, 64)
        if n < need:
            raise ResolutionError(f"{n} nodes < {need} needed to resolve the kernel oscillations")
        x, w = _gauss_nodes(support_breakpoints(f), n)
        fv = np.asarray(evaluate(f, x))
        if np.any(fv > 1e-14):
            raise DomainError("Fredholm symbols must be non-positive")
        nodes.append(x)
        weights.append(w)
        kvals.append(np.sqrt(-np.expm1(np.minimum(fv, 0.0))))
        fmins.append(float(np.min(fv)))
    times = [t for t, _ in symbols]
    scale = [np.sqrt(w) * k for w, k in zip(weights, kvals)]
    blocks = [[scale[i][:, None] * extended_kernel_matrix(times[i], nodes[i], times[j], nodes[j], N, tol)
               * scale[j][None, :] for j in range(len(times))] for i in range(len(times))]
    A = np.block(blocks)
    grid = KernelGrid(times, nodes, weights, A) if keep_grid else None
    n_tot = A.shape[0]
    if len(times) == 1:
        lam = np.linalg.eigvalsh((A + A.T) / 2.0)
        upper = -math.expm1(fmins[0])
        clipped = np.clip(lam, 0.0, upper)
        clips = int(np.sum((lam < -1e-8) | (lam > upper + 1e-8)))
        rate = clips / n_tot
        if rate > 0.01:
            warnings.warn(f"Fredholm eigenvalue clip rate {rate:.2%}", AccuracyWarning, stacklevel=2)
        return FredholmResult(float(np.sum(np.log1p(-clipped))), n_tot, clips, rate, lam, grid)
    sign, ld = np.linalg.slogdet(np.eye(n_tot) - A)
    if sign <= 0:
        raise ConvergenceError("discretized Fredholm determinant is not positive")
    return FredholmResult(float(ld), n_tot, 0, 0.0, None, grid)


def cue_comparison_constant(E: float, N: int, kappa: float, C: float = 1.0, n_points: int = 21) -> float:
    """max |K_GUE - 2 pi rho K_CUE(2 pi rho x, 2 pi rho y)| / N^kappa near E."""
    eps = N ** (-1.0 + kappa)
    x = np.linspace(E - C * eps, E + C * eps, n_points)
    X, Y = np.meshgrid(x, x)
    rho = equilibrium_density("semicircle", E)
    kg = gue_kernel_matrix(x, x, N)
    kc = 2 * np.pi * rho * cue_kernel(2 * np.pi * rho * X, 2 * np.pi * rho * Y, N)
    return float(np.max(np.abs(kg - kc.T)) / N ** kappa)
