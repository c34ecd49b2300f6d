"""Chebyshev-OU log-correlated field, its GMC approximants, and the matrix-side
empirical chaos measures built from characteristic polynomials.

The field is G_M(t, x) = sum_{n<=M} T_n(x)/sqrt(n) (A_n)_{nt} with A_n
independent stationary unit OU processes (dA = dB - A/2 dt), so that
Cov(G_M(t,x), G_M(s,y)) = sum_{n<=M} T_n(x) T_n(y) e^{-n|t-s|/2} / n.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .dynamics import (
    PURPOSE_FIELD,
    MCEstimate,
    linear_statistic,
    sample_trajectories,
    stream,
)
from .errors import AccuracyWarning, DomainError
from .specfun import chebyshev_table
from .transforms import Charge, Singularity, SmoothTerm, jump_sing, log_sing, series

GAMMA_CRITICAL = 2.0 * math.sqrt(2.0)
DEFAULT_T_GRID = tuple(np.linspace(0.0, 1.0, 64))
DEFAULT_X_GRID = tuple(np.linspace(-1.5, 1.5, 64))
OFF_SPECTRUM_BOUND = 2.5


def sample_coefficient_paths(M: int, t_grid: Sequence[float], rng: np.random.Generator) -> np.ndarray:
    """Exact paths of A_1..A_M at the scaled times n*t, shape (M, len(t_grid))."""
    t = np.asarray(t_grid, dtype=float)
    if np.any(np.diff(t) < 0):
        raise DomainError("t_grid must be sorted")
    n = np.arange(1, M + 1, dtype=float)[:, None]
    out = np.empty((M, len(t)))
    out[:, 0] = rng.standard_normal(M)
    for k in range(1, len(t)):
        d = n[:, 0] * (t[k] - t[k - 1])
        out[:, k] = np.exp(-d / 2.0) * out[:, k - 1] + np.sqrt(-np.expm1(-d)) * rng.standard_normal(M)
    return out


@dataclass
class FieldSample:
    """One realization of G_M on a (t, x) grid; ``values`` has shape (len(t), len(x))."""

    M: int
    t_grid: np.ndarray
    x_grid: np.ndarray
    values: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        self.t_grid = np.asarray(self.t_grid, dtype=float)
        self.x_grid = np.asarray(self.x_grid, dtype=float)
        if self.values.shape != (len(self.t_grid), len(self.x_grid)):
            raise DomainError("field values do not match the grid")

    def to_csv(self, path: str) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("t,x,value\n")
            for i, t in enumerate(self.t_grid):
                for j, x in enumerate(self.x_grid):
                    fh.write(f"{t!r},{x!r},{float(self.values[i, j])!r}\n")


def _basis(M: int, x_grid) -> np.ndarray:
    x = np.asarray(x_grid, dtype=float)
    T = chebyshev_table("first", M, x)[1:M + 1]
    return T / np.sqrt(np.arange(1, M + 1))[:, None]


def field_G_M(M: int, t_grid: Sequence[float], x_grid: Sequence[float],
              rng: np.random.Generator | int, seed: int | None = None) -> FieldSample:
    """Sample G_M on the grid.  An integer ``rng`` is used as a seed."""
    if M < 1:
        raise DomainError("M must be >= 1")
    if isinstance(rng, (int, np.integer)):
        seed = int(rng)
        rng = stream(seed, 0, 0, PURPOSE_FIELD)
    A = sample_coefficient_paths(M, t_grid, rng)
    vals = A.T @ _basis(M, x_grid)
    return FieldSample(M, np.asarray(t_grid, float), np.asarray(x_grid, float), vals, seed)


def field_replicas(M: int, t_grid, x_grid, n_replicas: int, seed: int, start_index: int = 0):
    """Independent field draws, replica i on the stream (seed, i)."""
    B = _basis(M, x_grid)
    for i in range(start_index, start_index + n_replicas):
        A = sample_coefficient_paths(M, t_grid, stream(seed, i, 0, PURPOSE_FIELD))
        yield A.T @ B


def field_covariance(M: int, t: float, x, s: float, y) -> np.ndarray:
    """Truncated covariance sum_{n<=M} T_n(x) T_n(y) e^{-n|t-s|/2} / n."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    n = np.arange(1, M + 1)
    Tx = chebyshev_table("first", M, x)[1:]
    Ty = chebyshev_table("first", M, y)[1:]
    w = np.exp(-n * abs(t - s) / 2.0) / n
    out = np.sum(w[:, None] * Tx * Ty, axis=0)
    return float(out[0]) if out.size == 1 else out


def field_covariance_closed(t: float, x, s: float, y, kind: str = "log") -> np.ndarray:
    """M = infinity covariance; ``kind='xi'`` gives the jump-field analogue.

    log: -(log|1 - q e^{i(th-om)}| + log|1 - q e^{i(th+om)}|)/2,
    xi:  -(log|1 - q e^{i(th-om)}| - log|1 - q e^{i(th+om)}|)/2, q = e^{-|t-s|/2}.
    """
    th = np.arccos(np.asarray(x, dtype=float) / 2.0)
    om = np.arccos(np.asarray(y, dtype=float) / 2.0)
    q = math.exp(-abs(t - s) / 2.0)
    a = np.log(np.abs(1.0 - q * np.exp(1j * (th - om))))
    b = np.log(np.abs(1.0 - q * np.exp(1j * (th + om))))
    out = -(a + b) / 2.0 if kind == "log" else -(a - b) / 2.0
    return float(out) if np.ndim(out) == 0 else out


def xi_field_covariance(M: int, t: float, x, s: float, y) -> np.ndarray:
    """Truncated jump-field covariance with T_n replaced by U_{n-1} sqrt(4-x^2)/2 = sin(n theta)."""
    th = np.arccos(np.atleast_1d(np.asarray(x, dtype=float)) / 2.0)
    om = np.arccos(np.atleast_1d(np.asarray(y, dtype=float)) / 2.0)
    n = np.arange(1, M + 1)[:, None]
    w = np.exp(-n * abs(t - s) / 2.0) / n
    out = np.sum(w * np.sin(n * th) * np.sin(n * om), axis=0)
    return float(out[0]) if out.size == 1 else out


def field_covariance_matrix(M: int, points: Sequence[tuple[float, float]]) -> np.ndarray:
    """Gram matrix of G_M on a list of (t, x) points."""
    pts = np.asarray(points, dtype=float)
    B = _basis(M, pts[:, 1]) * np.sqrt(np.arange(1, M + 1))[:, None]
    n = np.arange(1, M + 1)[:, None, None]
    dt = np.abs(pts[:, 0][:, None] - pts[:, 0][None, :])[None]
    return np.sum(np.exp(-n * dt / 2.0) / n * B[:, :, None] * B[:, None, :], axis=0)


def variance_M(M: int, x) -> np.ndarray:
    """Var G_M(t, x) = sum_{n<=M} T_n(x)^2 / n."""
    return field_covariance(M, 0.0, x, 0.0, x)


def cell_weights(grid) -> np.ndarray:
    """Riemann weights: the length of each point's nearest-neighbour cell."""
    g = np.asarray(grid, dtype=float)
    if len(g) == 1:
        return np.ones(1)
    mid = (g[1:] + g[:-1]) / 2.0
    edges = np.concatenate([[g[0]], mid, [g[-1]]])
    return np.diff(edges)


def _psi_grid(psi, t_grid, x_grid) -> np.ndarray:
    if psi is None:
        return np.ones((len(t_grid), len(x_grid)))
    if callable(psi):
        T, X = np.meshgrid(t_grid, x_grid, indexing="ij")
        return np.broadcast_to(np.asarray(psi(T, X), dtype=float), T.shape)
    return np.asarray(psi, dtype=float)


def riemann_integral(psi, t_grid, x_grid) -> float:
    """Grid Riemann sum of psi, the normalization target of every chaos measure here."""
    W = np.outer(cell_weights(t_grid), cell_weights(x_grid))
    return float(np.sum(W * _psi_grid(psi, t_grid, x_grid)))


def _check_gamma(gamma: float):
    if not 0.0 <= gamma < GAMMA_CRITICAL:
        warnings.warn(f"gamma={gamma} outside the subcritical range [0, 2 sqrt 2)", AccuracyWarning,
                      stacklevel=3)


def gmc_measure_M(fs: FieldSample, gamma: float, psi: Callable | np.ndarray | None = None) -> float:
    """Riemann sum of psi exp(gamma G_M - gamma^2 Var_M / 2) over the field grid."""
    _check_gamma(gamma)
    W = np.outer(cell_weights(fs.t_grid), cell_weights(fs.x_grid))
    P = _psi_grid(psi, fs.t_grid, fs.x_grid)
    if gamma == 0.0:
        return float(np.sum(W * P))
    v = variance_M(fs.M, fs.x_grid)
    dens = np.exp(gamma * fs.values - gamma * gamma / 2.0 * v[None, :])
    return float(np.sum(W * P * dens))


def gmc_replicas(M: int, gamma: float, psi, t_grid, x_grid, n_replicas: int, seed: int) -> np.ndarray:
    """mu_gamma^(M)(psi) over independent field draws."""
    _check_gamma(gamma)
    W = np.outer(cell_weights(t_grid), cell_weights(x_grid)) * _psi_grid(psi, t_grid, x_grid)
    v = variance_M(M, x_grid)
    out = np.empty(n_replicas)
    for i, G in enumerate(field_replicas(M, t_grid, x_grid, n_replicas, seed)):
        out[i] = np.sum(W * np.exp(gamma * G - gamma * gamma / 2.0 * v[None, :]))
    return out


def gmc_second_moment(M: int, gamma: float, psi, t_grid, x_grid) -> float:
    """E[mu^(M)(psi)^2] = sum_ij w_i w_j psi_i psi_j exp(gamma^2 Cov_M(i, j))."""
    t_grid = np.asarray(t_grid, float)
    x_grid = np.asarray(x_grid, float)
    W = (np.outer(cell_weights(t_grid), cell_weights(x_grid)) * _psi_grid(psi, t_grid, x_grid)).ravel()
    n = np.arange(1, M + 1)
    Tx = chebyshev_table("first", M, x_grid)[1:]
    # Cov depends on (dt, x, y): sum_n e^{-n dt/2}/n T_n(x) T_n(y)
    nt, nx = len(t_grid), len(x_grid)
    total = 0.0
    Wm = W.reshape(nt, nx)
    for a in range(nt):
        dts = np.abs(t_grid - t_grid[a])
        for b in range(nt):
            w = np.exp(-n * dts[b] / 2.0) / n
            C = (Tx * w[:, None]).T @ Tx
            total += float(Wm[a] @ np.exp(gamma * gamma * C) @ Wm[b])
    return total


def mc_mean(values: np.ndarray, n_batches: int = 50) -> MCEstimate:
    """Batch-mean estimate of E[values]."""
    v = np.asarray(values, dtype=float)
    idx = np.array_split(np.arange(len(v)), max(2, min(n_batches, len(v))))
    bm = np.array([np.mean(v[i]) for i in idx])
    se = float(np.std(bm, ddof=1) / math.sqrt(len(bm)))
    return MCEstimate(float(np.mean(v)), se, len(v), len(bm), float(len(v)), [float(b) for b in bm])


# --------------------------------------------------------------------------
# matrix side


def _point_charge(x: float, gamma: float, beta: float) -> Charge:
    # e^{beta Tr Xi^x} = e^{beta Tr arg^x} e^{-beta Tr (lambda - x)/2}
    smooth = [SmoothTerm(0.0, series([beta * x / 2.0, -beta]))] if beta else []
    return Charge([Singularity(0.0, x, gamma, beta)], smooth)


def _log_statistics(lam: np.ndarray, x_grid, gamma: float, beta: float) -> np.ndarray:
    """gamma sum log|lambda - x| + beta Tr Xi^x, shape lam.shape[:-1] + (len(x),)."""
    out = np.zeros(lam.shape[:-1] + (len(x_grid),))
    for j, x in enumerate(x_grid):
        if gamma:
            out[..., j] += gamma * linear_statistic(lam, log_sing(float(x)), centered=False)
        if beta:
            out[..., j] += beta * linear_statistic(lam, jump_sing(float(x)), centered=False)
    return out


@dataclass
class EmpiricalGMCResult:
    estimate: MCEstimate
    values: np.ndarray
    normalization: str
    log_denominators: np.ndarray
    off_spectrum_paths: int = 0
    meta: dict = field(default_factory=dict)


def empirical_gmc(N: int, psi=None, gamma: float = 0.0, beta: float = 0.0,
                  t_grid=DEFAULT_T_GRID, x_grid=DEFAULT_X_GRID, n_samples: int = 200,
                  seed: int = 0, normalization: str = "mc", n_norm_samples: int | None = None,
                  n_batches: int = 50, workers: int = 1) -> EmpiricalGMCResult:
    """mu_{N,gamma}(psi) or nu_{N,beta}(psi) along fresh OU trajectories.

    The density at (t, x) is |det(H_t - x)|^gamma e^{beta Tr Xi^x(H_t)}
    divided by its expectation, which by stationarity depends on x only.
    ``normalization='predictor'`` takes the expectation from the asymptotic
    formula; ``'mc'`` from an independent run on disjoint sample indices.
    """
    if gamma and beta:
        raise DomainError("use either gamma or beta, not both")
    t_grid = np.asarray(t_grid, float)
    x_grid = np.asarray(x_grid, float)
    W = np.outer(cell_weights(t_grid), cell_weights(x_grid)) * _psi_grid(psi, t_grid, x_grid)
    if gamma == 0.0 and beta == 0.0:
        v = np.full(n_samples, float(np.sum(W)))
        return EmpiricalGMCResult(mc_mean(v, n_batches), v, normalization, np.zeros(len(x_grid)))
    if normalization == "predictor":
        from .predictor import predict_joint

        logden = np.array([predict_joint(_point_charge(float(x), gamma, beta), N).total(N) for x in x_grid])
    elif normalization == "mc":
        m = n_norm_samples or max(4 * n_samples, 1000)
        ens = sample_trajectories(N, [0.0], m, seed, workers, start_index=n_samples)
        S = _log_statistics(ens.at(0.0), x_grid, gamma, beta)
        c = np.max(S, axis=0)
        logden = c + np.log(np.mean(np.exp(S - c), axis=0))
    else:
        raise DomainError(f"unknown normalization {normalization!r}")
    ens = sample_trajectories(N, t_grid, n_samples, seed, workers)
    off = int(np.sum(np.any(np.abs(ens.eigenvalues) > OFF_SPECTRUM_BOUND, axis=(1, 2))))
    vals = np.empty(n_samples)
    for i in range(n_samples):
        S = _log_statistics(ens.eigenvalues[i], x_grid, gamma, beta)
        vals[i] = float(np.sum(W * np.exp(S - logden[None, :])))
    return EmpiricalGMCResult(mc_mean(vals, n_batches), vals, normalization, logden, off,
                              {"N": N, "gamma": gamma, "beta": beta, "seed": seed})


__all__ = [
    "FieldSample", "EmpiricalGMCResult", "sample_coefficient_paths", "field_G_M", "field_replicas",
    "field_covariance", "field_covariance_closed", "xi_field_covariance", "field_covariance_matrix",
    "variance_M", "cell_weights", "riemann_integral", "gmc_measure_M", "gmc_replicas",
    "gmc_second_moment", "mc_mean", "empirical_gmc",
]
