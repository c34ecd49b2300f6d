"""Exact sampling of the stationary Hermitian OU process and Monte Carlo
measurement of its linear statistics.

The process H_t has GUE marginals (diagonal variance 1/N, off-diagonal real
and imaginary parts 1/(2N)) and the exact transition
H' = e^{-dt/2} H + sqrt(1 - e^{-dt}) G with G an independent GUE draw.
By unitary invariance of G the spectrum alone is a Markov chain,
spec(H') = spec(e^{-dt/2} diag(spec H) + sqrt(1 - e^{-dt}) G), which is what
the default sampler uses; the full matrix flow is kept as ``method='matrix'``.
Single-time spectra come from the tridiagonal beta=2 model.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg as sla
from scipy import stats

from .errors import DomainError, HeavyTailWarning, UnreliableEstimateError
from .specfun import equilibrium_density, stieltjes_msc, typical_location
from .transforms import Charge, FunctionSpec, evaluate, semicircle_mass

SAMPLER_VERSION = "fhlab-ou-1"
_KEY_SALT = 0x9E3779B97F4A7C15

# stream purposes (second counter word)
PURPOSE_SPECTRUM = 0
PURPOSE_MATRIX = 1
PURPOSE_HAAR = 2
PURPOSE_FIELD = 3
PURPOSE_AUX = 4


def stream(master_seed: int, sample_index: int, time_index: int = 0,
           purpose: int = PURPOSE_SPECTRUM) -> np.random.Generator:
    """Independent generator for one (sample, time) cell.

    Counter-based: a Philox generator keyed by the master seed with the
    counter's high words set to (purpose, time index, sample index), so the
    draw for a cell never depends on how samples are split across workers.
    """
    key = np.array([int(master_seed) & 0xFFFFFFFFFFFFFFFF, _KEY_SALT], dtype=np.uint64)
    counter = np.array([0, purpose, time_index, sample_index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


# --------------------------------------------------------------------------
# matrices


@dataclass
class HermitianMatrix:
    """Dense Hermitian matrix (the full square array is stored)."""

    data: np.ndarray

    @property
    def N(self) -> int:
        return self.data.shape[0]

    def hermiticity_residual(self) -> float:
        return float(np.max(np.abs(self.data - self.data.conj().T))) if self.N else 0.0

    def trace(self) -> float:
        return float(np.trace(self.data).real)

    def trace_sq(self) -> float:
        return float(np.sum(np.abs(self.data) ** 2))

    def digest(self) -> str:
        return hashlib.sha1(np.ascontiguousarray(self.data).tobytes()).hexdigest()[:16]


def sample_gue(N: int, rng: np.random.Generator) -> HermitianMatrix:
    """GUE matrix with E|H_ii|^2 = 1/N and E|H_ij|^2 = 1/N, so E Tr H^2 = N."""
    if N < 1:
        raise DomainError("N must be >= 1")
    s = 1.0 / math.sqrt(N)
    a = rng.standard_normal((N, N)) * s + 1j * (rng.standard_normal((N, N)) * s)
    return HermitianMatrix((a + a.conj().T) / 2.0)


def evolve_ou(H: HermitianMatrix, dt: float, rng: np.random.Generator) -> HermitianMatrix:
    """Exact OU transition over ``dt``; ``dt = 0`` returns ``H`` unchanged."""
    if dt < 0:
        raise DomainError(f"negative time step {dt}")
    if dt == 0:
        return H
    G = sample_gue(H.N, rng)
    return HermitianMatrix(math.exp(-dt / 2.0) * H.data + math.sqrt(-math.expm1(-dt)) * G.data)


def hermitian_spectrum(H: HermitianMatrix) -> np.ndarray:
    """Sorted eigenvalues of ``H``."""
    try:
        return sla.eigvalsh(H.data, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise RuntimeError(f"eigensolver failed on matrix {H.digest()}: {exc}") from exc


def sample_gue_spectrum(N: int, rng: np.random.Generator) -> np.ndarray:
    """GUE spectrum from the tridiagonal beta=2 model (same law, O(N^2) work)."""
    d = rng.standard_normal(N) / math.sqrt(N)
    if N == 1:
        return d
    e = np.sqrt(rng.chisquare(2.0 * np.arange(N - 1, 0, -1))) / math.sqrt(2.0 * N)
    return sla.eigvalsh_tridiagonal(d, e, lapack_driver="sterf", check_finite=False)


def evolve_spectrum(eigs: np.ndarray, dt: float, rng: np.random.Generator) -> np.ndarray:
    """Spectrum after an exact OU step, from the spectrum before it."""
    if dt < 0:
        raise DomainError(f"negative time step {dt}")
    if dt == 0:
        return np.array(eigs, copy=True)
    # the solver reads the lower triangle only, so only that half of G is drawn
    N = len(eigs)
    il = np.tril_indices(N, -1)
    G = np.zeros((N, N), dtype=complex)
    z = rng.standard_normal((2, len(il[0]))) / math.sqrt(2.0 * N)
    G[il] = z[0] + 1j * z[1]
    G[np.diag_indices(N)] = (rng.standard_normal(N) / math.sqrt(N)
                             + math.exp(-dt / 2.0) / math.sqrt(-math.expm1(-dt)) * eigs)
    return math.sqrt(-math.expm1(-dt)) * sla.eigvalsh(G, lower=True, check_finite=False)


def sample_haar_unitary(N: int, rng: np.random.Generator) -> np.ndarray:
    """Haar unitary via QR of a complex Ginibre matrix with phase correction."""
    z = (rng.standard_normal((N, N)) + 1j * rng.standard_normal((N, N))) / math.sqrt(2.0)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))


# --------------------------------------------------------------------------
# trajectories


@dataclass
class EigenTrajectory:
    """Sorted spectra of one OU path at a list of times."""

    N: int
    times: tuple
    eigenvalues: np.ndarray  # (len(times), N)
    seed: int
    sampler_version: str = SAMPLER_VERSION
    sample_index: int = 0

    def at(self, t: float) -> np.ndarray:
        return self.eigenvalues[_time_index(self.times, t)]


@dataclass
class TrajectoryEnsemble:
    """Independent OU paths sharing a time grid; eigenvalues has shape (S, T, N)."""

    N: int
    times: tuple
    eigenvalues: np.ndarray
    seed: int
    sampler_version: str = SAMPLER_VERSION
    method: str = "spectral"

    @property
    def n_samples(self) -> int:
        return self.eigenvalues.shape[0]

    def __len__(self):
        return self.n_samples

    def __getitem__(self, i: int) -> EigenTrajectory:
        return EigenTrajectory(self.N, self.times, self.eigenvalues[i], self.seed,
                               self.sampler_version, i)

    def at(self, t: float) -> np.ndarray:
        """All samples' spectra at time ``t``, shape (S, N)."""
        return self.eigenvalues[:, _time_index(self.times, t)]


def _time_index(times: Sequence[float], t: float) -> int:
    for i, s in enumerate(times):
        if abs(s - t) <= 1e-12 * max(1.0, abs(t)):
            return i
    raise DomainError(f"time {t} not on the sampled grid {list(times)}")


def _sample_one(N, times, seed, i, method):
    out = np.empty((len(times), N))
    if method == "spectral":
        lam = sample_gue_spectrum(N, stream(seed, i, 0, PURPOSE_SPECTRUM))
        out[0] = lam
        for k in range(1, len(times)):
            lam = evolve_spectrum(lam, times[k] - times[k - 1], stream(seed, i, k, PURPOSE_SPECTRUM))
            out[k] = lam
    elif method == "matrix":
        H = sample_gue(N, stream(seed, i, 0, PURPOSE_MATRIX))
        out[0] = hermitian_spectrum(H)
        for k in range(1, len(times)):
            H = evolve_ou(H, times[k] - times[k - 1], stream(seed, i, k, PURPOSE_MATRIX))
            out[k] = hermitian_spectrum(H)
    else:
        raise DomainError(f"unknown sampling method {method!r}")
    return out


def _sample_chunk(args):
    N, times, seed, start, stop, method = args
    out = np.empty((stop - start, len(times), N))
    for j, i in enumerate(range(start, stop)):
        out[j] = _sample_one(N, times, seed, i, method)
    return out


def sample_trajectories(N: int, times: Sequence[float], n_samples: int, seed: int,
                        workers: int = 1, method: str = "spectral",
                        start_index: int = 0) -> TrajectoryEnsemble:
    """Sample ``n_samples`` stationary OU spectral paths on a sorted time grid.

    Sample ``i`` always uses the streams keyed on ``(seed, i, k)``, so the
    result is bit-identical for any ``workers``.
    """
    times = tuple(float(t) for t in times)
    if not times:
        raise DomainError("need at least one time")
    if any(b < a for a, b in zip(times, times[1:])):
        raise DomainError("times must be sorted")
    if N < 1 or n_samples < 0:
        raise DomainError("need N >= 1 and n_samples >= 0")
    stop = start_index + n_samples
    if workers <= 1 or n_samples < 64:
        eig = _sample_chunk((N, times, seed, start_index, stop, method))
    else:
        bounds = np.linspace(start_index, stop, 4 * workers + 1).astype(int)
        jobs = [(N, times, seed, int(a), int(b), method) for a, b in zip(bounds, bounds[1:]) if b > a]
        with ProcessPoolExecutor(max_workers=workers) as ex:
            eig = np.concatenate(list(ex.map(_sample_chunk, jobs)), axis=0)
    return TrajectoryEnsemble(N, times, eig, int(seed), SAMPLER_VERSION, method)


def write_trajectory_csv(ens: TrajectoryEnsemble | EigenTrajectory, path: str) -> None:
    """CSV (sample, time, index, eigenvalue) plus a JSON sidecar at path + '.json'."""
    if isinstance(ens, EigenTrajectory):
        eig = ens.eigenvalues[None]
        first = ens.sample_index
    else:
        eig = ens.eigenvalues
        first = 0
    with open(path, "w", newline="") as fh:
        fh.write("sample,time,index,eigenvalue\n")
        for s in range(eig.shape[0]):
            for k, t in enumerate(ens.times):
                for i, v in enumerate(eig[s, k]):
                    fh.write(f"{first + s},{t!r},{i},{float(v)!r}\n")
    meta = {"N": ens.N, "seed": ens.seed, "version": ens.sampler_version,
            "times": list(ens.times), "n_samples": int(eig.shape[0])}
    with open(path + ".json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)


# --------------------------------------------------------------------------
# linear statistics


def linear_statistic(eigs, f: FunctionSpec, centered: bool = True):
    """Tr f(H) = sum_i f(lambda_i), minus N times the semicircle mass if centered.

    ``eigs`` may carry leading batch axes; the sum runs over the last axis.

    Raises
    ------
    DomainError
        If an unregularized logarithm sits within 1e-300 of an eigenvalue.
    """
    eigs = np.asarray(eigs, dtype=float)
    N = eigs.shape[-1]
    for _, a in f.atoms():
        if a.kind == "log_sing" and a.epsilon == 0.0:
            if np.any(np.abs(eigs - a.center) < 1e-300):
                raise DomainError(f"eigenvalue within 1e-300 of log center {a.center}")
    total = np.sum(evaluate(f, eigs), axis=-1)
    if centered:
        total = total - N * semicircle_mass(f)
    return total


def charge_log_weights(charge: Charge, ens: TrajectoryEnsemble, centered: bool = True) -> np.ndarray:
    """Per-sample log of the charge functional, sum of the centered statistics."""
    from .transforms import arg_sing, log_sing

    L = np.zeros(ens.n_samples)
    for p in charge.singularities:
        lam = ens.at(p.t)
        if p.gamma:
            L += p.gamma * linear_statistic(lam, log_sing(p.E), centered)
        if p.beta:
            L += p.beta * linear_statistic(lam, arg_sing(p.E), centered)
    for q in charge.smooth:
        L += linear_statistic(ens.at(q.s), q.f, centered)
    return L


# --------------------------------------------------------------------------
# Monte Carlo estimates


@dataclass
class MCEstimate:
    """Monte Carlo estimate with batch-mean error bars."""

    mean: float
    stderr: float
    n_samples: int
    n_batches: int
    ess: float
    batch_means: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "MCEstimate":
        return cls(**d)


HEAVY_TAIL_KURTOSIS = 3.0


def _batches(n: int, n_batches: int) -> list[np.ndarray]:
    n_batches = max(2, min(n_batches, n))
    return np.array_split(np.arange(n), n_batches)


def _kish_ess(w: np.ndarray) -> float:
    s2 = float(np.sum(w * w))
    return float(np.sum(w) ** 2 / s2) if s2 > 0 else 0.0


def _check_tails(bm: np.ndarray, what: str):
    if len(bm) >= 8 and np.std(bm) > 0:
        k = float(stats.kurtosis(bm))
        if k > HEAVY_TAIL_KURTOSIS:
            warnings.warn(f"{what}: batch means have excess kurtosis {k:.2f}", HeavyTailWarning,
                          stacklevel=3)


def log_mean_exp(L: np.ndarray, n_batches: int = 50, offset: float = 0.0) -> MCEstimate:
    """Estimate log E[e^L] + offset with a delta-method stderr over batch means."""
    L = np.asarray(L, dtype=float)
    n = len(L)
    if n == 0:
        raise DomainError("no samples")
    c = float(np.max(L))
    w = np.exp(L - c)
    m = float(np.mean(w))
    idx = _batches(n, n_batches)
    bm = np.array([np.mean(w[i]) for i in idx])
    se = float(np.std(bm, ddof=1) / math.sqrt(len(bm)) / m)
    _check_tails(bm, "log-moment")
    blog = [float(math.log(b) + c + offset) if b > 0 else -math.inf for b in bm]
    return MCEstimate(float(math.log(m) + c + offset), se, n, len(bm), _kish_ess(w), blog)


def log_moment_contrast(Ls: Sequence[np.ndarray], coeffs: Sequence[float], n_batches: int = 50,
                        offset: float = 0.0) -> MCEstimate:
    """Estimate sum_k c_k log E[e^{L_k}] from common samples.

    The stderr uses the delta method with the full covariance of the batch
    means, so correlated estimates (joint vs marginal) partly cancel.
    """
    Ls = [np.asarray(L, dtype=float) for L in Ls]
    n = len(Ls[0])
    idx = _batches(n, n_batches)
    B = len(idx)
    bms, ms, val = [], [], offset
    ess = math.inf
    for L, ck in zip(Ls, coeffs):
        c = float(np.max(L))
        w = np.exp(L - c)
        m = float(np.mean(w))
        ms.append(m)
        bms.append([np.mean(w[i]) for i in idx])
        val += ck * (math.log(m) + c)
        ess = min(ess, _kish_ess(w))
    bms = np.array(bms)
    grad = np.array(coeffs) / np.array(ms)
    per_batch = grad @ bms
    se = float(np.std(per_batch, ddof=1) / math.sqrt(B))
    return MCEstimate(float(val), se, n, B, float(ess), [])


def mc_joint_moment(charge: Charge, N: int, n_samples: int, master_seed: int,
                    n_batches: int = 50, workers: int = 1, ensemble: TrajectoryEnsemble | None = None,
                    method: str = "spectral") -> MCEstimate:
    """Monte Carlo log E[prod |det(H_t - E)|^gamma e^{beta Tr arg} prod e^{Tr f}].

    The centered statistics are exponentiated and the N * mass term is added
    back exactly, which keeps the weights of order one.
    """
    if charge.is_empty():
        return MCEstimate(0.0, 0.0, n_samples, 0, float(n_samples), [])
    if ensemble is None:
        ensemble = sample_trajectories(N, charge.times, n_samples, master_seed, workers, method)
    from .predictor import order_N_term

    L = charge_log_weights(charge, ensemble)
    return log_mean_exp(L, n_batches, offset=N * order_N_term(charge))


def reweighted_expectation(ensemble: TrajectoryEnsemble, bias: Charge,
                           observable: tuple[FunctionSpec, float], n_batches: int = 50,
                           min_ess: float = 100.0) -> MCEstimate:
    """Self-normalized estimate of E_bias[S_N(f)(H_t)] with weights e^{S_N(bias)}.

    Raises
    ------
    UnreliableEstimateError
        When the Kish effective sample size falls below ``min_ess``.
    """
    if bias.singularities:
        raise DomainError("bias must be built from smooth or regularized functions")
    f, t = observable
    obs = linear_statistic(ensemble.at(t), f)
    B = charge_log_weights(bias, ensemble) if not bias.is_empty() else np.zeros(len(obs))
    w = np.exp(B - np.max(B))
    ess = _kish_ess(w)
    if ess < min_ess:
        raise UnreliableEstimateError(f"effective sample size {ess:.1f} < {min_ess}")
    idx = _batches(len(obs), n_batches)
    R = float(np.sum(w * obs) / np.sum(w))
    xb = np.array([np.mean(w[i]) for i in idx])
    yb = np.array([np.mean(w[i] * obs[i]) for i in idx])
    se = float(np.std(yb - R * xb, ddof=1) / math.sqrt(len(idx)) / np.mean(w))
    return MCEstimate(R, se, len(obs), len(idx), ess, [float(v) for v in yb / xb])


def cue_mc_moment(gamma: float, beta: float, N: int, n_samples: int, seed: int,
                  n_batches: int = 50) -> MCEstimate:
    """Monte Carlo log E[|det(1-U)|^gamma e^{beta Im log det(1-U)}] over Haar U."""
    L = np.empty(n_samples)
    for i in range(n_samples):
        U = sample_haar_unitary(N, stream(seed, i, 0, PURPOSE_HAAR))
        th = np.angle(np.linalg.eigvals(U)) % (2.0 * np.pi)
        z = np.log1p(-np.exp(1j * th))
        L[i] = gamma * np.sum(z.real) + beta * np.sum((th - np.pi) / 2.0)
    return log_mean_exp(L, n_batches)


# --------------------------------------------------------------------------
# rigidity and local law diagnostics


@dataclass
class RigidityReport:
    """Bulk rigidity and Stieltjes deviation per time."""

    N: int
    per_time_max: list
    overall_max: float
    stieltjes_max: list
    upsilon: float

    @property
    def normalized(self) -> float:
        return self.overall_max / math.log(self.N)


def _bulk_locations(N: int, upsilon: float):
    gk = np.array([typical_location(k, N) for k in range(1, N + 1)])
    bulk = np.abs(gk) <= 2.0 - upsilon
    return gk, bulk


def rigidity_statistic(eigs: np.ndarray, upsilon: float = 0.5) -> np.ndarray:
    """max_k N rho_sc(gamma_k) |lambda_k - gamma_k| over bulk k, per leading index."""
    eigs = np.asarray(eigs, dtype=float)
    N = eigs.shape[-1]
    gk, bulk = _bulk_locations(N, upsilon)
    dev = N * equilibrium_density("semicircle", gk[bulk]) * np.abs(eigs[..., bulk] - gk[bulk])
    return np.max(dev, axis=-1)


def stieltjes_deviation(eigs: np.ndarray, energies=None, etas=None) -> float:
    """max over the grid of |m_N(z) - m_sc(z)| N eta for one spectrum."""
    eigs = np.asarray(eigs, dtype=float)
    N = eigs.shape[-1]
    energies = np.linspace(-1.5, 1.5, 13) if energies is None else np.asarray(energies)
    etas = np.array([0.01, 0.02, 0.05, 0.1]) if etas is None else np.asarray(etas)
    z = (energies[:, None] + 1j * etas[None, :]).ravel()
    mN = np.mean(1.0 / (eigs[None, :] - z[:, None]), axis=1)
    dev = np.abs(mN - stieltjes_msc(z)) * N * np.repeat(etas[None, :], len(energies), 0).ravel()
    return float(np.max(dev))


def rigidity_report(traj: EigenTrajectory | np.ndarray, upsilon: float = 0.5) -> RigidityReport:
    """Rigidity and local-law diagnostics of a trajectory (or (T, N) spectra)."""
    eig = traj.eigenvalues if isinstance(traj, EigenTrajectory) else np.atleast_2d(traj)
    N = eig.shape[-1]
    per = [float(v) for v in rigidity_statistic(eig, upsilon)]
    st = [stieltjes_deviation(e) for e in eig]
    return RigidityReport(N, per, max(per), st, upsilon)


def default_workers() -> int:
    return max(1, min(os.cpu_count() or 1, 8))
