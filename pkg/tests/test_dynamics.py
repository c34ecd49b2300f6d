import csv
import json
import math

import numpy as np
import pytest
from scipy import stats

from fhlab.dynamics import (
    HermitianMatrix,
    PURPOSE_MATRIX,
    TrajectoryEnsemble,
    cue_mc_moment,
    evolve_ou,
    evolve_spectrum,
    hermitian_spectrum,
    linear_statistic,
    log_mean_exp,
    log_moment_contrast,
    mc_joint_moment,
    reweighted_expectation,
    rigidity_report,
    rigidity_statistic,
    sample_gue,
    sample_gue_spectrum,
    sample_trajectories,
    stieltjes_deviation,
    stream,
    write_trajectory_csv,
)
from fhlab.errors import DomainError, UnreliableEstimateError
from fhlab.specfun import semicircle_cdf, typical_location
from fhlab.transforms import Charge, Singularity, SmoothTerm, cheb_first, constant, jump_sing, log_sing, series


def test_stream_reproducible():
    a = stream(5, 3, 1).standard_normal(4)
    b = stream(5, 3, 1).standard_normal(4)
    c = stream(5, 4, 1).standard_normal(4)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_gue_trace_square():
    N, S = 50, 10_000
    v = np.array([sample_gue(N, stream(1, i, 0, PURPOSE_MATRIX)).trace_sq() for i in range(S)])
    se = v.std(ddof=1) / math.sqrt(S)
    assert abs(v.mean() - N) <= 3 * se


def test_gue_hermitian_exact():
    H = sample_gue(30, stream(2, 0))
    assert np.array_equal(H.data, H.data.conj().T)
    assert H.hermiticity_residual() == 0.0


def test_semicircle_fraction():
    N = 400
    frac = np.mean([np.mean(np.abs(sample_gue_spectrum(N, stream(3, i))) <= 1.0) for i in range(20)])
    assert frac == pytest.approx(1 / 3 + math.sqrt(3) / (2 * math.pi), abs=0.01)


def test_tridiagonal_matches_dense_law():
    N, S = 40, 400
    a = np.concatenate([sample_gue_spectrum(N, stream(4, i)) for i in range(S)])
    b = np.concatenate([hermitian_spectrum(sample_gue(N, stream(5, i))) for i in range(S)])
    assert stats.ks_2samp(a, b).pvalue > 0.001


def test_evolve_zero_step():
    H = sample_gue(10, stream(6, 0))
    assert evolve_ou(H, 0.0, stream(6, 1)) is H
    lam = hermitian_spectrum(H)
    np.testing.assert_array_equal(evolve_spectrum(lam, 0.0, stream(6, 2)), lam)


def test_evolve_negative_step():
    H = sample_gue(4, stream(6, 0))
    with pytest.raises(DomainError):
        evolve_ou(H, -0.1, stream(6, 1))
    with pytest.raises(DomainError):
        evolve_spectrum(hermitian_spectrum(H), -0.1, stream(6, 1))


def test_entry_autocorrelation():
    N, S, dt = 4, 20_000, 0.8
    prod = np.empty(S)
    for i in range(S):
        H0 = sample_gue(N, stream(7, i, 0, PURPOSE_MATRIX))
        H1 = evolve_ou(H0, dt, stream(7, i, 1, PURPOSE_MATRIX))
        prod[i] = N * (H0.data[0, 0] * H1.data[0, 0]).real
    se = prod.std(ddof=1) / math.sqrt(S)
    assert abs(prod.mean() - math.exp(-dt / 2)) <= 3 * se


def test_evolved_spectrum_is_semicircle():
    ens = sample_trajectories(200, [0.0, 0.7, 3.0], 20, 8)
    crit = 1.63 / math.sqrt(200)
    for k in range(3):
        for lam in ens.eigenvalues[:, k]:
            assert stats.kstest(lam, semicircle_cdf).statistic < crit


def test_spectral_and_matrix_methods_agree_in_law():
    N, S, t = 30, 600, 0.4
    a = sample_trajectories(N, [0.0, t], S, 9, method="spectral")
    b = sample_trajectories(N, [0.0, t], S, 10, method="matrix")
    ta, tb = a.eigenvalues.sum(-1), b.eigenvalues.sum(-1)
    ca = np.corrcoef(ta[:, 0], ta[:, 1])[0, 1]
    cb = np.corrcoef(tb[:, 0], tb[:, 1])[0, 1]
    se = (1 - math.exp(-t)) / math.sqrt(S)
    assert abs(ca - cb) <= 4 * math.sqrt(2) * se
    assert stats.ks_2samp(a.eigenvalues[:, 1].ravel(), b.eigenvalues[:, 1].ravel()).pvalue > 0.001


def test_trace_correlation():
    N, S = 20, 4000
    times = [0.0, 0.5, 2.0]
    ens = sample_trajectories(N, times, S, 11)
    tr = ens.eigenvalues.sum(-1)
    for j in (1, 2):
        rho = np.corrcoef(tr[:, 0], tr[:, j])[0, 1]
        target = math.exp(-times[j] / 2)
        assert abs(rho - target) <= 3 * (1 - target ** 2) / math.sqrt(S) + 1e-3


def test_spectrum_trivial():
    np.testing.assert_array_equal(hermitian_spectrum(HermitianMatrix(np.zeros((3, 3)))), np.zeros(3))
    np.testing.assert_allclose(hermitian_spectrum(HermitianMatrix(np.diag([3.0, 1.0, 2.0]))), [1, 2, 3])


def test_spectrum_identities():
    for i in range(5):
        H = sample_gue(60, stream(12, i))
        lam = hermitian_spectrum(H)
        assert np.all(np.diff(lam) >= 0)
        assert lam.sum() == pytest.approx(H.trace(), rel=1e-9, abs=1e-9)
        assert np.sum(lam ** 2) == pytest.approx(H.trace_sq(), rel=1e-9)


def test_time_grid_checks():
    with pytest.raises(DomainError):
        sample_trajectories(5, [1.0, 0.0], 2, 0)
    ens = sample_trajectories(5, [0.0, 1.0], 3, 0)
    with pytest.raises(DomainError):
        ens.at(0.5)


# linear statistics -----------------------------------------------------------


def test_linear_statistic_constant():
    lam = sample_gue_spectrum(50, stream(13, 0))
    assert linear_statistic(lam, constant(1.0)) == pytest.approx(0.0, abs=1e-12)


def test_linear_statistic_square():
    H = sample_gue(50, stream(13, 1))
    lam = hermitian_spectrum(H)
    x2 = series([2.0, 0.0, 2.0])
    assert linear_statistic(lam, x2) == pytest.approx(H.trace_sq() - 50, abs=1e-10)


def test_linear_statistic_jump():
    lam = sample_gue_spectrum(50, stream(13, 2))
    x = 0.3
    count = np.sum(lam < x)
    assert linear_statistic(lam, jump_sing(x), centered=False) == pytest.approx(math.pi * count - math.pi * 25)


def test_linear_statistic_log_det():
    H = sample_gue(40, stream(13, 3))
    lam = hermitian_spectrum(H)
    _, ld = np.linalg.slogdet(H.data - 0.4 * np.eye(40))
    assert linear_statistic(lam, log_sing(0.4), centered=False) == pytest.approx(ld, abs=1e-9)


def test_linear_statistic_underflow():
    with pytest.raises(DomainError):
        linear_statistic(np.array([-0.5, 0.25, 0.9]), log_sing(0.25))


@pytest.mark.slow
def test_clt_variance():
    # Var S_N(T_n) -> C(T_n, T_n) = n/4
    N, S = 400, 2000
    lam = np.array([sample_gue_spectrum(N, stream(14, i)) for i in range(S)])
    for n in (1, 2, 3):
        s = linear_statistic(lam, cheb_first(n))
        v = s.var(ddof=1)
        se = v * math.sqrt(2.0 / (S - 1))
        assert abs(v - n / 4) <= 3 * se


# Monte Carlo estimators ------------------------------------------------------


def test_log_mean_exp_constant():
    est = log_mean_exp(np.full(100, 2.5), 10)
    assert est.mean == pytest.approx(2.5)
    assert est.stderr == 0.0


def test_log_mean_exp_gaussian():
    rng = np.random.default_rng(0)
    L = rng.standard_normal(200_000) * 0.5
    est = log_mean_exp(L, 50)
    assert abs(est.mean - 0.125) <= 3 * est.stderr


def test_contrast_matches_difference():
    rng = np.random.default_rng(1)
    a, b = rng.standard_normal(5000), rng.standard_normal(5000)
    est = log_moment_contrast([a + b, a, b], [1.0, -1.0, -1.0], 20)
    direct = log_mean_exp(a + b, 20).mean - log_mean_exp(a, 20).mean - log_mean_exp(b, 20).mean
    assert est.mean == pytest.approx(direct, abs=1e-12)


def test_mc_joint_moment_empty():
    est = mc_joint_moment(Charge(), 10, 100, 0)
    assert est.mean == 0.0 and est.stderr == 0.0


def test_determinism_across_workers():
    a = sample_trajectories(12, [0.0, 0.3], 80, 77, workers=1)
    b = sample_trajectories(12, [0.0, 0.3], 80, 77, workers=2)
    np.testing.assert_array_equal(a.eigenvalues, b.eigenvalues)
    ch = Charge([Singularity(0.0, 0.1, 1.0, 0.5), Singularity(0.3, -0.4, 0.5)])
    e1 = mc_joint_moment(ch, 12, 80, 77, n_batches=8, workers=1)
    e2 = mc_joint_moment(ch, 12, 80, 77, n_batches=8, workers=2)
    assert e1 == e2


def test_start_index_continues_stream():
    full = sample_trajectories(8, [0.0], 10, 5)
    tail = sample_trajectories(8, [0.0], 4, 5, start_index=6)
    np.testing.assert_array_equal(full.eigenvalues[6:], tail.eigenvalues)


def test_reweighting_without_bias_is_plain_mean():
    ens = sample_trajectories(20, [0.0], 500, 15)
    est = reweighted_expectation(ens, Charge(), (cheb_first(2), 0.0))
    assert est.mean == pytest.approx(float(np.mean(linear_statistic(ens.at(0.0), cheb_first(2)))), abs=1e-12)


def test_reweighted_covariance_T2():
    N, S, t = 50, 4000, 0.5
    ens = sample_trajectories(N, [0.0, t], S, 16)
    bias = Charge([], [SmoothTerm(0.0, cheb_first(2))])
    est = reweighted_expectation(ens, bias, (cheb_first(2), t))
    assert abs(est.mean - math.exp(-t) / 2) <= max(3 * est.stderr, 0.02)


def test_reweighting_low_ess():
    ens = sample_trajectories(20, [0.0], 300, 17)
    bias = Charge([], [SmoothTerm(0.0, 200.0 * cheb_first(2))])
    with pytest.raises(UnreliableEstimateError):
        reweighted_expectation(ens, bias, (cheb_first(1), 0.0))


def test_reweighting_rejects_singular_bias():
    ens = sample_trajectories(10, [0.0], 10, 18)
    with pytest.raises(DomainError):
        reweighted_expectation(ens, Charge([Singularity(0.0, 0.0, 1.0)]), (cheb_first(1), 0.0))


@pytest.mark.slow
def test_cue_mc_small():
    est = cue_mc_moment(2.0, 0.0, 3, 20_000, 19)
    assert abs(est.mean - math.log(4.0)) <= 3 * est.stderr


# rigidity ----------------------------------------------------------------------


def test_rigidity_at_typical_locations():
    N = 100
    gk = np.array([typical_location(k, N) for k in range(1, N + 1)])
    assert rigidity_statistic(gk) == pytest.approx(0.0, abs=1e-9)


def test_rigidity_window():
    N = 200
    vals = [rigidity_statistic(sample_gue_spectrum(N, stream(20, i))) / math.log(N) for i in range(100)]
    assert 0.2 <= np.median(vals) <= 1.5


def test_rigidity_report_shape():
    traj = sample_trajectories(50, [0.0, 1.0], 1, 21)[0]
    rep = rigidity_report(traj)
    assert len(rep.per_time_max) == 2 and len(rep.stieltjes_max) == 2
    assert rep.overall_max == max(rep.per_time_max)


@pytest.mark.slow
def test_stieltjes_deviation_bound():
    N = 200
    energies, etas = np.linspace(-1.5, 1.5, 13), np.linspace(0.01, 0.1, 10)
    dev = np.array([stieltjes_deviation(sample_gue_spectrum(N, stream(22, i)), energies, etas)
                    for i in range(1000)])
    assert np.mean(dev <= 50) >= 0.99


def test_trajectory_csv(tmp_path):
    ens = sample_trajectories(4, [0.0, 0.5], 2, 23)
    p = tmp_path / "traj.csv"
    write_trajectory_csv(ens, str(p))
    rows = list(csv.DictReader(open(p)))
    assert len(rows) == 2 * 2 * 4
    assert float(rows[5]["eigenvalue"]) == ens.eigenvalues[0, 1, 1]
    meta = json.load(open(str(p) + ".json"))
    assert meta["N"] == 4 and meta["n_samples"] == 2
    assert isinstance(ens, TrajectoryEnsemble)
