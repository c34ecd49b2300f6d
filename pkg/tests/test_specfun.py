import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fhlab.errors import DomainError
from fhlab.specfun import (
    HERMITE_ENVELOPE_CONSTANT,
    ComplexPoint,
    characteristic_curve,
    chebyshev_eval,
    chebyshev_table,
    equilibrium_density,
    hermite_functions,
    hermite_psi,
    hermite_psi_array,
    log_barnes_g,
    log_barnes_g_pair,
    semicircle_cdf,
    stieltjes_msc,
    typical_location,
)


def test_chebyshev_examples():
    assert chebyshev_eval("first", 0, 1.3) == 1.0
    assert chebyshev_eval("first", 1, 0.6) == pytest.approx(0.3)
    assert chebyshev_eval("second", 3, 0.0) == pytest.approx(0.0, abs=1e-15)


def test_chebyshev_trig_identities():
    th = np.linspace(0.01, np.pi - 0.01, 1000)
    x = 2 * np.cos(th)
    T = chebyshev_table("first", 128, x)
    U = chebyshev_table("second", 127, x)
    for n in range(1, 129):
        assert np.max(np.abs(T[n] - np.cos(n * th))) < 1e-10
        assert np.max(np.abs(U[n - 1] - np.sin(n * th) / np.sin(th))) < 1e-10


def test_chebyshev_orthogonality_gauss_chebyshev():
    m = 2048
    th = (np.arange(m) + 0.5) * np.pi / m
    x = 2 * np.cos(th)
    T = chebyshev_table("first", 64, x)
    # arcsine weight: nodes are equal-weight
    G = T @ T.T / m
    expect = np.diag([1.0] + [0.5] * 64)
    assert np.max(np.abs(G - expect)) < 1e-10
    # semicircle weight: in theta, rho_sc dx = (2/pi) sin^2(theta) dtheta
    U = chebyshev_table("second", 64, x)
    w = 2.0 / m * np.sin(th) ** 2
    assert np.max(np.abs((U * w) @ U.T - np.eye(65))) < 1e-10


def test_equilibrium_density_examples():
    assert equilibrium_density("semicircle", 0.0) == pytest.approx(1 / math.pi)
    assert equilibrium_density("semicircle", 2.0) == 0.0
    assert equilibrium_density("arcsine", 0.0) == pytest.approx(1 / (2 * math.pi))
    assert equilibrium_density("arcsine", 3.0) == 0.0


def test_semicircle_cdf_matches_quadrature():
    from scipy.integrate import quad

    for x in (-1.5, -0.2, 0.0, 1.1):
        q = quad(lambda y: equilibrium_density("semicircle", y), -2, x)[0]
        assert semicircle_cdf(x) == pytest.approx(q, abs=1e-12)


def test_msc_examples():
    m = stieltjes_msc(ComplexPoint(0.0, 1.0))
    assert m == pytest.approx(1j * (math.sqrt(5) - 1) / 2, abs=1e-14)
    assert stieltjes_msc(ComplexPoint(0.0, 1e-9)).imag == pytest.approx(1.0, abs=1e-8)
    with pytest.raises(DomainError):
        stieltjes_msc(ComplexPoint(0.5, 0.0))


def test_msc_fixed_point_grid():
    E, eta = np.meshgrid(np.linspace(-3, 3, 10), np.logspace(-3, 1, 10))
    z = (E + 1j * eta).ravel()
    m = stieltjes_msc(z)
    assert np.max(np.abs(m * m + z * m + 1)) < 1e-12
    assert np.all(m.imag > 0)


def test_characteristic_curve():
    z = ComplexPoint(0.4, 0.3)
    assert characteristic_curve(z, 0.0) == pytest.approx(z.z)
    assert characteristic_curve(2.0, 1.0).real == pytest.approx(2 * math.cosh(0.5), abs=1e-12)
    for t in (0.1, 1.0, 3.0):
        zt = characteristic_curve(z, t)
        assert stieltjes_msc(zt) == pytest.approx(math.exp(-t / 2) * stieltjes_msc(z), abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.floats(-3, 3), st.floats(0.01, 3), st.floats(0, 2), st.floats(0, 2))
def test_characteristic_semigroup(E, eta, s, t):
    z = complex(E, eta)
    a = characteristic_curve(characteristic_curve(z, s), t)
    b = characteristic_curve(z, s + t)
    assert abs(a - b) <= 1e-10 * max(1.0, abs(b))
    assert characteristic_curve(z, s + t).imag >= characteristic_curve(z, s).imag - 1e-12


def test_hermite_examples():
    assert hermite_psi(0, 0.0).value == pytest.approx((2 * math.pi) ** -0.25)
    assert hermite_psi(1, 0.0).value == 0.0


@pytest.mark.parametrize("k,x", [(0, 0.3), (5, 1.7), (30, -4.0), (100, 12.0), (7, 40.0)])
def test_hermite_vs_mpmath(k, x):
    with mpmath.workdps(40):
        ref = mpmath.hermite(k, x / mpmath.sqrt(2))  # physicists' H
        he = ref / mpmath.power(2, mpmath.mpf(k) / 2)
        val = he * mpmath.exp(-x * x / 4) / mpmath.sqrt(mpmath.sqrt(2 * mpmath.pi) * mpmath.factorial(k))
    assert hermite_psi(k, x).value == pytest.approx(float(val), rel=1e-10, abs=1e-300)
    assert hermite_psi_array(k, np.array([x]))[0] == pytest.approx(float(val), rel=1e-10, abs=1e-300)


def test_hermite_deep_tail_uses_log_scale():
    r = hermite_psi(5, 50.0)
    assert r.log_scale_applied
    assert 0 < r.value < 1e-250
    assert hermite_psi(5, 60.0).value == 0.0  # below the smallest subnormal
    assert hermite_psi(20000, 10.0).log_scale_applied is not None


def test_hermite_orthonormality_gauss_legendre():
    g, w = np.polynomial.legendre.leggauss(1500)
    x = 50 * g
    w = 50 * w
    P = hermite_functions(65, x)
    assert np.max(np.abs((P * w) @ P.T - np.eye(65))) < 1e-8


def test_hermite_functions_table_matches_scalar():
    x = np.array([-3.0, 0.2, 5.5])
    tab, psi_n, psi_nm1 = hermite_functions(12, x, return_state=True)
    for j in range(12):
        for i, xi in enumerate(x):
            assert tab[j, i] == pytest.approx(hermite_psi(j, xi).value, rel=1e-12, abs=1e-300)
    assert np.allclose(psi_n, [hermite_psi(12, xi).value for xi in x], rtol=1e-12)
    assert np.allclose(psi_nm1, tab[11], rtol=1e-12)


@pytest.mark.parametrize("k", [100, 1000, 10000])
def test_hermite_envelope(k):
    x = np.linspace(-2 * math.sqrt(k), 2 * math.sqrt(k), 20001)
    sup = np.max(np.abs(hermite_psi_array(k, x))) * k ** (1 / 12)
    assert sup <= 1.2
    assert sup <= 1.1 * HERMITE_ENVELOPE_CONSTANT


def test_hermite_max_degree():
    with pytest.raises(DomainError):
        hermite_psi(11, 0.0, max_degree=10)


def test_barnes_examples():
    for z in (0.0, 1.0, 2.0):
        assert log_barnes_g(z) == pytest.approx(0.0, abs=1e-12)
    assert log_barnes_g(3.0) == pytest.approx(math.log(2.0), abs=1e-12)


def test_barnes_recursion_and_dual_path():
    for z in np.linspace(1.0, 20.0, 39):
        lhs = log_barnes_g(z)
        rhs = math.lgamma(z) + log_barnes_g(z - 1.0)
        assert lhs == pytest.approx(rhs, rel=1e-11, abs=1e-11)
    # at z = 30 the expansion is used directly; compare with the value shifted in from small z
    direct = log_barnes_g(30.0, shift_to=0.0)
    shifted = log_barnes_g(30.0, shift_to=10.0)
    up = log_barnes_g(2.0) + sum(math.lgamma(3.0 + j) for j in range(28))
    assert direct == pytest.approx(shifted, abs=1e-9)
    assert direct == pytest.approx(up, abs=1e-9)


@pytest.mark.parametrize("z", [0.3, 1.7, 4.25, complex(0.5, 0.5), complex(1.0, -2.0), complex(0.25, 3.0)])
def test_barnes_vs_mpmath(z):
    ref = mpmath.log(mpmath.barnesg(1 + mpmath.mpmathify(z)))
    got = log_barnes_g(z)
    assert complex(got).real == pytest.approx(float(mpmath.re(ref)), abs=1e-12)
    if isinstance(z, complex):
        # imaginary part is defined modulo 2 pi
        d = (complex(got).imag - float(mpmath.im(ref))) / (2 * math.pi)
        assert abs(d - round(d)) < 1e-11


def test_barnes_pair_is_real_sum():
    a, b = 0.5, 0.7
    ref = 2 * float(mpmath.re(mpmath.log(mpmath.barnesg(1 + a + 1j * b))))
    assert log_barnes_g_pair(a, b) == pytest.approx(ref, abs=1e-12)


def test_barnes_pole():
    with pytest.raises(DomainError):
        log_barnes_g(-1.0)


def test_typical_location():
    assert typical_location(50, 100) == 0.0
    assert typical_location(100, 100) == 2.0
    g = typical_location(25, 100)
    assert g == pytest.approx(-0.8077, abs=1e-3)
    assert abs(semicircle_cdf(g) - 0.25) <= 1e-12
    with pytest.raises(DomainError):
        typical_location(0, 10)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 500), st.integers(0, 10**6))
def test_typical_location_residual(N, r):
    k = 1 + r % N
    g = typical_location(k, N)
    assert abs(semicircle_cdf(g) - k / N) <= 1e-12


def test_complex_point_accessors():
    p = ComplexPoint(1.5, 0.2)
    assert p.energy == 1.5 and p.eta == 0.2
    assert p.kappa == pytest.approx(0.5)
    assert complex(p) == complex(1.5, 0.2)
