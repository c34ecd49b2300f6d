import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from fhlab.errors import DivergenceError, DomainError, SingularValueError
from fhlab.specfun import chebyshev_eval
from fhlab.transforms import (
    Charge,
    FunctionSpec,
    Singularity,
    SmoothTerm,
    arg_sing,
    bump,
    c_ring,
    cheb_coeffs,
    cheb_first,
    cheb_second,
    constant,
    covariance_C,
    covariance_C_closed,
    decompose_to_scale_classes,
    evaluate,
    jump_sing,
    log_sing,
    scale_class_report,
    semicircle_mass,
    series,
    u_transform,
    v_transform,
    v_transform_spec,
)

BULK = np.linspace(-1.8, 1.8, 200)


def inversion_error(f, x, tol=1e-12):
    back = u_transform(v_transform_spec(f, 0.0, tol), 0.0, x, tol)
    f0 = cheb_coeffs(f, 2).coeffs[0]
    return float(np.max(np.abs(back - (evaluate(f, x) - f0))))


# evaluate ------------------------------------------------------------------


def test_regularized_log_at_center():
    assert evaluate(log_sing(0.3, 0.05), 0.3) == pytest.approx(math.log(0.1), abs=1e-15)


def test_regularized_log_far_from_center():
    assert evaluate(log_sing(0.3, 0.05), 1.3) == pytest.approx(0.0, abs=1e-15)


def test_arg_at_center():
    assert evaluate(arg_sing(0.4), 0.4) == pytest.approx(-math.pi / 2)


def test_jump_values():
    assert evaluate(jump_sing(0.0), -1.0) == pytest.approx(math.pi / 2)
    assert evaluate(jump_sing(0.0), 1.0) == pytest.approx(-math.pi / 2)


def test_arg_is_linear_plus_jump():
    x = np.linspace(-3, 3, 101)
    np.testing.assert_allclose(evaluate(arg_sing(0.5), x), (x - 0.5) / 2 + evaluate(jump_sing(0.5), x),
                               atol=1e-15)


def test_log_at_center_raises():
    with pytest.raises(SingularValueError):
        evaluate(log_sing(0.1), 0.1)


def test_bad_center_rejected():
    with pytest.raises(DomainError):
        log_sing(2.0)
    with pytest.raises(DomainError):
        bump(0.0, 0.0)


def test_function_spec_round_trip():
    f = 0.5 * log_sing(0.2, 0.01) - arg_sing(-0.3, 0.05, "left") + cheb_first(3) + series([1, 2], "second")
    g = FunctionSpec.from_dict(f.to_dict())
    assert g == f
    np.testing.assert_allclose(evaluate(g, BULK), evaluate(f, BULK), atol=0)


# coefficients ----------------------------------------------------------------


@pytest.mark.parametrize("m", [1, 2, 7, 30])
def test_coeffs_of_chebyshev(m):
    c = cheb_coeffs(cheb_first(m), 40).coeffs
    expected = np.zeros(41)
    expected[m] = 1.0
    np.testing.assert_allclose(c, expected, atol=1e-15)


def test_log_coeffs():
    c = cheb_coeffs(log_sing(0.0), 20).coeffs
    n = np.arange(1, 21)
    np.testing.assert_allclose(c[1:], -2.0 * np.array([chebyshev_eval("first", k, 0.0) for k in n]) / n, atol=1e-15)
    assert c[0] == 0.0


@pytest.mark.parametrize("E", [-1.1, 0.0, 0.7])
def test_arg_coeffs_match_quadrature(E):
    c = cheb_coeffs(arg_sing(E), 6).coeffs
    a = math.acos(E / 2)
    for n in range(7):
        # integrate in theta, split at the jump theta = alpha
        def g(th):
            return evaluate(arg_sing(E), 2 * math.cos(th)) * math.cos(n * th) / math.pi
        v = integrate.quad(g, 0, a, epsabs=1e-13)[0] + integrate.quad(g, a, math.pi, epsabs=1e-13)[0]
        assert c[n] == pytest.approx((1 if n == 0 else 2) * v, abs=1e-10)


def test_arg_coeffs_closed_form():
    E = 0.6
    c = cheb_coeffs(arg_sing(E), 8).coeffs
    n = np.arange(1, 9)
    expected = -np.array([chebyshev_eval("second", k - 1, E) for k in n]) * math.sqrt(4 - E * E) / n
    expected[0] += 1.0
    np.testing.assert_allclose(c[1:], expected, atol=1e-14)
    assert c[0] == pytest.approx(math.pi / 2 - E / 2 - math.acos(E / 2), abs=1e-15)


def test_polynomial_coeffs_exact():
    f = series([0.3, -1.0, 0.0, 2.5])
    x = BULK
    g = series(cheb_coeffs(2.0 * f, 3).coeffs)
    np.testing.assert_allclose(evaluate(g, x), 2.0 * evaluate(f, x), atol=1e-13)


def test_smooth_coeffs_reconstruct():
    f = bump(0.2, 0.3)
    c = cheb_coeffs(f, tol=1e-13)
    np.testing.assert_allclose(evaluate(series(c.coeffs), BULK), evaluate(f, BULK), atol=1e-10)


def test_log_expansion_at_endpoint():
    # sum_n -2 T_n(0) T_n(2) / n -> log 2
    K = 100_000
    n = np.arange(1, K + 1)
    a = -2.0 * np.round(np.cos(n * np.pi / 2)) / n
    S = np.cumsum(a)
    assert abs(S[-1] - math.log(2)) <= 2.0 / K
    # mean of the last two distinct partial sums cancels the alternating tail
    assert abs(0.5 * (S[-1] + S[-3]) - math.log(2)) <= 1e-6


def test_semicircle_mass_of_log():
    E = 0.5
    num = integrate.quad(lambda x: math.log(abs(x - E)) * math.sqrt(4 - x * x) / (2 * math.pi), -2, 2,
                         points=[E], limit=200)[0]
    assert semicircle_mass(log_sing(E)) == pytest.approx(num, abs=1e-9)


# transforms ------------------------------------------------------------------


@pytest.mark.parametrize("t", [0.0, 0.1, 1.0, 5.0])
def test_v_and_u_on_chebyshev(t):
    worst = 0.0
    for n in range(1, 65):
        q = math.exp(-t * n / 2)
        v = v_transform(cheb_first(n), t, BULK)
        worst = max(worst, float(np.max(np.abs(v - 0.5 * q * chebyshev_eval("second", n - 1, BULK)))))
        u = u_transform(cheb_second(n - 1), t, BULK)
        worst = max(worst, float(np.max(np.abs(u - 2 * q * chebyshev_eval("first", n, BULK)))))
    assert worst <= 1e-9


def test_v_log_example():
    assert v_transform(log_sing(0.0), 0.0, 1.0) == pytest.approx(math.pi / (3 * math.sqrt(3)), abs=1e-12)


def test_v_log_closed_vs_series():
    t = 0.3
    a = v_transform(log_sing(0.4), t, BULK)
    b = v_transform(log_sing(0.4), t, BULK, method="series", n_terms=400)
    np.testing.assert_allclose(a, b, atol=1e-10)


def test_v_of_constant():
    np.testing.assert_allclose(v_transform(constant(3.0), 0.0, BULK), 0.0, atol=1e-15)


def test_u_of_one():
    x = np.linspace(-2, 2, 51)
    np.testing.assert_allclose(u_transform(cheb_second(0), 0.0, x), x, atol=1e-14)


def test_u_v_cheb5():
    x = np.linspace(-1.9, 1.9, 100)
    assert inversion_error(cheb_first(5), x) <= 1e-10


@pytest.mark.parametrize("f", [cheb_first(n) for n in range(1, 11)] + [bump(0.2, 0.3)],
                         ids=[f"T{n}" for n in range(1, 11)] + ["bump"])
def test_inversion(f):
    assert inversion_error(f, BULK) <= 1e-8


def test_v_outside_bulk_rejected():
    with pytest.raises(DomainError):
        v_transform(cheb_first(2), 0.0, 2.0)


def test_v_log_bounded():
    worst = 0.0
    x = np.linspace(-1.6, 1.6, 161)
    for E in np.linspace(-1.5, 1.5, 7):
        for t in np.linspace(0, 5, 11):
            worst = max(worst, float(np.max(np.abs(v_transform(log_sing(float(E)), float(t), x)))))
    print(f"sup |V_t log^E| over bulk = {worst:.4f}")
    assert worst < 2.0


# covariance ------------------------------------------------------------------


@pytest.mark.parametrize("n,tau", [(1, 0.0), (3, 0.7), (10, 2.0)])
def test_C_chebyshev(n, tau):
    assert covariance_C(cheb_first(n), 0.0, cheb_first(n), tau) == pytest.approx(n * math.exp(-tau * n / 2) / 4)


def test_C_log_smooth():
    E = 0.3
    g = bump(-0.2, 0.4)
    c = cheb_coeffs(g, tol=1e-13).coeffs
    val = covariance_C(log_sing(E), 0.0, g, 0.0)
    assert val == pytest.approx(c[0] / 2 - evaluate(g, E) / 2, abs=1e-9)


def test_C_log_log_example():
    assert covariance_C(log_sing(0.0), 0.0, log_sing(0.0), 1.0) == pytest.approx(0.22934, abs=1e-5)
    assert covariance_C_closed("log", "log", 0.0, 0.0, 1.0) == pytest.approx(-0.5 * math.log(1 - math.exp(-1)))


def test_closed_log_arg_at_zero_matches_series():
    v = covariance_C_closed("log", "arg", 0.0, 0.5, 0.4)
    s = covariance_C(log_sing(0.0), 0.0, arg_sing(0.5), 0.4, method="series", n_terms=100_000)
    assert v == pytest.approx(s, abs=1e-7)


@pytest.mark.parametrize("k1,k2", [("log", "log"), ("log", "arg"), ("arg", "log"), ("arg", "arg")])
def test_closed_forms_vs_series(k1, k2):
    rng = np.random.default_rng(5)
    mk = {"log": log_sing, "arg": arg_sing}
    for _ in range(5):
        x, y = rng.uniform(-1.6, 1.6, 2)
        tau = rng.uniform(0.1, 2.0)
        s = covariance_C(mk[k1](x), 0.0, mk[k2](y), tau, method="series", n_terms=100_000)
        assert covariance_C_closed(k1, k2, x, y, tau) == pytest.approx(s, abs=1e-7)


def test_closed_jumps_vs_series():
    tau, x, y = 0.6, -0.4, 0.9
    for a, b in [(jump_sing(x), jump_sing(y)), (jump_sing(x), log_sing(y)), (arg_sing(x), jump_sing(y))]:
        c = covariance_C(a, 0.0, b, tau)
        s = covariance_C(a, 0.0, b, tau, method="series", n_terms=100_000)
        assert c == pytest.approx(s, abs=1e-7)


def test_C_coincident_diverges():
    with pytest.raises(DivergenceError):
        covariance_C(log_sing(0.2), 1.0, log_sing(0.2), 1.0)
    with pytest.raises(DivergenceError):
        covariance_C_closed("arg", "arg", 0.1, 0.1, 0.0)


@settings(max_examples=40, deadline=None)
@given(t=st.floats(-3, 3), s=st.floats(-3, 3), n=st.integers(1, 8), m=st.integers(1, 8))
def test_C_symmetry(t, s, n, m):
    f = cheb_first(n) + 0.5 * bump(0.1, 0.4)
    h = cheb_first(m) - log_sing(0.3, 0.2)
    a = covariance_C(f, t, h, s)
    assert a == covariance_C(h, s, f, t)
    assert a == covariance_C(f, 0.0, h, abs(t - s))


def test_C_bilinear():
    f, g, h = cheb_first(2), bump(0.0, 0.3), log_sing(-0.5, 0.1)
    lhs = covariance_C(2 * f - 3 * g, 0.0, h, 0.4)
    rhs = 2 * covariance_C(f, 0.0, h, 0.4) - 3 * covariance_C(g, 0.0, h, 0.4)
    assert lhs == pytest.approx(rhs, abs=1e-12)


def test_log_envelope():
    xs = np.linspace(-1.5, 1.5, 13)
    ratios = []
    for tau in (1e-3, 1e-2, 0.1, 0.5, 1.0):
        for x in xs:
            for y in xs[::3]:
                if tau == 0 and x == y:
                    continue
                d = math.hypot(tau, x - y)
                ratios.append(math.exp(covariance_C_closed("log", "log", x, y, tau)) * math.sqrt(d))
    C = max(max(ratios), 1 / min(ratios))
    print(f"log envelope constant C = {C:.3f}")
    assert C < 5.0


def test_jump_envelope():
    xs = np.linspace(-1.5, 1.5, 13)
    ratios = []
    for tau in (1e-3, 1e-2, 0.1, 0.5, 1.0):
        for x in xs:
            for y in xs[::3]:
                d = math.hypot(tau, x - y)
                c = covariance_C(jump_sing(float(x)), 0.0, jump_sing(float(y)), tau)
                ratios.append(math.exp(c) * math.sqrt(d))
    C = max(max(ratios), 1 / min(ratios))
    print(f"jump envelope constant C = {C:.3f}")
    assert C < 5.0


# c_ring ----------------------------------------------------------------------


def test_c_ring_single():
    assert c_ring(Charge([Singularity(0.0, 0.3, 2.0, 1.0)])) == 0.0


def test_c_ring_two_logs():
    ch = Charge([Singularity(0.0, -0.5, 1.5, 0.0), Singularity(0.0, 0.6, 0.7, 0.0)])
    assert c_ring(ch) == pytest.approx(2 * 1.5 * 0.7 * covariance_C_closed("log", "log", -0.5, 0.6, 0.0))


def test_c_ring_log_plus_smooth():
    g, gam, E = bump(0.2, 0.3), 1.3, -0.1
    ch = Charge([Singularity(0.0, E, gam, 0.0)], [SmoothTerm(0.0, g)])
    c0 = cheb_coeffs(g, tol=1e-13).coeffs[0]
    expected = covariance_C(g, 0, g, 0) + 2 * gam * (c0 / 2 - evaluate(g, E) / 2)
    assert c_ring(ch) == pytest.approx(expected, abs=1e-9)


def test_c_ring_coincident():
    with pytest.raises(DivergenceError):
        c_ring(Charge([Singularity(0.0, 0.1, 1.0), Singularity(0.0, 0.1, 1.0)]))


# scale classes ---------------------------------------------------------------


def test_decompose_log_three_pieces():
    f = log_sing(0.1, 0.25)
    pieces = decompose_to_scale_classes(f, 1.0)
    assert [s for s, _ in pieces] == [0.25, 0.5, 1.0]
    x = np.linspace(-2.5, 2.5, 5001)
    total = sum(evaluate(p, x) for _, p in pieces)
    np.testing.assert_allclose(total, evaluate(f, x), atol=1e-12)


def test_decompose_top_scale_single():
    assert len(decompose_to_scale_classes(log_sing(0.0, 1.0), 1.0)) == 1


@pytest.mark.parametrize("direction", ["right", "left"])
def test_decompose_jump_local(direction):
    f = jump_sing(0.2, 1 / 64, direction)
    pieces = decompose_to_scale_classes(f, 1.0)
    x = np.linspace(-2.5, 2.5, 20001)
    total = sum(evaluate(p, x) for _, p in pieces)
    np.testing.assert_allclose(total, evaluate(f, x), atol=1e-12)
    for scale, piece in pieces[:-1]:
        rep = scale_class_report(piece, scale, n_grid=40001)
        assert rep.support[1] - rep.support[0] <= 2.0 * scale * 1.01
        assert rep.passes(25.0)


def test_decompose_log_pieces_in_class():
    for scale, piece in decompose_to_scale_classes(log_sing(-0.3, 1 / 32), 1.0)[:-1]:
        rep = scale_class_report(piece, scale, n_grid=40001)
        assert rep.support[1] - rep.support[0] <= 8.0 * scale * 1.01
        assert rep.passes(25.0)


def test_decompose_needs_regularized():
    with pytest.raises(DomainError):
        decompose_to_scale_classes(log_sing(0.0))
