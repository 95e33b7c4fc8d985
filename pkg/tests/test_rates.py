import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from subgeo.errors import DomainError
from subgeo.rates import (
    RateFunction, custom_phi, f_star, h_phi, h_phi_inverse, interpolated_pair,
    is_subgeometric, linear_phi, log_h_phi_inverse, log_power_phi, make_young_pair,
    power_phi, r_star, r_star_grid, r_star_integral, r_star_rate, young_violations,
)

SQRT = power_phi(1.0, 0.5)


# closed-form oracles, written independently of the module
def h_power(c, a, u):
    return math.log(u) / c if a == 0 else (u ** a - 1) / (c * a)


def hinv_power(c, a, t):
    return math.exp(c * t) if a == 0 else (1 + c * a * t) ** (1 / a)


def rstar_power(c, a, t):
    return c * math.exp(c * t) if a == 0 else c * (1 + c * a * t) ** ((1 - a) / a)


def h_logpower(c, a, u):
    # d/dw (log w)^(a+1) / (c (a+1)) = (log w)^a / (c w) = 1/phi
    s = math.expm1(a + 1)
    return (math.log(u + s) ** (a + 1) - (a + 1) ** (a + 1)) / (c * (a + 1))


def test_h_phi_examples():
    assert h_phi(linear_phi(), math.e) == pytest.approx(1.0, rel=1e-14)
    assert h_phi(linear_phi(), 1.0) == 0.0
    assert h_phi(SQRT, 4.0) == pytest.approx(2.0, rel=1e-14)
    assert h_phi(SQRT, 4.0, method="quad") == pytest.approx(2.0, rel=1e-12)


def test_h_phi_inverse_examples():
    assert h_phi_inverse(linear_phi(), 1.0) == pytest.approx(math.e, rel=1e-14)
    assert h_phi_inverse(linear_phi(), 0.0) == 1.0
    assert h_phi_inverse(SQRT, 2.0) == pytest.approx(4.0, rel=1e-14)
    assert h_phi_inverse(SQRT, 2.0, method="numeric") == pytest.approx(4.0, rel=1e-10)


def test_r_star_examples():
    assert r_star(linear_phi(), 1.0) == pytest.approx(math.e, rel=1e-14)
    assert r_star(SQRT, 2.0) == pytest.approx(2.0, rel=1e-14)
    # (1 + t/2)^1 at t = 6
    assert r_star(SQRT, 6.0) == pytest.approx(4.0, rel=1e-14)


def test_domain_errors():
    with pytest.raises(DomainError):
        h_phi(SQRT, 0.5)
    with pytest.raises(DomainError):
        h_phi_inverse(SQRT, -1.0)
    with pytest.raises(DomainError):
        make_young_pair("holder", p=1.0)
    with pytest.raises(DomainError):
        is_subgeometric(lambda t: t, [])


@pytest.mark.parametrize("c", [1.0, 2.0])
@pytest.mark.parametrize("a", [0.25, 0.5, 0.75])
def test_quadrature_matches_power_closed_form(c, a):
    phi = power_phi(c, a)
    for u in np.logspace(0, 6, 25):
        assert h_phi(phi, u, method="quad") == pytest.approx(h_power(c, a, u), rel=1e-8, abs=1e-12)


@pytest.mark.parametrize("c,a", [(1.0, 0.5), (2.0, 0.25), (0.7, 0.0)])
def test_numeric_inverse_matches_closed_form(c, a):
    phi = power_phi(c, a)
    for t in [0.1, 1.0, 7.5, 20.0]:
        if a == 0 and c * t > 600:
            continue
        assert h_phi_inverse(phi, t, method="numeric") == pytest.approx(hinv_power(c, a, t), rel=1e-9)


def test_log_power_quadrature_and_ode_routes():
    phi = log_power_phi(1.5, 2.0)
    for u in [1.0, 3.0, 50.0, 1e4, 1e6]:
        assert h_phi(phi, u) == pytest.approx(h_logpower(1.5, 2.0, u), rel=1e-9, abs=1e-12)
    ts = np.array([0.0, 0.5, 3.0, 12.0])
    via_inverse = np.array([r_star(phi, t) for t in ts])
    np.testing.assert_allclose(r_star_grid(phi, ts), via_inverse, rtol=1e-8)


def test_roundtrip_on_wide_range():
    for phi in [SQRT, linear_phi(), log_power_phi(1.0, 1.0), power_phi(2.0, 0.75)]:
        for u in np.logspace(0, 6, 13):
            t = h_phi(phi, u)
            assert h_phi_inverse(phi, t) == pytest.approx(u, rel=1e-9)


def test_r_star_at_zero_and_integral():
    for phi in [SQRT, linear_phi(3.0), log_power_phi(1.0, 2.0)]:
        assert abs(r_star(phi, 0.0) - float(phi.eval(1.0))) <= 1e-12
    # int_0^d e^s ds = e^d - 1
    assert r_star_integral(linear_phi(), 0.7) == pytest.approx(math.expm1(0.7), rel=1e-13)


def test_log_h_phi_inverse_no_overflow():
    assert log_h_phi_inverse(linear_phi(), 1e4) == pytest.approx(1e4)
    assert log_h_phi_inverse(SQRT, 6.0) == pytest.approx(math.log(16.0))


PHIS = [SQRT, linear_phi(2.0), power_phi(1.0, 0.25), log_power_phi(1.0, 0.5), log_power_phi(2.0, 3.0)]


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(PHIS), st.floats(1.0, 1e6), st.floats(1.0, 1e6), st.floats(0.01, 0.99))
def test_phi_monotone_concave(phi, u1, u2, t):
    u1, u2 = min(u1, u2), max(u1, u2)
    f1, f2 = float(phi.eval(u1)), float(phi.eval(u2))
    assert f1 > 0
    assert f1 <= f2 + 1e-12 * f2
    mid = float(phi.eval(t * u1 + (1 - t) * u2))
    assert mid >= t * f1 + (1 - t) * f2 - 1e-10 * f2


@pytest.mark.parametrize("phi", PHIS)
def test_deriv_matches_finite_differences(phi):
    u = np.logspace(0.01, 6, 40)
    h = 1e-6 * u
    fd = (phi.eval(u + h) - phi.eval(u - h)) / (2 * h)
    np.testing.assert_allclose(phi.deriv(u), fd, rtol=1e-6)


def test_custom_phi_uses_quadrature():
    phi = custom_phi(lambda v: np.sqrt(v), label="sqrt")
    assert h_phi(phi, 4.0) == pytest.approx(2.0, rel=1e-10)
    assert r_star(phi, 6.0) == pytest.approx(4.0, rel=1e-9)


def test_rescaled_phi():
    phi = SQRT.rescaled(2.0)
    assert float(phi.eval(8.0)) == pytest.approx(2.0)
    lp = log_power_phi(1.0, 1.0).rescaled(2.0)
    assert float(lp.eval(6.0)) == pytest.approx(float(log_power_phi(1.0, 1.0).eval(3.0)))


# -- Lambda classifier --------------------------------------------------------

GRID = np.linspace(3.0, 1e4, 4000)


def test_classifier_examples():
    assert is_subgeometric(lambda t: t ** 2 + 2, GRID)[0]
    assert not is_subgeometric(RateFunction(lambda t: 2 * np.exp(t), log_eval=lambda t: math.log(2) + t), GRID)[0]
    ok, rep = is_subgeometric(RateFunction(lambda t: 2 * np.exp(np.sqrt(t)),
                                           log_eval=lambda t: math.log(2) + np.sqrt(t)), GRID)
    assert ok and rep.values.shape == GRID.shape


@pytest.mark.parametrize("phi", [power_phi(1.0, 0.25), power_phi(2.0, 0.75), log_power_phi(1.0, 1.0),
                                 log_power_phi(1.0, 3.0)])
def test_r_star_subgeometric_when_phi_prime_vanishes(phi):
    assert is_subgeometric(r_star_rate(phi), GRID)[0]


def test_r_star_of_linear_is_not_subgeometric():
    assert not is_subgeometric(r_star_rate(linear_phi(0.5)), GRID)[0]


# -- Young pairs -----------------------------------------------------------

def test_young_examples():
    h2 = make_young_pair("holder", p=2)
    assert float(h2.psi1(2.0) * h2.psi2(2.0)) == 4.0
    h3 = make_young_pair("holder", p=3)
    val = float(h3.psi1(1.0) * h3.psi2(8.0))
    assert val == pytest.approx(3 ** (1 / 3) * 12 ** (2 / 3))
    assert val <= 9
    io = make_young_pair("identity_one")
    assert float(io.psi1(5.0)) == 5.0 and float(io.psi2(123.0)) == 1.0


def test_custom_young_pair_validated():
    make_young_pair("custom", psi1=lambda a: 0.5 * np.asarray(a), psi2=lambda b: np.ones_like(b))
    with pytest.raises(DomainError):
        make_young_pair("custom", psi1=lambda a: 2 * np.asarray(a, dtype=float), psi2=lambda b: np.ones_like(b))


@pytest.mark.parametrize("p", [1.2, 1.5, 2.0, 3.0, 7.0])
def test_holder_pairs_no_violation(p):
    assert young_violations(make_young_pair("holder", p=p), 20_000, seed=3) == 0


def test_interpolated_pair():
    phi = linear_phi()
    rate, f = interpolated_pair(phi, lambda x: np.exp(x), make_young_pair("holder", p=2))
    for t in [0.0, 1.0, 2.0]:
        assert float(rate(t)) == pytest.approx(max(math.sqrt(2 * math.exp(t)), 1.0), rel=1e-12)
    rate, f = interpolated_pair(phi, lambda x: 1 + x ** 2, make_young_pair("identity_one"))
    assert float(rate(1.0)) == pytest.approx(math.e) and float(f(3.0)) == 1.0
    rate, f = interpolated_pair(phi, lambda x: 1 + x ** 2, make_young_pair("one_identity"))
    assert float(rate(4.0)) == 1.0 and float(f(3.0)) == 10.0
    assert float(f_star(SQRT, lambda x: 1 + x ** 2)(np.array(3.0))) == pytest.approx(math.sqrt(10))
