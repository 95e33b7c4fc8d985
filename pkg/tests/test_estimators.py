import math

import numpy as np
import pytest
from scipy import integrate, special

from subgeo import lyapunov as L
from subgeo.errors import DomainError
from subgeo.estimators import (
    DriftTriple, classify_langevin_regime, exp_moment_hitting, hamiltonian_rate_exponent, modulated_moment,
    modulated_moments, return_time_bound, skeleton_sum, young_moment,
)
from subgeo.models import builtin_model
from subgeo.rates import h_phi_inverse, linear_phi, make_young_pair, power_phi
from subgeo.sets import ball
from subgeo.simulate import SimConfig

OU = builtin_model("ou_geometric")
V2 = L.quadratic()
EVERYWHERE = ball(1e9)


def _ou_mean_exit(x0, r=1.0):
    # u'' - x u' = -1 on (r, inf), u(r) = 0, so u'(y) = e^{y^2/2} int_y^inf e^{-z^2/2} dz
    up = lambda y: math.sqrt(math.pi / 2) * special.erfcx(y / math.sqrt(2))  # noqa: E731
    return integrate.quad(up, r, x0)[0]


def test_mean_hitting_time_matches_scale_function():
    dt = 1e-3
    e = modulated_moment(OU, 3.0, ball(1.0), 0.0, "one", "one", SimConfig(dt=dt, horizon=10.0, n_paths=10_000, seed=1))
    assert e.censored_fraction == 0.0
    # discrete monitoring overshoots the boundary by O(sqrt(dt))
    assert abs(e.mean - _ou_mean_exit(3.0)) <= 3 * e.se + 0.6 * math.sqrt(2 * dt)


def test_rate_integral_on_trivial_set():
    # with C everywhere tau_C(delta) = delta and int_0^delta r_* = H^-1(delta) - 1
    phi = linear_phi(1.0)
    cfg = SimConfig(dt=1e-3, horizon=3.0, n_paths=8, seed=2)
    e = modulated_moment(OU, 0.0, EVERYWHERE, 2.0, "one", "r_star", cfg, drift=(V2, phi, 0.0))
    assert e.mean == pytest.approx(math.e ** 2 - 1, rel=1e-5)
    assert e.se == pytest.approx(0.0, abs=1e-12)


def test_f_star_integral_deterministic_start():
    cfg = SimConfig(dt=1e-3, horizon=1.0, n_paths=4, seed=3)
    e = modulated_moment(OU, 0.0, ball(1.0), 0.0, "f_star", "one", cfg, drift=(V2, linear_phi(), 7.0))
    assert e.mean == 0.0
    assert e.bound == 0.0


def test_return_time_bounds():
    tri = DriftTriple(V2, power_phi(1.0, 0.5), 3.0)
    assert return_time_bound("f_star", tri, 2.0, 0.5) == pytest.approx(4.0 + 1.5)
    # sqrt(v): H^-1(t) = (1 + t/2)^2
    assert return_time_bound("r_star", tri, 2.0, 2.0) == pytest.approx(4.0 + 3.0 * 3.0)
    with pytest.raises(DomainError):
        return_time_bound("other", tri, 2.0, 1.0)


def test_ou_moments_under_bounds():
    cfg = SimConfig(dt=0.005, horizon=20.0, n_paths=4000, seed=4)
    out = modulated_moments(OU, 3.0, ball(2.0), [0.1, 1.0], [("f_star", "one"), ("one", "r_star")], cfg,
                            drift=(V2, linear_phi(), 7.0))
    assert [o.delta for o in out] == [0.1, 0.1, 1.0, 1.0]
    for o in out:
        assert o.bound is not None
        assert o.passes()


def test_young_moment_under_bound():
    pair = make_young_pair("holder", p=2.0)
    cfg = SimConfig(dt=0.005, horizon=20.0, n_paths=4000, seed=5)
    e = young_moment(OU, 3.0, ball(2.0), 1.0, pair, linear_phi(), V2, cfg, b=7.0)
    expected = 2 * 9.0 + 7.0 * (1.0 + (h_phi_inverse(linear_phi(), 1.0) - 1.0))
    assert e.bound == pytest.approx(expected)
    assert e.passes()


def test_skeleton_sum_trivial_set():
    # B everywhere: T = 1 and the sum is phi(V(x0))
    cfg = SimConfig(dt=0.01, horizon=2.0, n_paths=16, seed=6)
    e = skeleton_sum(OU, 3.0, EVERYWHERE, 0.5, linear_phi(), V2, cfg)
    assert e.mean == pytest.approx(10.0)
    assert e.extra["ratio"] == pytest.approx(1.0)
    with pytest.raises(DomainError):
        skeleton_sum(OU, 3.0, EVERYWHERE, 0.001, linear_phi(), V2, cfg)


def test_skeleton_sum_bounded_by_multiple_of_v():
    cfg = SimConfig(dt=0.01, horizon=40.0, n_paths=4000, seed=7)
    e = skeleton_sum(OU, 5.0, ball(2.0), 1.0, linear_phi(), V2, cfg)
    assert e.censored_fraction < 0.01
    assert 1.0 <= e.extra["ratio"] < 10.0


def test_exp_moment_trivial_set():
    cfg = SimConfig(dt=0.01, horizon=2.0, n_paths=16, seed=8)
    e = exp_moment_hitting(OU, 0.0, EVERYWHERE, 1.0, 0.5, 0.5, cfg)
    assert e.mean == pytest.approx(math.exp(0.5))
    e0 = exp_moment_hitting(OU, 0.0, ball(1.0), 0.0, 0.5, 0.5, cfg)
    assert e0.mean == 1.0


@pytest.mark.parametrize("exponent", [0.0, 1.0, 1.5])
def test_exp_moment_exponent_domain(exponent):
    with pytest.raises(DomainError):
        exp_moment_hitting(OU, 0.0, ball(1.0), 0.0, 0.5, exponent, SimConfig(dt=0.1, horizon=1.0, n_paths=2))


def test_langevin_regimes_table():
    assert classify_langevin_regime(0.5, 0.0) == ("subgeometric", pytest.approx(1.0 / 3.0))
    assert classify_langevin_regime(0.5, 1.0).regime == "geometric"
    assert classify_langevin_regime(0.5, 1.5).regime == "geometric"
    assert classify_langevin_regime(0.5, 1.5000001).regime == "uniform"
    assert classify_langevin_regime(0.5, 0.9999999).regime == "subgeometric"
    with pytest.raises(DomainError):
        classify_langevin_regime(1.0, 0.0)


def test_hamiltonian_exponents():
    assert hamiltonian_rate_exponent(0.5, 1.0, 1.0) == pytest.approx(1.0 / 3.0)
    assert hamiltonian_rate_exponent(0.5, 0.75, 2.0) == pytest.approx(2 * 1.75 / 1.5 - 1)
    with pytest.raises(DomainError):
        hamiltonian_rate_exponent(0.5, 0.5, 1.0)
    with pytest.raises(DomainError):
        hamiltonian_rate_exponent(0.5, 1.0, 0.5)
