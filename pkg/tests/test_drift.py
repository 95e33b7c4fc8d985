import math

import numpy as np
import pytest

from subgeo import lyapunov as L
from subgeo.drift import (
    estimate_resolvent, fit_drift_constants, fit_resolvent_drift, model_grid, verify_generator_drift,
    verify_resolvent_drift, verify_supermartingale, weak_increment_check,
)
from subgeo.errors import DomainError, FitError
from subgeo.models import ProcessSpec, builtin_model, default_lyapunov
from subgeo.rates import linear_phi, log_power_phi, power_phi
from subgeo.sets import EMPTY, ball

OU = builtin_model("ou_geometric")
V2 = L.quadratic()


def test_ou_certificate_passes():
    cert = verify_generator_drift(OU, V2, linear_phi(), ball(2.0), 7.0, model_grid(OU))
    assert cert.passed
    row = cert.csv_row()
    assert row["model_tag"] == "ou_geometric" and row["b"] == 7.0


def test_ou_certificate_fails_without_b():
    cert = verify_generator_drift(OU, V2, linear_phi(), EMPTY, 0.0, model_grid(OU))
    assert not cert.passed
    # A V + phi(V) = 2 - 2x^2 + 1 + x^2 peaks at x = 0
    assert cert.max_violation == pytest.approx(3.0, abs=1e-9)
    assert float(np.ravel(cert.argmax)[0]) == 0.0


def test_fit_ou_linear_constant():
    phi, C, b = fit_drift_constants(OU, V2, power_phi(1.0, 0.0), model_grid(OU))
    assert 1.5 <= phi.c <= 2.0
    assert verify_generator_drift(OU, V2, phi, C, b, model_grid(OU)).passed


def test_fit_ham_exponent():
    m = builtin_model("hamiltonian", p=0.5, c=1.0, sigma=0.5)
    V = default_lyapunov(m)
    g = model_grid(m)
    # phi proportional to v^((p - 1 + m)/(m + 1)) = v^0.25
    phi, C, b = fit_drift_constants(m, V, power_phi(1.0, 0.75), g)
    assert phi.alpha == 0.75
    assert verify_generator_drift(m, V, phi, C, b, g).passed


def test_fit_cpou_log_shape():
    m = builtin_model("cpou")
    V = default_lyapunov(m)
    g = model_grid(m, 1e6)
    # v (log v)^-((1 - delta)/delta) with delta = 0.4
    phi, C, b = fit_drift_constants(m, V, log_power_phi(1.0, 1.5), g)
    assert verify_generator_drift(m, V, phi, C, b, g).passed


def test_fit_elliptic_certificate():
    m = builtin_model("elliptic", r=1.0, p=0.5)
    V = default_lyapunov(m)
    g = model_grid(m)
    phi, C, b = fit_drift_constants(m, V, log_power_phi(1.0, 2.0), g)
    assert phi.c > 0 and b > 0
    assert verify_generator_drift(m, V, phi, C, b, g).passed


def test_fit_fails_without_drift():
    # driftless Brownian motion: A V = 1 > 0 for V = 1 + x^2
    bm = ProcessSpec(1, lambda X: np.zeros_like(X), None, "bm", {}, sigma_diag=lambda X: np.ones_like(X))
    with pytest.raises(FitError):
        fit_drift_constants(bm, V2, power_phi(1.0, 0.0), np.linspace(-50, 50, 201))


def test_supermartingale_pass_and_fail():
    ok = verify_supermartingale(OU, V2, linear_phi(), ball(2.0), 7.0, 0.0, 5.0, 0.01, 20_000, seed=1)
    assert ok.passed
    bad = verify_supermartingale(OU, V2, linear_phi(), ball(2.0), 0.0, 0.0, 5.0, 0.01, 20_000, seed=1)
    assert not bad.passed
    assert bad.mean[0] > 3 * bad.se[0]
    with pytest.raises(DomainError):
        verify_supermartingale(OU, V2, linear_phi(), ball(2.0), 7.0, 0.0, 5.0, 0.01, 0, seed=1)


def test_resolvent_exact_value():
    # R_1 V(0) = 1 + 2 / (beta + 2) for the OU process
    m, s = estimate_resolvent(OU, V2, 1.0, 0.0, 50_000, seed=3, dt=0.01)
    assert abs(m - 5.0 / 3.0) <= 3 * s + 0.01


def test_resolvent_raw_tuple_check():
    r = verify_resolvent_drift(OU, V2, linear_phi(), ball(2.0), 7.0, 1.0, [0.0], 20_000, seed=4)
    assert r.passed
    assert r.rhs[0] == 7.0
    with pytest.raises(DomainError):
        verify_resolvent_drift(OU, V2, linear_phi(), ball(2.0), 7.0, 0.0, [0.0], 100, seed=4)


def test_resolvent_fitted_certificate():
    phic, Cc, bc = fit_resolvent_drift(OU, V2, linear_phi(), 1.0, [0.0, 1.0, 2.0, 3.0, 4.0], 20_000, seed=5)
    r = verify_resolvent_drift(OU, V2, phic, Cc, bc, 1.0, [0.0, 1.0, 3.0, 6.0], 20_000, seed=6)
    assert r.passed


def test_weak_increment_check_ou():
    r = weak_increment_check(OU, V2, [0.0, 2.0], h=1e-3, N=200_000, seed=7)
    assert r.passed
    assert np.allclose(r.generator, [2.0, -6.0])
