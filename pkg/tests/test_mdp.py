import math

import numpy as np
import pytest
from numpy.polynomial import hermite_e as He
from scipy import integrate, stats

from subgeo.errors import DomainError, RareEventWarning
from subgeo.estimators import gaussian_tail_is, mdp_tail_scaling, mdp_variance
from subgeo.models import builtin_model
from subgeo.rates import linear_phi, power_phi
from subgeo.simulate import SimConfig

OU = builtin_model("ou_geometric")


def sigma2_hermite(n_max=60, nodes=200):
    # tanh = sum a_n He_n, He_n are eigenfunctions with eigenvalue -n
    x, w = He.hermegauss(nodes)
    w = w / math.sqrt(2 * math.pi)
    total = 0.0
    for n in range(1, n_max + 1):
        c = np.zeros(n + 1)
        c[n] = 1.0
        fact = math.factorial(n)
        an = float(np.sum(w * np.tanh(x) * He.hermeval(x, c))) / fact
        total += an * an * fact / n
    return 2 * total


def sigma2_poisson():
    # 4 int G^2 / (a p) with G(x) = int_{-inf}^x g p and a = 2
    G = lambda x: integrate.quad(lambda y: math.tanh(y) * stats.norm.pdf(y), -np.inf, x)[0]  # noqa: E731
    f = lambda x: 2 * G(x) ** 2 / stats.norm.pdf(x)  # noqa: E731
    return 2 * integrate.quad(f, 0, 9, limit=200)[0]


def test_sigma2_oracles_agree():
    s_h = sigma2_hermite()
    s_p = sigma2_poisson()
    assert s_h == pytest.approx(s_p, rel=1e-6)
    assert s_h == pytest.approx(0.75039, abs=1e-5)


def test_variance_estimators_agree_with_oracle():
    cfg = SimConfig(dt=0.01, horizon=520.0, n_paths=16, seed=3, chunk_size=16)
    v = mdp_variance(OU, np.tanh, cfg, n_batches=25)
    s = sigma2_hermite()
    assert v.relative_gap < 0.2
    assert abs(v.batch_means - s) <= 3 * v.batch_means_se + 0.05 * s
    assert abs(v.autocov - s) <= 3 * v.autocov_se + 0.05 * s
    assert v.n_replicas == 16 and v.length == pytest.approx(500.0, abs=0.1)


def test_variance_needs_long_horizon():
    with pytest.raises(DomainError):
        mdp_variance(OU, np.tanh, SimConfig(dt=0.1, horizon=21.0, n_paths=2), n_batches=50)


def test_gaussian_importance_sampling_matches_exact():
    n, s2, scale, a = 100, 0.75, 0.05, 1.0
    est = gaussian_tail_is(n, s2, scale, a, 20_000, seed=4)
    z = a / (scale * math.sqrt(n * s2))
    exact = math.log(2 * stats.norm.sf(z))
    assert est == pytest.approx(exact, rel=0.01)


def test_tail_table_columns():
    eps = [1e-2, 1e-3]
    h = lambda e: e ** -0.25  # noqa: E731
    cfg = SimConfig(dt=0.05, horizon=1.0, n_paths=8, seed=5)
    rows = mdp_tail_scaling(OU, np.tanh, eps, h, 1.0, cfg, sigma2=0.75, phi=linear_phi(),
                            simulate_process=False)
    for r in rows:
        assert math.isnan(r.process_column) and not r.flagged
        assert r.gaussian_column == pytest.approx(r.gaussian_exact, rel=0.02)
        # linear phi: log H^-1(t) = t
        assert r.speed_column == pytest.approx((math.log(r.eps) + r.h / math.sqrt(r.eps)) / r.h ** 2)
    # the Gaussian column approaches -a^2 / (2 sigma^2) as eps decreases
    target = -1.0 / 1.5
    assert abs(rows[1].gaussian_exact - target) < abs(rows[0].gaussian_exact - target)


def test_speed_column_sqrt_phi_tends_to_zero():
    h = lambda e: e ** -0.25  # noqa: E731
    cfg = SimConfig(dt=0.05, horizon=1.0, n_paths=2, seed=6)
    rows = mdp_tail_scaling(OU, np.tanh, [1e-2, 1e-4, 1e-6], h, 1.0, cfg, phi=power_phi(1.0, 0.5),
                            simulate_process=False)
    sp = [abs(r.speed_column) for r in rows]
    assert sp[0] > sp[1] > sp[2]


def test_rare_event_flag():
    cfg = SimConfig(dt=0.05, horizon=1.0, n_paths=8, seed=7)
    with pytest.warns(RareEventWarning):
        rows = mdp_tail_scaling(OU, np.tanh, [0.1], lambda e: e ** -0.25, 5.0, cfg)
    assert rows[0].flagged and rows[0].exceedances < 20


def test_domain_errors():
    cfg = SimConfig(dt=0.05, horizon=1.0, n_paths=2)
    h = lambda e: e ** -0.25  # noqa: E731
    with pytest.raises(DomainError):
        mdp_tail_scaling(OU, np.tanh, [1e-2], h, 0.0, cfg)
    with pytest.raises(DomainError):
        mdp_tail_scaling(OU, np.tanh, [1e-3, 1e-2], h, 1.0, cfg)
    with pytest.raises(DomainError):
        # sqrt(eps) h(eps) must decrease
        mdp_tail_scaling(OU, np.tanh, [1e-2, 1e-3], lambda e: e ** -1.0, 1.0, cfg)
