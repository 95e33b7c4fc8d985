import math

import numpy as np
import pytest

from subgeo.errors import DomainError
from subgeo.models import ProcessSpec, builtin_model
from subgeo.sets import ball
from subgeo.simulate import (
    SimConfig, dump_paths_csv, hitting_time, one_step, simulate, skeleton, states_at,
)

OU = builtin_model("ou_geometric")


def _euler_ou_second_moment(x0, dt, n):
    # exact law of the Euler chain X_{k+1} = (1 - dt) X_k + sqrt(2 dt) xi
    m, v = x0, 0.0
    for _ in range(n):
        m, v = (1 - dt) * m, (1 - dt) ** 2 * v + 2 * dt
    return m * m + v


def test_ou_terminal_law():
    cfg = SimConfig(dt=1e-3, horizon=10.0, n_paths=10_000, seed=1)
    X = states_at(OU, 0.0, cfg, [10.0])[0, :, 0]
    se_mean = X.std(ddof=1) / math.sqrt(X.size)
    assert abs(X.mean()) <= 3 * se_mean
    target = 1 - math.exp(-20)
    se_var = math.sqrt(2.0 / (X.size - 1)) * target
    assert abs(X.var(ddof=1) - target) <= 3 * se_var


@pytest.mark.parametrize("dt", [1e-2, 5e-3, 2.5e-3])
def test_euler_second_moment_matches_exact_chain(dt):
    n = int(round(1.0 / dt))
    cfg = SimConfig(dt=dt, horizon=1.0, n_paths=20_000, seed=2)
    X = states_at(OU, 20.0, cfg, [1.0])[0, :, 0]
    V = 1 + X ** 2
    exact = 1 + _euler_ou_second_moment(20.0, dt, n)
    assert abs(V.mean() - exact) <= 3 * V.std(ddof=1) / math.sqrt(V.size)


def test_weak_error_first_order():
    # bias of the exact Euler moment against the diffusion shrinks like dt
    cont = 1 + 400 * math.exp(-2) + (1 - math.exp(-2))
    errs = [abs(1 + _euler_ou_second_moment(20.0, dt, int(round(1 / dt))) - cont) for dt in (1e-2, 5e-3, 2.5e-3)]
    assert errs[0] / errs[1] == pytest.approx(2.0, rel=0.05)
    assert errs[1] / errs[2] == pytest.approx(2.0, rel=0.05)


def test_config_errors():
    with pytest.raises(DomainError):
        SimConfig(dt=0.0, horizon=1.0)
    with pytest.raises(DomainError):
        SimConfig(dt=0.1, horizon=-1.0)
    with pytest.raises(DomainError):
        SimConfig(dt=0.1, horizon=1.0, n_paths=0)


def test_determinism_and_prefix_stability():
    cfg = SimConfig(dt=0.01, horizon=1.0, n_paths=300, seed=5, chunk_size=128)
    a = simulate(OU, 1.0, cfg, record_every=10)
    b = simulate(OU, 1.0, cfg, record_every=10)
    assert np.array_equal(a.states, b.states)
    # a path depends only on (seed, chunk_size, index)
    c = simulate(OU, 1.0, cfg.replace(n_paths=100), record_every=10)
    assert np.array_equal(a.states[:100], c.states)
    d = simulate(OU, 1.0, cfg.replace(threads=3), record_every=10)
    assert np.array_equal(a.states, d.states)
    e = simulate(OU, 1.0, cfg.replace(seed=6), record_every=10)
    assert not np.array_equal(a.states, e.states)


def test_jump_ou_pure_decay():
    m = builtin_model("cpou", mu=0.7, lam=0.0, c=2.0, beta_F=0.5)
    cfg = SimConfig(dt=0.1, horizon=5.0, n_paths=50, seed=1)
    X = states_at(m, 3.0, cfg, [5.0])[0, :, 0]
    assert np.allclose(X, 3.0 * math.exp(-0.7 * 5.0), rtol=1e-12)


def test_jump_ou_stationary_mean():
    m = builtin_model("cpou", mu=0.5, lam=1.0, jump={"kind": "dirac", "size": 1.0})
    cfg = SimConfig(dt=0.05, horizon=50.0, n_paths=20_000, seed=3)
    X = states_at(m, 0.0, cfg, [50.0])[0, :, 0]
    target = 1.0 / 0.5 * (1 - math.exp(-25.0))
    assert abs(X.mean() - target) <= 3 * X.std(ddof=1) / math.sqrt(X.size)


def test_jump_ou_nonnegative():
    m = builtin_model("cpou")
    b = simulate(m, 0.0, SimConfig(dt=0.05, horizon=5.0, n_paths=500, seed=4), record_every=5)
    assert np.all(b.states >= 0)


def test_hitting_time_basics():
    cfg = SimConfig(dt=0.01, horizon=3.0, n_paths=200, seed=7)
    b = simulate(OU, 0.0, cfg)
    h0 = hitting_time(b, ball(1.0), 0.0)
    assert np.all(h0.tau == 0.0)
    h1 = hitting_time(b, ball(1.0), 1.0)
    assert np.all(h1.tau[~h1.censored] >= 1.0 - 1e-12)


def test_hitting_time_monotone_in_radius():
    cfg = SimConfig(dt=0.01, horizon=20.0, n_paths=2000, seed=8)
    b = simulate(OU, 5.0, cfg, record_every=1)
    means = []
    for r in (0.5, 1.0, 2.0):
        h = hitting_time(b, ball(r), 0.0)
        assert h.censored_fraction < 0.01
        means.append(h.tau.mean())
    assert means[0] > means[1] > means[2]


def test_skeleton_lengths_and_errors():
    cfg = SimConfig(dt=0.1, horizon=2.0, n_paths=2, seed=9)
    p = simulate(OU, 0.0, cfg)[0]
    assert len(skeleton(p, 2.0)) == 2
    assert len(skeleton(p, 0.1)) == len(p.times)
    with pytest.raises(DomainError):
        skeleton(p, 0.05)


def test_skeleton_autocorrelation():
    cfg = SimConfig(dt=0.01, horizon=400.0, n_paths=20, seed=10)
    b = simulate(OU, 0.0, cfg, record_every=100)
    rho = []
    for p in b:
        s = skeleton(p, 1.0)[20:, 0]
        rho.append(np.corrcoef(s[:-1], s[1:])[0, 1])
    rho = np.array(rho)
    # Euler chain autocorrelation at lag 1 is (1 - dt)^100
    assert abs(rho.mean() - math.exp(-1)) <= 3 * rho.std(ddof=1) / math.sqrt(rho.size) + 0.01


def test_blowup_is_flagged_not_fatal():
    m = ProcessSpec(1, lambda X: X ** 3, None, "explosive", {}, sigma_diag=lambda X: np.ones_like(X))
    with pytest.warns(RuntimeWarning):
        b = simulate(m, 3.0, SimConfig(dt=0.1, horizon=5.0, n_paths=4, seed=0, substep_cap=1))
    assert b.flagged.all()
    assert np.all(np.isfinite(b.states))


def test_one_step_shape():
    Y = one_step(builtin_model("hamiltonian"), [1.0, 0.0], 1e-3, 100, seed=0)
    assert Y.shape == (100, 2)


def test_dump_paths_csv(tmp_path):
    b = simulate(OU, 0.5, SimConfig(dt=0.5, horizon=1.0, n_paths=2, seed=0))
    f = tmp_path / "p.csv"
    dump_paths_csv(b, f)
    raw = f.read_bytes()
    assert b"\r\n" not in raw
    lines = raw.decode().splitlines()
    assert lines[0] == "path_id,t,x_1"
    assert len(lines) == 1 + 2 * 3
    assert float(lines[1].split(",")[2]) == 0.5
    # values round-trip exactly
    assert float(lines[2].split(",")[2]) == b.states[0, 1, 0]
