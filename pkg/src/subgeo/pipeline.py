"""Stage runners for experiment pipelines.

Each stage reads its parameters from one ``pipeline`` entry, may update the
shared drift objects (V, phi, C, b) and appends rows with the result columns.
Rows that carry no bound get ``pass_flag`` true when the estimate is finite
and censoring is below 1%.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import drift, models, rates
from .config import ExperimentConfig
from .errors import ConfigError, DomainError
from .estimators import convergence, mdp, moments, regimes
from .lyapunov import LyapunovFunction
from .rates import DriftFunction
from .sets import EMPTY, PetiteSetSpec, ball, v_level
from .simulate import SimConfig

STAGE_SEED_STRIDE = 7919

G_FUNCTIONS: dict[str, Callable] = {
    "tanh": lambda X: np.tanh(X[:, 0]),
    "clip_x": lambda X: np.clip(X[:, 0], -10.0, 10.0),
    "sign": lambda X: np.sign(X[:, 0]),
}


@dataclass
class RunState:
    config: ExperimentConfig
    model: models.ProcessSpec
    V: LyapunovFunction
    sim: SimConfig
    phi: Optional[DriftFunction] = None
    C: Optional[PetiteSetSpec] = None
    b: Optional[float] = None
    results: list = field(default_factory=list)
    certificates: list = field(default_factory=list)
    sigma2: Optional[float] = None

    def row(self, op, x0=None, t_or_delta=None, estimate=None, se=None, n=None, censored_fraction=None,
            bound=None, pass_flag=None):
        if pass_flag is None:
            ok = estimate is not None and np.isfinite(float(estimate))
            pass_flag = bool(ok and (censored_fraction is None or censored_fraction < moments.CENSOR_LIMIT))
        self.results.append({
            "experiment_id": self.config.experiment_id, "op": op, "model_tag": self.model.tag,
            "x0": x0, "t_or_delta": t_or_delta, "estimate": estimate, "se": se, "n": n,
            "censored_fraction": censored_fraction, "bound": bound, "pass_flag": bool(pass_flag)})

    def stage_sim(self, index: int, **over) -> SimConfig:
        base = dict(seed=self.sim.seed + STAGE_SEED_STRIDE * index)
        base.update(over)
        return self.sim.replace(**base)


def _num(x):
    """Scalar for the x0 column: float for 1-d states, norm otherwise."""
    a = np.asarray(x, dtype=float).ravel()
    return float(a[0]) if a.size == 1 else float(np.linalg.norm(a))


def _set_from(spec: Optional[dict], V: LyapunovFunction) -> Optional[PetiteSetSpec]:
    if spec is None:
        return None
    kind = spec["kind"]
    p = spec.get("params", {}) or {}
    if kind == "ball":
        return ball(float(p.get("radius", 1.0)), p.get("center", 0.0))
    if kind == "v_level":
        return v_level(V, float(p["v_max"]))
    if kind == "empty":
        return EMPTY
    raise ConfigError(f"unknown set kind {kind!r}: key 'set_C.kind'")


def build_state(cfg: ExperimentConfig, threads: int = 1) -> RunState:
    mparams = dict(cfg.model.get("params") or {})
    model = models.builtin_model(cfg.model["tag"], **mparams)
    if cfg.lyapunov is None or cfg.lyapunov.get("tag") == "default":
        V = models.default_lyapunov(model)
    else:
        V = models.builtin_lyapunov(cfg.lyapunov["tag"], model, **(cfg.lyapunov.get("params") or {}))
    phi = None
    if cfg.phi is not None:
        phi = rates.make_phi(cfg.phi["family"], **(cfg.phi.get("params") or {}))
    s = cfg.sim
    sim = SimConfig(dt=float(s.get("dt", 0.01)), horizon=float(s.get("horizon", 10.0)),
                    n_paths=int(s.get("n_paths", 1000)), seed=int(s["seed"]),
                    substep_cap=int(s.get("substep_cap", 16)), chunk_size=int(s.get("chunk_size", 2048)),
                    threads=int(threads))
    return RunState(cfg, model, V, sim, phi, _set_from(cfg.set_C, V), cfg.b)


def _need(st: RunState, op: str):
    if st.phi is None or st.C is None or st.b is None:
        raise ConfigError(f"stage '{op}' needs phi, set_C and b (or a preceding certificate fit): key 'pipeline'")


# ---------------------------------------------------------------------------
# stages

def stage_certificate(st: RunState, p: dict, i: int):
    grid = drift.model_grid(st.model, float(p.get("r_max", 50.0)), int(p.get("n_points", 2000)))
    mode = p.get("mode", "verify" if st.b is not None else "fit")
    if mode == "fit":
        family = st.phi if st.phi is not None else rates.power_phi(1.0, 0.5)
        st.phi, st.C, st.b = drift.fit_drift_constants(st.model, st.V, family, grid,
                                                      float(p.get("tail_frac", 0.2)), float(p.get("safety", 0.9)))
    _need(st, "certificate")
    cert = drift.verify_generator_drift(st.model, st.V, st.phi, st.C, st.b, grid)
    st.certificates.append(cert.csv_row())
    st.row("drift_certificate", estimate=cert.max_violation, n=cert.points_checked,
           bound=1e-9 * (1.0 + st.b), pass_flag=cert.passed)


def stage_generator_check(st: RunState, p: dict, i: int):
    states = p.get("states", [0.5, 1.0, 2.0, 3.0, 4.0])
    r = drift.weak_increment_check(st.model, st.V, states, float(p.get("h", 1e-3)), int(p.get("N", 100_000)),
                                   st.sim.seed + STAGE_SEED_STRIDE * i)
    for k in range(len(r.states)):
        st.row("generator_check", x0=_num(r.states[k]), t_or_delta=r.h, estimate=r.increment[k], se=r.se[k],
               n=r.n, bound=r.generator[k], pass_flag=bool(r.passed_each[k]))


def stage_supermartingale(st: RunState, p: dict, i: int):
    _need(st, "supermartingale")
    for j, x0 in enumerate(p.get("x0", [3.0])):
        r = drift.verify_supermartingale(st.model, st.V, st.phi, st.C, st.b, x0, float(p.get("horizon", 5.0)),
                                         float(p.get("dt", st.sim.dt)), int(p.get("N", st.sim.n_paths)),
                                         st.sim.seed + STAGE_SEED_STRIDE * i + j, chunk_size=st.sim.chunk_size,
                                         threads=st.sim.threads)
        for t, m, s in zip(r.checkpoints, r.mean, r.se):
            st.row("supermartingale", x0=_num(x0), t_or_delta=float(t), estimate=float(m), se=float(s), n=r.n,
                   bound=0.0, pass_flag=bool(m <= 3 * s))


def _emit_moment(st: RunState, e: moments.MomentEstimate):
    st.row(e.op, x0=e.x0, t_or_delta=e.delta, estimate=e.mean, se=e.se, n=e.n,
           censored_fraction=e.censored_fraction, bound=e.bound,
           pass_flag=e.passes() if e.bound is not None else None)


def stage_modulated_moments(st: RunState, p: dict, i: int):
    _need(st, "modulated_moments")
    pairs = [tuple(x) for x in p.get("pairs", [["f_star", "one"], ["one", "r_star"]])]
    sim = st.stage_sim(i, **{k: p[k] for k in ("dt", "horizon", "n_paths") if k in p})
    for x0 in p.get("x0", [3.0]):
        for e in moments.modulated_moments(st.model, x0, st.C, p.get("deltas", [0.1, 1.0]), pairs, sim,
                                           (st.V, st.phi, st.b)):
            _emit_moment(st, e)


def stage_young_moment(st: RunState, p: dict, i: int):
    _need(st, "young_moment")
    sim = st.stage_sim(i, **{k: p[k] for k in ("dt", "horizon", "n_paths") if k in p})
    for spec in p.get("pairs", [{"kind": "holder", "p": 2.0}]):
        pair = rates.make_young_pair(spec["kind"], p=spec.get("p"))
        for x0 in p.get("x0", [3.0]):
            e = moments.young_moment(st.model, x0, st.C, float(p.get("delta", 1.0)), pair, st.phi, st.V, sim, st.b)
            _emit_moment(st, e)


def stage_skeleton_sum(st: RunState, p: dict, i: int):
    _need(st, "skeleton_sum")
    B = _set_from(p["set_B"], st.V) if "set_B" in p else st.C
    sim = st.stage_sim(i, **{k: p[k] for k in ("dt", "horizon", "n_paths") if k in p})
    for x0 in p.get("x0", [3.0]):
        e = moments.skeleton_sum(st.model, x0, B, float(p.get("m", 1.0)), st.phi, st.V, sim)
        st.row("skeleton_sum", x0=e.x0, t_or_delta=e.delta, estimate=e.mean, se=e.se, n=e.n,
               censored_fraction=e.censored_fraction)
        st.row("skeleton_sum_ratio", x0=e.x0, t_or_delta=e.delta, estimate=e.extra["ratio"], n=e.n,
               censored_fraction=e.censored_fraction)


def stage_exp_moment(st: RunState, p: dict, i: int):
    if st.C is None:
        raise ConfigError("stage 'exp_moment' needs set_C: key 'set_C'")
    sim = st.stage_sim(i, **{k: p[k] for k in ("dt", "horizon", "n_paths") if k in p})
    for x0 in p.get("x0", [3.0]):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            e = moments.exp_moment_hitting(st.model, x0, st.C, float(p.get("delta", 1.0)), float(p["iota1"]),
                                           float(p["exponent"]), sim, p.get("m"))
        st.row("exp_moment_hitting", x0=e.x0, t_or_delta=e.delta, estimate=e.mean, se=e.se, n=e.n,
               censored_fraction=e.censored_fraction)
        if "log_growth" in e.extra:
            st.row("exp_moment_log_growth", x0=e.x0, t_or_delta=e.delta, estimate=e.extra["log_growth"], n=e.n,
                   censored_fraction=e.censored_fraction)


def stage_resolvent(st: RunState, p: dict, i: int):
    if st.phi is None:
        raise ConfigError("stage 'resolvent' needs phi: key 'phi'")
    beta = float(p.get("beta", 1.0))
    N = int(p.get("N", 10_000))
    dt = float(p.get("dt", 0.01))
    seed = st.sim.seed + STAGE_SEED_STRIDE * i
    pilot = p.get("pilot_states", [0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0])
    phic, Cc, bc = drift.fit_resolvent_drift(st.model, st.V, st.phi, beta, pilot, N, seed + 1,
                                             float(p.get("eps", 1.0)), dt)
    r = drift.verify_resolvent_drift(st.model, st.V, phic, Cc, bc, beta, p.get("states", [0.0, 1.0, 2.0, 3.0, 5.0]),
                                     N, seed + 2, dt)
    for k in range(len(r.states)):
        st.row("resolvent_drift", x0=_num(r.states[k]), t_or_delta=beta, estimate=r.estimate[k], se=r.se[k],
               n=r.n, bound=r.rhs[k], pass_flag=bool(r.passed_each[k]))


def stage_assumptions(st: RunState, p: dict, i: int):
    rep = models.check_assumptions(st.model, float(p.get("r_max", 1e4)))
    for e in rep.entries:
        st.row(f"assumption[{e.name}]", estimate=e.worst_margin, pass_flag=e.passed)


def stage_langevin_regimes(st: RunState, p: dict, i: int):
    for beta in p.get("betas", [0.3, 0.5, 0.8]):
        ds = [float(d) for d in p.get("ds", [])]
        ds += [1.0 / beta - float(o) for o in p.get("inverse_beta_offsets", [])]
        for d in ds:
            reg = regimes.classify_langevin_regime(float(beta), d)
            est = reg.log_rate_exponent if reg.log_rate_exponent is not None else math.nan
            st.row(f"langevin_regime[{reg.regime}]", x0=float(beta), t_or_delta=d, estimate=est, pass_flag=True)


def stage_hamiltonian_exponents(st: RunState, p: dict, i: int):
    for pp, m, k in p.get("triples", [[0.5, 1.0, 1.0]]):
        e = regimes.hamiltonian_rate_exponent(float(pp), float(m), float(k))
        st.row(f"hamiltonian_rate_exponent[p={pp!r},m={m!r},k={k!r}]", estimate=e, pass_flag=True)


def stage_hamiltonian_closed_form(st: RunState, p: dict, i: int):
    if st.model.model_tag != "hamiltonian":
        raise ConfigError("stage 'hamiltonian_closed_form' needs the hamiltonian model: key 'model.tag'")
    a, bt, m = float(p.get("alpha", 1.0)), float(p.get("beta", 0.5)), float(p.get("m", 1.0))
    V = models.builtin_lyapunov("hamiltonian_vm", st.model, alpha=a, beta=bt, m=m, k=1.0).with_fd()
    xs = np.linspace(-3.0, 3.0, 5)
    ys = np.linspace(-2.0, 2.0, 4)
    X = np.array([[x, y] for x in xs for y in ys])
    fd = np.asarray(models.generator_apply(st.model, V, X), dtype=float)
    cf = models.hamiltonian_closed_form(st.model, a, bt, m, X)
    rel = np.abs(fd - cf) / np.maximum(np.abs(cf), 1e-300)
    tol = float(p.get("rel_tol", 1e-6))
    st.row("hamiltonian_closed_form", estimate=float(rel.max()), n=int(X.shape[0]), bound=tol,
           pass_flag=bool(rel.max() <= tol))


def stage_distance_curve(st: RunState, p: dict, i: int):
    sim = st.stage_sim(i, **{k: p[k] for k in ("dt", "horizon", "n_paths") if k in p})
    times = np.asarray(p.get("times", [1.0, 2.0, 3.0, 4.0, 5.0]), dtype=float)
    x0 = p.get("x0", 3.0)
    ref = convergence.sample_invariant(st.model, int(p.get("n_ref", sim.n_paths)), sim.seed + 1)
    c = convergence.distance_curve(st.model, x0, times, ref, sim, bins=p.get("bins", 40))
    for t, d, s in zip(c.times, c.d_hat, c.se):
        st.row("tv_distance", x0=_num(x0), t_or_delta=float(t), estimate=float(d), se=float(s), n=c.n)
    fam = p.get("family")
    if fam:
        f = convergence.rate_fit(c, fam, d0=p.get("d0", 1.0), min_points=int(p.get("min_points", 8)))
        key = "delta" if fam == "subexp" else "slope"
        est, se = float(f.params[key]), f.se(key)
        ok = None
        if "max_value" in p:
            ok = est + 2 * se < float(p["max_value"])
        st.row(f"rate_fit[{fam}].{key}", x0=_num(x0), estimate=est, se=se, n=f.n_used,
               bound=p.get("max_value"), pass_flag=ok)


def _g(p: dict):
    name = p.get("g", "tanh")
    if name not in G_FUNCTIONS:
        raise ConfigError(f"unknown g {name!r}: key 'g'")
    return G_FUNCTIONS[name]


def stage_mdp_variance(st: RunState, p: dict, i: int):
    sim = st.stage_sim(i, **{k: p[k] for k in ("dt", "horizon", "n_paths") if k in p})
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        r = mdp.mdp_variance(st.model, _g(p), sim, x0=p.get("x0", 0.0), burn_in=float(p.get("burn_in", 20.0)),
                             n_batches=int(p.get("n_batches", 50)))
    st.row("mdp_variance[batch_means]", estimate=r.batch_means, se=r.batch_means_se, n=r.n_replicas)
    st.row("mdp_variance[autocov]", estimate=r.autocov, se=r.autocov_se, n=r.n_replicas)
    tol = float(p.get("rel_tol", 0.1))
    st.row("mdp_variance[relative_gap]", estimate=r.relative_gap, n=r.n_replicas, bound=tol,
           pass_flag=r.relative_gap <= tol)
    st.sigma2 = 0.5 * (r.batch_means + r.autocov)


def stage_mdp_tail_scaling(st: RunState, p: dict, i: int):
    sim = st.stage_sim(i, **{k: p[k] for k in ("dt", "n_paths") if k in p})
    q = float(p.get("h_exponent", 0.25))
    a = float(p.get("a", 1.0))
    s2 = p.get("sigma2", "estimate")
    sigma2 = st.sigma2 if s2 == "estimate" else float(s2)
    if sigma2 is None:
        raise ConfigError("sigma2 'estimate' needs a preceding mdp_variance stage: key 'sigma2'")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rows = mdp.mdp_tail_scaling(st.model, _g(p), p.get("epsilons", [1e-2, 1e-3]), lambda e: e ** (-q), a, sim,
                                    sigma2=sigma2, phi=st.phi, x0=p.get("x0", 0.0),
                                    n_sanity=int(p.get("n_sanity", 20_000)),
                                    simulate_process=bool(p.get("simulate_process", True)))
    target = -a * a / (2 * sigma2)
    tol = float(p.get("gaussian_rel_tol", 0.1))
    for j, r in enumerate(rows):
        if p.get("simulate_process", True):
            st.row("mdp_tail[process]", t_or_delta=r.eps, estimate=r.process_column, n=r.n,
                   pass_flag=True)
        last = j == len(rows) - 1
        ok = abs(r.gaussian_column - target) <= tol * abs(target) if last else True
        st.row("mdp_tail[gaussian]", t_or_delta=r.eps, estimate=r.gaussian_column, n=int(p.get("n_sanity", 20_000)),
               bound=target, pass_flag=ok)
        if st.phi is not None:
            st.row("mdp_tail[speed]", t_or_delta=r.eps, estimate=r.speed_column, pass_flag=True)


STAGES: dict[str, Callable] = {
    "certificate": stage_certificate,
    "generator_check": stage_generator_check,
    "supermartingale": stage_supermartingale,
    "modulated_moments": stage_modulated_moments,
    "young_moment": stage_young_moment,
    "skeleton_sum": stage_skeleton_sum,
    "exp_moment": stage_exp_moment,
    "resolvent": stage_resolvent,
    "assumptions": stage_assumptions,
    "langevin_regimes": stage_langevin_regimes,
    "hamiltonian_exponents": stage_hamiltonian_exponents,
    "hamiltonian_closed_form": stage_hamiltonian_closed_form,
    "distance_curve": stage_distance_curve,
    "mdp_variance": stage_mdp_variance,
    "mdp_tail_scaling": stage_mdp_tail_scaling,
}


def run_pipeline(cfg: ExperimentConfig, threads: int = 1) -> RunState:
    st = build_state(cfg, threads)
    for i, stage in enumerate(cfg.pipeline):
        params = {k: v for k, v in stage.items() if k != "op"}
        try:
            STAGES[stage["op"]](st, params, i)
        except KeyError as exc:
            raise ConfigError(f"missing parameter: key 'pipeline[{i}].{exc.args[0]}'") from None
    return st
