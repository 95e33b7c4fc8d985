"""Monte Carlo estimators of modulated hitting-time moments.

G_C(x, f, r; delta) = E_x int_0^{tau_C(delta)} r(s) f(X_s) ds is integrated
per path with the trapezoidal rule on the simulation grid. Paths that have
not entered C by the horizon are censored: their partial integral is kept,
which makes the estimate a lower bound.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from ..errors import CensoringWarning, DomainError, VarianceWarning
from ..lyapunov import LyapunovFunction
from ..models import ProcessSpec
from ..rates import DriftFunction, YoungPair, h_phi_inverse, r_star_grid
from ..sets import PetiteSetSpec
from ..simulate import SimConfig, iter_chunk, map_chunks

CENSOR_LIMIT = 0.01


@dataclass(frozen=True)
class MomentEstimate:
    mean: float
    se: float
    n: int
    censored_fraction: float
    bound: Optional[float] = None
    bound_source: str = ""
    op: str = ""
    x0: Optional[float] = None
    delta: Optional[float] = None
    extra: dict = field(default_factory=dict, compare=False)

    @property
    def lower_bound_only(self) -> bool:
        return self.censored_fraction > 0

    def passes(self) -> Optional[bool]:
        """mean + 3 SE <= bound with censoring below 1%; None without a bound."""
        if self.bound is None:
            return None
        return bool(self.mean + 3 * self.se <= self.bound and self.censored_fraction < CENSOR_LIMIT)


@dataclass(frozen=True)
class DriftTriple:
    """(V, phi, b), the data needed to attach moment bounds."""

    V: LyapunovFunction
    phi: DriftFunction
    b: float


def _triple(drift) -> Optional[DriftTriple]:
    if drift is None or isinstance(drift, DriftTriple):
        return drift
    if hasattr(drift, "V") and hasattr(drift, "phi") and hasattr(drift, "b"):
        return DriftTriple(drift.V, drift.phi, float(drift.b))
    V, phi, b = drift
    return DriftTriple(V, phi, float(b))


def _x0_scalar(x0) -> float:
    a = np.asarray(x0, dtype=float).ravel()
    return float(a[0]) if a.size == 1 else float(np.linalg.norm(a))


def _summarise(vals: np.ndarray, censored: np.ndarray, **kw) -> MomentEstimate:
    n = vals.size
    se = float(vals.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    cf = float(np.mean(censored)) if n else 0.0
    if cf > CENSOR_LIMIT:
        warnings.warn(f"{100 * cf:.2f}% of paths censored at the horizon; estimate is a lower bound",
                      CensoringWarning, stacklevel=3)
    return MomentEstimate(float(vals.mean()), se, n, cf, **kw)


# ---------------------------------------------------------------------------
# online first-passage integrals

@dataclass
class Target:
    """One integrand r(t) f(x) accumulated up to tau_C(delta)."""

    delta: float
    f: Callable            # (n, dim) -> (n,)
    r_grid: Optional[np.ndarray] = None   # r at k dt, or None for r = 1


def first_passage_integrals(model: ProcessSpec, x0, C: PetiteSetSpec, targets: Sequence[Target],
                            cfg: SimConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-path integrals (n_targets, N), hitting times and censoring flags (n_targets, N)."""
    deltas = np.array([t.delta for t in targets], dtype=float)
    if np.any(deltas < 0):
        raise DomainError("delta must be >= 0")
    eps = 1e-9 * cfg.dt
    nt = len(targets)
    f_ids = {}
    for t in targets:
        f_ids.setdefault(id(t.f), t.f)

    def run(chunk):
        I = tau = active = None
        prev = None
        for k, t, X, fl in iter_chunk(model, x0, cfg, chunk):
            fv = {i: np.asarray(f(X), dtype=float) for i, f in f_ids.items()}
            g = np.stack([fv[id(tg.f)] * (1.0 if tg.r_grid is None else tg.r_grid[k]) for tg in targets])
            if k == 0:
                n = X.shape[0]
                I = np.zeros((nt, n))
                tau = np.full((nt, n), cfg.n_steps * cfg.dt)
                active = np.ones((nt, n), dtype=bool)
            else:
                I += np.where(active, 0.5 * cfg.dt * (g + prev), 0.0)
            prev = g
            inC = C.contains(X, model.dim)
            hit = active & inC[None, :] & (t >= deltas - eps)[:, None]
            if np.any(hit):
                tau[hit] = t
                active &= ~hit
                if not active.any():
                    break
        return I, tau, active

    parts = map_chunks(run, cfg)
    return (np.concatenate([p[0] for p in parts], axis=1), np.concatenate([p[1] for p in parts], axis=1),
            np.concatenate([p[2] for p in parts], axis=1))


def _time_grid(cfg: SimConfig) -> np.ndarray:
    return np.arange(cfg.n_steps + 1) * cfg.dt


def _resolve_f(f, tri: Optional[DriftTriple]) -> tuple[Callable, str]:
    if isinstance(f, str):
        if f == "one":
            return (lambda X: np.ones(X.shape[0])), "one"
        if f == "f_star":
            if tri is None:
                raise DomainError("f='f_star' needs (V, phi, b)")
            return (lambda X: tri.phi.eval(tri.V.value(X))), "f_star"
        raise DomainError(f"unknown f {f!r}")
    return f, "custom"


def _resolve_r(r, tri: Optional[DriftTriple], cfg: SimConfig) -> tuple[Optional[np.ndarray], str]:
    if isinstance(r, str):
        if r == "one":
            return None, "one"
        if r == "r_star":
            if tri is None:
                raise DomainError("r='r_star' needs (V, phi, b)")
            return r_star_grid(tri.phi, _time_grid(cfg)), "r_star"
        raise DomainError(f"unknown r {r!r}")
    return np.asarray(r(_time_grid(cfg)), dtype=float), "custom"


def return_time_bound(kind: str, tri: DriftTriple, x0, delta: float) -> float:
    """V(x)-1+b delta for (phi o V, 1); V(x)-1+(b/phi(1)) int_0^delta r_* for (1, r_*)."""
    Vx = float(np.asarray(tri.V.value(np.asarray(x0, dtype=float))).ravel()[0])
    if kind == "f_star":
        return Vx - 1.0 + tri.b * delta
    if kind == "r_star":
        return Vx - 1.0 + tri.b / float(tri.phi.eval(1.0)) * (h_phi_inverse(tri.phi, delta) - 1.0)
    raise DomainError(kind)


def modulated_moments(model: ProcessSpec, x0, C: PetiteSetSpec, deltas: Sequence[float],
                      pairs: Sequence[tuple], cfg: SimConfig, drift=None) -> list[MomentEstimate]:
    """Several (delta, f, r) combinations from one set of paths.

    Returns estimates ordered by delta, then by pair.
    """
    tri = _triple(drift)
    targets, meta = [], []
    resolved = [(_resolve_f(f, tri), _resolve_r(r, tri, cfg)) for f, r in pairs]
    for d in deltas:
        for (fc, fname), (rg, rname) in resolved:
            targets.append(Target(float(d), fc, rg))
            meta.append((float(d), fname, rname))
    I, tau, cens = first_passage_integrals(model, x0, C, targets, cfg)
    out = []
    for j, (d, fname, rname) in enumerate(meta):
        bound, src = None, ""
        if tri is not None and (fname, rname) == ("f_star", "one"):
            bound, src = return_time_bound("f_star", tri, x0, d), "V(x)-1+b*delta"
        elif tri is not None and (fname, rname) == ("one", "r_star"):
            bound, src = return_time_bound("r_star", tri, x0, d), "V(x)-1+(b/phi(1))*int_0^delta r_*"
        est = _summarise(I[j], cens[j], bound=bound, bound_source=src, op=f"modulated_moment[{fname},{rname}]",
                         x0=_x0_scalar(x0), delta=d, extra={"mean_tau": float(tau[j].mean())})
        out.append(est)
    return out


def modulated_moment(model: ProcessSpec, x0, C: PetiteSetSpec, delta: float, f, r, cfg: SimConfig,
                     drift=None) -> MomentEstimate:
    """E_x int_0^{tau_C(delta)} r(s) f(X_s) ds.

    ``f`` is ``"one"``, ``"f_star"`` (phi o V) or a callable on (n, dim) states;
    ``r`` is ``"one"``, ``"r_star"`` or a callable on times. With ``drift`` =
    (V, phi, b) or a certificate, the matching return-time bound is attached.
    """
    return modulated_moments(model, x0, C, [delta], [(f, r)], cfg, drift)[0]


def young_moment(model: ProcessSpec, x0, C: PetiteSetSpec, delta: float, pair: YoungPair,
                 phi: DriftFunction, V: LyapunovFunction, cfg: SimConfig, b: Optional[float] = None
                 ) -> MomentEstimate:
    """E_x int_0^tau psi1(r_*(s)) psi2(phi(V(X_s))) ds with the interpolation bound

    2 (V(x) - 1) + b int_0^delta (1 + r_*(s)/r_*(0)) ds, attached when b is given.
    """
    rg = np.asarray(pair.psi1(r_star_grid(phi, _time_grid(cfg))), dtype=float)
    f = lambda X: np.asarray(pair.psi2(phi.eval(V.value(X))), dtype=float)  # noqa: E731
    I, tau, cens = first_passage_integrals(model, x0, C, [Target(float(delta), f, rg)], cfg)
    bound = None
    if b is not None:
        Vx = float(np.asarray(V.value(np.asarray(x0, dtype=float))).ravel()[0])
        bound = 2 * (Vx - 1.0) + b * (delta + (h_phi_inverse(phi, delta) - 1.0) / float(phi.eval(1.0)))
    return _summarise(I[0], cens[0], bound=bound, bound_source="2(V(x)-1)+b*int_0^delta(1+r_*/r_*(0))",
                      op=f"young_moment[{pair.tag}]", x0=_x0_scalar(x0), delta=float(delta))


# ---------------------------------------------------------------------------
# skeleton sums and exponential moments

def skeleton_sum(model: ProcessSpec, x0, B: PetiteSetSpec, m: float, phi: DriftFunction,
                 V: LyapunovFunction, cfg: SimConfig) -> MomentEstimate:
    """E_x sum_{k=0}^{T-1} phi(V(X_{mk})) with T = inf{k >= 1 : X_{mk} in B}.

    ``extra["ratio"]`` is the estimate divided by V(x0).
    """
    if not m >= cfg.dt * (1 - 1e-12):
        raise DomainError("skeleton spacing m must be >= dt")
    every = int(round(m / cfg.dt))

    def run(chunk):
        S = active = None
        for k, t, X, fl in iter_chunk(model, x0, cfg, chunk):
            if k % every:
                continue
            if k == 0:
                S = np.asarray(phi.eval(V.value(X)), dtype=float)
                active = np.ones(X.shape[0], dtype=bool)
                continue
            inB = B.contains(X, model.dim)
            active &= ~inB
            if not active.any():
                break
            S = S + np.where(active, phi.eval(V.value(X)), 0.0)
        return S, active

    parts = map_chunks(run, cfg)
    S = np.concatenate([p[0] for p in parts])
    cens = np.concatenate([p[1] for p in parts])
    Vx = float(np.asarray(V.value(np.asarray(x0, dtype=float))).ravel()[0])
    est = _summarise(S, cens, op="skeleton_sum", x0=_x0_scalar(x0), delta=float(m))
    est.extra["ratio"] = est.mean / Vx
    return est


def hitting_times(model: ProcessSpec, x0, C: PetiteSetSpec, delta: float, cfg: SimConfig
                  ) -> tuple[np.ndarray, np.ndarray]:
    """tau_C(delta) per path (censored paths carry the horizon) and censoring flags."""
    one = lambda X: np.zeros(X.shape[0])  # noqa: E731
    _, tau, cens = first_passage_integrals(model, x0, C, [Target(float(delta), one)], cfg)
    return tau[0], cens[0]


def exp_moment_hitting(model: ProcessSpec, x0, C: PetiteSetSpec, delta: float, iota1: float,
                       exponent: float, cfg: SimConfig, m: Optional[float] = None) -> MomentEstimate:
    """E_x exp(iota1 tau_C(delta)^exponent).

    No absolute bound is attached. With ``m`` given, ``extra["log_growth"]``
    is log(estimate) / |x0|^m.
    """
    if not 0 < exponent < 1:
        raise DomainError("exponent must lie in (0, 1)")
    if not iota1 > 0:
        raise DomainError("iota1 must be > 0")
    tau, cens = hitting_times(model, x0, C, delta, cfg)
    vals = np.exp(iota1 * tau ** exponent)
    top = np.sort(vals)[::-1][: max(1, vals.size // 100)]
    if top.sum() > 0.5 * vals.sum():
        warnings.warn("top 1% of paths carry more than half of the estimate", VarianceWarning, stacklevel=2)
    est = _summarise(vals, cens, op="exp_moment_hitting", x0=_x0_scalar(x0), delta=float(delta))
    if m is not None:
        est.extra["log_growth"] = math.log(est.mean) / abs(_x0_scalar(x0)) ** m
    return est
