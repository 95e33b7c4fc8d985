"""Numerical certification of drift conditions.

Three forms are checked:

* the generator inequality  A V <= -phi(V) + b 1_C  on a state grid;
* the supermartingale property of
  M_s = V(X_s) - V(X_0) + int_0^s phi(V(X_u)) du - b int_0^s 1_C(X_u) du
  by Monte Carlo;
* the resolvent inequality  R_beta V <= V - phi(V) + b 1_C  by Monte Carlo
  with exponential clocks.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import rng
from .errors import DomainError, FitError, SimulationError, VarianceWarning
from .lyapunov import LyapunovFunction, as_states
from .models import ProcessSpec, generator_apply
from .rates import DriftFunction
from .sets import EMPTY, PetiteSetSpec, ball, v_level
from .simulate import SimConfig, iter_chunk, map_chunks, one_step

__all__ = ["PetiteSetSpec", "ball", "v_level", "EMPTY", "DriftCertificate", "radial_grid", "model_grid", "evaluate_violation",
           "verify_generator_drift", "fit_drift_constants", "verify_supermartingale", "SupermartingaleReport",
           "verify_resolvent_drift", "ResolventReport", "fit_resolvent_drift", "estimate_resolvent",
           "GeneratorCheck", "weak_increment_check"]


# ---------------------------------------------------------------------------
# grids

def radial_grid(dim: int = 1, r_max: float = 50.0, n_points: int = 2000, r_min: float = 1e-3,
                n_angles: int = 40, nonnegative: bool = False) -> np.ndarray:
    """Log-spaced radial shells (times angles when dim == 2), plus the origin."""
    if dim == 1:
        if nonnegative:
            r = np.logspace(math.log10(r_min), math.log10(r_max), n_points - 1)
            return np.concatenate([[0.0], r])[:, None]
        r = np.logspace(math.log10(r_min), math.log10(r_max), (n_points - 1) // 2)
        return np.concatenate([-r[::-1], [0.0], r])[:, None]
    if dim == 2:
        n_shells = max(1, (n_points - 1) // n_angles)
        r = np.logspace(math.log10(r_min), math.log10(r_max), n_shells)
        th = np.linspace(0, 2 * math.pi, n_angles, endpoint=False)
        pts = np.stack([np.outer(r, np.cos(th)).ravel(), np.outer(r, np.sin(th)).ravel()], axis=1)
        return np.concatenate([np.zeros((1, 2)), pts])
    raise DomainError("grids are built for dim 1 or 2")


def model_grid(model: ProcessSpec, r_max: float = 50.0, n_points: int = 2000, **kw) -> np.ndarray:
    return radial_grid(model.dim, r_max, n_points, nonnegative=model.domain == "nonnegative", **kw)


# ---------------------------------------------------------------------------
# generator certificate

@dataclass(frozen=True)
class DriftCertificate:
    C: PetiteSetSpec
    V: LyapunovFunction
    phi: DriftFunction
    b: float
    max_violation: float
    argmax: np.ndarray
    points_checked: int
    passed: bool
    model_tag: str = ""

    @property
    def v_max(self) -> float:
        return float(self.C.params.get("v_max", math.nan))

    def csv_row(self) -> dict:
        return {"model_tag": self.model_tag, "V_tag": self.V.full_tag, "phi_tag": self.phi.tag,
                "v_max": self.v_max, "b": float(self.b), "max_violation": float(self.max_violation),
                "points_checked": int(self.points_checked)}


def evaluate_violation(model: ProcessSpec, V: LyapunovFunction, phi: DriftFunction, C: PetiteSetSpec,
                       b: float, grid) -> tuple[np.ndarray, np.ndarray]:
    """(violation, A V) on the grid with violation = A V + phi(V) - b 1_C."""
    X, _ = as_states(grid, model.dim)
    AV = np.asarray(generator_apply(model, V, X), dtype=float)
    viol = AV + phi.eval(V.value(X)) - b * C.indicator(X, model.dim)
    return viol, AV


def verify_generator_drift(model: ProcessSpec, V: LyapunovFunction, phi: DriftFunction, C: PetiteSetSpec,
                           b: float, grid) -> DriftCertificate:
    """Pass iff max violation <= 1e-9 (1 + b) on every grid point."""
    X, _ = as_states(grid, model.dim)
    if X.shape[0] == 0:
        raise DomainError("empty grid")
    viol, _ = evaluate_violation(model, V, phi, C, b, X)
    i = int(np.argmax(viol))
    mv = float(viol[i])
    return DriftCertificate(C, V, phi, float(b), mv, X[i].copy(), int(X.shape[0]),
                            bool(mv <= 1e-9 * (1.0 + b)), model.tag)


def fit_drift_constants(model: ProcessSpec, V: LyapunovFunction, phi_family: DriftFunction, grid,
                        tail_frac: float = 0.2, safety: float = 0.9
                        ) -> tuple[DriftFunction, PetiteSetSpec, float]:
    """Admissible (phi, C, b) within a one-parameter family c * phi_unit.

    c = safety * inf over the tail grid of -A V / phi_unit(V); C is the
    smallest V-level set containing every violation; b covers the largest
    violation inside C. The tail is the part of the grid with radius at
    least ``tail_frac`` times the largest radius.
    """
    X, _ = as_states(grid, model.dim)
    unit = phi_family.with_constant(1.0)
    Vx = V.value(X)
    AV = np.asarray(generator_apply(model, V, X), dtype=float)
    radius = np.linalg.norm(X, axis=1)
    tail = radius >= tail_frac * radius.max()
    ratio = -AV[tail] / unit.eval(Vx[tail])
    inf_ratio = float(np.min(ratio))
    if not inf_ratio > 0:
        raise FitError(f"no drift in family {unit.tag}: tail infimum {inf_ratio:.4g} <= 0")
    phi = unit.with_constant(safety * inf_ratio)
    viol = AV + phi.eval(Vx)
    bad = viol > 0
    v_max = float(np.max(Vx[bad])) if np.any(bad) else float(max(1.0, np.min(Vx)))
    C = v_level(V, max(v_max, 1.0))
    b = float(max(0.0, np.max(viol)))
    return phi, C, b


# ---------------------------------------------------------------------------
# supermartingale check

@dataclass(frozen=True)
class SupermartingaleReport:
    checkpoints: np.ndarray
    mean: np.ndarray
    se: np.ndarray
    n: int
    passed: bool


def verify_supermartingale(model: ProcessSpec, V: LyapunovFunction, phi: DriftFunction, C: PetiteSetSpec,
                           b: float, x0, horizon: float, dt: float, N: int, seed: int,
                           chunk_size: int = 4096, threads: int = 1) -> SupermartingaleReport:
    """Monte Carlo mean of M_s at s = horizon k / 10, k = 1..10; pass iff mean <= 3 SE everywhere."""
    if int(N) < 1:
        raise DomainError("N must be >= 1")
    cfg = SimConfig(dt=dt, horizon=horizon, n_paths=int(N), seed=seed, chunk_size=chunk_size, threads=threads)
    marks = np.rint(np.arange(1, 11) * cfg.n_steps / 10).astype(int)

    def run(chunk):
        out = np.empty((len(marks), 0))
        acc = None
        g_prev = V0 = None
        rows = []
        j = 0
        for k, t, X, fl in iter_chunk(model, x0, cfg, chunk):
            if not np.all(np.isfinite(X)) or np.any(fl):
                raise SimulationError(f"non-finite or blown-up state at t={t:g}")
            Vx = V.value(X)
            g = phi.eval(Vx) - b * C.indicator(X, model.dim)
            if k == 0:
                V0 = Vx
                acc = np.zeros_like(Vx)
            else:
                acc = acc + 0.5 * dt * (g + g_prev)
            g_prev = g
            if j < len(marks) and k == marks[j]:
                rows.append(Vx - V0 + acc)
                j += 1
        return np.stack(rows)

    M = np.concatenate(map_chunks(run, cfg), axis=1)
    mean = M.mean(axis=1)
    se = M.std(axis=1, ddof=1) / math.sqrt(M.shape[1]) if M.shape[1] > 1 else np.zeros(len(marks))
    return SupermartingaleReport(marks * dt, mean, se, M.shape[1], bool(np.all(mean <= 3 * se)))


# ---------------------------------------------------------------------------
# resolvent check

@dataclass(frozen=True)
class ResolventReport:
    states: np.ndarray
    estimate: np.ndarray
    se: np.ndarray
    rhs: np.ndarray
    passed_each: np.ndarray
    n: int

    @property
    def passed(self) -> bool:
        return bool(np.all(self.passed_each))


def estimate_resolvent(model: ProcessSpec, V: LyapunovFunction, beta: float, x, N: int, seed: int,
                       index: int = 0, dt: float = 0.01, chunk_size: int = 8192) -> tuple[float, float]:
    """Monte Carlo R_beta V(x) = E V(X_T), T ~ Exp(beta), T rounded to the dt grid."""
    if not beta > 0:
        raise DomainError("beta must be > 0")
    T = rng.exptime_generator(seed, index).exponential(1.0 / beta, int(N))
    kT = np.rint(T / dt).astype(int)
    kmax = max(int(kT.max()), 1)
    cfg = SimConfig(dt=dt, horizon=kmax * dt, n_paths=int(N), seed=seed, chunk_size=chunk_size)
    x = np.asarray(x, dtype=float)

    def run(chunk):
        lo = chunk * cfg.chunk_size
        kc = kT[lo:lo + cfg.chunk_size]
        out = np.empty(kc.shape[0])
        last = int(kc.max())
        for k, t, X, fl in iter_chunk(model, x, cfg, chunk, n_steps=last):
            sel = kc == k
            if np.any(sel):
                if not np.all(np.isfinite(X[sel])):
                    raise SimulationError("non-finite state in resolvent sampling")
                out[sel] = V.value(X[sel])
        return out

    vals = np.concatenate(map_chunks(run, cfg))
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(vals.size))


def verify_resolvent_drift(model: ProcessSpec, V: LyapunovFunction, phi: DriftFunction, C: PetiteSetSpec,
                           b: float, beta: float, states, N: int, seed: int, dt: float = 0.01
                           ) -> ResolventReport:
    """Pass at x iff estimate - 3 SE <= V(x) - phi(V(x)) + b 1_C(x)."""
    if not beta > 0:
        raise DomainError("beta must be > 0")
    if int(N) < 2:
        raise DomainError("N must be >= 2")
    S, _ = as_states(np.asarray(states, dtype=float), model.dim)
    est, se, rhs = [], [], []
    for i, x in enumerate(S):
        m, s = estimate_resolvent(model, V, beta, x, N, seed, index=i, dt=dt)
        Vx = float(V.value(x[None])[0])
        if s > 0.1 * Vx:
            warnings.warn(f"resolvent SE {s:.3g} exceeds 10% of V(x)={Vx:.3g}", VarianceWarning, stacklevel=2)
        est.append(m)
        se.append(s)
        rhs.append(Vx - float(phi.eval(Vx)) + b * float(C.indicator(x[None], model.dim)[0]))
    est, se, rhs = map(np.asarray, (est, se, rhs))
    return ResolventReport(S, est, se, rhs, est - 3 * se <= rhs, int(N))


def fit_resolvent_drift(model: ProcessSpec, V: LyapunovFunction, phi: DriftFunction, beta: float,
                        pilot_states, N: int, seed: int, eps: float = 1.0, dt: float = 0.01
                        ) -> tuple[DriftFunction, PetiteSetSpec, float]:
    """Resolvent drift constants built from a generator certificate.

    Following the construction that turns D(C, V, phi, b) into a resolvent
    condition, the drift function is weakened to phi_check(u) = phi(u/(1+eps))
    and the set and constant are enlarged: C_check = {V <= v} with v the
    first pilot level above the largest violating one (nothing is known
    between pilot points, so the gap is absorbed into C), and b_check the
    largest upper estimate of R V - V + phi_check(V) inside it. Use a
    different seed for the pilot than for verification.
    """
    phic = phi.rescaled(1.0 + eps)
    S, _ = as_states(np.asarray(pilot_states, dtype=float), model.dim)
    Vs = V.value(S)
    excess = []
    for i, x in enumerate(S):
        m, s = estimate_resolvent(model, V, beta, x, N, seed, index=i, dt=dt)
        excess.append(m + 3 * s - Vs[i] + float(phic.eval(Vs[i])))
    excess = np.asarray(excess)
    bad = excess > 0
    if np.any(bad):
        top = float(np.max(Vs[bad]))
        above = Vs[Vs > top]
        v_max = float(np.min(above)) if above.size else top
    else:
        v_max = float(np.min(Vs))
    v_max = max(1.0, v_max)
    b = float(max(0.0, np.max(excess)))
    return phic, v_level(V, v_max), b


# ---------------------------------------------------------------------------
# generator consistency

@dataclass(frozen=True)
class GeneratorCheck:
    states: np.ndarray
    increment: np.ndarray      # (E V(X_h) - V(x)) / h
    se: np.ndarray
    generator: np.ndarray      # A V(x) from generator_apply
    h: float
    n: int

    @property
    def tolerance(self) -> np.ndarray:
        return 5.0 * np.maximum(self.h, 3.0 * self.se)

    @property
    def passed_each(self) -> np.ndarray:
        return np.abs(self.increment - self.generator) <= self.tolerance

    @property
    def passed(self) -> bool:
        return bool(np.all(self.passed_each))


def weak_increment_check(model: ProcessSpec, V: LyapunovFunction, states, h: float = 1e-3,
                         N: int = 1_000_000, seed: int = 0) -> GeneratorCheck:
    """Compare one-step Monte Carlo increments of V with the analytic generator.

    Passes at x iff |(E V(X_h) - V(x))/h - A V(x)| <= 5 max(h, 3 SE).
    """
    if not h > 0 or int(N) < 2:
        raise DomainError("need h > 0 and N >= 2")
    S, _ = as_states(np.asarray(states, dtype=float), model.dim)
    inc, se = [], []
    for i, x in enumerate(S):
        Y = one_step(model, x, h, int(N), seed + i)
        d = (V.value(Y) - float(V.value(x[None])[0])) / h
        inc.append(float(d.mean()))
        se.append(float(d.std(ddof=1) / math.sqrt(d.size)))
    AV = np.asarray(generator_apply(model, V, S), dtype=float)
    return GeneratorCheck(S, np.asarray(inc), np.asarray(se), AV, float(h), int(N))
