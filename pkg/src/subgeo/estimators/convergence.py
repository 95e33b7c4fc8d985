"""Empirical f-norm distances between ensembles and decay-shape fits."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy import optimize

from .. import rng
from ..errors import BinningError, DomainError, FitError
from ..models import ProcessSpec
from ..simulate import SimConfig, states_at


def _flat(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim == 2 and a.shape[1] == 1:
        a = a[:, 0]
    if a.ndim != 1:
        raise DomainError("fnorm_distance works on 1-d ensembles")
    return a


def _bin_edges(a, b, bins) -> np.ndarray:
    lo, hi = min(a.min(), b.min()), max(a.max(), b.max())
    if np.isscalar(bins):
        pooled = np.concatenate([a, b])
        edges = np.unique(np.quantile(pooled, np.linspace(0, 1, int(bins) + 1)))
    else:
        edges = np.asarray(bins, dtype=float)
    edges = edges.copy()
    edges[0] = min(edges[0], lo)
    edges[-1] = max(edges[-1], hi)
    if edges.size < 2 or np.any(np.diff(edges) <= 0):
        raise BinningError("bin edges must be strictly increasing")
    return edges


def _bin_min(f: Optional[Callable], edges: np.ndarray, n_sub: int = 64) -> np.ndarray:
    """min of f over each bin, from endpoints, interior samples and 0 if inside."""
    if f is None:
        return np.ones(edges.size - 1)
    out = np.empty(edges.size - 1)
    for i in range(edges.size - 1):
        pts = np.linspace(edges[i], edges[i + 1], n_sub + 1)
        if edges[i] < 0 < edges[i + 1]:
            pts = np.append(pts, 0.0)
        out[i] = float(np.min(f(pts)))
    return out


def fnorm_distance(ensemble_a, ensemble_b, f: Optional[Callable] = None, bins: Union[int, Sequence] = 40,
                   n_boot: int = 200, seed: int = 0) -> tuple[float, float]:
    """Binned lower bound of ||mu_a - mu_b||_f and a bootstrap SE.

    sum_i fbar_i |p_a(B_i) - p_b(B_i)| with fbar_i the minimum of f over bin
    B_i (f = 1 gives total variation in [0, 2]). Integer ``bins`` means
    equal-mass bins of the pooled sample. The SE resamples each ensemble
    (multinomially on bin counts) ``n_boot`` times from its own seed stream.
    """
    a, b = _flat(ensemble_a), _flat(ensemble_b)
    if a.size == 0 or b.size == 0:
        raise DomainError("empty ensemble")
    edges = _bin_edges(a, b, bins)
    ca, _ = np.histogram(a, edges)
    cb, _ = np.histogram(b, edges)
    empty = np.count_nonzero((ca == 0) & (cb == 0))
    if empty > 0.5 * ca.size:
        raise BinningError(f"{empty} of {ca.size} bins are empty in both ensembles")
    fbar = _bin_min(f, edges)
    pa, pb = ca / a.size, cb / b.size
    d = float(np.sum(fbar * np.abs(pa - pb)))
    g = rng.bootstrap_generator(seed)
    ra = g.multinomial(a.size, pa, size=n_boot) / a.size
    rb = g.multinomial(b.size, pb, size=n_boot) / b.size
    boots = np.sum(fbar[None] * np.abs(ra - rb), axis=1)
    return d, float(boots.std(ddof=1))


@dataclass(frozen=True)
class DistanceCurve:
    times: np.ndarray
    d_hat: np.ndarray
    se: np.ndarray
    f_tag: str = "1"
    estimator: str = "binned_lower_bound"
    n: int = 0


def sample_invariant(model: ProcessSpec, n: int, seed: int, n_grid: int = 400_001,
                     drop: float = 80.0) -> np.ndarray:
    """Draws from the invariant law of a 1-d model with known log density.

    Inverse CDF on a sinh-spaced grid covering the region where the log density
    is within ``drop`` of its maximum.
    """
    if model.log_density is None or model.dim != 1:
        raise DomainError("sample_invariant needs a 1-d model with log_density")
    ld = model.log_density
    top = float(ld(0.0))
    L = 1.0
    while float(ld(L)) - top > -drop or float(ld(-L)) - top > -drop:
        L *= 2.0
        if L > 1e12:
            raise DomainError("invariant density does not decay")
    u = np.linspace(-np.arcsinh(L), np.arcsinh(L), n_grid)
    x = np.sinh(u)
    w = np.exp(ld(x) - top)
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (w[1:] + w[:-1]) * np.diff(x))])
    cdf /= cdf[-1]
    return np.interp(rng.reference_generator(seed).random(int(n)), cdf, x)


def distance_curve(model: ProcessSpec, x0, times: Sequence[float], reference, cfg: SimConfig,
                   f: Optional[Callable] = None, bins: Union[int, Sequence] = 40, f_tag: str = "1"
                   ) -> DistanceCurve:
    """d(t) = ||P^t(x0, .) - reference||_f for t in ``times``.

    ``reference`` is a fixed sample (e.g. of the invariant law) or a callable
    t -> sample.
    """
    times = np.asarray(times, dtype=float)
    S = states_at(model, x0, cfg, times)
    d, se = [], []
    for i, t in enumerate(times):
        ref = reference(t) if callable(reference) else reference
        di, si = fnorm_distance(S[i, :, 0], ref, f, bins, seed=cfg.seed + i)
        d.append(di)
        se.append(si)
    return DistanceCurve(times, np.array(d), np.array(se), f_tag, "binned_lower_bound", int(cfg.n_paths))


@dataclass(frozen=True)
class RateFit:
    family: str
    params: dict
    cov: np.ndarray
    r2: float
    n_used: int

    def se(self, name: str) -> float:
        keys = list(self.params)
        i = keys.index(name)
        return float(math.sqrt(max(self.cov[i, i], 0.0)))


def _ols(x, y):
    X = np.stack([np.ones_like(x), x], axis=1)
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    dof = max(len(y) - 2, 1)
    s2 = float(resid @ resid) / dof
    cov = s2 * np.linalg.inv(X.T @ X)
    sst = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(resid @ resid) / sst if sst > 0 else 1.0
    return coef, cov, r2


def rate_fit(curve: DistanceCurve, family: str, d0: Union[float, str] = 1.0, min_points: int = 8) -> RateFit:
    """Least-squares decay fit on points with d_hat > 10 se.

    geometric:   log d = a + k t
    polynomial:  log d = a + k log t
    subexp:      log(-log(d/d0)) = log gamma + delta log t; with d0 = "fit"
                 the three-parameter model log d = log d0 - gamma t^delta is
                 fitted directly by nonlinear least squares.
    """
    t = np.asarray(curve.times, dtype=float)
    d = np.asarray(curve.d_hat, dtype=float)
    se = np.asarray(curve.se, dtype=float)
    use = (d > 10 * se) & (d > 0) & (t > 0)
    if family == "subexp" and d0 != "fit":
        use &= d < d0
    if np.count_nonzero(use) < min_points:
        raise FitError(f"only {int(np.count_nonzero(use))} usable points, need {min_points}")
    t, d = t[use], d[use]
    if family == "geometric":
        coef, cov, r2 = _ols(t, np.log(d))
        return RateFit(family, {"intercept": coef[0], "slope": coef[1]}, cov, r2, t.size)
    if family == "polynomial":
        coef, cov, r2 = _ols(np.log(t), np.log(d))
        return RateFit(family, {"intercept": coef[0], "slope": coef[1]}, cov, r2, t.size)
    if family == "subexp":
        if d0 == "fit":
            return _subexp_nonlinear(t, d)
        coef, cov, r2 = _ols(np.log(t), np.log(-np.log(d / d0)))
        return RateFit(family, {"log_gamma": coef[0], "delta": coef[1]}, cov, r2, t.size)
    raise DomainError(f"unknown family {family!r}")


def _subexp_nonlinear(t, d) -> RateFit:
    y = np.log(d)
    lt = np.log(t)

    def model(lt_, a, lg, delta):
        return a - np.exp(lg + delta * lt_)

    # start from the linear fit with d0 slightly above the largest point
    d0 = 1.05 * d.max()
    c0, _, _ = _ols(lt, np.log(-np.log(d / d0)))
    p0 = [math.log(d0), c0[0], min(max(c0[1], 0.05), 2.0)]
    try:
        popt, pcov = optimize.curve_fit(model, lt, y, p0=p0, maxfev=20000)
    except RuntimeError as exc:
        raise FitError(str(exc)) from None
    resid = y - model(lt, *popt)
    sst = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(resid @ resid) / sst if sst > 0 else 1.0
    return RateFit("subexp", {"log_d0": popt[0], "log_gamma": popt[1], "delta": popt[2]}, pcov, r2, t.size)
