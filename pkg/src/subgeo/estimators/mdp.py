"""Moderate-deviation diagnostics: the asymptotic variance and tail-scaling columns."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .. import rng
from ..errors import BurnInWarning, DomainError, RareEventWarning
from ..models import ProcessSpec
from ..rates import DriftFunction, log_h_phi_inverse
from ..simulate import SimConfig, iter_chunk, map_chunks


@dataclass(frozen=True)
class MDPVariance:
    batch_means: float
    batch_means_se: float
    autocov: float
    autocov_se: float
    n_replicas: int
    length: float
    window: int          # lag window (in thinned samples) used by the autocovariance estimator

    @property
    def relative_gap(self) -> float:
        m = 0.5 * (self.batch_means + self.autocov)
        return abs(self.batch_means - self.autocov) / m if m > 0 else 0.0


def _gvals(g, X) -> np.ndarray:
    """g on (n, dim) states, flattened to shape (n,)."""
    v = np.asarray(g(X), dtype=float)
    return v.reshape(X.shape[0], -1)[:, 0] if v.ndim > 1 else np.broadcast_to(v, (X.shape[0],))


def _long_paths(model, g, cfg, x0, burn_in, thin, n_batches):
    """Per replica: batch integrals (trapezoid, full resolution) and the thinned series of g."""
    nb = int(round(burn_in / cfg.dt))
    n_main = cfg.n_steps - nb
    if n_main < n_batches:
        raise DomainError("horizon too short for the requested batches")
    per = n_main // n_batches

    def run(chunk):
        batch = None
        series = []
        acc = gprev = None
        j = 0
        for k, t, X, fl in iter_chunk(model, x0, cfg, chunk):
            if k < nb:
                continue
            gv = _gvals(g, X)
            kk = k - nb
            if kk == 0:
                batch = np.zeros((X.shape[0], n_batches))
                acc = np.zeros(X.shape[0])
            else:
                acc = acc + 0.5 * cfg.dt * (gv + gprev)
                if kk % per == 0 and j < n_batches:
                    batch[:, j] = acc
                    acc = np.zeros_like(acc)
                    j += 1
            if kk % thin == 0:
                series.append(gv)
            gprev = gv
        return batch, np.stack(series, axis=1)

    parts = map_chunks(run, cfg)
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts]), per * cfg.dt


def _autocov_fft(y: np.ndarray) -> np.ndarray:
    """Biased autocovariances of each row (mean removed)."""
    y = y - y.mean(axis=1, keepdims=True)
    n = y.shape[1]
    size = 1 << (2 * n - 1).bit_length()
    F = np.fft.rfft(y, size, axis=1)
    return np.fft.irfft(F * np.conj(F), size, axis=1)[:, :n] / n


def mdp_variance(model: ProcessSpec, g: Callable, cfg: SimConfig, x0=0.0, burn_in: float = 20.0,
                 n_batches: int = 50, thin_dt: float = 0.05, window_c: float = 6.0) -> MDPVariance:
    """sigma^2 = lim (1/n) E_pi (int_0^n g(X_s) ds)^2 by two estimators.

    Each of ``cfg.n_paths`` replicas runs for ``cfg.horizon`` (the first
    ``burn_in`` time units discarded).

    (a) batch means: L * Var(batch averages) over ``n_batches`` batches of
        length L;
    (b) integrated autocovariance Delta (gamma_0 + 2 sum_{k<=M} gamma_k) on the
        series thinned to spacing Delta = thin_dt, with Sokal's automatic
        window M >= window_c * tau_int.

    Both are averaged over replicas; the SEs are across-replica.
    """
    thin = max(1, int(round(thin_dt / cfg.dt)))
    delta = thin * cfg.dt
    B, Y, L = _long_paths(model, g, cfg, x0, burn_in, thin, n_batches)
    R = B.shape[0]
    bm = L * np.var(B / L, axis=1, ddof=1)
    gam = _autocov_fft(Y)
    pooled = gam.mean(axis=0)
    M = pooled.size - 1
    if pooled[0] > 0:
        rho = pooled / pooled[0]
        tau = 1.0 + 2.0 * np.cumsum(rho[1:])
        ok = np.flatnonzero(np.arange(1, pooled.size) >= window_c * tau)
        M = int(ok[0]) + 1 if ok.size else pooled.size - 1
    ac = delta * (gam[:, 0] + 2.0 * gam[:, 1:M + 1].sum(axis=1))
    # burn-in diagnostic on the pooled series
    n0 = max(1, Y.shape[1] // 10)
    head = Y[:, :n0].mean()
    rest = Y[:, n0:]
    se_rest = math.sqrt(max(float(bm.mean()), 0.0) / (rest.shape[1] * delta) / R) if rest.size else 0.0
    if rest.size and abs(head - rest.mean()) > 3 * se_rest and se_rest > 0:
        warnings.warn(f"initial segment mean {head:.4g} differs from the remainder by more than 3 SE",
                      BurnInWarning, stacklevel=2)
    sq = math.sqrt(R)
    return MDPVariance(float(bm.mean()), float(bm.std(ddof=1) / sq) if R > 1 else 0.0,
                       float(ac.mean()), float(ac.std(ddof=1) / sq) if R > 1 else 0.0,
                       R, float(Y.shape[1] * delta), M)


@dataclass(frozen=True)
class TailRow:
    eps: float
    h: float
    process_column: float      # (1/h^2) log P(|S| > a), nan when no exceedance
    exceedances: int
    n: int
    flagged: bool
    gaussian_column: float     # same quantity for the i.i.d. normal sum
    gaussian_exact: float      # (1/h^2) log P(|N(0, sigma^2/h^2)| > a)
    speed_column: float        # (1/h^2) log(eps H^{-1}(a h / sqrt(eps)))


def _log_two_sided_tail(z: float) -> float:
    from scipy.special import log_ndtr
    return math.log(2.0) + float(log_ndtr(-z))


def gaussian_tail_is(n_terms: int, sigma2: float, scale: float, a: float, n_rep: int, seed: int,
                     block: int = 0) -> float:
    """log P(|scale * sum_{i<=n} xi_i| > a) for xi ~ N(0, sigma2), by mean-shift importance sampling.

    Each xi is drawn with mean mu chosen so the shifted sum is centred at a.
    """
    mu = a / (scale * n_terms)
    s = math.sqrt(sigma2)
    block = block or max(1, (1 << 21) // n_terms)
    logw = []
    done = 0
    idx = 0
    while done < n_rep:
        m = min(block, n_rep - done)
        G = rng.derived_generator(seed, 0x6A55, idx)
        xi = mu + s * G.standard_normal((m, n_terms))
        tot = xi.sum(axis=1)
        lr = -mu * tot / sigma2 + n_terms * mu * mu / (2 * sigma2)
        hit = scale * tot > a
        logw.append(np.where(hit, lr, -np.inf))
        done += m
        idx += 1
    lw = np.concatenate(logw)
    top = lw.max()
    if not np.isfinite(top):
        return -math.inf
    return math.log(2.0) + top + math.log(np.mean(np.exp(lw - top)))


def mdp_tail_scaling(model: ProcessSpec, g: Callable, epsilons: Sequence[float], h: Callable, a: float,
                     cfg: SimConfig, sigma2: Optional[float] = None, phi: Optional[DriftFunction] = None,
                     x0=0.0, n_sanity: int = 20_000, simulate_process: bool = True) -> list[TailRow]:
    """Tail-scaling table for S^eps = sqrt(eps)/h(eps) int_0^{1/eps} g(X_s) ds.

    Per eps: the Monte Carlo column (1/h^2) log P(|S^eps| > a) from
    ``cfg.n_paths`` replicas (one simulation up to the largest 1/eps), the
    same column for a sum of i.i.d. N(0, sigma2) unit blocks (importance
    sampled; it tends to -a^2/(2 sigma2)), and the speed quantity when phi is
    given.
    """
    if not a > 0:
        raise DomainError("threshold a must be > 0")
    eps = np.asarray(epsilons, dtype=float)
    if eps.size == 0 or np.any(eps <= 0) or np.any(np.diff(eps) >= 0):
        raise DomainError("epsilons must be positive and decreasing")
    hs = np.array([float(h(e)) for e in eps])
    if np.any(np.diff(hs) <= 0) or np.any(np.diff(np.sqrt(eps) * hs) >= 0):
        raise DomainError("need h(eps) increasing and sqrt(eps) h(eps) decreasing on the grid")
    S = None
    if simulate_process:
        ks = np.rint((1.0 / eps) / cfg.dt).astype(int)
        run_cfg = cfg.replace(horizon=float(ks.max() * cfg.dt))

        def run(chunk):
            out = []
            acc = gprev = None
            for k, t, X, fl in iter_chunk(model, x0, run_cfg, chunk):
                gv = _gvals(g, X)
                acc = np.zeros_like(gv) if k == 0 else acc + 0.5 * cfg.dt * (gv + gprev)
                gprev = gv
                for _ in range(int(np.count_nonzero(ks == k))):
                    out.append(acc.copy())
            return np.stack(out)

        S = np.concatenate(map_chunks(run, run_cfg), axis=1)
    rows = []
    for i, (e, hh) in enumerate(zip(eps, hs)):
        scale = math.sqrt(e) / hh
        if S is not None:
            exc = int(np.count_nonzero(np.abs(scale * S[i]) > a))
            n = S.shape[1]
            col = math.log(exc / n) / hh ** 2 if exc else math.nan
        else:
            exc, n, col = 0, 0, math.nan
        flagged = simulate_process and exc < 20
        if flagged:
            warnings.warn(f"only {exc} exceedances at eps={e:g}", RareEventWarning, stacklevel=2)
        gcol = gex = math.nan
        if sigma2 is not None and sigma2 > 0:
            n_terms = max(1, int(round(1.0 / e)))
            gcol = gaussian_tail_is(n_terms, sigma2, scale, a, n_sanity, cfg.seed + i) / hh ** 2
            z = a / (scale * math.sqrt(n_terms * sigma2))
            gex = _log_two_sided_tail(z) / hh ** 2
        sp = math.nan
        if phi is not None:
            sp = (math.log(e) + log_h_phi_inverse(phi, a * hh / math.sqrt(e))) / hh ** 2
        rows.append(TailRow(float(e), float(hh), float(col), exc, n, bool(flagged), float(gcol), float(gex),
                            float(sp)))
    return rows
