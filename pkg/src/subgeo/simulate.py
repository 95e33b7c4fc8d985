"""Trajectory simulation.

Diffusions use Euler-Maruyama; position/velocity systems use a
semi-symplectic split (velocity first, then position with the new
velocity). The compound-Poisson OU process is simulated exactly on the time
grid. Randomness comes from :mod:`subgeo.rng`, so a path depends only on
``(seed, chunk_size, path_index)``.

The core primitive is :func:`iter_chunk`, a generator over the states of one
chunk of paths. Estimators consume it online; :func:`simulate_diffusion` and
:func:`simulate_jump_ou` store (possibly thinned) paths for small batches.
"""
from __future__ import annotations

import csv
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional, Sequence

import numpy as np

from . import rng
from .errors import BlowupError, DomainError, SimulationError
from .models import ProcessSpec
from .sets import PetiteSetSpec

BLOWUP = 1e12
STIFF = 0.5  # |b| dt above this triggers substepping


@dataclass(frozen=True)
class SimConfig:
    dt: float
    horizon: float
    n_paths: int = 1000
    seed: int = 0
    substep_cap: int = 16
    chunk_size: int = 2048
    threads: int = 1

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise DomainError("dt must be > 0")
        if not self.horizon > 0:
            raise DomainError("horizon must be > 0")
        if self.dt > self.horizon * (1 + 1e-12):
            raise DomainError("dt must be <= horizon")
        if int(self.n_paths) < 1:
            raise DomainError("n_paths must be >= 1")
        if int(self.substep_cap) < 1 or int(self.chunk_size) < 1:
            raise DomainError("substep_cap and chunk_size must be >= 1")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise DomainError("seed must be a 64-bit unsigned integer")

    @property
    def n_steps(self) -> int:
        k = self.horizon / self.dt
        return int(round(k)) if abs(k - round(k)) < 1e-9 * max(k, 1.0) else int(math.ceil(k))

    @property
    def n_chunks(self) -> int:
        return -(-int(self.n_paths) // int(self.chunk_size))

    def replace(self, **kw) -> "SimConfig":
        d = dict(dt=self.dt, horizon=self.horizon, n_paths=self.n_paths, seed=self.seed,
                 substep_cap=self.substep_cap, chunk_size=self.chunk_size, threads=self.threads)
        d.update(kw)
        return SimConfig(**d)


def _initial_rows(model: ProcessSpec, x0, offset: int, n: int) -> np.ndarray:
    x0 = np.asarray(x0, dtype=float)
    if x0.ndim <= 1:
        return np.broadcast_to(x0.reshape(1, model.dim), (n, model.dim)).copy()
    return np.array(x0[offset:offset + n], dtype=float).reshape(n, model.dim)


# ---------------------------------------------------------------------------
# one step of each scheme; ``key`` is the chunk key and rows beyond n are
# drawn but discarded

def _euler(model: ProcessSpec, X, dt, dW):
    b = model.drift_b(X)
    if model.sigma_diag is not None:
        noise = model.sigma_diag(X) * dW
    else:
        noise = np.einsum("nij,nj->ni", model.diffusion_sigma(X), dW)
    if model.kinetic:
        h = model.dim // 2
        Y = X[:, h:] + b[:, h:] * dt + noise[:, h:]
        return np.concatenate([X[:, :h] + Y * dt, Y], axis=1), b
    return X + b * dt + noise, b


def _diffusion_step(model, X, dt, key, k, cfg, C):
    n, d = X.shape
    z = rng.step_generator(key, k, rng.STREAM_STEP).standard_normal((C, d))[:n]
    sq = math.sqrt(dt)
    Xn, b = _euler(model, X, dt, sq * z)
    speed = np.sqrt(np.sum(b * b, axis=1)) * dt
    stiff = speed > STIFF
    if np.any(stiff):
        cap = int(cfg.substep_cap)
        zs = rng.step_generator(key, k, rng.STREAM_SUBSTEP).standard_normal((C, cap, d))[:n]
        rows = np.flatnonzero(stiff)
        nsub = np.minimum(cap, np.ceil(speed[rows] / STIFF)).astype(int)
        Xs = X[rows].copy()
        zr = z[rows]
        for j in range(int(nsub.max())):
            active = nsub > j
            m = nsub[active]
            h = dt / m
            # Brownian bridge split of the step increment into m pieces
            zz = zs[rows[active]]
            idx = np.arange(cap)[None, :] < m[:, None]
            mean_z = np.sum(np.where(idx[..., None], zz, 0.0), axis=1) / m[:, None]
            piece = zr[active] * (sq / m)[:, None] + np.sqrt(h)[:, None] * (zz[:, j, :] - mean_z)
            Xa, _ = _euler(model, Xs[active], h[:, None], piece)
            Xs[active] = Xa
        Xn[rows] = Xs
    return Xn


def _jump_step(model, X, dt, key, k, C):
    n = X.shape[0]
    jp = model.jump
    decay = math.exp(-jp.decay_mu * dt)
    Xn = X * decay
    if jp.rate_lambda <= 0:
        return Xn
    counts = rng.step_generator(key, k, rng.STREAM_STEP).poisson(jp.rate_lambda * dt, C)
    K = int(counts.max())
    if K == 0:
        return Xn
    s = rng.step_generator(key, k, rng.STREAM_JUMP_TIMES).random((C, K))[:n]
    u = rng.step_generator(key, k, rng.STREAM_JUMP_SIZES).random((C, K))[:n]
    mask = np.arange(K)[None, :] < counts[:n, None]
    sizes = np.where(mask, jp.law.sample(np.where(mask, u, 0.5)), 0.0)
    add = np.sum(sizes * np.exp(-jp.decay_mu * dt * (1.0 - s)), axis=1)
    return Xn + add[:, None]


def iter_chunk(model: ProcessSpec, x0, cfg: SimConfig, chunk: int, n_rows: Optional[int] = None,
               dt: Optional[float] = None, n_steps: Optional[int] = None
               ) -> Iterator[tuple[int, float, np.ndarray, np.ndarray]]:
    """Yield ``(k, t_k, X_k, flagged)`` for k = 0..n_steps for one chunk.

    ``flagged`` marks paths that crossed the blowup threshold; such paths are
    frozen at their last admissible state.
    """
    C = int(cfg.chunk_size)
    offset = chunk * C
    n = min(C, int(cfg.n_paths) - offset) if n_rows is None else n_rows
    dt = cfg.dt if dt is None else dt
    n_steps = cfg.n_steps if n_steps is None else n_steps
    key = rng.chunk_key(cfg.seed, chunk)
    X = _initial_rows(model, x0, offset, n)
    flagged = np.zeros(n, dtype=bool)
    yield 0, 0.0, X, flagged
    for k in range(1, n_steps + 1):
        if model.jump is not None:
            Xn = _jump_step(model, X, dt, key, k, C)
            bad = ~np.all(np.isfinite(Xn), axis=1)
        else:
            Xn = _diffusion_step(model, X, dt, key, k, cfg, C)
            with np.errstate(invalid="ignore"):
                bad = ~np.all(np.isfinite(Xn), axis=1) | (np.max(np.abs(Xn), axis=1) > BLOWUP)
        if np.any(bad):
            Xn[bad] = X[bad]
            flagged = flagged | bad
        X = Xn
        yield k, k * dt, X, flagged


def map_chunks(fn: Callable[[int], object], cfg: SimConfig, threads: Optional[int] = None) -> list:
    """Apply ``fn(chunk)`` to every chunk; results come back in chunk order."""
    threads = cfg.threads if threads is None else threads
    chunks = range(cfg.n_chunks)
    if threads is None or threads <= 1 or cfg.n_chunks == 1:
        return [fn(c) for c in chunks]
    with ThreadPoolExecutor(max_workers=int(threads)) as ex:
        return list(ex.map(fn, chunks))


# ---------------------------------------------------------------------------
# stored paths

@dataclass(frozen=True)
class PathRecord:
    times: np.ndarray
    states: np.ndarray       # (T, dim)
    path_id: int
    dt: float
    flagged: bool = False
    hit_records: tuple = ()

    def skeleton(self, m: float) -> np.ndarray:
        return skeleton(self, m)


@dataclass(frozen=True)
class PathBatch:
    """Paths stored on a common time grid; ``states`` has shape (n, T, dim)."""

    times: np.ndarray
    states: np.ndarray
    path_ids: np.ndarray
    flagged: np.ndarray
    dt: float

    def __len__(self):
        return self.states.shape[0]

    def __getitem__(self, i) -> PathRecord:
        return PathRecord(self.times, self.states[i], int(self.path_ids[i]), self.dt, bool(self.flagged[i]))

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def at(self, t: float) -> np.ndarray:
        """States at the stored time nearest to t, shape (n, dim)."""
        return self.states[:, int(np.argmin(np.abs(self.times - t))), :]


def _record_steps(cfg: SimConfig, record_every: int, record_times) -> np.ndarray:
    if record_times is not None:
        ks = np.unique(np.rint(np.asarray(record_times, dtype=float) / cfg.dt).astype(int))
        if ks.min() < 0 or ks.max() > cfg.n_steps:
            raise DomainError("record_times outside [0, horizon]")
        return ks
    return np.arange(0, cfg.n_steps + 1, int(record_every))


def _simulate(model, x0, cfg, record_every, record_times) -> PathBatch:
    ks = _record_steps(cfg, record_every, record_times)
    want = np.zeros(cfg.n_steps + 1, dtype=bool)
    want[ks] = True

    def run(chunk):
        out = []
        flagged = None
        for k, _, X, fl in iter_chunk(model, x0, cfg, chunk):
            if want[k]:
                out.append(X.copy())
            flagged = fl
            if k >= ks[-1]:
                break
        return np.stack(out, axis=1), flagged.copy()

    parts = map_chunks(run, cfg)
    states = np.concatenate([p[0] for p in parts], axis=0)
    flagged = np.concatenate([p[1] for p in parts])
    if np.any(flagged):
        warnings.warn(f"{int(flagged.sum())} paths exceeded |x| > {BLOWUP:g} and were frozen",
                      RuntimeWarning, stacklevel=3)
    return PathBatch(ks * cfg.dt, states, np.arange(states.shape[0]), flagged, cfg.dt)


def simulate_diffusion(model: ProcessSpec, x0, cfg: SimConfig, record_every: int = 1,
                       record_times: Optional[Sequence[float]] = None) -> PathBatch:
    """Euler-Maruyama paths stored every ``record_every`` steps (or at ``record_times``)."""
    if model.jump is not None:
        raise DomainError("simulate_diffusion needs a model without jumps")
    return _simulate(model, x0, cfg, record_every, record_times)


def simulate_jump_ou(model: ProcessSpec, x0, cfg: SimConfig, record_every: int = 1,
                     record_times: Optional[Sequence[float]] = None) -> PathBatch:
    """Exact grid simulation of dX = -mu X dt + dZ with compound Poisson Z."""
    if model.jump is None:
        raise DomainError("simulate_jump_ou needs a jump model")
    return _simulate(model, x0, cfg, record_every, record_times)


def simulate(model: ProcessSpec, x0, cfg: SimConfig, **kw) -> PathBatch:
    return (simulate_jump_ou if model.jump is not None else simulate_diffusion)(model, x0, cfg, **kw)


def states_at(model: ProcessSpec, x0, cfg: SimConfig, times: Sequence[float]) -> np.ndarray:
    """States of all paths at the given times, shape (len(times), n, dim), without storing paths."""
    ks = np.rint(np.asarray(times, dtype=float) / cfg.dt).astype(int)
    if ks.min() < 0 or ks.max() > cfg.n_steps:
        raise DomainError("times outside [0, horizon]")
    order = {int(k): i for i, k in enumerate(ks)}
    kmax = int(ks.max())

    def run(chunk):
        out = [None] * len(ks)
        for k, _, X, _ in iter_chunk(model, x0, cfg, chunk, n_steps=kmax):
            if k in order:
                for i, kk in enumerate(ks):
                    if kk == k:
                        out[i] = X.copy()
        return np.stack(out, axis=0)

    return np.concatenate(map_chunks(run, cfg), axis=1)


def one_step(model: ProcessSpec, x, h: float, n: int, seed: int, chunk_size: int = 65536) -> np.ndarray:
    """n independent one-step transitions of size h from state x, shape (n, dim)."""
    cfg = SimConfig(dt=h, horizon=h, n_paths=n, seed=seed, chunk_size=chunk_size)
    return states_at(model, np.asarray(x, dtype=float), cfg, [h])[0]


# ---------------------------------------------------------------------------
# hitting times and skeletons

@dataclass(frozen=True)
class HittingTimes:
    tau: np.ndarray        # censored paths carry the horizon
    censored: np.ndarray

    @property
    def censored_fraction(self) -> float:
        return float(np.mean(self.censored)) if self.censored.size else 0.0


def _grid_eps(dt):
    return 1e-9 * dt


def hitting_time(paths, C: PetiteSetSpec, delta: float = 0.0) -> HittingTimes:
    """First stored time >= delta with the state in C; censored at the last stored time."""
    if not delta >= 0:
        raise DomainError("delta must be >= 0")
    if isinstance(paths, PathRecord):
        paths = PathBatch(paths.times, paths.states[None], np.array([paths.path_id]),
                          np.array([paths.flagged]), paths.dt)
    elif not isinstance(paths, PathBatch):
        recs = list(paths)
        paths = PathBatch(recs[0].times, np.stack([r.states for r in recs]),
                          np.array([r.path_id for r in recs]), np.array([r.flagged for r in recs]), recs[0].dt)
    n, T, d = paths.states.shape
    inC = C.contains(paths.states.reshape(n * T, d)).reshape(n, T)
    eligible = inC & (paths.times[None, :] >= delta - _grid_eps(paths.dt))
    hit = eligible.any(axis=1)
    first = np.argmax(eligible, axis=1)
    tau = np.where(hit, paths.times[first], paths.times[-1])
    return HittingTimes(tau, ~hit)


def skeleton(path: PathRecord, m: float) -> np.ndarray:
    """States at times k m (nearest stored time) for k = 0, 1, ..."""
    if not m >= path.dt * (1 - 1e-12):
        raise DomainError("skeleton spacing m must be >= dt")
    tmax = path.times[-1]
    n = int(math.floor(tmax / m + 1e-9))
    targets = np.arange(n + 1) * m
    idx = np.searchsorted(path.times, targets)
    idx = np.clip(idx, 0, len(path.times) - 1)
    left = np.clip(idx - 1, 0, len(path.times) - 1)
    pick = np.where(np.abs(path.times[left] - targets) <= np.abs(path.times[idx] - targets), left, idx)
    return path.states[pick]


def dump_paths_csv(batch: PathBatch, filename) -> None:
    """Write path_id, t, x_1..x_dim with shortest round-trip float formatting."""
    d = batch.states.shape[2]
    with open(filename, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["path_id", "t"] + [f"x_{i + 1}" for i in range(d)])
        for i in range(len(batch)):
            for j, t in enumerate(batch.times):
                w.writerow([int(batch.path_ids[i]), repr(float(t))] + [repr(float(v)) for v in batch.states[i, j]])


__all__ = ["SimConfig", "PathRecord", "PathBatch", "HittingTimes", "iter_chunk", "map_chunks",
           "simulate_diffusion", "simulate_jump_ou", "simulate", "states_at", "one_step", "hitting_time",
           "skeleton", "dump_paths_csv", "BlowupError", "SimulationError"]
