"""Rate calculus around a concave drift function phi.

For a concave increasing ``phi: [1, inf) -> (0, inf)`` define

    H(u) = int_1^u ds / phi(s),     r_*(t) = phi(H^{-1}(t)),     f_* = phi o V.

The power family ``phi(v) = c v^(1-alpha)`` has closed forms and is used as an
oracle for the quadrature route. Everything else goes through adaptive
quadrature (QUADPACK via scipy) and a bracketed Newton inversion.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate

from .errors import DomainError, NonConvergence

QUAD_TOL = 1e-10
INV_TOL = 1e-10
MAX_DOUBLINGS = 1000


@dataclass(frozen=True)
class DriftFunction:
    """Concave, increasing, positive phi on [1, inf).

    ``family`` is one of ``power``, ``linear``, ``log_power`` or ``custom``.
    ``power`` with ``alpha == 0`` is reported as ``linear``.
    """

    family: str
    c: float = 1.0
    alpha: float = 0.0
    func: Optional[Callable] = field(default=None, compare=False)
    dfunc: Optional[Callable] = field(default=None, compare=False)
    label: str = ""

    def __post_init__(self):
        if self.family not in ("power", "linear", "log_power", "custom"):
            raise DomainError(f"unknown phi family {self.family!r}")
        if self.family != "custom" and not self.c > 0:
            raise DomainError("phi constant c must be > 0")
        if self.family == "power" and not 0.0 <= self.alpha < 1.0:
            raise DomainError("power family needs 0 <= alpha < 1")
        if self.family == "log_power" and not self.alpha >= 0.0:
            raise DomainError("log_power family needs alpha >= 0")
        if self.family == "custom" and self.func is None:
            raise DomainError("custom phi needs func")

    # -- evaluation -------------------------------------------------------
    def eval(self, v):
        v = np.asarray(v, dtype=float)
        if self.family == "linear" or (self.family == "power" and self.alpha == 0.0):
            return self.c * v
        if self.family == "power":
            return self.c * v ** (1.0 - self.alpha)
        if self.family == "log_power":
            w = v + _log_shift(self.alpha)
            return self.c * w * np.log(w) ** (-self.alpha)
        return np.asarray(self.func(v), dtype=float)

    __call__ = eval

    def deriv(self, v):
        v = np.asarray(v, dtype=float)
        if self.family == "linear" or (self.family == "power" and self.alpha == 0.0):
            return np.full_like(v, self.c)
        if self.family == "power":
            return self.c * (1.0 - self.alpha) * v ** (-self.alpha)
        if self.family == "log_power":
            lw = np.log(v + _log_shift(self.alpha))
            return self.c * lw ** (-self.alpha) * (1.0 - self.alpha / lw)
        if self.dfunc is not None:
            return np.asarray(self.dfunc(v), dtype=float)
        h = 1e-6 * (1.0 + np.abs(v))
        return (self.func(v + h) - self.func(v - h)) / (2 * h)

    # -- helpers ----------------------------------------------------------
    @property
    def closed_form(self) -> bool:
        return self.family in ("power", "linear")

    @property
    def tag(self) -> str:
        if self.family in ("linear",) or (self.family == "power" and self.alpha == 0.0):
            return f"linear(c={self.c!r})"
        if self.family == "power":
            return f"power(c={self.c!r},alpha={self.alpha!r})"
        if self.family == "log_power":
            return f"log_power(c={self.c!r},alpha={self.alpha!r})"
        return f"custom({self.label})" if self.label else "custom"

    def with_constant(self, c: float) -> "DriftFunction":
        """Same family, different multiplicative constant."""
        if self.family == "custom":
            f, df, k = self.func, self.deriv, c
            return custom_phi(lambda v: k * f(v), lambda v: k * df(v), label=f"{c!r}*{self.label}")
        return DriftFunction(self.family, c, self.alpha)

    def rescaled(self, s: float) -> "DriftFunction":
        """The function u -> phi(u / s)."""
        if s <= 0:
            raise DomainError("rescaling factor must be > 0")
        if self.family in ("power", "linear"):
            return DriftFunction(self.family, self.c * s ** (self.alpha - 1.0), self.alpha)
        base = self
        return custom_phi(lambda u: base.eval(np.asarray(u) / s),
                          lambda u: base.deriv(np.asarray(u) / s) / s,
                          label=f"{self.tag}(u/{s!r})")


def _log_shift(alpha: float) -> float:
    # w = v + e^(alpha+1) - 1 keeps log w >= alpha + 1, which is what makes
    # w (log w)^(-alpha) concave and increasing on [1, inf)
    return math.expm1(alpha + 1.0)


def power_phi(c: float = 1.0, alpha: float = 0.0) -> DriftFunction:
    return DriftFunction("power" if alpha > 0 else "linear", float(c), float(alpha))


def linear_phi(c: float = 1.0) -> DriftFunction:
    return DriftFunction("linear", float(c), 0.0)


def log_power_phi(c: float = 1.0, alpha: float = 1.0) -> DriftFunction:
    """phi(v) = c w / (log w)^alpha with w = v + e^(alpha+1) - 1."""
    return DriftFunction("log_power", float(c), float(alpha))


def custom_phi(func: Callable, dfunc: Optional[Callable] = None, label: str = "") -> DriftFunction:
    return DriftFunction("custom", 1.0, 0.0, func=func, dfunc=dfunc, label=label)


def make_phi(family: str, **params) -> DriftFunction:
    """Build a DriftFunction from a family name and keyword parameters."""
    if family == "power":
        return power_phi(params.get("c", 1.0), params.get("alpha", 0.0))
    if family == "linear":
        return linear_phi(params.get("c", 1.0))
    if family == "log_power":
        return log_power_phi(params.get("c", 1.0), params.get("alpha", 1.0))
    raise DomainError(f"unknown phi family {family!r}")


# ---------------------------------------------------------------------------
# H_phi and its inverse

def _quad_segment(phi: DriftFunction, a: float, b: float) -> float:
    """int_a^b ds/phi(s), integrated in log s for wide ranges."""
    if b == a:
        return 0.0
    la, lb = math.log(a), math.log(b)

    def integrand(y):
        s = math.exp(y)
        return s / float(phi.eval(s))

    val, _ = integrate.quad(integrand, la, lb, epsabs=QUAD_TOL, epsrel=QUAD_TOL, limit=200)
    return val


def h_phi(phi: DriftFunction, u: float, method: str = "auto") -> float:
    """H_phi(u) = int_1^u ds / phi(s).

    ``method="quad"`` forces quadrature even when a closed form exists.
    """
    u = float(u)
    if not u >= 1.0:
        raise DomainError(f"h_phi needs u >= 1, got {u!r}")
    if method == "auto" and phi.closed_form:
        if phi.family == "linear" or phi.alpha == 0.0:
            return math.log(u) / phi.c
        return (u ** phi.alpha - 1.0) / (phi.c * phi.alpha)
    return _quad_segment(phi, 1.0, u)


def h_phi_inverse(phi: DriftFunction, t: float, method: str = "auto") -> float:
    """The u >= 1 with H_phi(u) = t.

    Closed form for the power family; otherwise bracket doubling from [1, 2]
    followed by safeguarded Newton steps (H' = 1/phi).
    """
    t = float(t)
    if not t >= 0.0:
        raise DomainError(f"h_phi_inverse needs t >= 0, got {t!r}")
    if t == 0.0:
        return 1.0
    if method == "auto" and phi.closed_form:
        if phi.family == "linear" or phi.alpha == 0.0:
            return math.exp(phi.c * t)
        return (1.0 + phi.c * phi.alpha * t) ** (1.0 / phi.alpha)
    return _invert_numeric(phi, t)


def _invert_numeric(phi: DriftFunction, t: float, lo: float = 1.0, hlo: float = 0.0) -> float:
    hi = 2.0 * lo
    hhi = hlo + _quad_segment(phi, lo, hi)
    n = 0
    while hhi < t:
        lo, hlo = hi, hhi
        hi = 2.0 * lo
        if not math.isfinite(hi):
            raise NonConvergence("bracket overflowed while inverting H_phi")
        hhi = hlo + _quad_segment(phi, lo, hi)
        n += 1
        if n > MAX_DOUBLINGS:
            raise NonConvergence("bracket expansion exceeded 1000 doublings")
    tol = INV_TOL * (1.0 + t)
    if abs(hhi - t) <= tol:
        return hi
    # secant start inside the bracket
    u = lo + (hi - lo) * (t - hlo) / (hhi - hlo)
    base, hbase = lo, hlo
    for _ in range(200):
        hu = hbase + _quad_segment(phi, base, u) if u >= base else hbase - _quad_segment(phi, u, base)
        g = hu - t
        if abs(g) <= tol:
            return u
        if g < 0:
            lo, hlo = u, hu
        else:
            hi, hhi = u, hu
        base, hbase = u, hu
        step = u - g * float(phi.eval(u))
        if not lo < step < hi:
            step = 0.5 * (lo + hi)
        if hi - lo <= 4 * np.finfo(float).eps * hi:
            return u
        u = step
    raise NonConvergence("Newton refinement for H_phi inverse did not converge")


def log_h_phi_inverse(phi: DriftFunction, t: float) -> float:
    """log H_phi^{-1}(t), without overflow for the closed-form families."""
    t = float(t)
    if not t >= 0.0:
        raise DomainError("t must be >= 0")
    if phi.closed_form:
        if phi.family == "linear" or phi.alpha == 0.0:
            return phi.c * t
        return math.log1p(phi.c * phi.alpha * t) / phi.alpha
    return math.log(h_phi_inverse(phi, t))


def r_star(phi: DriftFunction, t: float) -> float:
    """r_*(t) = phi(H_phi^{-1}(t))."""
    return float(phi.eval(h_phi_inverse(phi, t)))


def r_star_grid(phi: DriftFunction, ts) -> np.ndarray:
    """r_* on an array of times.

    Non-closed-form families integrate u' = phi(u), u(0) = 1, in the variable
    z = log u, which is an independent route to H^{-1}.
    """
    ts = np.asarray(ts, dtype=float)
    if ts.size == 0:
        return ts.copy()
    if np.any(ts < 0):
        raise DomainError("times must be >= 0")
    if phi.closed_form:
        if phi.family == "linear" or phi.alpha == 0.0:
            return phi.c * np.exp(phi.c * ts)
        a = phi.alpha
        return phi.c * (1.0 + phi.c * a * ts) ** ((1.0 - a) / a)
    order = np.argsort(ts)
    tmax = float(ts[order[-1]])
    if tmax == 0.0:
        return np.full(ts.shape, float(phi.eval(1.0)))

    def rhs(_, z):
        u = math.exp(z[0])
        return [float(phi.eval(u)) / u]

    sol = integrate.solve_ivp(rhs, (0.0, tmax), [0.0], method="DOP853", rtol=1e-12,
                              atol=1e-13, dense_output=True)
    if not sol.success:
        raise NonConvergence(sol.message)
    z = sol.sol(ts)[0]
    return np.asarray(phi.eval(np.exp(z)), dtype=float)


def r_star_integral(phi: DriftFunction, delta: float) -> float:
    """int_0^delta r_*(s) ds = H^{-1}(delta) - 1 (since d/ds H^{-1} = r_*)."""
    return h_phi_inverse(phi, delta) - 1.0


def f_star(phi: DriftFunction, V) -> Callable:
    """x -> phi(V(x))."""
    value = V.value if hasattr(V, "value") else V
    return lambda x: phi.eval(value(x))


# ---------------------------------------------------------------------------
# rate functions and the subgeometric class

@dataclass(frozen=True)
class RateFunction:
    """A nondecreasing rate t -> r(t) > 0 with an optional log form."""

    eval: Callable
    tag: str = "explicit"
    log_eval: Optional[Callable] = None

    def __call__(self, t):
        return self.eval(t)

    def log(self, t):
        if self.log_eval is not None:
            return np.asarray(self.log_eval(t), dtype=float)
        return np.log(np.asarray(self.eval(t), dtype=float))


def r_star_rate(phi: DriftFunction) -> RateFunction:
    def ev(t):
        t = np.asarray(t, dtype=float)
        return r_star_grid(phi, t.ravel()).reshape(t.shape)

    def lg(t):
        t = np.asarray(t, dtype=float)
        if phi.family == "linear" or (phi.family == "power" and phi.alpha == 0.0):
            return math.log(phi.c) + phi.c * t
        if phi.family == "power":
            a = phi.alpha
            return math.log(phi.c) + (1.0 - a) / a * np.log1p(phi.c * a * t)
        return np.log(ev(t))

    return RateFunction(ev, f"r_star_of({phi.tag})", lg)


@dataclass(frozen=True)
class SubgeometricReport:
    times: np.ndarray
    values: np.ndarray  # log(max(r, 2)) / t
    monotone_tail: bool
    last_value: float
    limit_estimate: float
    threshold: float
    is_subgeometric: bool


def is_subgeometric(r, grid: Sequence[float], small: float = 1e-3,
                    min_grid_max: float = 1e3) -> tuple[bool, SubgeometricReport]:
    """Finite-grid proxy for log r(t)/t decreasing to 0.

    The sequence y(t) = log(max(r(t), 2))/t must be nonincreasing on the tail
    half of the grid (1e-9 slack per step). Smallness of the limit is judged
    on the last value and on an Aitken extrapolation of y at tmax/4, tmax/2,
    tmax, which is exact for y = L + A t^(-s).
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise DomainError("empty grid")
    if np.any(np.diff(grid) <= 0) or grid[0] <= 0:
        raise DomainError("grid must be positive and strictly increasing")
    if grid[-1] < min_grid_max:
        raise DomainError(f"grid max must be >= {min_grid_max:g}")
    rate = r if isinstance(r, RateFunction) else RateFunction(r)

    def y_of(t):
        t = np.asarray(t, dtype=float)
        return np.maximum(rate.log(t), math.log(2.0)) / t

    y = y_of(grid)
    tail = y[grid.size // 2:]
    steps = np.diff(tail)
    monotone = bool(np.all(steps <= 1e-9 * np.maximum(1.0, np.abs(tail[:-1]))))
    tm = grid[-1]
    y1, y2, y3 = (float(v) for v in y_of([tm / 4, tm / 2, tm]))
    den = y1 + y3 - 2.0 * y2
    if abs(den) <= 1e-14 * max(abs(y1), 1e-300):
        limit = y3
    else:
        limit = (y1 * y3 - y2 * y2) / den
    last = float(y[-1])
    verdict = monotone and (last < small or max(limit, 0.0) < small)
    rep = SubgeometricReport(grid, y, monotone, last, float(limit), small, verdict)
    return verdict, rep


# ---------------------------------------------------------------------------
# Young pairs

@dataclass(frozen=True)
class YoungPair:
    """Pair (psi1, psi2) with psi1(a) psi2(b) <= a + b."""

    psi1: Callable
    psi2: Callable
    tag: str
    p: Optional[float] = None


def _holder(p: float) -> YoungPair:
    q = p / (p - 1.0)
    return YoungPair(lambda x: (p * np.asarray(x, dtype=float)) ** (1.0 / p),
                     lambda y: (q * np.asarray(y, dtype=float)) ** (1.0 / q),
                     f"holder(p={p!r})", p)


def _ident(x):
    return np.asarray(x, dtype=float)


def _one(x):
    return np.ones_like(np.asarray(x, dtype=float))


def make_young_pair(kind: str, p: Optional[float] = None, psi1: Optional[Callable] = None,
                    psi2: Optional[Callable] = None, n_check: int = 100_000,
                    seed: int = 0) -> YoungPair:
    """``holder`` (needs p > 1), ``identity_one``, ``one_identity`` or ``custom``.

    Custom pairs are validated on ``n_check`` pseudorandom points of [0, 1e6]^2.
    """
    if kind == "holder":
        if p is None or not p > 1.0:
            raise DomainError("holder pair needs p > 1")
        return _holder(float(p))
    if kind == "identity_one":
        return YoungPair(_ident, _one, "identity_one")
    if kind == "one_identity":
        return YoungPair(_one, _ident, "one_identity")
    if kind == "custom":
        if psi1 is None or psi2 is None:
            raise DomainError("custom pair needs psi1 and psi2")
        pair = YoungPair(psi1, psi2, "custom")
        if young_violations(pair, n_check, seed) > 0:
            raise DomainError("custom pair violates psi1(a) psi2(b) <= a + b")
        return pair
    raise DomainError(f"unknown Young pair kind {kind!r}")


def young_violations(pair: YoungPair, n: int = 100_000, seed: int = 0, high: float = 1e6) -> int:
    """Count sampled (a, b) in [0, high]^2 with psi1(a) psi2(b) > a + b.

    Half of the points are uniform, half log-uniform so small arguments are
    exercised too.
    """
    rng = np.random.default_rng(seed)
    half = n // 2
    a = np.concatenate([rng.uniform(0, high, half), 10 ** rng.uniform(-8, math.log10(high), n - half)])
    b = np.concatenate([rng.uniform(0, high, half), 10 ** rng.uniform(-8, math.log10(high), n - half)])
    lhs = np.asarray(pair.psi1(a), dtype=float) * np.asarray(pair.psi2(b), dtype=float)
    return int(np.count_nonzero(lhs > a + b))


def interpolated_pair(phi: DriftFunction, V, pair: YoungPair) -> tuple[RateFunction, Callable]:
    """(t -> max(psi1(r_*(t)), 1), x -> max(psi2(phi(V(x))), 1))."""
    rs = r_star_rate(phi)
    value = V.value if hasattr(V, "value") else V

    def rate(t):
        return np.maximum(pair.psi1(rs(t)), 1.0)

    def fx(x):
        return np.maximum(pair.psi2(phi.eval(value(x))), 1.0)

    return RateFunction(rate, f"interpolated({pair.tag},{phi.tag})"), fx
