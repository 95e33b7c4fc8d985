"""Lyapunov functions V >= 1 with analytic or finite-difference derivatives.

States are handled as arrays of shape ``(n, dim)``; a single state of shape
``(dim,)`` (or a scalar in dimension one) is accepted everywhere and the
result is squeezed back.
"""
from __future__ import annotations

import math
from typing import Callable, Optional

import numpy as np

from .errors import DomainError

H_FD = 1e-5     # gradient step, relative to 1 + |x|
H_HESS = 2e-4   # Hessian step; see the notes in LyapunovFunction.hessian


def as_states(x, dim: int) -> tuple[np.ndarray, bool]:
    """Return ``(X, single)`` with X of shape (n, dim)."""
    X = np.asarray(x, dtype=float)
    if X.ndim == 0:
        if dim != 1:
            raise DomainError(f"scalar state given for dim={dim}")
        return X.reshape(1, 1), True
    if X.ndim == 1:
        if dim == 1 and X.shape[0] != 1:
            return X.reshape(-1, 1), False
        if X.shape[0] != dim:
            raise DomainError(f"state of length {X.shape[0]} given for dim={dim}")
        return X.reshape(1, dim), True
    if X.ndim != 2 or X.shape[1] != dim:
        raise DomainError(f"states must have shape (n, {dim})")
    return X, False


def _out(v, single):
    return v[0] if single else v


class LyapunovFunction:
    """V: state -> [1, inf) with gradient and Hessian access.

    When no analytic derivatives are supplied, central differences are used:
    step ``1e-5 (1 + |x|)`` for the gradient and ``2e-4 (1 + |x|)`` for the
    Hessian. The larger Hessian step keeps the roundoff term eps V / h^2 near
    1e-8 V instead of 1e-6 V.
    """

    def __init__(self, value: Callable, tag: str, dim: int = 1, params: Optional[dict] = None,
                 gradient: Optional[Callable] = None, hessian: Optional[Callable] = None,
                 value_log: Optional[Callable] = None):
        self._value = value
        self._grad = gradient
        self._hess = hessian
        self.value_log = value_log  # V as a function of log x (positive 1-d states)
        self.tag = tag
        self.dim = int(dim)
        self.params = dict(params or {})

    @property
    def analytic(self) -> bool:
        return self._grad is not None and self._hess is not None

    @property
    def full_tag(self) -> str:
        if not self.params:
            return self.tag
        inner = ",".join(f"{k}={v!r}" for k, v in self.params.items())
        return f"{self.tag}({inner})"

    def value(self, x):
        X, single = as_states(x, self.dim)
        return _out(np.asarray(self._value(X), dtype=float), single)

    __call__ = value

    def gradient(self, x):
        X, single = as_states(x, self.dim)
        if self._grad is not None:
            return _out(np.asarray(self._grad(X), dtype=float), single)
        return _out(self.fd_gradient(X), single)

    def hessian(self, x):
        X, single = as_states(x, self.dim)
        if self._hess is not None:
            return _out(np.asarray(self._hess(X), dtype=float), single)
        return _out(self.fd_hessian(X), single)

    # finite differences work on (n, dim) arrays
    def fd_gradient(self, X: np.ndarray, h_rel: float = H_FD) -> np.ndarray:
        n, d = X.shape
        h = h_rel * (1.0 + np.linalg.norm(X, axis=1))
        g = np.empty((n, d))
        for i in range(d):
            e = np.zeros(d)
            e[i] = 1.0
            step = h[:, None] * e
            g[:, i] = (self._value(X + step) - self._value(X - step)) / (2 * h)
        return g

    def fd_hessian(self, X: np.ndarray, h_rel: float = H_HESS) -> np.ndarray:
        n, d = X.shape
        h = h_rel * (1.0 + np.linalg.norm(X, axis=1))
        H = np.empty((n, d, d))
        v0 = self._value(X)
        for i in range(d):
            ei = np.zeros(d)
            ei[i] = 1.0
            si = h[:, None] * ei
            H[:, i, i] = (self._value(X + si) - 2 * v0 + self._value(X - si)) / h ** 2
            for j in range(i + 1, d):
                ej = np.zeros(d)
                ej[j] = 1.0
                sj = h[:, None] * ej
                mixed = (self._value(X + si + sj) - self._value(X + si - sj)
                         - self._value(X - si + sj) + self._value(X - si - sj)) / (4 * h ** 2)
                H[:, i, j] = H[:, j, i] = mixed
        return H

    def with_fd(self) -> "LyapunovFunction":
        """Copy that ignores analytic derivatives."""
        return LyapunovFunction(self._value, self.tag, self.dim, self.params, value_log=self.value_log)


# -- radial building blocks ---------------------------------------------------

def _radial_power(X, k, coef=1.0):
    """coef * s^k with s = 1 + |x|^2, plus gradient and Hessian."""
    s = 1.0 + np.sum(X * X, axis=1)
    val = coef * s ** k
    grad = (2 * k * coef * s ** (k - 1))[:, None] * X
    d = X.shape[1]
    hess = (2 * k * coef * s ** (k - 1))[:, None, None] * np.eye(d)[None]
    hess = hess + (4 * k * (k - 1) * coef * s ** (k - 2))[:, None, None] * np.einsum("ni,nj->nij", X, X)
    return val, grad, hess


def quadratic(dim: int = 1) -> LyapunovFunction:
    """V(x) = 1 + |x|^2."""
    def val(X):
        return 1.0 + np.sum(X * X, axis=1)

    def grad(X):
        return 2.0 * X

    def hess(X):
        return np.broadcast_to(2.0 * np.eye(X.shape[1]), (X.shape[0], X.shape[1], X.shape[1])).copy()

    return LyapunovFunction(val, "quadratic", dim, {}, grad, hess)


def exp_power(iota: float, m: float, dim: int = 1) -> LyapunovFunction:
    """V(x) = exp(iota (1 + |x|^2)^(m/2)), a smoothing of exp(iota |x|^m)."""
    if not (iota > 0 and 0 < m <= 1):
        raise DomainError("exp_power needs iota > 0 and 0 < m <= 1")

    def val(X):
        return np.exp(_radial_power(X, m / 2, iota)[0])

    def grad(X):
        g, dg, _ = _radial_power(X, m / 2, iota)
        return np.exp(g)[:, None] * dg

    def hess(X):
        g, dg, d2g = _radial_power(X, m / 2, iota)
        return np.exp(g)[:, None, None] * (d2g + np.einsum("ni,nj->nij", dg, dg))

    return LyapunovFunction(val, "exp_power", dim, {"iota": iota, "m": m}, grad, hess)


def power_of_pi(kappa: float, neglogpi: Callable, dim: int = 1) -> LyapunovFunction:
    """V = 1 + exp(kappa l) with l = -log pi; i.e. 1 + pi^(-kappa).

    ``neglogpi(X)`` must return (l, grad l, hess l).
    """
    if not 0 < kappa < 1:
        raise DomainError("power_of_pi needs 0 < kappa < 1")

    def val(X):
        return 1.0 + np.exp(kappa * neglogpi(X)[0])

    def grad(X):
        l, dl, _ = neglogpi(X)
        return (kappa * np.exp(kappa * l))[:, None] * dl

    def hess(X):
        l, dl, d2l = neglogpi(X)
        e = np.exp(kappa * l)[:, None, None]
        return e * (kappa * d2l + kappa ** 2 * np.einsum("ni,nj->nij", dl, dl))

    return LyapunovFunction(val, "power_of_pi", dim, {"kappa": kappa}, grad, hess)


def log_power(alpha: float, delta: float) -> LyapunovFunction:
    """V(x) = exp(alpha (log(e + x))^delta) on [0, inf).

    The shift by e keeps the logarithm >= 1 so that V >= 1 and V is smooth
    at the origin.
    """
    if not (alpha > 0 and 0 < delta < 1):
        raise DomainError("log_power needs alpha > 0 and 0 < delta < 1")

    def val(X):
        L = np.log(math.e + X[:, 0])
        return np.exp(alpha * L ** delta)

    def grad(X):
        y = math.e + X[:, 0]
        L = np.log(y)
        return (np.exp(alpha * L ** delta) * alpha * delta * L ** (delta - 1) / y)[:, None]

    def hess(X):
        y = math.e + X[:, 0]
        L = np.log(y)
        gp = alpha * delta * L ** (delta - 1) / y
        gpp = alpha * delta * ((delta - 1) * L ** (delta - 2) - L ** (delta - 1)) / y ** 2
        return (np.exp(alpha * L ** delta) * (gpp + gp * gp))[:, None, None]

    def vlog(logx):
        # log(e + x) from log x without forming x
        L = np.logaddexp(1.0, np.asarray(logx, dtype=float))
        return np.exp(alpha * L ** delta)

    return LyapunovFunction(val, "log_power", 1, {"alpha": alpha, "delta": delta}, grad, hess, vlog)


def hamiltonian_vm(alpha: float, beta: float, m: float, k: float, p: float, c: float) -> LyapunovFunction:
    """V = V_m^k for the damped Hamiltonian system, state (x, y).

    V_m(x, y) = alpha (y^2/2 + U(x)) + beta (G'(x) y + c G(x)) with
    U = (1+x^2)^(p/2), G' = x (1+x^2)^((m-1)/2), G = (1+x^2)^((m+1)/2) / (m+1).
    V_m >= 1 needs beta <= alpha c (for the y-quadratic form) and the potential
    part to be >= 1; the constructor checks the first and the model check
    reports the rest.
    """
    if not (alpha > 0 and beta > 0 and k >= 1 and 0 < m <= 1):
        raise DomainError("hamiltonian_vm needs alpha, beta > 0, 0 < m <= 1, k >= 1")
    if not beta < alpha * c:
        raise DomainError("hamiltonian_vm needs beta < alpha c")

    def parts(X):
        x, y = X[:, 0], X[:, 1]
        s = 1.0 + x * x
        U = s ** (p / 2)
        dU = p * x * s ** (p / 2 - 1)
        d2U = p * s ** (p / 2 - 1) + p * (p - 2) * x * x * s ** (p / 2 - 2)
        G = s ** ((m + 1) / 2) / (m + 1)
        dG = x * s ** ((m - 1) / 2)
        d2G = s ** ((m - 1) / 2) + (m - 1) * x * x * s ** ((m - 3) / 2)
        d3G = 3 * (m - 1) * x * s ** ((m - 3) / 2) + (m - 1) * (m - 3) * x ** 3 * s ** ((m - 5) / 2)
        Vm = alpha * (y * y / 2 + U) + beta * (dG * y + c * G)
        gx = alpha * dU + beta * (d2G * y + c * dG)
        gy = alpha * y + beta * dG
        hxx = alpha * d2U + beta * (d3G * y + c * d2G)
        hxy = beta * d2G
        hyy = np.full_like(x, alpha)
        return Vm, np.stack([gx, gy], axis=1), np.stack([np.stack([hxx, hxy], 1), np.stack([hxy, hyy], 1)], 1)

    def val(X):
        return parts(X)[0] ** k

    def grad(X):
        Vm, g, _ = parts(X)
        return (k * Vm ** (k - 1))[:, None] * g

    def hess(X):
        Vm, g, H = parts(X)
        out = (k * Vm ** (k - 1))[:, None, None] * H
        if k != 1:
            out = out + (k * (k - 1) * Vm ** (k - 2))[:, None, None] * np.einsum("ni,nj->nij", g, g)
        return out

    return LyapunovFunction(val, "hamiltonian_vm", 2, {"alpha": alpha, "beta": beta, "m": m, "k": k},
                            grad, hess)


def custom(value: Callable, dim: int = 1, label: str = "custom") -> LyapunovFunction:
    """Value-only V; derivatives by central differences. ``value`` maps (n, dim) -> (n,)."""
    return LyapunovFunction(value, label, dim, {})
