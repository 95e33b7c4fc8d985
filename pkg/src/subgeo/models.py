"""Process specifications, benchmark models and extended generators.

Five builtin instances are provided:

=============  =======================================================
ou_geometric   dX = -X dt + sqrt(2) dB
elliptic       dX = -r X (1+X^2)^(-(1+p)/2) dt + dB
langevin       pi ~ exp(-l), l = (1+x^2)^(beta/2), sigma = l^d
hamiltonian    dX = Y dt, dY = -(c Y + U'(X)) dt + sigma dB, U = (1+x^2)^(p/2)
cpou           dX = -mu X dt + dZ, Z compound Poisson with log-Weibull jumps
=============  =======================================================
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate, optimize, special
from scipy.interpolate import PchipInterpolator

from . import lyapunov as lyap
from .errors import DomainError, IntegrabilityError, ParamError
from .lyapunov import LyapunovFunction, as_states

JUMP_RTOL = 1e-8


# ---------------------------------------------------------------------------
# jump laws

class JumpLaw:
    """Law F of the jump sizes, supported in [1, inf)."""

    tag = "jump"
    support = (1.0, math.inf)

    def sample(self, u: np.ndarray) -> np.ndarray:
        """Inverse-CDF transform of uniforms ``u`` in (0, 1)."""
        raise NotImplementedError

    def expect_increment(self, V: LyapunovFunction, x: float) -> float:
        """int (V(x+u) - V(x)) F(du)."""
        raise NotImplementedError


@dataclass(frozen=True)
class DiracJump(JumpLaw):
    size: float = 1.0

    @property
    def tag(self):
        return f"dirac({self.size!r})"

    @property
    def mean(self) -> float:
        return self.size

    def sample(self, u):
        return np.full(np.shape(u), self.size)

    def expect_increment(self, V, x):
        return float(V.value(np.array([[x + self.size]]))[0] - V.value(np.array([[x]]))[0])


class LogWeibullJump(JumpLaw):
    """F(du) proportional to exp(-c (log u)^beta) / u on [1, inf).

    With y = log u the law of y has density exp(-c y^beta) / Z on [0, inf),
    so y = (G / c)^(1/beta) with G ~ Gamma(1/beta). Sampling goes through a
    quantile table of ``n_nodes`` logit-spaced probabilities with monotone
    (PCHIP) interpolation.
    """

    def __init__(self, c: float, beta: float, n_nodes: int = 10_000, logit_span: float = 27.0):
        if not (c > 0 and 0 < beta):
            raise ParamError("log-Weibull law needs c > 0 and beta > 0")
        self.c = float(c)
        self.beta = float(beta)
        self.shape = 1.0 / self.beta
        self.log_norm = math.lgamma(self.shape) - math.log(self.beta) - self.shape * math.log(self.c)
        z = np.linspace(-logit_span, logit_span, n_nodes)
        p = special.expit(z)
        q = special.expit(-z)  # 1 - p without cancellation
        g = np.where(p < 0.5, special.gammaincinv(self.shape, p), special.gammainccinv(self.shape, q))
        self._z = z
        self._y = (g / self.c) ** (1.0 / self.beta)
        self._interp = PchipInterpolator(z, self._y, extrapolate=True)
        self._span = logit_span

    @property
    def tag(self):
        return f"log_weibull(c={self.c!r},beta={self.beta!r})"

    def log_density_y(self, y):
        return -self.c * np.asarray(y, dtype=float) ** self.beta - self.log_norm

    def quantile_y_exact(self, p):
        return (special.gammaincinv(self.shape, p) / self.c) ** (1.0 / self.beta)

    def cdf_y(self, y):
        return special.gammainc(self.shape, self.c * np.asarray(y, dtype=float) ** self.beta)

    def sample_log(self, u):
        z = np.clip(special.logit(u), -self._span, self._span)
        return np.maximum(self._interp(z), 0.0)

    def sample(self, u):
        return np.exp(self.sample_log(u))

    def expect_increment(self, V, x):
        return self.expect(lambda logv: _v_at_log(V, logv), x)

    def expect(self, vlog: Callable, x: float) -> float:
        """int (W(x+u) - W(x)) F(du) with ``vlog`` evaluating W at log-arguments."""
        lx = math.log(x) if x > 0 else -math.inf
        v0 = float(vlog(np.array([lx]))[0]) if x > 0 else float(vlog(np.array([-math.inf]))[0])

        def integrand(y):
            la = np.logaddexp(lx, y)
            return (float(vlog(np.array([la]))[0]) - v0) * math.exp(float(self.log_density_y(y)))

        y_hi = float(self.quantile_y_exact(1.0 - 1e-12)) if self.beta < 50 else 10.0
        body, err1 = integrate.quad(integrand, 0.0, y_hi, epsabs=0.0, epsrel=1e-10, limit=400)
        tail, err2 = integrate.quad(integrand, y_hi, math.inf, epsabs=0.0, epsrel=1e-10, limit=400)
        total = body + tail
        # divergence guard: the integrand must decay beyond the body
        far = [integrand(y_hi * f) for f in (2.0, 4.0, 8.0)]
        if not all(math.isfinite(v) for v in far) or abs(far[2]) > abs(far[0]) > 0:
            raise IntegrabilityError(f"jump integral does not converge at x={x!r}")
        budget = JUMP_RTOL * max(abs(total), 1e-300) + 1e-14 * abs(v0)
        if not math.isfinite(total) or err1 + err2 > budget or abs(tail) > 1e-3 * max(abs(total), 1e-300) + budget:
            raise IntegrabilityError(f"jump integral error {err1 + err2:.3g} exceeds budget {budget:.3g}")
        return total


def _v_at_log(V: LyapunovFunction, logx):
    logx = np.asarray(logx, dtype=float)
    if V.value_log is not None:
        return V.value_log(logx)
    with np.errstate(over="ignore"):
        return V.value(np.exp(logx).reshape(-1, 1))


@dataclass(frozen=True)
class JumpSpec:
    rate_lambda: float
    law: JumpLaw
    decay_mu: float


# ---------------------------------------------------------------------------
# process description

@dataclass(frozen=True)
class ProcessSpec:
    """A diffusion or jump process on R^dim.

    ``drift_b`` maps (n, dim) -> (n, dim); ``diffusion_sigma`` maps
    (n, dim) -> (n, dim, dim). ``sigma_diag`` is an optional fast path for
    diagonal sigma returning (n, dim). ``kinetic`` marks position/velocity
    systems where the first half of the coordinates is driven by the second.
    """

    dim: int
    drift_b: Callable
    diffusion_sigma: Callable
    model_tag: str
    params: dict = field(default_factory=dict)
    jump: Optional[JumpSpec] = None
    sigma_diag: Optional[Callable] = None
    kinetic: bool = False
    domain: str = "real"
    log_density: Optional[Callable] = None   # unnormalized log invariant density, 1-d
    extras: dict = field(default_factory=dict, compare=False)

    @property
    def tag(self) -> str:
        if not self.params:
            return self.model_tag
        inner = ",".join(f"{k}={v!r}" for k, v in self.params.items())
        return f"{self.model_tag}({inner})"

    @property
    def is_jump(self) -> bool:
        return self.jump is not None


def _diag_sigma(fn, dim):
    def full(X):
        s = fn(X)
        out = np.zeros((X.shape[0], dim, dim))
        idx = np.arange(dim)
        out[:, idx, idx] = s
        return out
    return full


def ou_geometric() -> ProcessSpec:
    s2 = math.sqrt(2.0)

    def sd(X):
        return np.full_like(X, s2)

    return ProcessSpec(1, lambda X: -X, _diag_sigma(sd, 1), "ou_geometric", {}, sigma_diag=sd,
                       log_density=lambda x: -0.5 * np.asarray(x) ** 2)


def elliptic(r: float = 1.0, p: float = 0.5) -> ProcessSpec:
    if not (r > 0 and 0 < p < 1):
        raise ParamError("elliptic needs r > 0 and 0 < p < 1")

    def b(X):
        return -r * X * (1.0 + np.sum(X * X, axis=1, keepdims=True)) ** (-(1 + p) / 2)

    def sd(X):
        return np.ones_like(X)

    def logpi(x):
        # 1-d reversible density exp(2 int b)
        return -2 * r * (1 + np.asarray(x) ** 2) ** ((1 - p) / 2) / (1 - p)

    return ProcessSpec(1, b, _diag_sigma(sd, 1), "elliptic", {"r": r, "p": p}, sigma_diag=sd,
                       log_density=logpi)


def langevin(beta: float = 0.5, d: float = 0.0) -> ProcessSpec:
    if not (0 < beta < 1 and d >= 0):
        raise ParamError("langevin needs 0 < beta < 1 and d >= 0")

    def ell(X):
        return lyap._radial_power(X, beta / 2)

    def b(X):
        l, dl, _ = ell(X)
        # b = a/2 dlog(pi) + da/2 with a = l^(2d), dlog(pi) = -dl
        return (0.5 * l ** (2 * d - 1) * (2 * d - l))[:, None] * dl

    def sd(X):
        return np.repeat((ell(X)[0] ** d)[:, None], X.shape[1], axis=1)

    return ProcessSpec(1, b, _diag_sigma(sd, 1), "langevin", {"beta": beta, "d": d}, sigma_diag=sd,
                       log_density=lambda x: -(1 + np.asarray(x) ** 2) ** (beta / 2),
                       extras={"neglogpi": ell})


def hamiltonian(p: float = 0.5, c: float = 1.0, sigma: float = 0.5) -> ProcessSpec:
    if not (0 < p < 1 and c > 0 and sigma > 0):
        raise ParamError("hamiltonian needs 0 < p < 1, c > 0, sigma > 0")

    def dU(x):
        return p * x * (1 + x * x) ** (p / 2 - 1)

    def b(X):
        x, y = X[:, 0], X[:, 1]
        return np.stack([y, -c * y - dU(x)], axis=1)

    def sd(X):
        out = np.zeros_like(X)
        out[:, 1] = sigma
        return out

    return ProcessSpec(2, b, _diag_sigma(sd, 2), "hamiltonian", {"p": p, "c": c, "sigma": sigma},
                       sigma_diag=sd, kinetic=True, extras={"dU": dU})


def cpou(mu: float = 1.0, lam: float = 0.5, c: float = 2.0, beta_F: float = 0.5,
         law: Optional[JumpLaw] = None) -> ProcessSpec:
    if not (mu > 0 and lam >= 0 and c > 0 and beta_F > 0):
        raise ParamError("cpou needs mu > 0, lambda >= 0, c > 0, beta_F > 0")
    if law is None:
        law = LogWeibullJump(c, beta_F)
        params = {"mu": mu, "lambda": lam, "c": c, "beta_F": beta_F}
    else:
        params = {"mu": mu, "lambda": lam, "F": law.tag}

    def sd(X):
        return np.zeros_like(X)

    return ProcessSpec(1, lambda X: -mu * X, _diag_sigma(sd, 1), "cpou", params,
                       jump=JumpSpec(lam, law, mu), sigma_diag=sd, domain="nonnegative")


def builtin_model(tag: str, **params) -> ProcessSpec:
    """Benchmark instance for ``tag``; see the module docstring."""
    builders = {"ou_geometric": ou_geometric, "elliptic": elliptic, "langevin": langevin,
                "hamiltonian": hamiltonian, "cpou": cpou}
    if tag not in builders:
        raise ParamError(f"unknown model tag {tag!r}")
    if tag == "cpou" and "lambda" in params:
        params["lam"] = params.pop("lambda")
    if tag == "cpou" and "jump" in params:
        spec = params.pop("jump")
        if spec.get("kind") == "dirac":
            params["law"] = DiracJump(float(spec.get("size", 1.0)))
    try:
        return builders[tag](**params)
    except TypeError as exc:
        raise ParamError(str(exc)) from None


def builtin_lyapunov(tag: str, model: Optional[ProcessSpec] = None, **params) -> LyapunovFunction:
    """Lyapunov function by tag. ``power_of_pi`` and ``hamiltonian_vm`` read the model."""
    dim = model.dim if model is not None else 1
    if tag == "quadratic":
        return lyap.quadratic(dim)
    if tag == "exp_power":
        return lyap.exp_power(params.get("iota", 1.0), params["m"], dim)
    if tag == "power_of_pi":
        if model is None or "neglogpi" not in model.extras:
            raise DomainError("power_of_pi needs a langevin model")
        return lyap.power_of_pi(params.get("kappa", 0.5), model.extras["neglogpi"], dim)
    if tag == "log_power":
        return lyap.log_power(params.get("alpha", 1.0), params.get("delta", 0.4))
    if tag == "hamiltonian_vm":
        if model is None or model.model_tag != "hamiltonian":
            raise DomainError("hamiltonian_vm needs a hamiltonian model")
        return lyap.hamiltonian_vm(params.get("alpha", 1.0), params.get("beta", 0.5), params.get("m", 1.0),
                                   params.get("k", 1.0), model.params["p"], model.params["c"])
    raise DomainError(f"unknown Lyapunov tag {tag!r}")


def default_lyapunov(model: ProcessSpec) -> LyapunovFunction:
    """The Lyapunov form used for each benchmark in the drift arguments."""
    t = model.model_tag
    if t == "ou_geometric":
        return lyap.quadratic(1)
    if t == "elliptic":
        return lyap.exp_power(1.0, 1.0 - model.params["p"], 1)
    if t == "langevin":
        return builtin_lyapunov("power_of_pi", model, kappa=0.5)
    if t == "hamiltonian":
        return builtin_lyapunov("hamiltonian_vm", model, alpha=1.0, beta=0.5, m=1.0, k=1.0)
    if t == "cpou":
        return lyap.log_power(1.0, 0.4)
    raise DomainError(f"no default Lyapunov function for {t!r}")


# ---------------------------------------------------------------------------
# generator

def generator_apply(model: ProcessSpec, V: LyapunovFunction, x):
    """Extended generator applied to V at x.

    <b, grad V> + 1/2 Tr(a hess V) + lambda int (V(x+u) - V(x)) F(du),
    with a = sigma sigma^T.
    """
    X, single = as_states(x, model.dim)
    b = model.drift_b(X)
    out = np.einsum("ni,ni->n", b, V.gradient(X).reshape(X.shape))
    H = V.hessian(X).reshape(X.shape[0], model.dim, model.dim)
    if model.sigma_diag is not None:
        sd = model.sigma_diag(X)
        if np.any(sd != 0):
            out = out + 0.5 * np.einsum("ni,nii->n", sd * sd, H)
    else:
        S = model.diffusion_sigma(X)
        a = np.einsum("nik,njk->nij", S, S)
        out = out + 0.5 * np.einsum("nij,nji->n", a, H)
    if model.jump is not None and model.jump.rate_lambda > 0:
        jumps = np.array([model.jump.law.expect_increment(V, float(xi)) for xi in X[:, 0]])
        out = out + model.jump.rate_lambda * jumps
    return out[0] if single else out


def hamiltonian_closed_form(model: ProcessSpec, alpha: float, beta: float, m: float, X) -> np.ndarray:
    """1/2 alpha sigma^2 + (beta G'' - c alpha) y^2 - beta G' U' for V_m."""
    p, c, sigma = model.params["p"], model.params["c"], model.params["sigma"]
    X = np.atleast_2d(np.asarray(X, dtype=float))
    x, y = X[:, 0], X[:, 1]
    s = 1 + x * x
    dU = p * x * s ** (p / 2 - 1)
    dG = x * s ** ((m - 1) / 2)
    d2G = s ** ((m - 1) / 2) + (m - 1) * x * x * s ** ((m - 3) / 2)
    return 0.5 * alpha * sigma ** 2 + (beta * d2G - c * alpha) * y * y - beta * dG * dU


# ---------------------------------------------------------------------------
# assumption checks

@dataclass(frozen=True)
class AssumptionEntry:
    name: str
    passed: bool
    worst_margin: float
    detail: str = ""
    values: tuple = ()


@dataclass(frozen=True)
class AssumptionReport:
    model_tag: str
    entries: tuple

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    def __getitem__(self, name):
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)


def _shells(lo, hi, n=60):
    return np.logspace(math.log10(lo), math.log10(hi), n)


def _trend_to_zero(vals) -> bool:
    a = np.abs(np.asarray(vals))
    q = len(a) // 4
    return bool(np.mean(a[-q:]) < np.mean(a[:q]))


def check_assumptions(model: ProcessSpec, r_max: float = 1e4, eta: float = 0.05) -> AssumptionReport:
    """Evaluate the quantitative assumptions of a builtin on log-spaced shells.

    Limit-type conditions are reported as tail-trend diagnostics.
    """
    t = model.model_tag
    entries = []
    if t == "elliptic":
        r, p = model.params["r"], model.params["p"]
        # <b(x), x> = -r x^2 (1+x^2)^(-(1+p)/2) never reaches -r |x|^(1-p) exactly;
        # compute M for the slightly smaller constant (1 - eta) r
        def ratio(x):
            return (x * x / (1 + x * x)) ** ((1 + p) / 2)
        M = optimize.brentq(lambda x: ratio(x) - (1 - eta), 1e-6, 1e6, xtol=1e-12)
        xs = _shells(M, 100 * M)
        inner = -r * xs * xs * (1 + xs * xs) ** (-(1 + p) / 2)
        margin = float(np.max(inner + (1 - eta) * r * xs ** (1 - p)))
        entries.append(AssumptionEntry("outward drift bound", margin <= 1e-12, margin,
                                       f"holds for |x| >= M={M:.6g} with r_eff={(1 - eta) * r:g}", (M,)))
        xs = _shells(1e-3, r_max)
        h = 1e-6 * (1 + xs)
        bp = (model.drift_b((xs + h)[:, None]) - model.drift_b((xs - h)[:, None]))[:, 0] / (2 * h)
        entries.append(AssumptionEntry("lipschitz", bool(np.max(np.abs(bp)) < 10 * r), float(np.max(np.abs(bp))),
                                       "sup |b'| on shells"))
        entries.append(AssumptionEntry("nondegenerate", True, 1.0, "a = 1"))
    elif t == "langevin":
        beta, d = model.params["beta"], model.params["d"]
        xs = _shells(1.0, r_max)
        l, dl, d2l = model.extras["neglogpi"](xs[:, None])
        dl = dl[:, 0]
        inner = xs ** (1 - beta) * (-dl)
        entries.append(AssumptionEntry("radial drift", bool(np.all(inner < 0)), float(np.max(inner)),
                                       "|x|^(1-beta) <dlog pi, x/|x|> < 0"))
        ratio = np.abs(dl) * l ** (1 / beta - 1)
        tail = ratio[-10:]
        spread = float(np.ptp(tail) / np.mean(tail))
        entries.append(AssumptionEntry("gradient ratio", spread < 1e-2, spread,
                                       f"|dlog pi| |log pi|^(1/beta-1) -> {tail[-1]:.6g}", tuple(ratio)))
        tr = d2l[:, 0, 0] / dl ** 2
        entries.append(AssumptionEntry("curvature ratio", _trend_to_zero(tr) and abs(tr[-1]) < 5e-2,
                                       float(abs(tr[-1])), "Tr(d2 log pi) |d log pi|^-2 -> 0", tuple(tr)))
        entries.append(AssumptionEntry("diffusion positivity", True, 1.0, "-log pi >= 1 so sigma = l^d > 0"))
    elif t == "hamiltonian":
        p = model.params["p"]
        dU = model.extras["dU"]
        xs = _shells(10.0, 1000.0)
        both = np.concatenate([xs, -xs])
        ratio = np.sign(both) * dU(both) / np.abs(both) ** (p - 1)
        entries.append(AssumptionEntry("U' growth", bool(ratio.min() > 0), float(ratio.min()),
                                       f"sign(x) U'(x) / |x|^(p-1) in [{ratio.min():.6g}, {ratio.max():.6g}]",
                                       (float(ratio.min()), float(ratio.max()))))
        m = 1.0
        gu = both * (1 + both ** 2) ** ((m - 1) / 2) * dU(both) / np.abs(both) ** (p - 1 + m)
        entries.append(AssumptionEntry("G'U' growth", bool(gu.min() > 0), float(gu.min()),
                                       "G'(x) U'(x) >= a |x|^(p-1+m) on both tails"))
    elif t == "cpou":
        law = model.jump.law
        entries.append(AssumptionEntry("support", float(np.min(law.sample(np.array([1e-12, 0.5])))) >= 1.0,
                                       1.0, "jump law supported in [1, inf); state space [0, inf)"))
        if isinstance(law, LogWeibullJump):
            alpha, delta = 1.0, 0.4

            def integrand(y):
                # e^{alpha (log(1+e^y))^delta} times the density of y = log u
                return math.exp(alpha * float(np.logaddexp(0.0, y)) ** delta + float(law.log_density_y(y)))

            val, err = integrate.quad(integrand, 0.0, math.inf, limit=400)
            ok = math.isfinite(val) and err < 1e-6 * val and delta < law.beta
            entries.append(AssumptionEntry("tail integral", ok, val,
                                           f"int exp({alpha}(log(1+x))^{delta}) F(dx) = {val:.8g}", (val,)))
    elif t == "ou_geometric":
        entries.append(AssumptionEntry("linear drift", True, 1.0, "b(x) = -x, sigma = sqrt(2)"))
    else:
        raise DomainError(f"no assumption checks for {t!r}")
    return AssumptionReport(model.tag, tuple(entries))


def stationarity_residual(model: ProcessSpec, psi: LyapunovFunction, support: float) -> tuple[float, float]:
    """(int A psi dpi, int |A psi| dpi) by quadrature, for 1-d models with a known density.

    ``psi`` must be constant outside [-support, support].
    """
    if model.log_density is None or model.dim != 1:
        raise DomainError("stationarity check needs a 1-d model with log_density")

    def apsi(x):
        return float(generator_apply(model, psi, np.array([[x]]))[0])

    def w(x):
        return math.exp(float(model.log_density(x)))

    pts = np.linspace(-support, support, 9)
    signed = sum(integrate.quad(lambda x: apsi(x) * w(x), a, b, epsabs=1e-13, epsrel=1e-11, limit=200)[0]
                 for a, b in zip(pts[:-1], pts[1:]))
    total = sum(integrate.quad(lambda x: abs(apsi(x)) * w(x), a, b, epsabs=1e-13, epsrel=1e-11, limit=200)[0]
                for a, b in zip(pts[:-1], pts[1:]))
    return signed, total
