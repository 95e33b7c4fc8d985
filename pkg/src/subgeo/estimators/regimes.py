"""Closed-form regime and exponent tables for the Langevin and Hamiltonian benchmarks."""
from __future__ import annotations

from typing import NamedTuple, Optional

from ..errors import DomainError


class LangevinRegime(NamedTuple):
    regime: str                      # "subgeometric", "geometric" or "uniform"
    log_rate_exponent: Optional[float]  # ln r_*(t) ~ t^exponent when subgeometric


def classify_langevin_regime(beta: float, d: float) -> LangevinRegime:
    """Regime of the tempered Langevin diffusion with pi ~ exp(-|x|^beta), sigma = |log pi|^d.

    uniform if d > 1/beta - 1/2, geometric if 1/beta - 1 <= d <= 1/beta - 1/2,
    subgeometric otherwise with exponent beta / (2 - beta - 2 d beta).
    """
    if not (0 < beta < 1) or not d >= 0:
        raise DomainError("need 0 < beta < 1 and d >= 0")
    lower = 1.0 / beta - 1.0
    upper = 1.0 / beta - 0.5
    if d > upper:
        return LangevinRegime("uniform", None)
    if d >= lower:
        return LangevinRegime("geometric", None)
    return LangevinRegime("subgeometric", beta / (2.0 - beta - 2.0 * d * beta))


def hamiltonian_rate_exponent(p: float, m: float, k: float) -> float:
    """Polynomial rate exponent k (m + 1) / (2 - p) - 1 for V = V_m^k.

    Requires 0 < p < 1, 1 - p < m <= 1 and k >= 1.
    """
    if not 0 < p < 1:
        raise DomainError("need 0 < p < 1")
    if not (1 - p < m <= 1):
        raise DomainError("need 1 - p < m <= 1")
    if not k >= 1:
        raise DomainError("need k >= 1")
    return k * (m + 1) / (2 - p) - 1
