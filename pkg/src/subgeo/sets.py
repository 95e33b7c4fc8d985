"""Closed sets C used in drift conditions and hitting times."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DomainError
from .lyapunov import LyapunovFunction, as_states


@dataclass(frozen=True)
class PetiteSetSpec:
    """``v_level`` is {V <= v_max}; ``ball`` is {|x - center| <= radius}; ``empty`` is the empty set."""

    kind: str
    params: dict = field(default_factory=dict)
    V: Optional[LyapunovFunction] = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind == "v_level":
            if self.V is None:
                raise DomainError("v_level set needs V")
            if not self.params.get("v_max", 0.0) >= 1.0:
                raise DomainError("v_level needs v_max >= 1")
        elif self.kind == "ball":
            if not self.params.get("radius", -1.0) >= 0.0:
                raise DomainError("ball needs radius >= 0")
        elif self.kind != "empty":
            raise DomainError(f"unknown set kind {self.kind!r}")

    @property
    def tag(self) -> str:
        if self.kind == "v_level":
            return f"v_level({self.params['v_max']!r})"
        if self.kind == "ball":
            return f"ball({self.params.get('center', 0.0)!r},{self.params['radius']!r})"
        return "empty"

    def contains(self, x, dim: Optional[int] = None) -> np.ndarray:
        """Boolean indicator on states of shape (n, dim)."""
        X = np.asarray(x, dtype=float)
        if X.ndim < 2:
            X, _ = as_states(X, dim or (self.V.dim if self.V is not None else 1))
        if self.kind == "empty":
            return np.zeros(X.shape[0], dtype=bool)
        if self.kind == "ball":
            center = np.broadcast_to(np.asarray(self.params.get("center", 0.0), dtype=float), (X.shape[1],))
            return np.sum((X - center) ** 2, axis=1) <= self.params["radius"] ** 2
        return self.V.value(X) <= self.params["v_max"]

    def indicator(self, x, dim: Optional[int] = None) -> np.ndarray:
        return self.contains(x, dim).astype(float)


def ball(radius: float, center=0.0) -> PetiteSetSpec:
    return PetiteSetSpec("ball", {"center": center, "radius": float(radius)})


def v_level(V: LyapunovFunction, v_max: float) -> PetiteSetSpec:
    return PetiteSetSpec("v_level", {"v_max": float(v_max)}, V)


EMPTY = PetiteSetSpec("empty")
