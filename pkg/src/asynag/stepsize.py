"""Base stepsize sequences ``rho(t)`` and the aggressive catch-up sum."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .game import ConfigurationError


@dataclass(frozen=True)
class StepsizeSchedule:
    """``constant``: ``rho0``; ``power``: ``rho0 / (1 + t)**gamma``."""

    kind: str = "constant"
    rho0: float = 0.01
    gamma: float = 1.0

    def __post_init__(self):
        if self.kind not in ("constant", "power"):
            raise ConfigurationError(f"unknown stepsize kind {self.kind!r}")
        if self.rho0 <= 0:
            raise ConfigurationError("rho0 must be positive")

    def __call__(self, t: int) -> float:
        if self.kind == "constant":
            return self.rho0
        return self.rho0 / (1.0 + t) ** self.gamma

    def window_sum(self, lo: int, hi: int) -> float:
        """``sum_{t=lo}^{hi} rho(t)``, both ends inclusive."""
        if hi < lo:
            hi = lo
        if self.kind == "constant":
            return (hi - lo + 1) * self.rho0
        if hi == lo:
            return self(lo)
        t = np.arange(lo, hi + 1, dtype=float)
        return float(np.sum(self.rho0 / (1.0 + t) ** self.gamma))

    def to_dict(self):
        return {"kind": self.kind, "rho0": self.rho0, "gamma": self.gamma}


def rho_value(kind: str, params: dict, t: int, strict: bool = False) -> float:
    """Evaluate ``rho(t)``. ``strict`` enforces square-summable, non-summable decay."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    gamma = float(params.get("gamma", 1.0))
    if strict:
        if kind != "power":
            raise ConfigurationError("only the power schedule is square-summable")
        if not (0.5 < gamma <= 1.0):
            raise ConfigurationError(f"gamma={gamma} outside (0.5, 1]")
    return StepsizeSchedule(kind, float(params.get("rho0", 1.0)), gamma)(t)


def aggressive_stepsize(l_i: int, l_max: int, rho: StepsizeSchedule) -> float:
    """``sum_{t=l_i}^{l'} rho(t)`` with ``l' = max(l_max, l_i)``."""
    return rho.window_sum(l_i, max(l_max, l_i))
