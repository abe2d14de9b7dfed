"""Aggregative games, their pseudo-gradient, and per-player action sets.

A game has ``n`` players, each choosing a block ``x_i`` of dimension ``p``.
Costs are written ``f_i(x_i, z)`` where ``z`` stands for the aggregate
``mean(x)``; the distributed algorithm feeds an estimate of the mean instead.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import kernels


class ConfigurationError(ValueError):
    """Invalid game, topology, or experiment configuration."""


@dataclass(frozen=True)
class ActionSet:
    """Box ``lower <= u <= upper``, optionally cut by one hyperplane ``normal . u = 0``."""

    lower: np.ndarray
    upper: np.ndarray
    normal: Optional[np.ndarray] = None

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ConfigurationError("bounds must be 1-D arrays of equal length")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ConfigurationError("action set must be compact (finite bounds)")
        if np.any(lo > hi):
            raise ConfigurationError("lower bound exceeds upper bound")
        if self.normal is not None:
            a = np.asarray(self.normal, dtype=float)
            if a.shape != lo.shape:
                raise ConfigurationError("hyperplane normal has the wrong dimension")
            object.__setattr__(self, "normal", a)
            lowest = np.sum(np.where(a > 0, a * lo, a * hi))
            highest = np.sum(np.where(a > 0, a * hi, a * lo))
            if lowest > 0 or highest < 0:
                raise ConfigurationError("hyperplane does not intersect the box")

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    def contains(self, u, tol: float = 1e-9) -> bool:
        u = np.asarray(u, dtype=float)
        if np.any(u < self.lower - tol) or np.any(u > self.upper + tol):
            return False
        if self.normal is None:
            return True
        scale = max(1.0, np.linalg.norm(self.normal) * np.linalg.norm(u))
        return abs(self.normal @ u) <= tol * scale


def project(action_set: ActionSet, v) -> np.ndarray:
    """Euclidean projection of ``v`` onto ``action_set``.

    Box-only sets are a clamp. For a box cut by a hyperplane the multiplier of
    the equality constraint is found by bisection and then solved exactly on
    the final bracket.
    """
    v = np.asarray(v, dtype=float)
    if v.shape != action_set.lower.shape:
        raise ValueError(f"expected vector of length {action_set.dim}, got {v.shape}")
    return kernels.project_box_hyperplane(v, action_set.lower, action_set.upper, action_set.normal)


class Game:
    """Base class for aggregative games.

    Subclasses implement :meth:`cost`, :meth:`grad` and :meth:`action_set`.
    :meth:`local_step` may be overridden with a fused fast path.
    """

    n: int
    p: int

    def cost(self, i: int, x_i: np.ndarray, z: np.ndarray) -> float:
        raise NotImplementedError

    def grad(self, i: int, x_i: np.ndarray, z: np.ndarray) -> np.ndarray:
        """``F_i(x_i, z) = grad_x f_i + (1/n) grad_z f_i``."""
        raise NotImplementedError

    def action_set(self, i: int) -> ActionSet:
        raise NotImplementedError

    def local_step(self, i: int, x_i: np.ndarray, z: np.ndarray, alpha: float) -> np.ndarray:
        return project(self.action_set(i), x_i - alpha * self.grad(i, x_i, z))

    def project_all(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(self.n, self.p)
        return np.stack([project(self.action_set(i), x[i]) for i in range(self.n)])

    def random_feasible(self, rng: np.random.Generator) -> np.ndarray:
        """Uniform draw in each bounding box, projected onto the action set."""
        rows = []
        for i in range(self.n):
            s = self.action_set(i)
            rows.append(project(s, rng.uniform(s.lower, s.upper)))
        return np.stack(rows)

    def feasible(self, x, tol: float = 1e-9) -> bool:
        x = np.asarray(x, dtype=float).reshape(self.n, self.p)
        return all(self.action_set(i).contains(x[i], tol) for i in range(self.n))


def _blocks(game: Game, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.size != game.n * game.p:
        raise ValueError(f"action vector has {x.size} entries, expected {game.n * game.p}")
    return x.reshape(game.n, game.p)


def pseudo_gradient(game: Game, x) -> np.ndarray:
    """Stacked ``[F_1(x_1, mean(x)); ...; F_n(x_n, mean(x))]`` with shape ``(n, p)``."""
    xb = _blocks(game, x)
    xbar = xb.mean(axis=0)
    return np.stack([game.grad(i, xb[i], xbar) for i in range(game.n)])


@dataclass
class MonotonicityEstimate:
    estimate: float
    violated: bool
    samples: int


def monotonicity_probe(
    game: Game,
    samples: int,
    seed: int,
    mapping: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> MonotonicityEstimate:
    """Smallest ``(phi(x)-phi(x'))'(x-x') / |x-x'|^2`` over random feasible pairs.

    ``mapping`` replaces the game's pseudo-gradient (used to inject test doubles).
    """
    if samples < 2:
        raise ValueError("samples must be >= 2")
    phi = mapping if mapping is not None else (lambda x: pseudo_gradient(game, x))
    rng = np.random.default_rng(seed)
    best = np.inf
    drawn = 0
    while drawn < samples:
        x = game.random_feasible(rng)
        y = game.random_feasible(rng)
        diff = x - y
        sq = float(np.sum(diff * diff))
        if sq == 0.0:
            continue
        best = min(best, float(np.sum((phi(x) - phi(y)) * diff)) / sq)
        drawn += 1
    return MonotonicityEstimate(best, bool(best <= 0.0), samples)


def vi_residual(game: Game, x, step: float) -> float:
    """Natural residual ``|x - proj_X(x - step * phi(x))|``; zero exactly at solutions."""
    if step <= 0:
        raise ValueError("step must be positive")
    xb = _blocks(game, x)
    moved = game.project_all(xb - step * pseudo_gradient(game, xb))
    return float(np.linalg.norm(xb - moved))


class QuadraticGame(Game):
    """``f_i = |x_i - c_i|^2 / 2`` on a box; the aggregate plays no role.

    Handy test game: the pseudo-gradient is ``x - c``.
    """

    def __init__(self, centers: Sequence[Sequence[float]], lower=-10.0, upper=10.0):
        c = np.atleast_2d(np.asarray(centers, dtype=float))
        self.centers = c
        self.n, self.p = c.shape
        self._set = ActionSet(np.full(self.p, float(lower)), np.full(self.p, float(upper)))

    def cost(self, i, x_i, z):
        d = np.asarray(x_i) - self.centers[i]
        return 0.5 * float(d @ d)

    def grad(self, i, x_i, z):
        return np.asarray(x_i, dtype=float) - self.centers[i]

    def action_set(self, i):
        return self._set
