"""Networked Nash-Cournot instances: firms producing and selling over markets.

Block layout of firm ``i`` is ``(g_i1, s_i1, ..., g_iL, s_iL)`` with ``g``
production and ``s`` sales. Firm ``i`` solves

    min  sum_l a_il g_il + b_il g_il^2 - s_il (d_l - S_l)
    s.t. 0 <= g_il <= cap_il,  s_il >= 0,  sum_l g_il = sum_l s_il,

where ``S_l`` is the total sales at market ``l``. With an aggregate estimate
``z`` in place of the mean, ``S_l = n * z[2l+1]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import kernels
from .game import ActionSet, ConfigurationError, Game

FORMAT_TAG = "asynag-cournot-instance"
FORMAT_VERSION = 1


class NonConvergenceError(RuntimeError):
    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


@dataclass
class CournotParams:
    n: int
    L: int
    a: np.ndarray  # (n, L) linear production cost
    b: np.ndarray  # (n, L) quadratic production cost
    d: np.ndarray  # (L,) demand intercept
    cap: np.ndarray  # (n, L) production capacity
    seed: Optional[int] = None

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=float).reshape(self.n, self.L)
        self.b = np.asarray(self.b, dtype=float).reshape(self.n, self.L)
        self.d = np.asarray(self.d, dtype=float).reshape(self.L)
        self.cap = np.asarray(self.cap, dtype=float).reshape(self.n, self.L)
        if np.any(self.b <= 0):
            raise ConfigurationError("quadratic cost coefficients must be positive")
        if np.any(self.cap < 0):
            raise ConfigurationError("capacities must be nonnegative")

    @property
    def p(self) -> int:
        return 2 * self.L

    def to_text(self) -> str:
        def row(name, arr):
            return name + " " + " ".join(repr(float(v)) for v in np.ravel(arr))

        lines = [
            f"{FORMAT_TAG} {FORMAT_VERSION}",
            f"n {self.n}",
            f"L {self.L}",
            f"seed {'none' if self.seed is None else self.seed}",
            row("d", self.d),
            row("a", self.a),
            row("b", self.b),
            row("cap", self.cap),
        ]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "CournotParams":
        lines = [ln.split() for ln in text.strip().splitlines() if ln.strip()]
        if not lines or lines[0][0] != FORMAT_TAG:
            raise ValueError("not a Cournot instance record")
        if int(lines[0][1]) != FORMAT_VERSION:
            raise ValueError(f"unsupported instance version {lines[0][1]}")
        rec = {ln[0]: ln[1:] for ln in lines[1:]}
        n, L = int(rec["n"][0]), int(rec["L"][0])
        seed = None if rec["seed"][0] == "none" else int(rec["seed"][0])
        arr = {k: np.array([float(v) for v in rec[k]]) for k in ("d", "a", "b", "cap")}
        return cls(n, L, arr["a"], arr["b"], arr["d"], arr["cap"], seed)

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path) -> "CournotParams":
        return cls.from_text(Path(path).read_text())


def generate_instance(n: int, L: int, seed: int, cap: float = 500.0) -> CournotParams:
    """Random instance: ``a ~ U(2,12)``, ``b ~ U(2,3)``, ``d ~ U(90,100)``, fixed capacity."""
    if n < 1 or L < 1:
        raise ConfigurationError("need n >= 1 and L >= 1")
    rng = np.random.default_rng(seed)
    a = rng.uniform(2.0, 12.0, size=(n, L))
    b = rng.uniform(2.0, 3.0, size=(n, L))
    d = rng.uniform(90.0, 100.0, size=L)
    return CournotParams(n, L, a, b, d, np.full((n, L), float(cap)), seed)


def cournot_cost(params: CournotParams, i: int, x_i, z) -> float:
    x_i = np.asarray(x_i, dtype=float)
    z = np.asarray(z, dtype=float)
    g, s = x_i[0::2], x_i[1::2]
    price = params.d - params.n * z[1::2]
    return float(np.sum(params.a[i] * g + params.b[i] * g * g - s * price))


def cournot_F_i(params: CournotParams, i: int, x_i, z) -> np.ndarray:
    """Analytic ``F_i``: ``a + 2 b g`` on production, ``-d + n z_s + s`` on sales."""
    return kernels.cournot_grad(
        np.asarray(x_i, dtype=float), np.asarray(z, dtype=float),
        params.a[i], params.b[i], params.d, float(params.n),
    )


class CournotGame(Game):
    def __init__(self, params: CournotParams):
        self.params = params
        self.n = params.n
        self.L = params.L
        self.p = 2 * params.L
        self._sign = np.tile([1.0, -1.0], self.L)
        self._lo = np.zeros(self.p)
        self._hi = []
        self._sets = []
        for i in range(self.n):
            hi = np.empty(self.p)
            hi[0::2] = params.cap[i]
            # sales are bounded by total production, itself bounded by total capacity
            hi[1::2] = params.cap[i].sum()
            self._hi.append(hi)
            self._sets.append(ActionSet(self._lo, hi, self._sign))

    def cost(self, i, x_i, z):
        return cournot_cost(self.params, i, x_i, z)

    def grad(self, i, x_i, z):
        return cournot_F_i(self.params, i, x_i, z)

    def action_set(self, i):
        return self._sets[i]

    def local_step(self, i, x_i, z, alpha):
        pr = self.params
        return kernels.cournot_step(
            x_i, z, float(alpha), pr.a[i], pr.b[i], pr.d, float(self.n),
            self._lo, self._hi[i], self._sign,
        )

    def phi(self, x: np.ndarray) -> np.ndarray:
        """Vectorized pseudo-gradient for all firms, shape ``(n, p)``."""
        x = np.asarray(x, dtype=float).reshape(self.n, self.p)
        pr = self.params
        out = np.empty_like(x)
        out[:, 0::2] = pr.a + 2.0 * pr.b * x[:, 0::2]
        total_sales = x[:, 1::2].sum(axis=0)
        out[:, 1::2] = -pr.d + total_sales + x[:, 1::2]
        return out


def _fixed_point_step(game: CournotGame, x, gamma):
    return game.project_all(x - gamma * game.phi(x))


def solve_ne(
    params: CournotParams,
    tol: float = 1e-10,
    x0: Optional[np.ndarray] = None,
    seed: int = 0,
    max_iter: int = 1_000_000,
    residual_step: float = 0.01,
) -> np.ndarray:
    """Centralized projected pseudo-gradient iteration to the unique equilibrium.

    The step starts at 0.1 and is halved until the fixed-point residual
    decreases monotonically over a 50-iteration trial window. Iterates until
    ``vi_residual(x, residual_step) <= tol``; returns shape ``(n, 2L)``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    game = CournotGame(params)
    if x0 is None:
        x0 = game.random_feasible(np.random.default_rng(seed))
    x0 = game.project_all(x0)

    gamma = 0.1
    while True:
        x = x0.copy()
        prev = np.inf
        ok = True
        for _ in range(50):
            nxt = _fixed_point_step(game, x, gamma)
            r = float(np.linalg.norm(nxt - x))
            if r > prev * (1 + 1e-12) + 1e-14:
                ok = False
                break
            prev, x = r, nxt
        if ok or gamma < 1e-8:
            break
        gamma *= 0.5

    def residual(y):
        return float(np.linalg.norm(y - _fixed_point_step(game, y, residual_step)))

    x = x0.copy()
    res = residual(x)
    it = 0
    while res > tol:
        if it >= max_iter:
            raise NonConvergenceError(
                f"equilibrium solver hit {max_iter} iterations, residual {res:.3e}", res
            )
        x = _fixed_point_step(game, x, gamma)
        it += 1
        if it % 10 == 0 or res < 100 * tol:
            res = residual(x)
    return x
