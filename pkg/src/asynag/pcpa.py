"""Perturbed coordinate pseudo-gradient iteration, a centralized reference solver.

At iteration ``k`` only player ``s(k)`` moves:

    x_i(k+1) = P_i[x_i(k) - alpha_i(k) (F_i(x_i(k), xbar(k)) + eps_i(k))],
    alpha_i(k) = sum_{t = r_i(k)}^{r_i(k+1) - 1} rho(t),

with ``xbar(k)`` the exact mean action. Every run of the asynchronous engine
maps onto this form: serializing the players of each event and charging the
estimation error to ``eps`` reproduces the engine state (see
:func:`schedule_from_trace`).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .game import Game, project
from .stepsize import StepsizeSchedule, rho_value  # noqa: F401  (re-exported)
from .trace import EventTrace


class ContractViolation(ValueError):
    pass


@dataclass(frozen=True)
class Schedule:
    """Updating player ``players[k]`` and its counter increment ``increments[k]``."""

    n: int
    players: np.ndarray
    increments: np.ndarray

    def __post_init__(self):
        players = np.asarray(self.players, dtype=np.int64)
        inc = np.asarray(self.increments, dtype=np.int64)
        if players.shape != inc.shape or players.ndim != 1:
            raise ValueError("players and increments must be 1-d arrays of equal length")
        if players.size and (players.min() < 0 or players.max() >= self.n):
            raise ValueError("player index out of range")
        if inc.size and inc.min() < 1:
            raise ValueError("counter increments must be at least 1")
        object.__setattr__(self, "players", players)
        object.__setattr__(self, "increments", inc)

    def __len__(self) -> int:
        return int(self.players.size)

    def counters(self) -> np.ndarray:
        """``r(k)`` for ``k = 0..len``, shape ``(len + 1, n)``, starting from zero."""
        r = np.zeros((len(self) + 1, self.n), dtype=np.int64)
        for k, (i, d) in enumerate(zip(self.players, self.increments)):
            r[k + 1] = r[k]
            r[k + 1, i] += d
        return r


def round_robin(n: int, iterations: int, increment: int = 1) -> Schedule:
    players = np.arange(iterations) % n
    return Schedule(n, players, np.full(iterations, increment))


@dataclass
class ScheduleReport:
    sigma1: int
    sigma2: int
    violations: List[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_schedule(schedule: Schedule, horizon: Optional[int] = None,
                      sigma1: Optional[int] = None, sigma2: Optional[int] = None) -> ScheduleReport:
    """Tightest window ``sigma1`` and counter bound ``sigma2`` over the first ``horizon`` steps.

    ``sigma1`` is one more than the longest stretch in which some player is
    absent (stretches touching either end of the horizon included).
    ``sigma2`` bounds both the spread of the counters and each increment.
    Supplying bounds lists every place they are broken.
    """
    if horizon is None:
        horizon = len(schedule)
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    horizon = min(horizon, len(schedule))
    n = schedule.n
    players = schedule.players[:horizon]
    inc = schedule.increments[:horizon]
    violations = []

    longest = 0
    last = np.full(n, -1)
    for k, i in enumerate(players):
        run = k - last[i] - 1
        if sigma1 is not None and run >= sigma1:
            violations.append(f"player {i} absent from steps {last[i] + 1}..{k - 1}")
        longest = max(longest, run)
        last[i] = k
    for i in range(n):
        run = horizon - last[i] - 1
        if sigma1 is not None and run >= sigma1:
            violations.append(f"player {i} absent from steps {last[i] + 1}..{horizon - 1}")
        longest = max(longest, run)

    r = schedule.counters()[: horizon + 1]
    spread = r.max(axis=1) - r.min(axis=1)
    s2 = int(max(spread.max(), inc.max() if inc.size else 0))
    if sigma2 is not None:
        for k in np.flatnonzero(spread > sigma2):
            violations.append(f"counter spread {spread[k]} > {sigma2} at step {k}")
        for k in np.flatnonzero(inc > sigma2):
            violations.append(f"increment {inc[k]} > {sigma2} at step {k}")
    return ScheduleReport(int(longest + 1), s2, violations)


# --- perturbations ---------------------------------------------------------------


class Perturbation:
    """``eps_i(k)`` as a function of player, iteration and block size."""

    def __call__(self, i: int, k: int, p: int) -> np.ndarray:
        raise NotImplementedError


class ZeroPerturbation(Perturbation):
    def __call__(self, i, k, p):
        return np.zeros(p)


def _unit(direction, p):
    u = np.ones(p) if direction is None else np.asarray(direction, dtype=float)
    return u / np.linalg.norm(u)


@dataclass
class HarmonicPerturbation(Perturbation):
    """``eps = c / (1 + k) * u`` with ``u`` a fixed unit vector (all-ones direction by default)."""

    c: float = 1.0
    direction: Optional[Sequence[float]] = None

    def __call__(self, i, k, p):
        return self.c / (1.0 + k) * _unit(self.direction, p)


@dataclass
class ConstantPerturbation(Perturbation):
    c: float = 1.0
    direction: Optional[Sequence[float]] = None

    def __call__(self, i, k, p):
        return self.c * _unit(self.direction, p)


@dataclass
class TablePerturbation(Perturbation):
    """Explicit ``eps`` per iteration; iterations missing from the table get zero."""

    table: Dict[int, np.ndarray]

    def __call__(self, i, k, p):
        e = self.table.get(k)
        return np.zeros(p) if e is None else e


@dataclass
class SummabilityCertificate:
    """Finite-horizon evidence that ``sum_k rho(k) ||eps_i(k)||`` converges."""

    partial_sums: np.ndarray  # per player, over the whole run
    tail_increment: float  # largest per-player increase over the last tenth of the run
    tol: float

    @property
    def ok(self) -> bool:
        return self.tail_increment <= self.tol


@dataclass
class PCPAResult:
    x: np.ndarray
    steps: np.ndarray  # iteration indices of the stored snapshots
    X: np.ndarray  # snapshots, shape (len(steps), n, p)
    alpha: np.ndarray
    certificate: SummabilityCertificate
    schedule: Schedule

    def to_text(self) -> str:
        """Snapshots as JSON lines with columns ``[k, t_us, active, x, l, alpha]``."""
        r = self.schedule.counters()
        head = {"format": "asynag-pcpa", "version": 1, "n": int(self.x.shape[0]),
                "p": int(self.x.shape[1]), "columns": ["k", "t_us", "active", "x", "l", "alpha"]}
        lines = [json.dumps(head, sort_keys=True)]
        for k, X in zip(self.steps, self.X):
            k = int(k)
            act = [] if k == 0 else [int(self.schedule.players[k - 1])]
            alpha = [] if k == 0 else [float(self.alpha[k - 1])]
            lines.append(json.dumps([k - 1, k, act, X.tolist(), r[k].tolist(), alpha]))
        return "\n".join(lines) + "\n"


def pcpa_run(game: Game, schedule: Schedule, rho: StepsizeSchedule,
             perturb: Optional[Perturbation], iterations: int, x0,
             record_every: int = 1, tail_tol: float = 1e-3,
             callback: Optional[Callable[[int, np.ndarray], None]] = None) -> PCPAResult:
    """Iterate the perturbed coordinate update for ``iterations`` steps.

    ``x0`` must be feasible. Snapshots are kept every ``record_every`` steps
    (plus the first and last). ``callback(k, x)`` sees the state after step ``k``.
    """
    n, p = game.n, game.p
    if iterations > len(schedule):
        raise ValueError(f"schedule has {len(schedule)} steps, {iterations} requested")
    x = np.array(x0, dtype=float).reshape(n, p)
    if not game.feasible(x):
        raise ContractViolation("initial point is not feasible")
    perturb = perturb or ZeroPerturbation()
    r = np.zeros(n, dtype=np.int64)
    xsum = x.sum(axis=0)
    alphas = np.empty(iterations)
    weighted = np.zeros((iterations, n))
    steps = [0]
    snaps = [x.copy()]
    for k in range(iterations):
        i = int(schedule.players[k])
        d = int(schedule.increments[k])
        alpha = rho.window_sum(int(r[i]), int(r[i]) + d - 1)
        eps = perturb(i, k, p)
        xbar = xsum / n
        direction = game.grad(i, x[i], xbar) + eps
        new = project(game.action_set(i), x[i] - alpha * direction)
        xsum += new - x[i]
        x[i] = new
        r[i] += d
        alphas[k] = alpha
        weighted[k, i] = rho(k) * float(np.linalg.norm(eps))
        if callback is not None:
            callback(k, x)
        if (k + 1) % record_every == 0 or k + 1 == iterations:
            steps.append(k + 1)
            snaps.append(x.copy())
    partial = weighted.sum(axis=0)
    cut = int(0.9 * iterations)
    tail = float(weighted[cut:].sum(axis=0).max()) if iterations else 0.0
    cert = SummabilityCertificate(partial, tail, tail_tol)
    return PCPAResult(x, np.array(steps), np.array(snaps), alphas, cert, schedule)


def prefix_minima(seq) -> np.ndarray:
    """Indices where ``seq`` reaches a new running minimum."""
    seq = np.asarray(seq, dtype=float)
    best = np.minimum.accumulate(seq)
    hits = np.ones(seq.size, dtype=bool)
    hits[1:] = seq[1:] < best[:-1]
    return np.flatnonzero(hits)


# --- bridge from engine traces ---------------------------------------------------


def schedule_from_trace(trace: EventTrace, game: Game):
    """Serialize a trace into single-player steps and the matching perturbations.

    Each event contributes one step per active player, in the recorded order.
    The counter increment is the change of that player's ``l``. The step's
    perturbation is ``F_i(x_i, z_i) - F_i(x_i, xbar)`` with ``z_i`` the
    player's estimate at the event and ``xbar`` the exact mean just before the
    step, so the centralized iteration reproduces the engine's actions.

    Returns ``(schedule, perturbation, x0, event_of_step)``.
    """
    players: List[int] = []
    inc: List[int] = []
    table: Dict[int, np.ndarray] = {}
    event_of: List[int] = []
    frozen = bool(trace.header.get("frozen", False))
    if frozen:
        raise ValueError("frozen-action traces have no pseudo-gradient steps")
    for k, act in enumerate(trace.active):
        x = trace.X[k].copy()
        before, after = trace.L[k], trace.L[k + 1]
        for i in act:
            xbar = x.mean(axis=0)
            z = trace.Z[k + 1][i]
            step = len(players)
            table[step] = game.grad(i, x[i], z) - game.grad(i, x[i], xbar)
            players.append(i)
            inc.append(int(after[i] - before[i]))
            event_of.append(k)
            x[i] = trace.X[k + 1][i]
    sched = Schedule(trace.n, np.array(players, dtype=np.int64), np.array(inc, dtype=np.int64))
    return sched, TablePerturbation(table), trace.X[0].copy(), np.array(event_of)
