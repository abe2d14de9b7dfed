"""Deterministic discrete-event execution of the asynchronous push-sum NE seeker.

Each player keeps an action ``x_i``, push-sum mass ``v_i`` and weight ``y_i``,
an update counter ``l_i`` and running buffer sums of what its in-neighbors
sent. On activation it forms the aggregate estimate ``z_i = w_i / y_i`` from
its buffer, takes a projected pseudo-gradient step, re-injects the action
change into its mass, and broadcasts ``(v_i/d_i, y_i/d_i, l_i)`` to its
out-neighbors (itself included, with zero delay).

Simulated time is integer microseconds. Ordering at equal timestamps:
message deliveries first, then all activations at that instant form one
global event, then that event's broadcasts are enqueued.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .game import ConfigurationError, Game
from .stepsize import StepsizeSchedule
from .topology import Digraph, is_strongly_connected
from .trace import EventTrace

SCHEMES = ("aggressive", "nonadaptive", "synchronous")
Y_FLOOR = 1e-300


class InvariantViolation(RuntimeError):
    """A run broke a property the algorithm guarantees (e.g. weight underflow)."""


@dataclass(frozen=True)
class TimingModel:
    """Heterogeneous computation times and exponential link delays.

    Player ``i`` has mean computation time ``comp_base_ms + |nu_i|`` ms with
    ``nu_i ~ N(0, comp_sigma_ms^2)`` drawn once per run. Each link delay is
    exponential with mean ``delay_mean_ms``. Draws are clipped into the
    ``[min, max]`` windows (bounded activation gaps and delays) and rounded to
    whole microseconds.

    The default windows keep ``comp_max / comp_min`` and ``delay_max / comp_min``
    small. A player that activates repeatedly without hearing from its
    in-neighbors divides its weight by its out-degree each time, and its own
    action change enters its estimate scaled by ``1 / y_i``; wide windows let
    that gain grow large enough to destabilize constant-stepsize runs.
    """

    comp_base_ms: float = 1.0
    comp_sigma_ms: float = 5.0
    delay_mean_ms: float = 5.0
    comp_min_us: int = 5_000
    comp_max_us: int = 20_000
    delay_min_us: int = 100
    delay_max_us: int = 20_000
    truncate: bool = True

    def __post_init__(self):
        if not (0 < self.comp_min_us <= self.comp_max_us):
            raise ConfigurationError("need 0 < comp_min_us <= comp_max_us")
        if not (0 <= self.delay_min_us <= self.delay_max_us):
            raise ConfigurationError("need 0 <= delay_min_us <= delay_max_us")
        if self.delay_mean_ms <= 0 or self.comp_base_ms <= 0 or self.comp_sigma_ms < 0:
            raise ConfigurationError("timing means must be positive")

    def bounds(self) -> dict:
        """Activation-gap and delay bounds in microseconds."""
        return {
            "tau": self.delay_max_us,
            "tau_lo": self.comp_min_us,
            "tau_hi": self.comp_max_us,
        }


def timing_sample(timing: TimingModel, kind: str, mean_ms: float,
                  stream: np.random.Generator, size: int = 1) -> np.ndarray:
    """Draw ``size`` durations (integer microseconds) of ``kind`` 'comp' or 'delay'."""
    raw = stream.exponential(mean_ms * 1000.0, size=size)
    us = np.rint(raw).astype(np.int64)
    if timing.truncate:
        if kind == "comp":
            us = np.clip(us, timing.comp_min_us, timing.comp_max_us)
        elif kind == "delay":
            us = np.clip(us, timing.delay_min_us, timing.delay_max_us)
        else:
            raise ValueError(f"unknown duration kind {kind!r}")
    return us


class _Stream:
    __slots__ = ("timing", "kind", "mean_ms", "rng", "buf", "pos")

    def __init__(self, timing, kind, mean_ms, rng):
        self.timing, self.kind, self.mean_ms, self.rng = timing, kind, mean_ms, rng
        self.buf = ()
        self.pos = 0

    def next(self) -> int:
        if self.pos >= len(self.buf):
            self.buf = timing_sample(self.timing, self.kind, self.mean_ms, self.rng, 512).tolist()
            self.pos = 0
        v = self.buf[self.pos]
        self.pos += 1
        return v


class TimingSampler:
    """Per-run random durations: one computation stream and one delay stream per player."""

    def __init__(self, timing: TimingModel, n: int, seed_seq: np.random.SeedSequence):
        mu_ss, comp_ss, delay_ss = seed_seq.spawn(3)
        nu = np.random.default_rng(mu_ss).normal(0.0, timing.comp_sigma_ms, size=n)
        self.means_ms = timing.comp_base_ms + np.abs(nu)
        self._comp = [_Stream(timing, "comp", m, np.random.default_rng(s))
                      for m, s in zip(self.means_ms, comp_ss.spawn(n))]
        self._delay = [_Stream(timing, "delay", timing.delay_mean_ms, np.random.default_rng(s))
                       for s in delay_ss.spawn(n)]

    def computation(self, i: int) -> int:
        return self._comp[i].next()

    def delay(self, sender: int, receiver: int) -> int:
        return self._delay[sender].next()


class ScriptedTiming:
    """Hand-written activation times and delays, for constructing exact scenarios.

    ``activations[i]`` lists player ``i``'s activation times (strictly increasing);
    ``delays`` maps ``(sender, receiver)`` to a fixed delay or a list consumed
    in send order. Missing links default to ``default_delay``.
    """

    def __init__(self, activations: Sequence[Sequence[int]], delays=None, default_delay: int = 0):
        self.activations = [list(a) for a in activations]
        self.delays = dict(delays or {})
        self.default_delay = default_delay
        self._pos = [0] * len(self.activations)
        self._dpos: Dict = {}

    def first(self, i):
        return self.activations[i][0] if self.activations[i] else math.inf

    def after(self, i, t):
        acts = self.activations[i]
        while self._pos[i] < len(acts) and acts[self._pos[i]] <= t:
            self._pos[i] += 1
        return acts[self._pos[i]] if self._pos[i] < len(acts) else math.inf

    def delay(self, sender, receiver):
        d = self.delays.get((sender, receiver), self.default_delay)
        if isinstance(d, (list, tuple)):
            k = self._dpos.get((sender, receiver), 0)
            self._dpos[(sender, receiver)] = k + 1
            return d[min(k, len(d) - 1)]
        return d


@dataclass
class SimulationResult:
    x: np.ndarray
    z: np.ndarray
    y: np.ndarray
    l: np.ndarray
    events: int
    activations: int
    t_end: int
    stopped_early: bool
    skipped: List[tuple] = field(default_factory=list)
    trace: Optional[EventTrace] = None
    comp_means_ms: Optional[np.ndarray] = None


def run_simulation(
    game: Game,
    graph: Digraph,
    timing,
    rho: StepsizeSchedule,
    scheme: str = "aggressive",
    horizon: int = 1_000_000,
    seed: int = 0,
    *,
    x0: Optional[np.ndarray] = None,
    record: bool = False,
    freeze_actions: bool = False,
    observer: Optional[Callable] = None,
    sample_times: Optional[Sequence[int]] = None,
    stop_eps: Optional[float] = None,
    stop_window: int = 50,
    max_events: Optional[int] = None,
    header: Optional[dict] = None,
) -> SimulationResult:
    """Run the asynchronous algorithm until simulated time ``horizon`` (µs).

    ``timing`` is a :class:`TimingModel` (randomized, seeded by ``seed``) or a
    :class:`ScriptedTiming`. With ``record=True`` the full :class:`EventTrace`
    is kept. ``observer(t_sample, k, x, z)`` is called for each entry of
    ``sample_times`` with the state after every event at or before that time.
    ``stop_eps`` enables the early stop: every player's last ``stop_window``
    activations moved ``x_i`` and ``z_i`` by at most ``stop_eps``.
    """
    if scheme not in SCHEMES:
        raise ConfigurationError(f"unknown scheme {scheme!r}")
    if horizon <= 0:
        raise ConfigurationError("horizon must be positive")
    if graph.n != game.n:
        raise ConfigurationError("graph and game disagree on the number of players")
    if not is_strongly_connected(graph):
        raise ConfigurationError("communication graph is not strongly connected")

    n, p = game.n, game.p
    out = graph.out
    deg = [len(o) for o in out]
    root = np.random.SeedSequence(seed)
    init_ss, timing_ss = root.spawn(2)

    scripted = isinstance(timing, ScriptedTiming)
    sampler = None if scripted else TimingSampler(timing, n, timing_ss)
    delay_of = timing.delay if scripted else sampler.delay

    if x0 is None:
        X = game.random_feasible(np.random.default_rng(init_ss))
    else:
        X = game.project_all(np.array(x0, dtype=float).reshape(n, p))
    V = X.copy()
    Y = np.ones(n)
    L = np.zeros(n, dtype=np.int64)
    Z = X.copy()
    BV = np.zeros((n, p))
    BY = np.zeros(n)
    BL = np.full(n, -1, dtype=np.int64)
    BC = np.zeros(n, dtype=np.int64)

    trace = None
    pending: List[list] = [[] for _ in range(n)]
    if record:
        head = dict(header or {})
        head.update(scheme=scheme, seed=seed, rho=rho.to_dict(), horizon=int(horizon),
                    frozen=bool(freeze_actions))
        if not scripted:
            head["timing"] = timing.bounds()
        trace = EventTrace(n, p, out, head)

        def snapshot():
            trace.X.append(X.copy())
            trace.V.append(V.copy())
            trace.Y.append(Y.copy())
            trace.L.append(L.copy())
            trace.Z.append(Z.copy())

        snapshot()

    heap: list = []
    seq = 0

    def broadcast(j, t, k):
        nonlocal seq
        vp = V[j] / deg[j]
        yp = Y[j] / deg[j]
        lp = int(L[j])
        for r in out[j]:
            dt = 0 if r == j else delay_of(j, r)
            heapq.heappush(heap, (t + dt, seq, j, r, vp, yp, lp, k))
            seq += 1
        return

    for j in range(n):
        broadcast(j, 0, -1)

    if scheme == "synchronous":
        if scripted:
            ticks = timing.activations[0]
            tick_pos = 0
        if scripted:
            next_tick = ticks[0]
        else:
            # same barrier as later rounds: the initial broadcast must land first
            longest = max(h[0] for h in heap)
            next_tick = max(sampler.computation(i) for i in range(n)) + longest
        next_act = None
    else:
        if scripted:
            next_act = np.array([timing.first(i) for i in range(n)], dtype=float)
        else:
            next_act = np.array([sampler.computation(i) for i in range(n)], dtype=float)

    samples = list(sample_times) if sample_times is not None else []
    s_idx = 0
    quiet = np.zeros(n, dtype=np.int64)
    k = 0
    activations = 0
    skipped = []
    stopped = False
    t_last = 0

    while True:
        t = next_tick if scheme == "synchronous" else float(next_act.min())
        if t > horizon or math.isinf(t):
            break
        if max_events is not None and k >= max_events:
            break
        t = int(t)
        while s_idx < len(samples) and samples[s_idx] < t:
            observer(samples[s_idx], k, X, Z)
            s_idx += 1

        while heap and heap[0][0] <= t:
            _, _, j, r, vp, yp, lp, ks = heapq.heappop(heap)
            BV[r] += vp
            BY[r] += yp
            if lp > BL[r]:
                BL[r] = lp
            BC[r] += 1
            if record:
                pending[r].append((j, r, ks))

        if scheme == "synchronous":
            active = list(range(n))
        else:
            active = np.flatnonzero(next_act == t).tolist()

        done = []
        alphas = []
        consumed = []
        for i in active:
            if BC[i] == 0:
                skipped.append((k, i))
                continue
            y = BY[i]
            if not y > Y_FLOOR:
                raise InvariantViolation(f"weight of player {i} fell to {y!r} at event {k}")
            w = BV[i].copy()
            z = w / y
            li = int(L[i])
            if scheme == "nonadaptive":
                alpha = rho(li)
                lnew = li + 1
            else:
                lmax = max(int(BL[i]), li)
                alpha = rho.window_sum(li, lmax)
                lnew = lmax + 1
            xold = X[i].copy()
            xnew = xold if freeze_actions else game.local_step(i, xold, z, alpha)
            if stop_eps is not None:
                small = (np.max(np.abs(xnew - xold)) <= stop_eps
                         and np.max(np.abs(z - Z[i])) <= stop_eps)
                quiet[i] = quiet[i] + 1 if small else 0
            V[i] = w + (xnew - xold)
            X[i] = xnew
            Y[i] = y
            Z[i] = z
            L[i] = lnew
            BV[i] = 0.0
            BY[i] = 0.0
            BL[i] = -1
            BC[i] = 0
            done.append(i)
            alphas.append(alpha)
            if record:
                consumed.extend(pending[i])
                pending[i] = []

        for i in done:
            broadcast(i, t, k)
        activations += len(done)

        if record:
            trace.times.append(t)
            trace.active.append(tuple(done))
            trace.alpha.append(tuple(alphas))
            trace.consumed.append(consumed)
            snapshot()

        if scheme == "synchronous":
            if scripted:
                tick_pos += 1
                next_tick = ticks[tick_pos] if tick_pos < len(ticks) else math.inf
            else:
                # barrier: slowest computation plus slowest message of the round
                longest = max(h[0] for h in heap) - t if heap else 0
                next_tick = t + max(sampler.computation(i) for i in range(n)) + longest
        else:
            for i in active:
                next_act[i] = (timing.after(i, t) if scripted else t + sampler.computation(i))

        k += 1
        t_last = t
        if stop_eps is not None and quiet.min() >= stop_window:
            stopped = True
            break

    while s_idx < len(samples) and samples[s_idx] <= horizon:
        observer(samples[s_idx], k, X, Z)
        s_idx += 1

    if record:
        for r in range(n):
            trace.pending.extend(pending[r])
        trace.pending.extend((h[2], h[3], h[7]) for h in heap)
        trace.pending.sort()

    return SimulationResult(
        x=X, z=Z, y=Y, l=L, events=k, activations=activations, t_end=t_last,
        stopped_early=stopped, skipped=skipped, trace=trace,
        comp_means_ms=None if scripted else sampler.means_ms,
    )


def synchronous_push_sum(game: Optional[Game], graph: Digraph, x0, rho: StepsizeSchedule,
                         rounds: int, freeze_actions: bool = False):
    """Matrix-form synchronous reference: ``W = A V``, ``y = A y``, ``z = W / y``.

    ``x0`` has shape ``(n, p)``; ``game`` may be ``None`` with frozen actions.
    Returns lists ``(X, Z, Y)`` with the state after each round.
    """
    if game is None and not freeze_actions:
        raise ValueError("a game is needed unless actions are frozen")
    n = graph.n
    A = np.zeros((n, n))
    for j, o in enumerate(graph.out):
        for r in o:
            A[r, j] = 1.0 / len(o)
    X = np.array(x0, dtype=float).reshape(n, -1)
    V = X.copy()
    y = np.ones(n)
    xs, zs, ys = [], [], []
    for k in range(rounds):
        W = A @ V
        y = A @ y
        Z = W / y[:, None]
        alpha = rho.window_sum(k, k)
        Xn = X.copy()
        if not freeze_actions:
            for i in range(n):
                Xn[i] = game.local_step(i, X[i], Z[i], alpha)
        V = W + (Xn - X)
        X = Xn
        xs.append(X.copy())
        zs.append(Z.copy())
        ys.append(y.copy())
    return xs, zs, ys
