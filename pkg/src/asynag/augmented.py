"""Augmented-network reformulation of an asynchronous run and its replay.

Every player ``i`` gets ``b`` virtual nodes ``i^(1), ..., i^(b)`` holding mass
that is in flight towards ``i``: mass at ``i^(u)`` is absorbed by ``i`` after
``u`` more global events. Row/column ``u * n + i`` is ``i^(u)`` (``u = 0`` is
the real player). Iterating

    W(k+1) = A(k) V(k),   y(k+1) = A(k) y(k),   z_i(k+1) = w_i(k+1) / y_i(k+1),
    x_i(k+1) = P[x_i(k) - alpha_i(k) F_i(x_i(k), z_i(k+1))]  (i active at k),
    V(k+1) = W(k+1) + X(k+1) - X(k)

with column-stochastic ``A(k)`` reproduces the event-driven run exactly.

``A(k)`` routes the broadcasts made at event ``k - 1`` (the initial broadcast
for ``k = 0``). A broadcast of ``j`` puts ``1/d_j`` on ``(j, j)`` for its own
share, which rests at ``j`` until ``j`` next activates, and ``1/d_j`` on row
``u * n + r`` for the copy to ``r``, where ``u = c - k`` and ``c`` is the event
that consumes it (``c = K`` for copies still pending when the trace ends).
Every other real column is the identity and virtual columns shift one step
towards their player.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from .game import Game
from .topology import delay_constants
from .trace import EventTrace


class AugmentedConstructionError(ValueError):
    """A message needs more virtual hops than the chosen ``b`` allows."""


@dataclass
class AugmentedState:
    V: np.ndarray  # (n_tilde, p) mass
    W: Optional[np.ndarray]  # (n_tilde, p) mixed mass, None at k = 0
    y: np.ndarray  # (n_tilde,) weights
    x: np.ndarray  # (n, p) actions
    z: np.ndarray  # (n, p) last estimate of every real player


def _routing(trace: EventTrace):
    """``routes[k]`` lists ``(sender, receiver, u)`` for copies placed by ``A(k)``."""
    K = trace.num_events
    table = trace.messages()
    routes: List[List[Tuple[int, int, int]]] = [[] for _ in range(K)]
    for j, r, s in trace.sent_messages():
        k = s + 1
        if k >= K:
            continue
        c = table.get((j, r, s))
        if c is None:
            c = K
        routes[k].append((j, r, c - k))
    return routes


def compute_b_from_trace(trace: EventTrace) -> int:
    """Smallest number of virtual layers that carries every copy of the run.

    Own shares never need a virtual node. Pending copies count as consumed at
    the end of the trace. The result is at least 1.
    """
    b = 0
    for rows in _routing(trace):
        for j, r, u in rows:
            if j != r and u > b:
                b = u
    return max(b, 1)


def build_augmented_matrix(trace: EventTrace, k: int, b: int, _routes=None) -> np.ndarray:
    """Dense column-stochastic ``A(k)`` of size ``(b+1) n``."""
    if not 0 <= k < trace.num_events:
        raise IndexError(f"event {k} outside trace of {trace.num_events} events")
    if b < 0:
        raise ValueError("b must be nonnegative")
    routes = _routes if _routes is not None else _routing(trace)
    return _matrix(trace.n, trace.degrees, routes[k], b)


def _matrix(n: int, deg, rows, b: int) -> np.ndarray:
    size = (b + 1) * n
    A = np.zeros((size, size))
    broadcasting = set()
    for j, r, u in rows:
        broadcasting.add(j)
        if j == r:
            A[j, j] = 1.0 / deg[j]
            continue
        if u > b:
            raise AugmentedConstructionError(
                f"message {j}->{r} needs {u} virtual hops but b={b}"
            )
        A[u * n + r, j] = 1.0 / deg[j]
    for j in range(n):
        if j not in broadcasting:
            A[j, j] = 1.0
    for col in range(n, size):
        A[col - n, col] = 1.0
    return A


def augmented_matrices(trace: EventTrace, b: Optional[int] = None) -> Iterator[np.ndarray]:
    b = compute_b_from_trace(trace) if b is None else b
    routes = _routing(trace)
    deg = trace.degrees
    for k in range(trace.num_events):
        yield _matrix(trace.n, deg, routes[k], b)


def _frozen(trace: EventTrace) -> bool:
    return bool(trace.header.get("frozen", False))


def _replay(trace: EventTrace, game: Optional[Game], b: int) -> Iterator[AugmentedState]:
    n, p = trace.n, trace.p
    size = (b + 1) * n
    x = trace.X[0].copy()
    V = np.zeros((size, p))
    V[:n] = x
    y = np.zeros(size)
    y[:n] = 1.0
    z = trace.Z[0].copy()
    frozen = _frozen(trace)
    if game is None and not frozen:
        raise ValueError("a game is needed to replay a trace with live actions")
    yield AugmentedState(V.copy(), None, y.copy(), x.copy(), z.copy())
    for k, A in enumerate(augmented_matrices(trace, b)):
        W = A @ V
        y = A @ y
        xn = x.copy()
        for i, alpha in zip(trace.active[k], trace.alpha[k]):
            if not y[i] > 0:
                raise ArithmeticError(f"augmented weight of player {i} is {y[i]!r} at event {k}")
            z[i] = W[i] / y[i]
            if not frozen:
                xn[i] = game.local_step(i, x[i], z[i], alpha)
        V = W.copy()
        V[:n] += xn - x
        x = xn
        yield AugmentedState(V, W, y.copy(), x.copy(), z.copy())


def replay(trace: EventTrace, game: Optional[Game] = None, b: Optional[int] = None) -> List[AugmentedState]:
    """Run the augmented synchronous iteration over a recorded trace.

    Stepsizes come from the trace. ``game`` may be omitted for frozen-action
    traces. Entry ``k`` is the state before event ``k``.
    """
    if trace.num_events == 0:
        raise ValueError("trace has no events")
    b = compute_b_from_trace(trace) if b is None else b
    return list(_replay(trace, game, b))


@dataclass
class EquivalenceReport:
    events: int
    b: int
    max_dev: Dict[str, float]
    first_divergence: Optional[Tuple[str, int]]
    mass_error: float
    tol: float

    @property
    def ok(self) -> bool:
        return self.first_divergence is None

    def to_text(self) -> str:
        lines = [f"augmented replay: {self.events} events, b = {self.b}, tol = {self.tol:g}"]
        for key in ("x", "z", "y"):
            lines.append(f"  max deviation {key}: {self.max_dev[key]:.3e}")
        lines.append(f"  mass identity error: {self.mass_error:.3e}")
        if self.first_divergence is None:
            lines.append("  result: PASS")
        else:
            q, k = self.first_divergence
            lines.append(f"  result: FAIL (first divergence in {q} at event {k})")
        return "\n".join(lines)


def _rel(a, b) -> float:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - b) / np.maximum(1.0, np.abs(b))))


def equivalence_report(trace: EventTrace, game: Optional[Game] = None,
                       tol: float = 1e-12, b: Optional[int] = None) -> EquivalenceReport:
    """Compare the replay with the engine's recorded states.

    ``x`` is compared for every player, ``z`` and ``y`` for the players active
    at each event (idle players keep their last engine values, which the
    augmented system does not track). Deviations are relative to ``max(1, |value|)``.
    """
    b = compute_b_from_trace(trace) if b is None else b
    dev = {"x": 0.0, "z": 0.0, "y": 0.0}
    first = None
    mass = 0.0
    for k, st in enumerate(_replay(trace, game, b)):
        checks = {"x": _rel(st.x, trace.X[k])}
        if k > 0:
            act = list(trace.active[k - 1])
            checks["z"] = _rel(st.z[act], trace.Z[k][act])
            checks["y"] = _rel(st.y[act], trace.Y[k][act])
        for q, v in checks.items():
            dev[q] = max(dev[q], v)
            if first is None and not v <= tol:
                first = (q, k - 1)
        scale = max(1.0, float(np.abs(st.x).sum()))
        mass = max(mass, float(np.max(np.abs(st.V.sum(0) - st.x.sum(0)))) / scale)
    return EquivalenceReport(trace.num_events, b, dev, first, mass, tol)


def column_sum_error(A: np.ndarray) -> float:
    return float(np.max(np.abs(A.sum(axis=0) - 1.0)))


def check_matrices(trace: EventTrace, b: Optional[int] = None) -> Tuple[float, bool]:
    """Worst column-sum error over all ``A(k)`` and whether real diagonals stay positive."""
    n = trace.n
    worst = 0.0
    diag = True
    for A in augmented_matrices(trace, b):
        worst = max(worst, column_sum_error(A))
        diag = diag and bool(np.all(np.diag(A)[:n] > 0))
    return worst, diag


def consensus_residual(trace: EventTrace, k: int) -> float:
    """``max_i ||z_i(k+1) - xbar(k)||`` with ``xbar(k)`` the mean action before event ``k``."""
    xbar = trace.X[k].mean(axis=0)
    return float(np.max(np.linalg.norm(trace.Z[k + 1] - xbar, axis=1)))


def weight_identity_error(trace: EventTrace, b: Optional[int] = None) -> float:
    """Largest gap between the replayed weights and ``Phi(k, k) y(0)``.

    ``Phi`` is accumulated as an explicit matrix product, so this also checks
    that the step-by-step weight recursion never drifts from the product form.
    """
    b = compute_b_from_trace(trace) if b is None else b
    n = trace.n
    size = (b + 1) * n
    y0 = np.zeros(size)
    y0[:n] = 1.0
    phi = np.eye(size)
    y = y0.copy()
    worst = 0.0
    for A in augmented_matrices(trace, b):
        phi = A @ phi
        y = A @ y
        worst = max(worst, float(np.max(np.abs(phi @ y0 - y))))
    return worst


def mixing_constants(n: int, b: int) -> Tuple[float, float]:
    """``(B', lambda)`` of the geometric mixing bound for products of ``A(k)``."""
    nb = n * b
    q = float(n) ** (-nb)
    return 4.0 * (1.0 + float(n) ** nb), (1.0 - q) ** (1.0 / nb)


def product_spread(trace: EventTrace, start: int = 0, b: Optional[int] = None) -> np.ndarray:
    """Spread of ``Phi(k, k - start)`` across columns, per real row, for ``k >= start``.

    Entry ``t`` is ``max_i (max_j Phi_ij - min_j Phi_ij)`` over real rows ``i``
    after multiplying ``A(start), ..., A(start + t)``. When the product tends
    to ``phi 1^T`` this bounds ``2 max |Phi_ij - phi_i|`` from below and above
    up to a factor 2.
    """
    b = compute_b_from_trace(trace) if b is None else b
    n = trace.n
    mats = list(augmented_matrices(trace, b))[start:]
    phi = None
    out = []
    for A in mats:
        phi = A if phi is None else A @ phi
        real = phi[:n]
        out.append(float(np.max(real.max(axis=1) - real.min(axis=1))))
    return np.array(out)


@dataclass
class DelayBoundReport:
    b1: int
    b2: int
    b: int
    nb: int
    activation_gap: int
    staleness: int
    counter_spread: int
    counter_jump: int
    counters_monotone: bool
    union_connected: bool

    def _rows(self):
        return [
            ("activation window", self.activation_gap, self.b1),
            ("message staleness", self.staleness, self.b),
            ("counter spread", self.counter_spread, self.nb),
            ("counter jump", self.counter_jump, self.nb + 1),
        ]

    @property
    def ok(self) -> bool:
        return (all(got <= bound for _, got, bound in self._rows())
                and self.counters_monotone and self.union_connected)

    def to_text(self) -> str:
        lines = [f"  {name}: {got} <= {bound} {'ok' if got <= bound else 'VIOLATED'}"
                 for name, got, bound in self._rows()]
        lines.append(f"  counters nondecreasing: {'ok' if self.counters_monotone else 'VIOLATED'}")
        lines.append(f"  windowed union strongly connected: {'ok' if self.union_connected else 'VIOLATED'}")
        return "\n".join(lines)


def _union_connected(trace: EventTrace, width: int) -> bool:
    """Activated edges over any ``width + 1`` consecutive events form a strongly connected graph."""
    n = trace.n
    K = trace.num_events
    if n == 1 or K <= width:
        return True
    out = trace.out
    # count how often each player activates inside the sliding window
    counts = np.zeros(n, dtype=np.int64)
    for k in range(width + 1):
        for i in trace.active[k]:
            counts[i] += 1
    for k0 in range(K - width):
        if k0 > 0:
            for i in trace.active[k0 - 1]:
                counts[i] -= 1
            for i in trace.active[k0 + width]:
                counts[i] += 1
        live = [tuple(j for j in out[i] if j != i) if counts[i] else () for i in range(n)]
        if not _strong(live, n):
            return False
    return True


def _strong(adj, n) -> bool:
    def reach(a):
        seen = {0}
        stack = [0]
        while stack:
            u = stack.pop()
            for v in a[u]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        return len(seen) == n

    rev = [[] for _ in range(n)]
    for i, row in enumerate(adj):
        for j in row:
            rev[j].append(i)
    return reach(adj) and reach(rev)


def check_delay_bounds(trace: EventTrace, tau: Optional[float] = None,
                       tau_lo: Optional[float] = None, tau_hi: Optional[float] = None) -> DelayBoundReport:
    """Measure activation windows, staleness and counter spreads against their event-count bounds.

    Bounds default to the timing window stored in the trace header.
    """
    timing = trace.header.get("timing", {})
    tau = timing.get("tau") if tau is None else tau
    tau_lo = timing.get("tau_lo") if tau_lo is None else tau_lo
    tau_hi = timing.get("tau_hi") if tau_hi is None else tau_hi
    if None in (tau, tau_lo, tau_hi):
        raise ValueError("timing bounds missing from trace header")
    n = trace.n
    b1, b2, b = delay_constants(n, tau, tau_lo, tau_hi)
    K = trace.num_events

    # every window of events (k, k + b1] must contain an activation of each player
    last = np.zeros(n, dtype=np.int64)
    gap = 0
    for k, act in enumerate(trace.active):
        for i in act:
            gap = max(gap, k - int(last[i]))
            last[i] = k
    for i in range(n):
        # no activation seen after last[i]; the true gap is at least K - last[i]
        if K - int(last[i]) > b1:
            gap = max(gap, K - int(last[i]))

    stale = 0
    for (j, r, s), c in trace.messages().items():
        if c is not None and j != r:
            stale = max(stale, c - s)

    L = np.array(trace.L)
    spread = int((L.max(axis=1) - L.min(axis=1)).max())
    steps = np.diff(L, axis=0)
    jump = int(steps.max()) if len(steps) else 0
    monotone = bool(len(steps) == 0 or steps.min() >= 0)
    return DelayBoundReport(b1, b2, b, n * b, gap, stale, spread, jump, monotone,
                            _union_connected(trace, b1))


def conservation_errors(trace: EventTrace) -> Tuple[float, float]:
    """Worst relative mass error and absolute weight error over all trace states.

    The mass of a state is the sum of the payloads ``v_j / d_j`` of every copy
    sent but not yet consumed (in flight or waiting in a buffer, own shares
    included); it must equal ``sum_i x_i``. The weights ``y_j / d_j`` of the
    same copies must add up to ``n``.
    """
    n, p = trace.n, trace.p
    S = trace.num_events + 1
    dv = np.zeros((S + 1, p))
    dy = np.zeros(S + 1)
    deg = trace.degrees
    table = trace.messages()
    for (j, r, s), c in table.items():
        src = s + 1
        vp = trace.V[src][j] / deg[j]
        yp = trace.Y[src][j] / deg[j]
        stop = S if c is None else c + 1
        dv[src] += vp
        dv[stop] -= vp
        dy[src] += yp
        dy[stop] -= yp
    mass = np.cumsum(dv[:S], axis=0)
    weight = np.cumsum(dy[:S])
    xs = np.array([x.sum(axis=0) for x in trace.X])
    scale = np.maximum(1.0, np.abs(xs).max(axis=1))
    m_err = float(np.max(np.abs(mass - xs).max(axis=1) / scale))
    w_err = float(np.max(np.abs(weight - n)))
    return m_err, w_err


def idle_consistency_errors(trace: EventTrace) -> List[str]:
    """Players not active at an event must keep ``x, v, y, l`` unchanged."""
    bad = []
    for k, act in enumerate(trace.active):
        idle = [i for i in range(trace.n) if i not in act]
        for name, seq in (("x", trace.X), ("v", trace.V), ("y", trace.Y), ("l", trace.L)):
            if not np.array_equal(seq[k][idle], seq[k + 1][idle]):
                bad.append(f"{name} of an idle player changed at event {k}")
    return bad


def weight_lower_bound(n: int, b: int) -> float:
    return math.pow(n, -n * b)
