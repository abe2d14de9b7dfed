"""Directed communication graphs and the activation/staleness bound constants.

Players are 0-based internally; text export and the ``edges`` constructor
argument of :func:`from_edges` use 1-based labels. Every node is its own in-
and out-neighbor.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Tuple

from .game import ConfigurationError

KINDS = ("cycle", "star", "log", "complete")


@dataclass(frozen=True)
class Digraph:
    n: int
    out: Tuple[Tuple[int, ...], ...]  # sorted out-neighbors, self included

    @property
    def inn(self) -> Tuple[Tuple[int, ...], ...]:
        rows = [[] for _ in range(self.n)]
        for i, targets in enumerate(self.out):
            for j in targets:
                rows[j].append(i)
        return tuple(tuple(sorted(r)) for r in rows)

    def out_degree(self, i: int) -> int:
        return len(self.out[i])

    @property
    def degrees(self) -> Tuple[int, ...]:
        return tuple(len(o) for o in self.out)

    def edges(self, include_self: bool = False):
        for i, targets in enumerate(self.out):
            for j in targets:
                if include_self or i != j:
                    yield i, j

    def to_edge_list(self) -> str:
        return "".join(f"{i + 1} {j + 1}\n" for i, j in self.edges())

    def save(self, path) -> None:
        Path(path).write_text(self.to_edge_list())

    @classmethod
    def from_edge_list(cls, text: str, n: int | None = None) -> "Digraph":
        pairs = []
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"line {lineno}: expected 'i j'")
            pairs.append((int(parts[0]), int(parts[1])))
        if n is None:
            n = max([max(p) for p in pairs], default=1)
        return from_edges(n, pairs)


def from_edges(n: int, edges: Iterable[Tuple[int, int]]) -> Digraph:
    """Graph from 1-based ``(sender, receiver)`` pairs; self-loops are added."""
    if n < 1:
        raise ConfigurationError("graph needs at least one node")
    out = [{i} for i in range(n)]
    for i, j in edges:
        if not (1 <= i <= n and 1 <= j <= n):
            raise ConfigurationError(f"edge ({i}, {j}) outside 1..{n}")
        out[i - 1].add(j - 1)
    return Digraph(n, tuple(tuple(sorted(s)) for s in out))


def make_topology(kind: str, n: int) -> Digraph:
    if kind not in KINDS:
        raise ConfigurationError(f"unknown topology {kind!r}; choose from {', '.join(KINDS)}")
    if n < 1:
        raise ConfigurationError("graph needs at least one node")
    edges = []
    if n > 1:
        if kind == "cycle":
            edges = [(i, i % n + 1) for i in range(1, n + 1)]
        elif kind == "star":
            edges = [(1, j) for j in range(2, n + 1)] + [(j, 1) for j in range(2, n + 1)]
        elif kind == "complete":
            edges = [(i, j) for i in range(1, n + 1) for j in range(1, n + 1) if i != j]
        else:
            # 0-based i sends to label mod(2^j + i, n) + 1, 0 <= j < log2(n);
            # colliding targets merge
            for i in range(n):
                for j in range(math.ceil(math.log2(n))):
                    t = (2**j + i) % n + 1
                    if t != i + 1:
                        edges.append((i + 1, t))
    return from_edges(n, edges)


def _reach(adj, start):
    seen = {start}
    todo = deque([start])
    while todo:
        u = todo.popleft()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                todo.append(v)
    return seen


def is_strongly_connected(g: Digraph) -> bool:
    if g.n <= 1:
        return True
    return len(_reach(g.out, 0)) == g.n and len(_reach(g.inn, 0)) == g.n


def delay_constants(n: int, tau: float, tau_lo: float, tau_hi: float) -> Tuple[int, int, int]:
    """Event-count bounds ``(b1, b2, b)`` for activation gaps and message staleness.

    ``b1 = (n-1) floor(tau_hi/tau_lo) + 1``, ``b2 = n floor(tau/tau_lo) + 1``,
    ``b = b1 + b2``.
    """
    if not (tau > 0 and 0 < tau_lo <= tau_hi < math.inf):
        raise ConfigurationError("need tau > 0 and 0 < tau_lo <= tau_hi < inf")
    b1 = (n - 1) * math.floor(tau_hi / tau_lo) + 1
    b2 = n * math.floor(tau / tau_lo) + 1
    return b1, b2, b1 + b2
