"""Event traces of asynchronous runs and their newline-delimited text form.

File layout (one JSON value per line):

* line 1 is a header object (``format``, ``version``, graph edge list, scheme,
  stepsize, timing bounds, seed, optional Cournot instance record);
* then one array per global event, columns in this fixed order::

      [k, t_us, active, x, v, y, l, alpha, z, consumed]

  ``k = -1`` is the initial state. ``x, v, z`` are ``n x p`` nested lists and
  ``y, l`` length-``n`` lists, all taken right after the event. ``alpha`` is
  aligned with ``active``. ``consumed`` lists ``[sender, receiver, send_event]``
  for every message absorbed at this event (``send_event = -1`` is the
  initial broadcast).
* a final ``["pending", [[sender, receiver, send_event], ...]]`` line lists
  messages never consumed before the horizon.

Players are 0-based in the file. Floats round-trip exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

FORMAT_TAG = "asynag-trace"
FORMAT_VERSION = 1


class TraceFormatError(ValueError):
    def __init__(self, message, lineno=None):
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)
        self.lineno = lineno


@dataclass
class EventTrace:
    n: int
    p: int
    out: Tuple[Tuple[int, ...], ...]
    header: dict
    times: List[int] = field(default_factory=list)
    active: List[Tuple[int, ...]] = field(default_factory=list)
    alpha: List[Tuple[float, ...]] = field(default_factory=list)
    consumed: List[List[Tuple[int, int, int]]] = field(default_factory=list)
    # index 0 is the initial state, index k+1 the state after event k
    X: List[np.ndarray] = field(default_factory=list)
    V: List[np.ndarray] = field(default_factory=list)
    Y: List[np.ndarray] = field(default_factory=list)
    L: List[np.ndarray] = field(default_factory=list)
    Z: List[np.ndarray] = field(default_factory=list)
    pending: List[Tuple[int, int, int]] = field(default_factory=list)

    @property
    def num_events(self) -> int:
        return len(self.times)

    @property
    def degrees(self) -> np.ndarray:
        return np.array([len(o) for o in self.out])

    def state(self, k: int):
        """``(x, v, y, l, z)`` just before event ``k`` (``k = num_events`` gives the end)."""
        return self.X[k], self.V[k], self.Y[k], self.L[k], self.Z[k]

    def messages(self) -> Dict[Tuple[int, int, int], Optional[int]]:
        """Map ``(sender, receiver, send_event)`` to the consuming event, ``None`` if pending."""
        table: Dict[Tuple[int, int, int], Optional[int]] = {}
        for k, items in enumerate(self.consumed):
            for key in items:
                table[tuple(key)] = k
        for key in self.pending:
            table[tuple(key)] = None
        return table

    def sent_messages(self):
        """Yield ``(sender, receiver, send_event)`` for every broadcast in the run."""
        for j in range(self.n):
            for r in self.out[j]:
                yield j, r, -1
        for k, act in enumerate(self.active):
            for j in act:
                for r in self.out[j]:
                    yield j, r, k

    # --- text form -----------------------------------------------------------

    def _row(self, k: int) -> list:
        idx = k + 1
        if k < 0:
            t, act, alpha, cons = 0, [], [], []
        else:
            t, act, alpha, cons = self.times[k], list(self.active[k]), list(self.alpha[k]), self.consumed[k]
        return [
            k, int(t), act,
            self.X[idx].tolist(), self.V[idx].tolist(),
            self.Y[idx].tolist(), [int(v) for v in self.L[idx]],
            [float(a) for a in alpha], self.Z[idx].tolist(),
            [list(c) for c in cons],
        ]

    def dumps(self) -> str:
        head = dict(self.header)
        head.update(format=FORMAT_TAG, version=FORMAT_VERSION, n=self.n, p=self.p,
                    edges=[[i, j] for i, o in enumerate(self.out) for j in o if i != j])
        lines = [json.dumps(head, sort_keys=True)]
        for k in range(-1, self.num_events):
            lines.append(json.dumps(self._row(k)))
        lines.append(json.dumps(["pending", [list(c) for c in self.pending]]))
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def loads(cls, text: str) -> "EventTrace":
        lines = text.splitlines()
        if not lines:
            raise TraceFormatError("empty trace", 1)
        try:
            head = json.loads(lines[0])
        except json.JSONDecodeError as exc:
            raise TraceFormatError(f"bad header: {exc}", 1) from None
        if not isinstance(head, dict) or head.get("format") != FORMAT_TAG:
            raise TraceFormatError("not an asynag trace", 1)
        if head.get("version") != FORMAT_VERSION:
            raise TraceFormatError(f"unsupported version {head.get('version')}", 1)
        n, p = int(head["n"]), int(head["p"])
        out = [{i} for i in range(n)]
        for i, j in head["edges"]:
            out[i].add(j)
        tr = cls(n, p, tuple(tuple(sorted(s)) for s in out), head)
        expect = -1
        saw_pending = False
        for lineno, line in enumerate(lines[1:], 2):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise TraceFormatError(f"bad JSON: {exc}", lineno) from None
            if isinstance(row, list) and row and row[0] == "pending":
                tr.pending = [tuple(int(v) for v in c) for c in row[1]]
                saw_pending = True
                continue
            if saw_pending:
                raise TraceFormatError("record after pending list", lineno)
            try:
                k, t, act, x, v, y, l, alpha, z, cons = row
                if k != expect:
                    raise TraceFormatError(f"expected event {expect}, got {k}", lineno)
                X = np.array(x, dtype=float).reshape(n, p)
                V = np.array(v, dtype=float).reshape(n, p)
                Z = np.array(z, dtype=float).reshape(n, p)
                Y = np.array(y, dtype=float).reshape(n)
                Lc = np.array(l, dtype=np.int64).reshape(n)
                if len(alpha) != len(act):
                    raise TraceFormatError("alpha and active lengths differ", lineno)
            except TraceFormatError:
                raise
            except (ValueError, TypeError) as exc:
                raise TraceFormatError(f"malformed event record: {exc}", lineno) from None
            tr.X.append(X)
            tr.V.append(V)
            tr.Y.append(Y)
            tr.L.append(Lc)
            tr.Z.append(Z)
            if k >= 0:
                tr.times.append(int(t))
                tr.active.append(tuple(int(i) for i in act))
                tr.alpha.append(tuple(float(a) for a in alpha))
                tr.consumed.append([tuple(int(c) for c in item) for item in cons])
            expect += 1
        if expect == -1:
            raise TraceFormatError("trace has no initial state", len(lines))
        return tr

    @classmethod
    def load(cls, path) -> "EventTrace":
        return cls.loads(Path(path).read_text())
