import itertools

import numpy as np
import pytest

from asynag.cournot import CournotGame, generate_instance, solve_ne


def enumerate_projection(v, lo, hi, a=None):
    """Exact projection onto a box (and hyperplane ``a.u = 0``) by trying every active set.

    Each coordinate is pinned at its lower bound, its upper bound, or left
    free; the free coordinates solve the equality-constrained least-squares
    problem in closed form. The feasible candidate nearest to ``v`` wins.
    Exponential in the dimension, so only for small test vectors.
    """
    v = np.asarray(v, dtype=float)
    p = v.size
    best, best_d = None, np.inf
    for pattern in itertools.product((0, 1, 2), repeat=p):
        u = v.copy()
        pat = np.array(pattern)
        u[pat == 0] = lo[pat == 0]
        u[pat == 1] = hi[pat == 1]
        free = pat == 2
        if a is not None:
            af = a[free]
            rest = float(a[~free] @ u[~free])
            if np.allclose(af, 0):
                if abs(rest) > 1e-9:
                    continue
            else:
                lam = (float(af @ v[free]) + rest) / float(af @ af)
                u[free] = v[free] - lam * af
        if np.any(u < lo - 1e-9) or np.any(u > hi + 1e-9):
            continue
        if a is not None and abs(float(a @ u)) > 1e-9:
            continue
        d = float(np.sum((u - v) ** 2))
        if d < best_d - 1e-15:
            best, best_d = u, d
    return best


@pytest.fixture(scope="session")
def cournot5():
    params = generate_instance(5, 10, 1)
    return params, CournotGame(params), solve_ne(params)


@pytest.fixture(scope="session")
def cournot_small():
    params = generate_instance(3, 2, 7)
    return params, CournotGame(params), solve_ne(params)


_ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """``criterion(name, ok, detail)`` prints and records one PASS/FAIL line."""
    lines = request.config.stash.setdefault(_ACCEPTANCE_KEY, [])

    def report(name, ok, detail=""):
        line = f"{name} {'PASS' if ok else 'FAIL'} {detail}".rstrip()
        lines.append(line)
        print(line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
