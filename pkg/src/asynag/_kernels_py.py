"""Pure-Python (numpy) versions of the hot kernels.

Used when the compiled ``asynag._kernels`` extension is unavailable or when
``ASYNAG_PURE_PYTHON=1`` is set. Semantics match the Cython module.
"""

import numpy as np

MAX_BISECT = 200
LAM_TOL = 1e-12


def _hyperplane_value(v, lo, hi, a, lam):
    return float(a @ np.clip(v - lam * a, lo, hi))


def _pattern(v, lo, hi, a, lam):
    u = v - lam * a
    return (u <= lo).astype(np.int8) - (u >= hi).astype(np.int8)


def project_box_hyperplane(v, lo, hi, a):
    """Euclidean projection of ``v`` onto ``{lo <= u <= hi, a.u = 0}``.

    The multiplier ``lam`` of the equality constraint is bracketed and then
    bisected; ``u(lam) = clip(v - lam*a)`` makes ``a.u(lam)`` nonincreasing.
    Once both bracket ends share the same active pattern the constraint is
    linear in ``lam`` on the bracket and is solved exactly.
    """
    v = np.asarray(v, dtype=float)
    if a is None:
        return np.clip(v, lo, hi)
    nz = a != 0
    if not nz.any():
        return np.clip(v, lo, hi)
    an = a[nz]
    t1 = (v[nz] - hi[nz]) / an
    t2 = (v[nz] - lo[nz]) / an
    left = float(np.minimum(t1, t2).min())
    right = float(np.maximum(t1, t2).max())
    if left == right:
        return np.clip(v - left * a, lo, hi)

    pl = _pattern(v, lo, hi, a, left)
    pr = _pattern(v, lo, hi, a, right)
    for _ in range(MAX_BISECT):
        if np.array_equal(pl, pr):
            break
        if right - left <= LAM_TOL * max(1.0, abs(left), abs(right)):
            break
        mid = 0.5 * (left + right)
        hm = _hyperplane_value(v, lo, hi, a, mid)
        if hm > 0.0:
            left, pl = mid, _pattern(v, lo, hi, a, mid)
        elif hm < 0.0:
            right, pr = mid, _pattern(v, lo, hi, a, mid)
        else:
            return np.clip(v - mid * a, lo, hi)

    mid = 0.5 * (left + right)
    u = v - mid * a
    free = (u > lo) & (u < hi) & nz
    den = float(a[free] @ a[free])
    if den == 0.0:
        lam = mid
    else:
        sat = ~free
        num = float(a[sat] @ np.clip(u[sat], lo[sat], hi[sat]) + a[free] @ v[free])
        lam = num / den
    return np.clip(v - lam * a, lo, hi)


def cournot_grad(x, z, a, b, d, n):
    """Pseudo-gradient block of one firm; layout ``(g_1, s_1, ..., g_L, s_L)``."""
    out = np.empty_like(x, dtype=float)
    out[0::2] = a + 2.0 * b * x[0::2]
    out[1::2] = -d + n * z[1::2] + x[1::2]
    return out


def cournot_step(x, z, alpha, a, b, d, n, lo, hi, sign):
    """``project(x - alpha * F(x, z))`` for one firm."""
    return project_box_hyperplane(x - alpha * cournot_grad(x, z, a, b, d, n), lo, hi, sign)
