# cython: boundscheck=False, wraparound=False, cdivision=True, nonecheck=False, language_level=3
"""Compiled hot kernels: box/hyperplane projection and the Cournot local step.

Mirrors ``asynag._kernels_py`` exactly in algorithm; only the loops differ.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, fmax, fmin

cnp.import_array()

DEF MAX_BISECT = 200
DEF LAM_TOL = 1e-12


cdef inline double _clip(double x, double lo, double hi) nogil:
    if x < lo:
        return lo
    if x > hi:
        return hi
    return x


cdef double _hval(const double[::1] v, const double[::1] lo, const double[::1] hi,
                  const double[::1] a, double lam) nogil:
    cdef Py_ssize_t k
    cdef double s = 0.0
    for k in range(v.shape[0]):
        s += a[k] * _clip(v[k] - lam * a[k], lo[k], hi[k])
    return s


cdef bint _same_pattern(const double[::1] v, const double[::1] lo, const double[::1] hi,
                        const double[::1] a, double l1, double l2) nogil:
    cdef Py_ssize_t k
    cdef double u1, u2
    cdef int p1, p2
    for k in range(v.shape[0]):
        u1 = v[k] - l1 * a[k]
        u2 = v[k] - l2 * a[k]
        p1 = (u1 <= lo[k]) - (u1 >= hi[k])
        p2 = (u2 <= lo[k]) - (u2 >= hi[k])
        if p1 != p2:
            return False
    return True


cdef void _project(const double[::1] v, const double[::1] lo, const double[::1] hi,
                   const double[::1] a, double[::1] out) nogil:
    cdef Py_ssize_t k, m = v.shape[0]
    cdef double left = 0.0, right = 0.0, t1, t2, mid, hm, u, num, den, lam
    cdef bint started = False
    cdef int it

    for k in range(m):
        if a[k] != 0.0:
            t1 = (v[k] - hi[k]) / a[k]
            t2 = (v[k] - lo[k]) / a[k]
            if not started:
                left = fmin(t1, t2)
                right = fmax(t1, t2)
                started = True
            else:
                left = fmin(left, fmin(t1, t2))
                right = fmax(right, fmax(t1, t2))
    if not started or left == right:
        for k in range(m):
            out[k] = _clip(v[k] - left * a[k], lo[k], hi[k])
        return

    for it in range(MAX_BISECT):
        if _same_pattern(v, lo, hi, a, left, right):
            break
        if right - left <= LAM_TOL * fmax(1.0, fmax(fabs(left), fabs(right))):
            break
        mid = 0.5 * (left + right)
        hm = _hval(v, lo, hi, a, mid)
        if hm > 0.0:
            left = mid
        elif hm < 0.0:
            right = mid
        else:
            for k in range(m):
                out[k] = _clip(v[k] - mid * a[k], lo[k], hi[k])
            return

    mid = 0.5 * (left + right)
    num = 0.0
    den = 0.0
    for k in range(m):
        u = v[k] - mid * a[k]
        if a[k] != 0.0 and u > lo[k] and u < hi[k]:
            den += a[k] * a[k]
            num += a[k] * v[k]
        else:
            num += a[k] * _clip(u, lo[k], hi[k])
    lam = mid if den == 0.0 else num / den
    for k in range(m):
        out[k] = _clip(v[k] - lam * a[k], lo[k], hi[k])


def project_box_hyperplane(v, lo, hi, a):
    """Euclidean projection of ``v`` onto ``{lo <= u <= hi, a.u = 0}``."""
    cdef double[::1] vv = np.ascontiguousarray(v, dtype=np.float64)
    cdef double[::1] lov = np.ascontiguousarray(lo, dtype=np.float64)
    cdef double[::1] hiv = np.ascontiguousarray(hi, dtype=np.float64)
    cdef Py_ssize_t k
    out = np.empty(vv.shape[0])
    cdef double[::1] ov = out
    if a is None:
        for k in range(vv.shape[0]):
            ov[k] = _clip(vv[k], lov[k], hiv[k])
        return out
    cdef double[::1] av = np.ascontiguousarray(a, dtype=np.float64)
    with nogil:
        _project(vv, lov, hiv, av, ov)
    return out


def cournot_grad(x, z, a, b, d, double n):
    """Pseudo-gradient block of one firm; layout ``(g_1, s_1, ..., g_L, s_L)``."""
    cdef double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[::1] zv = np.ascontiguousarray(z, dtype=np.float64)
    cdef double[::1] av = np.ascontiguousarray(a, dtype=np.float64)
    cdef double[::1] bv = np.ascontiguousarray(b, dtype=np.float64)
    cdef double[::1] dv = np.ascontiguousarray(d, dtype=np.float64)
    cdef Py_ssize_t l, L = av.shape[0]
    out = np.empty(2 * L)
    cdef double[::1] ov = out
    for l in range(L):
        ov[2 * l] = av[l] + 2.0 * bv[l] * xv[2 * l]
        ov[2 * l + 1] = -dv[l] + n * zv[2 * l + 1] + xv[2 * l + 1]
    return out


def cournot_step(x, z, double alpha, a, b, d, double n, lo, hi, sign):
    """``project(x - alpha * F(x, z))`` for one firm, fused."""
    cdef double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[::1] zv = np.ascontiguousarray(z, dtype=np.float64)
    cdef double[::1] av = np.ascontiguousarray(a, dtype=np.float64)
    cdef double[::1] bv = np.ascontiguousarray(b, dtype=np.float64)
    cdef double[::1] dv = np.ascontiguousarray(d, dtype=np.float64)
    cdef double[::1] lov = np.ascontiguousarray(lo, dtype=np.float64)
    cdef double[::1] hiv = np.ascontiguousarray(hi, dtype=np.float64)
    cdef double[::1] sv = np.ascontiguousarray(sign, dtype=np.float64)
    cdef Py_ssize_t l, L = av.shape[0]
    trial = np.empty(2 * L)
    out = np.empty(2 * L)
    cdef double[::1] tv = trial
    cdef double[::1] ov = out
    with nogil:
        for l in range(L):
            tv[2 * l] = xv[2 * l] - alpha * (av[l] + 2.0 * bv[l] * xv[2 * l])
            tv[2 * l + 1] = xv[2 * l + 1] - alpha * (-dv[l] + n * zv[2 * l + 1] + xv[2 * l + 1])
        _project(tv, lov, hiv, sv, ov)
    return out
