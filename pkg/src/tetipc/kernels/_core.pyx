# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled narrow-phase / solver hot kernels.

Mirrors ``tetipc.kernels._numpy`` function for function; see that module
for the region-code and layout conventions. The parity test suite keeps
the two backends interchangeable.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()

PAIR_PT = 0
PAIR_EE = 1
PAIR_PE = 2
PAIR_PP = 3


cdef inline double _dot3(const double* a, const double* b) noexcept nogil:
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


cdef inline void _sub3(const double* a, const double* b, double* out) noexcept nogil:
    out[0] = a[0] - b[0]
    out[1] = a[1] - b[1]
    out[2] = a[2] - b[2]


cdef inline void _cross3(const double* a, const double* b, double* out) noexcept nogil:
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]


cdef inline double _clamp01(double v) noexcept nogil:
    if v < 0.0:
        return 0.0
    if v > 1.0:
        return 1.0
    return v


cdef int _pt_one(const double* p, const double* t1, const double* t2, const double* t3,
                 double* d2_out, double* grad_out, double* w_out) noexcept nogil:
    cdef double ab[3], ac[3], ap[3], bp[3], cp[3], r[3], closest[3]
    cdef double d1, d2_, d3, d4, d5, d6, va, vb, vc, w1, w2, w0, denom, t
    cdef int code, i

    _sub3(t2, t1, ab)
    _sub3(t3, t1, ac)
    _sub3(p, t1, ap)
    d1 = _dot3(ab, ap)
    d2_ = _dot3(ac, ap)
    _sub3(p, t2, bp)
    d3 = _dot3(ab, bp)
    d4 = _dot3(ac, bp)
    _sub3(p, t3, cp)
    d5 = _dot3(ab, cp)
    d6 = _dot3(ac, cp)
    vc = d1 * d4 - d3 * d2_
    vb = d5 * d2_ - d1 * d6
    va = d3 * d6 - d5 * d4

    w1 = 0.0
    w2 = 0.0
    if d1 <= 0.0 and d2_ <= 0.0:
        code = 1
    elif d3 >= 0.0 and d4 <= d3:
        code = 2
        w1 = 1.0
    elif vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        code = 4
        w1 = d1 / (d1 - d3)
    elif d6 >= 0.0 and d5 <= d6:
        code = 3
        w2 = 1.0
    elif vb <= 0.0 and d2_ >= 0.0 and d6 <= 0.0:
        code = 6
        w2 = d2_ / (d2_ - d6)
    elif va <= 0.0 and d4 - d3 >= 0.0 and d5 - d6 >= 0.0:
        code = 5
        t = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        w1 = 1.0 - t
        w2 = t
    else:
        code = 0
        denom = va + vb + vc
        w1 = vb / denom
        w2 = vc / denom

    w0 = 1.0 - w1 - w2
    for i in range(3):
        closest[i] = w0 * t1[i] + w1 * t2[i] + w2 * t3[i]
        r[i] = p[i] - closest[i]
    d2_out[0] = _dot3(r, r)
    for i in range(3):
        grad_out[i] = 2.0 * r[i]
        grad_out[3 + i] = -2.0 * w0 * r[i]
        grad_out[6 + i] = -2.0 * w1 * r[i]
        grad_out[9 + i] = -2.0 * w2 * r[i]
    w_out[0] = w1
    w_out[1] = w2
    return code


cdef int _ee_one(const double* a1, const double* a2, const double* b1, const double* b2,
                 double* d2_out, double* grad_out, double* w_out) noexcept nogil:
    cdef double da[3], db[3], r[3], rvec[3]
    cdef double a, e, f, b, c, denom, s, t
    cdef int ra, rb, i

    _sub3(a2, a1, da)
    _sub3(b2, b1, db)
    _sub3(a1, b1, r)
    a = _dot3(da, da)
    e = _dot3(db, db)
    f = _dot3(db, r)
    b = _dot3(da, db)
    c = _dot3(da, r)
    denom = a * e - b * b

    if denom > 0.0:
        s = _clamp01((b * f - c * e) / denom)
    else:
        s = 0.0
    t = (b * s + f) / e
    if t < 0.0:
        t = 0.0
        s = _clamp01(-c / a)
    elif t > 1.0:
        t = 1.0
        s = _clamp01((b - c) / a)

    ra = 0 if s <= 0.0 else (1 if s >= 1.0 else 2)
    rb = 0 if t <= 0.0 else (1 if t >= 1.0 else 2)

    for i in range(3):
        rvec[i] = (a1[i] + s * da[i]) - (b1[i] + t * db[i])
    d2_out[0] = _dot3(rvec, rvec)
    for i in range(3):
        grad_out[i] = 2.0 * (1.0 - s) * rvec[i]
        grad_out[3 + i] = 2.0 * s * rvec[i]
        grad_out[6 + i] = -2.0 * (1.0 - t) * rvec[i]
        grad_out[9 + i] = -2.0 * t * rvec[i]
    w_out[0] = s
    w_out[1] = t
    return 3 * ra + rb


def pt_classify_batch(p, t1, t2, t3):
    cdef double[:, ::1] pv = np.ascontiguousarray(np.atleast_2d(p), dtype=np.float64)
    cdef double[:, ::1] av = np.ascontiguousarray(np.atleast_2d(t1), dtype=np.float64)
    cdef double[:, ::1] bv = np.ascontiguousarray(np.atleast_2d(t2), dtype=np.float64)
    cdef double[:, ::1] cv = np.ascontiguousarray(np.atleast_2d(t3), dtype=np.float64)
    cdef Py_ssize_t n = pv.shape[0], i
    codes = np.empty(n, dtype=np.int64)
    d2 = np.empty(n, dtype=np.float64)
    grad = np.empty((n, 4, 3), dtype=np.float64)
    w = np.empty((n, 2), dtype=np.float64)
    cdef long long[::1] codes_v = codes
    cdef double[::1] d2_v = d2
    cdef double[:, :, ::1] grad_v = grad
    cdef double[:, ::1] w_v = w
    with nogil:
        for i in range(n):
            codes_v[i] = _pt_one(&pv[i, 0], &av[i, 0], &bv[i, 0], &cv[i, 0],
                                 &d2_v[i], &grad_v[i, 0, 0], &w_v[i, 0])
    return codes, d2, grad, w


def ee_classify_batch(a1, a2, b1, b2):
    cdef double[:, ::1] a1v = np.ascontiguousarray(np.atleast_2d(a1), dtype=np.float64)
    cdef double[:, ::1] a2v = np.ascontiguousarray(np.atleast_2d(a2), dtype=np.float64)
    cdef double[:, ::1] b1v = np.ascontiguousarray(np.atleast_2d(b1), dtype=np.float64)
    cdef double[:, ::1] b2v = np.ascontiguousarray(np.atleast_2d(b2), dtype=np.float64)
    cdef Py_ssize_t n = a1v.shape[0], i
    codes = np.empty(n, dtype=np.int64)
    d2 = np.empty(n, dtype=np.float64)
    grad = np.empty((n, 4, 3), dtype=np.float64)
    w = np.empty((n, 2), dtype=np.float64)
    cdef long long[::1] codes_v = codes
    cdef double[::1] d2_v = d2
    cdef double[:, :, ::1] grad_v = grad
    cdef double[:, ::1] w_v = w
    with nogil:
        for i in range(n):
            codes_v[i] = _ee_one(&a1v[i, 0], &a2v[i, 0], &b1v[i, 0], &b2v[i, 0],
                                 &d2_v[i], &grad_v[i, 0, 0], &w_v[i, 0])
    return codes, d2, grad, w


def cross_sq_batch(a1, a2, b1, b2):
    cdef double[:, ::1] a1v = np.ascontiguousarray(np.atleast_2d(a1), dtype=np.float64)
    cdef double[:, ::1] a2v = np.ascontiguousarray(np.atleast_2d(a2), dtype=np.float64)
    cdef double[:, ::1] b1v = np.ascontiguousarray(np.atleast_2d(b1), dtype=np.float64)
    cdef double[:, ::1] b2v = np.ascontiguousarray(np.atleast_2d(b2), dtype=np.float64)
    cdef Py_ssize_t n = a1v.shape[0], i, k
    cval = np.empty(n, dtype=np.float64)
    grad = np.empty((n, 4, 3), dtype=np.float64)
    cdef double[::1] c_v = cval
    cdef double[:, :, ::1] grad_v = grad
    cdef double u[3], v[3], wvec[3], gu[3], gv[3]
    with nogil:
        for i in range(n):
            _sub3(&a2v[i, 0], &a1v[i, 0], u)
            _sub3(&b2v[i, 0], &b1v[i, 0], v)
            _cross3(u, v, wvec)
            c_v[i] = _dot3(wvec, wvec)
            _cross3(v, wvec, gu)
            _cross3(wvec, u, gv)
            for k in range(3):
                grad_v[i, 0, k] = -2.0 * gu[k]
                grad_v[i, 1, k] = 2.0 * gu[k]
                grad_v[i, 2, k] = -2.0 * gv[k]
                grad_v[i, 3, k] = 2.0 * gv[k]
    return cval, grad


def matvec_blocks(hess, vids, x, out):
    cdef double[:, :, ::1] h = np.ascontiguousarray(hess, dtype=np.float64)
    cdef long long[:, ::1] v = np.ascontiguousarray(vids, dtype=np.int64)
    cdef double[::1] xv = x
    cdef double[::1] ov = out
    cdef Py_ssize_t nb = h.shape[0], kk = h.shape[1], s = v.shape[1]
    cdef Py_ssize_t b, r, c, vt, i
    cdef long long gi
    cdef double xl[12], yl[12], acc
    if nb == 0:
        return
    with nogil:
        for b in range(nb):
            for vt in range(s):
                gi = v[b, vt]
                for i in range(3):
                    xl[3 * vt + i] = xv[3 * gi + i]
            for r in range(kk):
                acc = 0.0
                for c in range(kk):
                    acc += h[b, r, c] * xl[c]
                yl[r] = acc
            for vt in range(s):
                gi = v[b, vt]
                for i in range(3):
                    ov[3 * gi + i] += yl[3 * vt + i]


cdef double _pair_dist2_c(const double* xs, int pair_kind, Py_ssize_t s) noexcept nogil:
    cdef double d2, g12[12], w2[2], e[3], r[3]
    cdef double t, ee
    cdef int i
    if pair_kind == 0:
        _pt_one(xs, xs + 3, xs + 6, xs + 9, &d2, g12, w2)
        return d2
    if pair_kind == 1:
        _ee_one(xs, xs + 3, xs + 6, xs + 9, &d2, g12, w2)
        return d2
    if pair_kind == 2:
        _sub3(xs + 6, xs + 3, e)
        ee = _dot3(e, e)
        _sub3(xs, xs + 3, r)
        t = _clamp01(_dot3(r, e) / ee)
        for i in range(3):
            r[i] = r[i] - t * e[i]
        return _dot3(r, r)
    _sub3(xs, xs + 3, r)
    return _dot3(r, r)


def accd_max_step(x, dx, int pair_kind, double slack, int max_iter=512):
    cdef double[:, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[:, ::1] dv = np.ascontiguousarray(dx, dtype=np.float64)
    cdef Py_ssize_t s = xv.shape[0], v, i
    cdef double q[12], xt[12], mean[3], norms[4]
    cdef double lp, d0, gap, t, d, step
    cdef int it

    for i in range(3):
        mean[i] = 0.0
    for v in range(s):
        for i in range(3):
            mean[i] += dv[v, i]
    for i in range(3):
        mean[i] /= s
    for v in range(s):
        for i in range(3):
            q[3 * v + i] = dv[v, i] - mean[i]
        norms[v] = sqrt(q[3 * v] * q[3 * v] + q[3 * v + 1] * q[3 * v + 1] + q[3 * v + 2] * q[3 * v + 2])

    if pair_kind == 0:
        lp = norms[0] + max(norms[1], max(norms[2], norms[3]))
    elif pair_kind == 1:
        lp = max(norms[0], norms[1]) + max(norms[2], norms[3])
    elif pair_kind == 2:
        lp = norms[0] + max(norms[1], norms[2])
    else:
        lp = norms[0] + norms[1]
    if lp == 0.0:
        return 1.0

    for v in range(s):
        for i in range(3):
            xt[3 * v + i] = xv[v, i]
    d0 = sqrt(_pair_dist2_c(xt, pair_kind, s))
    if not d0 > 0.0:
        raise ValueError("additive CCD requires a strictly positive initial distance")
    gap = (1.0 - slack) * d0

    t = 0.0
    for it in range(max_iter):
        for v in range(s):
            for i in range(3):
                xt[3 * v + i] = xv[v, i] + t * q[3 * v + i]
        d = sqrt(_pair_dist2_c(xt, pair_kind, s))
        step = (d - gap) / lp
        if step <= 0.0:
            break
        if t + step >= 1.0:
            return 1.0
        t += step
        if step < 1e-14:
            break
    return t
