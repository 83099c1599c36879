# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled state-space kernel; mirrors ``_statespace_py`` operation for operation."""
from libc.math cimport exp, M_PI

import numpy as np

cdef int COMPLETED = 0, VOLTAGE_CUTOFF = 1, SOC_BOUND = 2, EXTRAPOLATION = 3


cdef inline double _interp(double x, const double[::1] xs, const double[::1] ys, int off, int n) noexcept nogil:
    cdef int lo, hi, mid
    cdef double slope
    if x <= xs[off]:
        return ys[off]
    if x >= xs[off + n - 1]:
        return ys[off + n - 1]
    lo = off
    hi = off + n - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if xs[mid] <= x:
            lo = mid
        else:
            hi = mid
    slope = (ys[lo + 1] - ys[lo]) / (xs[lo + 1] - xs[lo])
    return slope * (x - xs[lo]) + ys[lo]


cdef inline double _param(int i, int j, double v, const int[:, ::1] kinds, const double[:, :, ::1] coef,
                          const int[:, ::1] lut_off, const int[:, ::1] lut_len,
                          const double[::1] lut_v, const double[::1] lut_y) noexcept nogil:
    if kinds[i, j] == 1:
        return _interp(v, lut_v, lut_y, lut_off[i, j], lut_len[i, j])
    return (coef[i, j, 2] * v + coef[i, j, 1]) * v + coef[i, j, 0]


cdef inline int _bracket(double t, const double[::1] knots, double* w) noexcept nogil:
    cdef int n = knots.shape[0]
    cdef int i
    if t < knots[0] or t > knots[n - 1]:
        return -1
    for i in range(n):
        if t == knots[i]:
            w[0] = 0.0
            return i
    i = 0
    while knots[i + 1] < t:
        i += 1
    w[0] = (t - knots[i]) / (knots[i + 1] - knots[i])
    return i


cdef inline bint _evaluate(double v, double t, const double[::1] t_knots, const int[:, ::1] kinds,
                           const double[:, :, ::1] coef, const int[:, ::1] lut_off, const int[:, ::1] lut_len,
                           const double[::1] lut_v, const double[::1] lut_y, double[::1] out) noexcept nogil:
    cdef double w = 0.0
    cdef double a, b
    cdef int j
    cdef int i = _bracket(t, t_knots, &w)
    if i < 0:
        return False
    for j in range(out.shape[0]):
        a = _param(i, j, v, kinds, coef, lut_off, lut_len, lut_v, lut_y)
        if w != 0.0:
            b = _param(i + 1, j, v, kinds, coef, lut_off, lut_len, lut_v, lut_y)
            a = a + w * (b - a)
        out[j] = a
    return True


def run(const double[::1] current, const double[::1] temperature, double v_oc0, double[::1] branches,
        double dt, int refresh, double v_min, double v_max,
        const double[::1] t_knots, const int[:, ::1] kinds, const double[:, :, ::1] coef,
        const int[:, ::1] lut_off, const int[:, ::1] lut_len, const double[::1] lut_v, const double[::1] lut_y,
        const double[::1] ocv_lo, const double[::1] ocv_hi, int n_rc, int ladder,
        double[::1] v_term_out, double[::1] v_oc_out):
    """See ``drtecm._statespace_py.run``."""
    cdef int n_b = n_rc + ladder
    cdef int n_p = 2 * n_rc + 3
    cdef double[::1] p = np.zeros(n_p)
    cdef double[::1] rb = np.zeros(n_b)
    cdef double[::1] ab = np.zeros(n_b)
    cdef double[::1] x = np.array(branches, dtype=np.float64)
    cdef double v_oc = v_oc0
    cdef Py_ssize_t steps = current.shape[0] - 1
    cdef Py_ssize_t k = 0
    cdef int b, n, i, code = COMPLETED
    cdef double s, u, r, c, r_d, c_d, y, w = 0.0, lo, hi

    with nogil:
        if not _evaluate(v_oc, temperature[0], t_knots, kinds, coef, lut_off, lut_len, lut_v, lut_y, p):
            code = EXTRAPOLATION
        else:
            s = 0.0
            for b in range(n_b):
                s += x[b]
            v_term_out[0] = v_oc + s + p[0] * current[0]
            v_oc_out[0] = v_oc
            for k in range(1, steps + 1):
                u = current[k]
                if (k - 1) % refresh == 0:
                    if not _evaluate(v_oc, temperature[k], t_knots, kinds, coef, lut_off, lut_len, lut_v, lut_y, p):
                        code = EXTRAPOLATION
                        break
                    for b in range(n_rc):
                        r = p[1 + 2 * b]
                        c = p[2 + 2 * b]
                        rb[b] = r
                        ab[b] = exp(-dt / (r * c))
                    r_d = p[n_p - 2]
                    c_d = p[n_p - 1]
                    for n in range(1, ladder + 1):
                        r = 6.0 * r_d / (<double>(n * n) * M_PI * M_PI)
                        c = 0.5 * c_d
                        rb[n_rc + n - 1] = r
                        ab[n_rc + n - 1] = exp(-dt / (r * c))
                s = 0.0
                for b in range(n_b):
                    x[b] = ab[b] * x[b] + rb[b] * (1.0 - ab[b]) * u
                    s += x[b]
                v_oc = v_oc + dt * u / p[n_p - 1]
                y = v_oc + s + p[0] * u
                v_term_out[k] = y
                v_oc_out[k] = v_oc
                if y < v_min or y > v_max:
                    code = VOLTAGE_CUTOFF
                    break
                i = _bracket(temperature[k], t_knots, &w)
                if i < 0:
                    code = EXTRAPOLATION
                    break
                if w == 0.0:
                    lo = ocv_lo[i]
                    hi = ocv_hi[i]
                else:
                    lo = ocv_lo[i] + w * (ocv_lo[i + 1] - ocv_lo[i])
                    hi = ocv_hi[i] + w * (ocv_hi[i + 1] - ocv_hi[i])
                if v_oc < lo or v_oc > hi:
                    code = SOC_BOUND
                    break
        for b in range(n_b):
            branches[b] = x[b]
    if steps == 0:
        k = 0
    return k, code
