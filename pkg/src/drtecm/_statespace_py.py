"""Pure-Python state-space kernel (fallback for the compiled ``_statespace``).

Both implementations perform the same floating-point operations in the same
order; see ``drtecm.ecm.compile_model`` for the array layout.
"""
from math import exp, pi

COMPLETED, VOLTAGE_CUTOFF, SOC_BOUND, EXTRAPOLATION = 0, 1, 2, 3


def _interp(x, xs, ys, off, n):
    if x <= xs[off]:
        return ys[off]
    if x >= xs[off + n - 1]:
        return ys[off + n - 1]
    lo, hi = off, off + n - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if xs[mid] <= x:
            lo = mid
        else:
            hi = mid
    slope = (ys[lo + 1] - ys[lo]) / (xs[lo + 1] - xs[lo])
    return slope * (x - xs[lo]) + ys[lo]


def _param(i, j, v, kinds, coef, lut_off, lut_len, lut_v, lut_y):
    if kinds[i][j] == 1:
        return _interp(v, lut_v, lut_y, lut_off[i][j], lut_len[i][j])
    c = coef[i][j]
    return (c[2] * v + c[1]) * v + c[0]


def _bracket(t, knots):
    n = len(knots)
    if t < knots[0] or t > knots[n - 1]:
        return -1, 0.0
    for i in range(n):
        if t == knots[i]:
            return i, 0.0
    i = 0
    while knots[i + 1] < t:
        i += 1
    return i, (t - knots[i]) / (knots[i + 1] - knots[i])


def evaluate(v, t, t_knots, kinds, coef, lut_off, lut_len, lut_v, lut_y, out):
    """Fill ``out`` with parameters at (v, t); return False if t is outside the knots."""
    i, w = _bracket(t, t_knots)
    if i < 0:
        return False
    n_p = len(out)
    for j in range(n_p):
        a = _param(i, j, v, kinds, coef, lut_off, lut_len, lut_v, lut_y)
        if w != 0.0:
            b = _param(i + 1, j, v, kinds, coef, lut_off, lut_len, lut_v, lut_y)
            a = a + w * (b - a)
        out[j] = a
    return True


def run(current, temperature, v_oc0, branches, dt, refresh, v_min, v_max,
        t_knots, kinds, coef, lut_off, lut_len, lut_v, lut_y, ocv_lo, ocv_hi,
        n_rc, ladder, v_term_out, v_oc_out):
    """Advance the model over ``len(current) - 1`` steps.

    Row 0 is the initial state. Returns ``(last_row, code)``; ``branches`` is
    updated in place to the final branch voltages.
    """
    t_knots = list(t_knots)
    kinds = [list(r) for r in kinds]
    coef = [[list(c) for c in r] for r in coef]
    lut_off = [list(r) for r in lut_off]
    lut_len = [list(r) for r in lut_len]
    lut_v = list(lut_v)
    lut_y = list(lut_y)
    n_b = n_rc + ladder
    n_p = 2 * n_rc + 3
    p = [0.0] * n_p
    rb = [0.0] * n_b
    ab = [0.0] * n_b
    x = [float(b) for b in branches]
    v_oc = float(v_oc0)
    steps = len(current) - 1

    if not evaluate(v_oc, temperature[0], t_knots, kinds, coef, lut_off, lut_len, lut_v, lut_y, p):
        return 0, EXTRAPOLATION
    s = 0.0
    for b in range(n_b):
        s += x[b]
    v_term_out[0] = v_oc + s + p[0] * current[0]
    v_oc_out[0] = v_oc

    code = COMPLETED
    k = 0
    for k in range(1, steps + 1):
        u = current[k]
        if (k - 1) % refresh == 0:
            if not evaluate(v_oc, temperature[k], t_knots, kinds, coef, lut_off, lut_len, lut_v, lut_y, p):
                for b in range(n_b):
                    branches[b] = x[b]
                return k, EXTRAPOLATION
            for b in range(n_rc):
                r = p[1 + 2 * b]
                c = p[2 + 2 * b]
                rb[b] = r
                ab[b] = exp(-dt / (r * c))
            r_d = p[n_p - 2]
            c_d = p[n_p - 1]
            for n in range(1, ladder + 1):
                r = 6.0 * r_d / (n * n * pi * pi)
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
        i, w = _bracket(temperature[k], t_knots)
        if i < 0:
            code = EXTRAPOLATION
            break
        lo = ocv_lo[i] if w == 0.0 else ocv_lo[i] + w * (ocv_lo[i + 1] - ocv_lo[i])
        hi = ocv_hi[i] if w == 0.0 else ocv_hi[i] + w * (ocv_hi[i + 1] - ocv_hi[i])
        if v_oc < lo or v_oc > hi:
            code = SOC_BOUND
            break
    for b in range(n_b):
        branches[b] = x[b]
    return (k if steps else 0), code
