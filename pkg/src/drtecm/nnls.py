"""Lawson-Hanson active-set non-negative least squares.

Solves ``min ||A x - b||`` subject to ``x >= 0``. Variables enter the passive
set one at a time (largest positive gradient first); an inner loop steps back
along the segment to the unconstrained passive-set solution whenever it would
leave the feasible region. Inactive entries are exactly zero.
"""
from __future__ import annotations

import numpy as np

from .errors import ConvergenceError


def _passive_solve(a, b, passive):
    s = np.zeros(a.shape[1])
    sol, *_ = np.linalg.lstsq(a[:, passive], b, rcond=None)
    s[passive] = sol
    return s


def nnls(a, b, rtol=1e-10, max_iter=None):
    """Return ``(x, residual_norm)``.

    Terminates when every gradient component of the inactive set is at most
    ``rtol * max|A^T b|`` (KKT condition). Raises :class:`ConvergenceError`
    carrying the best iterate after ``max_iter`` outer iterations
    (default ``3 * n``).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    m, n = a.shape
    x = np.zeros(n)
    passive = np.zeros(n, dtype=bool)
    atb = a.T @ b
    scale = np.max(np.abs(atb)) if n else 0.0
    if scale == 0.0:
        return x, float(np.linalg.norm(b))
    tol = rtol * scale
    w = atb.copy()
    cap = 3 * n if max_iter is None else max_iter
    it = 0
    while True:
        cand = np.where(~passive, w, -np.inf)
        j = int(np.argmax(cand))
        if cand[j] <= tol:
            break
        if it >= cap:
            raise ConvergenceError(f"NNLS did not converge in {cap} iterations", best=x)
        it += 1
        passive[j] = True
        s = _passive_solve(a, b, passive)
        inner = 0
        while np.any(s[passive] <= 0):
            inner += 1
            if inner > n:
                raise ConvergenceError("NNLS inner loop did not terminate", best=x)
            bad = passive & (s <= 0)
            den = x[bad] - s[bad]
            alpha = np.min(np.where(den > 0, x[bad] / np.where(den > 0, den, 1.0), 0.0))
            x = x + alpha * (s - x)
            # entries driven to (numerically) zero leave the passive set
            drop = passive & (x <= 10 * np.finfo(float).eps * np.max(np.abs(x)))
            passive &= ~drop
            x[~passive] = 0.0
            if not np.any(passive):
                s = np.zeros(n)
                break
            s = _passive_solve(a, b, passive)
        x = s
        x[~passive] = 0.0
        w = a.T @ (b - a @ x)
    return x, float(np.linalg.norm(a @ x - b))
