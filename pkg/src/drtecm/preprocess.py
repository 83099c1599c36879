"""High-frequency inductance correction and ohmic-resistance extraction."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from .errors import DrtEcmWarning, FitError, InsufficientDataError, ValidationError
from .nnls import nnls


@dataclass(frozen=True)
class InductanceFit:
    """Lumped cable/jig inductance ``L`` with optional parallel resistance ``R_p``.

    ``parallel_resistance is None`` means a pure series inductor. A fit with
    ``inductance == 0`` and ``fit_window is None`` is the "nothing to correct"
    result returned when the spectrum has no inductive points.
    """

    inductance: float
    parallel_resistance: float | None
    fit_window: tuple | None
    fit_residual: float
    offset: float = 0.0
    warning: str | None = None

    def impedance(self, omega):
        omega = np.asarray(omega, dtype=float)
        if self.inductance == 0:
            return np.zeros_like(omega, dtype=complex)
        jwl = 1j * omega * self.inductance
        if self.parallel_resistance is None:
            return jwl
        return jwl * self.parallel_resistance / (self.parallel_resistance + jwl)


def _auto_window(spectrum):
    ind = np.flatnonzero(spectrum.z_imag > 0)
    lo, hi = int(ind.min()), int(ind.max()) + 3
    hi = min(max(hi, lo + 4), len(spectrum))
    return np.arange(lo, hi)


def _window_fit(w, z, parallel):
    """``R0 + R_b/(1 + jw tau_b) + Z_L`` on the window, multi-started over ``tau_b``.

    The single non-negative RC term stands in for the cell's own reactance
    inside the window (mostly the fastest arc), which a constant offset cannot
    absorb and which would otherwise bias ``L`` low.
    """
    zs = float(np.max(np.abs(z)))
    ws = float(w.max())
    tb = (np.log(0.1 / w.max()), np.log(10.0 / w.min()))

    def model(p):
        r0, l, rb, ltb = p[:4]
        g = p[4] if parallel else 0.0
        jwl = 1j * (w / ws) * l
        return r0 + jwl / (1 + jwl * g) + rb / (1 + 1j * w * np.exp(ltb))

    def resid(p):
        d = model(p) - z / zs
        return np.concatenate([d.real, d.imag])

    l0 = max(float(np.median(np.maximum(z.imag, 0) * ws / w)) / zs, 1e-6)
    lower = [-np.inf, 0, 0, tb[0]] + ([0] if parallel else [])
    upper = [np.inf, np.inf, np.inf, tb[1]] + ([np.inf] if parallel else [])
    best = None
    for t0 in np.linspace(tb[0] + 0.5, tb[1] - 0.5, 5):
        p0 = [float(np.min(z.real)) / zs, l0, 0.01, t0] + ([0.1] if parallel else [])
        res = least_squares(resid, p0, bounds=(lower, upper), xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=4000,
                            method="trf")
        if best is None or res.cost < best.cost:
            best = res
    r0, l = best.x[:2]
    g = best.x[4] if parallel else 0.0
    rel = float(np.linalg.norm(best.fun) / np.linalg.norm(z / zs))
    return float(l * zs / ws), (float(zs / g) if parallel and g > 0 else None), float(r0 * zs), rel


def _full_fit(spectrum, parallel, elements_per_decade=7):
    """Variable projection over the whole spectrum.

    For trial ``(L, R_p)`` the corrected spectrum ``Z - Z_L`` is fitted by
    non-negative least squares with a series resistance, non-negative RC
    elements and a series capacitor (weights ``1/|Z|``); ``(L, R_p)`` minimize
    that residual. ``R_p || L`` equals a negative-resistance RC, so the sign
    constraint is what separates the fixture from the cell.
    """
    w = spectrum.omega
    z = spectrum.impedance
    wt = 1.0 / np.abs(z)
    lo, hi = np.log10(1 / w.max()) - 1, np.log10(1 / w.min()) + 1
    taus = np.logspace(lo, hi, int(np.ceil(elements_per_decade * (hi - lo))) + 1)
    basis = np.column_stack([np.ones_like(w) + 0j, 1 / (1 + 1j * w[:, None] * taus), 1 / (1j * w)])
    basis = basis / np.max(np.abs(basis), axis=0)
    a = np.vstack([basis.real * wt[:, None], basis.imag * wt[:, None]])
    zs = float(np.max(np.abs(z)))
    ws = float(w.max())

    def z_l(p):
        jwl = 1j * (w / ws) * p[0]
        return zs * (jwl / (1 + jwl * p[1]) if parallel else jwl)

    def resid(p):
        d = z - z_l(p)
        b = np.concatenate([d.real * wt, d.imag * wt])
        x, _ = nnls(a, b)
        return a @ x - b

    ind = spectrum.z_imag > 0
    l0 = max(float(np.median(z.imag[ind] * ws / w[ind])) / zs, 1e-6)
    p0, lo_b, hi_b = ([l0, 0.1], [0, 0], [np.inf, np.inf]) if parallel else ([l0], [0], [np.inf])
    res = least_squares(resid, p0, bounds=(lo_b, hi_b), x_scale=[l0] + ([1.0] if parallel else []), xtol=1e-12,
                        ftol=1e-12, gtol=1e-12)
    l = float(res.x[0] * zs / ws)
    rp = float(zs / res.x[1]) if parallel and res.x[1] > 0 else None
    return l, rp, float(np.linalg.norm(res.fun) / np.sqrt(2 * len(w)))


def fit_inductance(spectrum, window="auto", parallel=True):
    """Fit ``Z_L = jwL*R_p/(R_p + jwL)`` (or ``jwL``) to the high-frequency part.

    ``window="auto"`` uses every inductive point plus the two next
    lower-frequency points; ``(f_low, f_high)`` selects a range. On such a
    window the model is ``R0 + R_b/(1 + jw tau_b) + Z_L``; ``R0`` and the
    background RC are not part of the correction. ``window="full"`` instead
    separates ``Z_L`` from the whole spectrum (see :func:`_full_fit`).
    """
    if window in ("auto", "full") and not np.any(spectrum.z_imag > 0):
        msg = "no inductive points; inductance correction skipped"
        warnings.warn(msg, DrtEcmWarning, stacklevel=2)
        return InductanceFit(0.0, None, None, 0.0, warning=msg)
    if window == "full":
        idx = np.arange(len(spectrum))
    elif window == "auto":
        idx = _auto_window(spectrum)
    else:
        f_lo, f_hi = window
        idx = np.flatnonzero((spectrum.frequency >= f_lo) & (spectrum.frequency <= f_hi))
    if len(idx) < 4:
        raise FitError(f"inductance fit window holds {len(idx)} points, need 4")
    f = spectrum.frequency[idx]
    w = 2 * np.pi * f
    z = spectrum.impedance[idx]
    if window == "full":
        inductance, rp, rel = _full_fit(spectrum, parallel)
        r0 = float(np.min(z.real))
    else:
        inductance, rp, r0, rel = _window_fit(w, z, parallel)
    if inductance <= 0:
        raise FitError("inductance fit produced a non-positive inductance")
    return InductanceFit(inductance, rp, (float(f.min()), float(f.max())), rel, offset=r0)


def subtract_inductance(spectrum, fit):
    """Return ``Z - Z_L`` with the ``preprocessed`` flag set."""
    if spectrum.preprocessed:
        raise ValidationError("spectrum already preprocessed; refusing a second correction")
    return spectrum.with_impedance(spectrum.impedance - fit.impedance(spectrum.omega), preprocessed=True)


def truncate_inductive(spectrum):
    """Drop inductive points (``z_imag > 0``) instead of correcting them."""
    if spectrum.preprocessed:
        raise ValidationError("spectrum already preprocessed")
    keep = spectrum.z_imag <= 0
    if keep.sum() < 10:
        raise InsufficientDataError("fewer than 10 capacitive points remain after truncation")
    from .datatypes import ImpedanceSpectrum

    return ImpedanceSpectrum(spectrum.frequency[keep], spectrum.impedance[keep], soc=spectrum.soc,
                             temperature=spectrum.temperature, cell_id=spectrum.cell_id, preprocessed=True)


def preprocess(spectrum, mode="subtract_rl", window="auto"):
    """Apply the configured inductance handling: subtract_rl, subtract_l or truncate."""
    if mode == "truncate":
        if not np.any(spectrum.z_imag > 0):
            return spectrum.with_impedance(spectrum.impedance, preprocessed=True), None
        return truncate_inductive(spectrum), None
    if mode not in ("subtract_rl", "subtract_l"):
        raise ValueError(f"unknown inductance mode {mode!r}")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DrtEcmWarning)
        fit = fit_inductance(spectrum, window=window, parallel=(mode == "subtract_rl"))
    return subtract_inductance(spectrum, fit), fit


def extract_r_ohmic(spectrum):
    """Real part at the highest-frequency crossing of the real axis.

    Linear interpolation in ``z_imag`` between the two frequency-adjacent
    points that bracket zero. A fully capacitive spectrum returns the real
    part at the highest frequency (with a warning).
    """
    zi = spectrum.z_imag
    zr = spectrum.z_real
    if np.all(zi == 0):
        return float(zr[0])
    crossings = []
    for k in range(len(zi) - 1):
        a, b = zi[k], zi[k + 1]
        if a == 0:
            crossings.append(float(zr[k]))
        elif a * b < 0:
            t = a / (a - b)
            crossings.append(float(zr[k] + t * (zr[k + 1] - zr[k])))
    if zi[-1] == 0:
        crossings.append(float(zr[-1]))
    if not crossings:
        if np.all(zi <= 0):
            warnings.warn("spectrum entirely capacitive; using z_real at the highest frequency",
                          DrtEcmWarning, stacklevel=2)
            return float(zr[0])
        raise ValidationError("spectrum entirely inductive; no ohmic crossing")
    if len(crossings) > 1:
        warnings.warn(f"{len(crossings)} zero crossings; using the highest-frequency one",
                      DrtEcmWarning, stacklevel=2)
    return crossings[0]
