"""Linear Kramers-Kronig validity test.

A measurement model made only of KK-compliant elements (series R, series L,
series C and ``M`` fixed-time-constant RC elements) is fitted by linear least
squares. Data that such a model cannot reproduce to within ~1 % are not
consistent with a linear, causal, stationary system and should not be
deconvolved.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConditioningError, InsufficientDataError

DEFAULT_THRESHOLD = 0.01


@dataclass(frozen=True, eq=False)
class KkReport:
    """Residuals ``(Z - Z_fit)/|Z|`` per component and the pass/fail verdict."""

    residual_real: np.ndarray
    residual_imag: np.ndarray
    max_abs_residual: float
    rms_residual: float
    model_size: int
    threshold: float
    passed: bool
    fit: np.ndarray


def _design(omega, taus, capacitor):
    wt = omega[:, None] * taus[None, :]
    rc = 1.0 / (1.0 + 1j * wt)
    cols = [np.ones_like(omega, dtype=complex), 1j * omega]
    if capacitor:
        cols.append(-1j / omega)
    a = np.column_stack(cols + [rc])
    return np.vstack([a.real, a.imag])


def kk_fit(spectrum, elements_per_decade=7, threshold=DEFAULT_THRESHOLD, capacitor=True):
    """Fit the linear KK measurement model and report relative residuals.

    ``capacitor=True`` adds a series capacitance so that spectra ending in a
    blocking (reflective-diffusion) branch are representable; the RC set alone
    cannot follow a -90 degree low-frequency tail.
    """
    if len(spectrum) < 10:
        raise InsufficientDataError("KK test needs at least 10 points")
    if elements_per_decade <= 0:
        raise ValueError("elements_per_decade must be positive")
    w = spectrum.omega
    z = spectrum.impedance
    m = max(1, int(round(elements_per_decade * spectrum.decades)))
    taus = np.logspace(np.log10(1 / w.max()), np.log10(1 / w.min()), m)
    a = _design(w, taus, capacitor)
    b = np.concatenate([z.real, z.imag])
    # rows weighted by 1/|Z| so that the fit targets the reported relative residuals
    wt = np.tile(1.0 / np.abs(z), 2)
    a = a * wt[:, None]
    b = b * wt
    scale = np.linalg.norm(a, axis=0)
    scale[scale == 0] = 1.0
    a_s = a / scale
    coef, _, rank, sv = np.linalg.lstsq(a_s, b, rcond=None)
    if rank < a.shape[1]:
        raise ConditioningError(
            f"KK design matrix rank {rank} < {a.shape[1]} columns; use fewer elements per decade"
        )
    fit_stacked = (a_s @ coef) / wt
    n = len(z)
    fit = fit_stacked[:n] + 1j * fit_stacked[n:]
    mod = np.abs(z)
    rr = (z.real - fit.real) / mod
    ri = (z.imag - fit.imag) / mod
    both = np.concatenate([rr, ri])
    mx = float(np.max(np.abs(both)))
    return KkReport(
        residual_real=rr,
        residual_imag=ri,
        max_abs_residual=mx,
        rms_residual=float(np.sqrt(np.mean(both**2))),
        model_size=m,
        threshold=threshold,
        passed=is_valid_residual(mx, threshold),
        fit=fit,
    )


def is_valid_residual(max_abs_residual, threshold=DEFAULT_THRESHOLD):
    return bool(max_abs_residual < threshold)


def is_valid(report, threshold=DEFAULT_THRESHOLD):
    """True iff the report's maximum absolute residual is strictly below ``threshold``."""
    return is_valid_residual(report.max_abs_residual, threshold)
