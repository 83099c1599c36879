"""DRT peak detection, Gaussian fitting, RC mapping and process attribution.

Peaks are fitted in natural-log time-constant coordinates ``y = ln(tau)``.
A Gaussian ``a*exp(-((y-m)/s)**2/2)`` has area ``a*s*sqrt(2*pi)``, which is the
resistance of the process; its centre gives the time constant.

A reflective Warburg element does not produce one peak but a comb of peaks at
``tau_1/n**2`` with areas ``6 R_D/(n**2 pi**2)``. With ``diffusion="comb"`` the
diffusion peak is fitted as that whole comb, so its area is ``R_D`` directly
and the comb's satellites are not mistaken for (or added to) charge-transfer
peaks.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np
from scipy.integrate import trapezoid
from scipy.optimize import least_squares
from scipy.signal import find_peaks, peak_widths
from scipy.special import erfc

from .errors import DrtEcmWarning

SQRT2PI = np.sqrt(2 * np.pi)
COMB_TERMS = 40
COMB_PARAMS = 4
COMB_ANCHOR_MIN_TAU = 10.0
REFINE = 4
SATELLITE_N = (1.5, 4.5)
SATELLITE_AMPLITUDE = 0.5


class Attribution(str, Enum):
    CONTACT = "ContactInterface"
    SEI = "SeiLayer"
    CHARGE_TRANSFER = "ChargeTransfer"
    DIFFUSION = "Diffusion"


# half-open [lower, upper) bands in seconds
BANDS = (
    (0.0, 1e-3, Attribution.CONTACT),
    (1e-3, 1e-2, Attribution.SEI),
    (1e-2, 1e1, Attribution.CHARGE_TRANSFER),
    (1e1, np.inf, Attribution.DIFFUSION),
)


@dataclass(frozen=True)
class Peak:
    tau_peak: float
    area: float
    width: float
    amplitude: float
    attribution: Attribution | None = None
    kind: str = "gaussian"
    fitted: bool = True
    comb_width: float | None = None

    def __post_init__(self):
        if not (self.area > 0 and self.width > 0 and self.tau_peak > 0):
            raise ValueError(f"invalid peak {self}")


@dataclass(frozen=True)
class RcElement:
    resistance: float
    capacitance: float

    @property
    def tau(self):
        return self.resistance * self.capacitance


def attribute(tau):
    """Band of a single time constant."""
    if not (tau > 0 and np.isfinite(tau)):
        raise ValueError(f"time constant must be finite and positive, got {tau}")
    for lo, hi, name in BANDS:
        if lo <= tau < hi:
            return name
    raise AssertionError("bands do not partition (0, inf)")


def attribute_processes(peaks):
    """Attribute each peak by band; a Warburg comb is always diffusion."""
    return [replace(p, attribution=Attribution.DIFFUSION if p.kind == "warburg" else attribute(p.tau_peak))
            for p in peaks]


def peaks_to_rc(peaks):
    out = []
    for p in peaks:
        if not p.area > 0:
            raise ValueError("peak area must be positive")
        out.append(RcElement(p.area, p.tau_peak / p.area))
    return out


def detect_peaks(drt, prominence_fraction=0.02):
    """Local maxima of gamma with prominence >= fraction * max(gamma), sorted by tau.

    Positions are refined by a parabola through the three samples around each
    maximum (in ln tau).
    """
    g = np.asarray(drt.gamma, dtype=float)
    top = float(np.max(g)) if len(g) else 0.0
    if top <= 0:
        return []
    idx, _ = find_peaks(g, prominence=prominence_fraction * top)
    y = np.log(drt.tau)
    out = []
    for i in idx:
        yi, amp = y[i], g[i]
        den = g[i - 1] - 2 * g[i] + g[i + 1]
        if den < 0:
            d = 0.5 * (g[i - 1] - g[i + 1]) / den
            yi = y[i] + d * (y[i + 1] - y[i])
            amp = g[i] - 0.25 * (g[i - 1] - g[i + 1]) * d
        out.append((float(np.exp(yi)), float(amp)))
    return out


def gaussian(y, a, m, s):
    return a * np.exp(-0.5 * ((y - m) / s) ** 2)


def warburg_comb(y, r_d, m1, s, s1=None, n_terms=COMB_TERMS):
    """DRT of a reflective Warburg element blurred by a Gaussian of width ``s``.

    The first term may have its own width ``s1``: when ``tau_1`` lies beyond
    the lowest measured frequency it is resolved less sharply than the rest.
    Terms ``n <= n_terms`` are explicit; the rest form the continuous tail
    ``(3 R_D/pi^2) exp((y - m1)/2)`` below ``m1 - 2 ln(n_terms + 1/2)``.
    """
    n = np.arange(1, n_terms + 1)
    centres = m1 - 2 * np.log(n)
    widths = np.full(n_terms, float(s))
    if s1 is not None:
        widths[0] = s1
    amps = 6 * r_d / (n**2 * np.pi**2) / (widths * SQRT2PI)
    out = (amps[None, :] * np.exp(-0.5 * ((y[:, None] - centres[None, :]) / widths[None, :]) ** 2)).sum(axis=1)
    yc = m1 - 2 * np.log(n_terms + 0.5)
    expo = np.minimum((y - m1) / 2 + s**2 / 8, 50.0)
    tail = 3 * r_d / np.pi**2 * np.exp(expo) * 0.5 * erfc((y - yc + s**2 / 2) / (s * np.sqrt(2)))
    return out + tail


def _trapezoid_peaks(y, g, idx):
    """Fallback areas: integrate gamma between the valleys enclosing each maximum."""
    peaks = []
    for j, i in enumerate(idx):
        lo = idx[j - 1] + int(np.argmin(g[idx[j - 1]:i + 1])) if j > 0 else 0
        hi = i + int(np.argmin(g[i:idx[j + 1] + 1])) if j + 1 < len(idx) else len(g) - 1
        area = float(trapezoid(g[lo:hi + 1], y[lo:hi + 1]))
        width = max(area / (g[i] * SQRT2PI), 1e-6) if g[i] > 0 else 1e-6
        peaks.append(Peak(float(np.exp(y[i])), area, width, float(g[i]), fitted=False))
    return peaks


@dataclass(frozen=True)
class _Setup:
    y: np.ndarray
    g: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    comb: bool
    y_range: tuple


def _unpack(p, k, comb):
    gs = p[:3 * k].reshape(k, 3)
    return gs, (p[3 * k:] if comb else None)


def _model(p, y, k, comb):
    gs, c = _unpack(p, k, comb)
    out = np.zeros_like(y)
    for a, m, s in gs:
        out += gaussian(y, a, m, s)
    if comb:
        out += warburg_comb(y, *c)
    return out


def _fit(setup, p0):
    k = (len(p0) - (COMB_PARAMS if setup.comb else 0)) // 3
    p0 = np.clip(p0, setup.lo[:len(p0)] + 1e-12, setup.hi[:len(p0)] - 1e-12)
    res = least_squares(
        lambda p: _model(p, setup.y, k, setup.comb) - setup.g,
        p0, bounds=(setup.lo[:len(p0)], setup.hi[:len(p0)]), x_scale="jac", max_nfev=400 * len(p0),
        xtol=1e-12, ftol=1e-12, gtol=1e-12,
    )
    return res, float(np.sum(res.fun**2))


def _bounds(k, comb, y_range, s_min, s_max, g_max, yc=None):
    lo, hi = [], []
    for _ in range(k):
        lo += [0.0, y_range[0], s_min]
        hi += [10 * g_max, y_range[1], s_max]
    if comb:
        lo += [0.0, yc[0], s_min, s_min]
        hi += [np.inf, yc[1], s_max, s_max]
    return np.array(lo), np.array(hi)


def fit_gaussians(drt, k="auto", prominence_fraction=0.02, diffusion="gaussian", improvement=0.10):
    """Fit ``k`` Gaussians (plus an optional Warburg comb) to the DRT.

    ``k="auto"`` fits the detected count and one more, keeping the larger
    model only if it lowers the squared residual by more than ``improvement``.
    ``k="detected"`` uses the detected count only. If the optimizer fails the
    detected maxima are returned with trapezoid areas and ``fitted=False``.
    """
    y_grid = np.log(drt.tau)
    dy = y_grid[1] - y_grid[0]
    y = np.linspace(y_grid[0], y_grid[-1], REFINE * (len(y_grid) - 1) + 1)
    g = drt.gamma_at(np.exp(y)) if hasattr(drt, "gamma_at") else np.interp(y, y_grid, drt.gamma)
    g_max = float(np.max(g)) if len(g) else 0.0
    if g_max <= 0:
        return []
    found = detect_peaks(drt, prominence_fraction)
    if not found:
        return []
    s_basis = 1.0 / (drt.rbf_shape * np.sqrt(2)) if drt.rbf_shape else dy
    s_min, s_max = 0.5 * s_basis, 3 * np.log(10)
    y_range = (y_grid[0], y_grid[-1])

    comb_seed = None
    if diffusion == "comb":
        cands = [(t, a) for t, a in found if t >= COMB_ANCHOR_MIN_TAU]
        if cands:
            comb_seed = cands[-1]
            t1, a1 = comb_seed
            keep = []
            for t, a in found:
                if (t, a) == comb_seed:
                    continue
                # terms n = 2..4 of the comb smear into one shoulder at tau_1 / n^2
                n_est = np.sqrt(t1 / t)
                satellite = SATELLITE_N[0] <= n_est <= SATELLITE_N[1] and a <= SATELLITE_AMPLITUDE * a1
                if not satellite:
                    keep.append((t, a))
            found = keep
    elif diffusion != "gaussian":
        raise ValueError(f"unknown diffusion model {diffusion!r}")
    comb = comb_seed is not None

    grid_idx = [int(np.argmin(np.abs(y_grid - np.log(t)))) for t, _ in found]
    widths = peak_widths(drt.gamma, grid_idx, rel_height=0.5)[0] if grid_idx else []
    p0 = []
    for (t, a), wd in zip(found, widths):
        s0 = float(np.clip(wd * dy / 2.3548, s_min * 1.01, s_max * 0.99))
        p0 += [a, np.log(t), s0]
    if comb:
        t1, a1 = comb_seed
        s0 = 1.5 * s_basis
        p0 += [a1 * s0 * SQRT2PI * np.pi**2 / 6, np.log(t1), s0, s0]
        yc = (np.log(t1) - 3 * dy, min(np.log(t1) + 3 * dy, y_range[1] + 2 * np.log(10)))
    else:
        yc = None

    if isinstance(k, str) and k not in ("auto", "detected"):
        raise ValueError(f"k must be a count, 'auto' or 'detected', got {k!r}")
    k0 = len(found)
    if isinstance(k, (int, np.integer)):
        if k < 1:
            raise ValueError("k must be at least 1")
        if k < k0:
            order = np.argsort([-a for _, a in found])[:k]
            sel = sorted(order)
            p0 = sum(([p0[3 * i], p0[3 * i + 1], p0[3 * i + 2]] for i in sel), []) + (p0[3 * k0:] if comb else [])
            k0 = k

    def run(kk, start):
        lo, hi = _bounds(kk, comb, y_range, s_min, s_max, g_max, yc)
        st = _Setup(y, g, lo, hi, comb, y_range)
        return _fit(st, np.array(start, dtype=float))

    try:
        res, sse = run(k0, p0)
        if not res.success:
            raise RuntimeError(res.message)
        best, best_k = res, k0
        extra = (k - k0) if isinstance(k, (int, np.integer)) else (1 if k == "auto" else 0)
        for _ in range(extra):
            r = g - _model(best.x, y, best_k, comb)
            i = int(np.argmax(r))
            gs, c = _unpack(best.x, best_k, comb)
            start = list(gs.ravel()) + [max(r[i], 1e-3 * g_max), y[i], 1.5 * s_basis] + (list(c) if comb else [])
            res2, sse2 = run(best_k + 1, start)
            if k == "auto" and not (res2.success and sse2 < (1 - improvement) * sse):
                break
            best, best_k, sse = res2, best_k + 1, sse2
    except (RuntimeError, ValueError, np.linalg.LinAlgError) as exc:
        warnings.warn(f"Gaussian fit failed ({exc}); using trapezoid areas", DrtEcmWarning, stacklevel=2)
        idx = find_peaks(drt.gamma, prominence=prominence_fraction * np.max(drt.gamma))[0]
        return _trapezoid_peaks(y_grid, drt.gamma, list(idx))

    gs, c = _unpack(best.x, best_k, comb)
    peaks = [Peak(float(np.exp(m)), float(a * s * SQRT2PI), float(s), float(a)) for a, m, s in gs if a > 0]
    if comb:
        r_d, m1, s, s1 = c
        peaks.append(Peak(float(np.exp(m1)), float(r_d), float(s1), float(6 * r_d / np.pi**2 / (s1 * SQRT2PI)),
                          kind="warburg", comb_width=float(s)))
    return sorted(peaks, key=lambda p: p.tau_peak)


def fit_residual(drt, peaks):
    """Relative residual ``||gamma - model|| / ||gamma||`` of a peak set on the grid."""
    y = np.log(drt.tau)
    model = np.zeros_like(y)
    for p in peaks:
        if p.kind == "warburg":
            s = p.width if p.comb_width is None else p.comb_width
            model += warburg_comb(y, p.area, np.log(p.tau_peak), s, p.width)
        else:
            model += gaussian(y, p.amplitude, np.log(p.tau_peak), p.width)
    return float(np.linalg.norm(drt.gamma - model) / np.linalg.norm(drt.gamma))
