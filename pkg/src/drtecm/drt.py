"""Distribution of relaxation times by Tikhonov-regularized non-negative least squares.

The polarization impedance is written as

    Z(w) - R_ohm = integral gamma(ln t) / (1 + j w t) d ln t

with ``gamma(y) = sum_k x_k * exp(-(mu * (y - y_k))**2)`` on a log-spaced grid
of time constants. Discretizing gives ``A x = b`` (real rows stacked over
imaginary rows), solved as

    min ||A x - b||^2 + lam * x^T M x,   x >= 0,

with ``M = D2^T D2`` the second-difference form on the coefficients.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid

from .errors import ConfigurationError, ConvergenceError, DrtEcmWarning, ValidityError
from .kk import kk_fit
from .nnls import nnls
from .preprocess import extract_r_ohmic

LN10 = np.log(10.0)
GL_NODES = 10
RBF_SUPPORT = 7.0  # quadrature covers |mu*u| <= 7, where exp(-49) is negligible


@dataclass(frozen=True, eq=False)
class TauGrid:
    tau: np.ndarray
    points_per_decade: int
    extension: tuple

    @property
    def ln_tau(self):
        return np.log(self.tau)

    @property
    def spacing(self):
        """Grid spacing in natural-log units."""
        return LN10 / self.points_per_decade

    def __len__(self):
        return len(self.tau)


@dataclass(frozen=True, eq=False)
class DrtSystem:
    matrix_a: np.ndarray
    rhs_b: np.ndarray
    penalty_m: np.ndarray
    rbf_shape: float
    grid: TauGrid
    frequency: np.ndarray
    r_ohmic: float
    d2: np.ndarray
    capacitance_column: bool = False
    subtracted_capacitance: float | None = None

    @property
    def omega(self):
        return 2 * np.pi * self.frequency


@dataclass(frozen=True, eq=False)
class DrtResult:
    gamma: np.ndarray
    tau: np.ndarray
    coefficients: np.ndarray
    r_ohmic: float
    r_pol: float
    lam: float
    residual_norm: float
    reconstruction: np.ndarray
    frequency: np.ndarray
    rbf_shape: float
    series_capacitance: float | None = None
    kk_max_residual: float | None = None
    meta: dict = field(default_factory=dict)

    @property
    def ln_tau(self):
        return np.log(self.tau)

    def gamma_at(self, tau):
        """Evaluate gamma between grid points from the RBF expansion."""
        y = np.log(np.asarray(tau, dtype=float))
        return rbf(y[..., None] - self.ln_tau, self.rbf_shape) @ self.coefficients


def rbf(y, mu):
    return np.exp(-((mu * y) ** 2))


def build_tau_grid(spectrum, points_per_decade=10, extension=(2, 2)):
    """Log-spaced time constants from ``10**-below / w_max`` to ``10**above / w_min``."""
    if points_per_decade < 3:
        raise ConfigurationError("points_per_decade must be at least 3")
    below, above = extension
    if below < 0 or above < 0:
        raise ConfigurationError("extension decades must be non-negative")
    w = spectrum.omega
    lo = np.log10(1.0 / w.max()) - below
    hi = np.log10(1.0 / w.min()) + above
    n = int(np.ceil((hi - lo) * points_per_decade - 1e-9)) + 1
    tau = 10.0 ** (lo + np.arange(n) / points_per_decade)
    return TauGrid(tau, int(points_per_decade), (below, above))


def rbf_shape_from_grid(grid, fwhm_coefficient=0.5):
    """Shape factor ``mu`` such that the Gaussian FWHM is ``spacing / fwhm_coefficient``."""
    if fwhm_coefficient <= 0:
        raise ConfigurationError("fwhm_coefficient must be positive")
    return fwhm_coefficient * 2.0 * np.sqrt(np.log(2.0)) / grid.spacing


def second_difference(n):
    """Second-difference operator; first and last rows repeat their one-sided neighbour stencil."""
    if n < 3:
        raise ConfigurationError("need at least 3 grid points for a second-difference penalty")
    d = np.zeros((n, n))
    for i in range(n):
        j = min(max(i, 1), n - 2)
        d[i, j - 1:j + 2] = (1.0, -2.0, 1.0)
    return d


def _kernel(omega, ln_tau, mu, spacing):
    """Quadrature of ``rbf(u)/(1 + j w exp(y_k + u))`` over u with Gauss-Legendre panels."""
    half = RBF_SUPPORT / mu
    n_pan = 2 * int(np.ceil(half / spacing))
    edges = np.linspace(-half, half, n_pan + 1)
    h = 0.5 * (edges[1] - edges[0])
    g, gw = np.polynomial.legendre.leggauss(GL_NODES)
    nodes = (0.5 * (edges[:-1, None] + edges[1:, None]) + h * g[None, :]).ravel()
    weights = np.tile(gw * h, n_pan) * rbf(nodes, mu)
    out = np.empty((len(omega), len(ln_tau)), dtype=complex)
    et = np.exp(nodes)
    for k, y in enumerate(ln_tau):
        out[:, k] = (weights / (1.0 + 1j * omega[:, None] * (np.exp(y) * et)[None, :])).sum(axis=1)
    return out


def assemble_system(spectrum, grid, rbf_shape, r_ohmic=None, capacitance=None):
    """Build ``A``, ``b`` and the penalty for one spectrum.

    ``capacitance`` handles a blocking low-frequency branch that a DRT cannot
    represent: ``None`` ignores it, a float subtracts ``1/(j w C)`` from the
    data, ``"fit"`` appends an unpenalized series-capacitance column whose
    coefficient is ``1/C``.
    """
    if not rbf_shape > 0:
        raise ConfigurationError("rbf_shape must be positive")
    if r_ohmic is None:
        r_ohmic = extract_r_ohmic(spectrum)
    w = spectrum.omega
    z = spectrum.impedance - r_ohmic
    subtracted = None
    if capacitance is not None and capacitance != "fit":
        subtracted = float(capacitance)
        if not subtracted > 0:
            raise ConfigurationError("series capacitance must be positive")
        z = z - 1.0 / (1j * w * subtracted)
    k = _kernel(w, grid.ln_tau, rbf_shape, grid.spacing)
    d2 = second_difference(len(grid))
    if capacitance == "fit":
        k = np.column_stack([k, -1j / w])
        d2 = np.column_stack([d2, np.zeros(len(grid))])
    a = np.vstack([k.real, k.imag])
    b = np.concatenate([z.real, z.imag])
    return DrtSystem(a, b, d2.T @ d2, float(rbf_shape), grid, spectrum.frequency.copy(), float(r_ohmic), d2,
                     capacitance_column=(capacitance == "fit"), subtracted_capacitance=subtracted)


def _solve_coefficients(system, lam):
    a = system.matrix_a
    scale = np.linalg.norm(a, axis=0)
    scale[scale == 0] = 1.0
    aug = np.vstack([a / scale, np.sqrt(lam) * system.d2 / scale])
    rhs = np.concatenate([system.rhs_b, np.zeros(system.d2.shape[0])])
    try:
        z, _ = nnls(aug, rhs)
    except ConvergenceError as exc:
        raise ConvergenceError(str(exc), best=exc.best / scale) from None
    return z / scale


def solve_regularized(system, lam):
    """Non-negative Tikhonov solution for a fixed ``lam``."""
    if not np.isfinite(lam) or lam < 0:
        raise ConfigurationError("lambda must be finite and non-negative")
    x = _solve_coefficients(system, lam)
    return _result(system, x, lam)


def _result(system, x, lam):
    n = len(system.grid)
    coef = x[:n]
    ln_tau = system.grid.ln_tau
    gamma = rbf(ln_tau[:, None] - ln_tau[None, :], system.rbf_shape) @ coef
    fit = system.matrix_a @ x
    m = len(system.frequency)
    w = system.omega
    recon = system.r_ohmic + fit[:m] + 1j * fit[m:]
    cap = None
    if system.capacitance_column:
        cap = float(1.0 / x[n]) if x[n] > 0 else float("inf")
    elif system.subtracted_capacitance is not None:
        cap = system.subtracted_capacitance
        recon = recon + 1.0 / (1j * w * cap)
    return DrtResult(
        gamma=gamma,
        tau=system.grid.tau.copy(),
        coefficients=coef,
        r_ohmic=system.r_ohmic,
        r_pol=float(trapezoid(gamma, ln_tau)),
        lam=float(lam),
        residual_norm=float(np.linalg.norm(fit - system.rhs_b)),
        reconstruction=recon,
        frequency=system.frequency,
        rbf_shape=system.rbf_shape,
        series_capacitance=cap,
    )


def lcurve_point(system, x):
    r = np.linalg.norm(system.matrix_a @ x - system.rhs_b)
    p = np.sqrt(max(float(x @ system.penalty_m @ x), 0.0))
    return np.log(r) if r > 0 else -np.inf, np.log(p) if p > 0 else -np.inf


def _derivatives(t, f, i):
    """First and second three-point derivatives of f at interior index i (non-uniform t)."""
    h1, h2 = t[i] - t[i - 1], t[i + 1] - t[i]
    d1 = (-h2 / (h1 * (h1 + h2))) * f[i - 1] + ((h2 - h1) / (h1 * h2)) * f[i] + (h1 / (h2 * (h1 + h2))) * f[i + 1]
    d2 = 2 * (f[i - 1] / (h1 * (h1 + h2)) - f[i] / (h1 * h2) + f[i + 1] / (h2 * (h1 + h2)))
    return d1, d2


def _curvature(t, rho, eta):
    """Signed curvature of the parametric curve (rho(t), eta(t)) at interior points."""
    k = np.full(len(t), -np.inf)
    for i in range(1, len(t) - 1):
        r1, r2 = _derivatives(t, rho, i)
        e1, e2 = _derivatives(t, eta, i)
        den = (r1**2 + e1**2) ** 1.5
        if den > 0 and np.isfinite(den):
            k[i] = (r1 * e2 - r2 * e1) / den
    return k


def select_lambda_lcurve(system, lambda_grid=None):
    """Corner of the L-curve ``(log||Ax-b||, log sqrt(x^T M x))``.

    Returns ``(lam, curve)`` where ``curve`` lists the ``(log residual,
    log penalty)`` pairs in grid order. Ties go to the larger lambda.
    """
    if lambda_grid is None:
        lambda_grid = np.logspace(-8, 0, 17)
    lams = np.sort(np.asarray(lambda_grid, dtype=float))
    if len(lams) < 8 or np.any(lams <= 0) or np.log10(lams[-1] / lams[0]) < 4 - 1e-9:
        raise ConfigurationError("L-curve grid needs >= 8 positive values spanning >= 4 decades")
    curve = [lcurve_point(system, _solve_coefficients(system, lam)) for lam in lams]
    rho = np.array([c[0] for c in curve])
    eta = np.array([c[1] for c in curve])
    if not (np.all(np.isfinite(rho)) and np.all(np.isfinite(eta))):
        warnings.warn("degenerate L-curve (zero residual or penalty); using the smallest lambda",
                      DrtEcmWarning, stacklevel=2)
        return float(lams[0]), curve
    kappa = _curvature(np.log10(lams), rho, eta)
    best = np.max(kappa)
    if not np.isfinite(best):
        warnings.warn("flat L-curve; using the smallest lambda", DrtEcmWarning, stacklevel=2)
        return float(lams[0]), curve
    idx = int(np.flatnonzero(kappa == best)[-1])
    return float(lams[idx]), curve


@dataclass(frozen=True)
class DrtConfig:
    lam: float | str = 1e-5
    points_per_decade: int = 10
    extension: tuple = (2, 2)
    fwhm_coefficient: float = 0.5
    kk_threshold: float = 0.01
    kk_elements_per_decade: int = 7
    lambda_grid: tuple | None = None
    capacitance: float | str | None = None


def compute_drt(spectrum, config=None, *, kk_report=None, override=False, capacitance=None):
    """KK gate, R_ohm extraction, grid, assembly and solve in one call.

    ``capacitance`` (if given) overrides ``config.capacitance`` for this
    spectrum, e.g. the intercalation capacitance at its state of charge.
    """
    config = config or DrtConfig()
    kk_max = None
    if not override:
        report = kk_report or kk_fit(spectrum, config.kk_elements_per_decade, config.kk_threshold)
        kk_max = report.max_abs_residual
        if not report.max_abs_residual < config.kk_threshold:
            raise ValidityError(
                f"KK check failed: max residual {report.max_abs_residual:.3%} >= {config.kk_threshold:.3%}"
            )
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DrtEcmWarning)
        r_ohmic = extract_r_ohmic(spectrum)
    grid = build_tau_grid(spectrum, config.points_per_decade, config.extension)
    mu = rbf_shape_from_grid(grid, config.fwhm_coefficient)
    cap = config.capacitance if capacitance is None else capacitance
    system = assemble_system(spectrum, grid, mu, r_ohmic=r_ohmic, capacitance=cap)
    lam = config.lam
    curve = None
    if isinstance(lam, str):
        if lam != "lcurve":
            raise ConfigurationError(f"lambda must be a number or 'lcurve', got {lam!r}")
        lam, curve = select_lambda_lcurve(system, config.lambda_grid)
    result = solve_regularized(system, lam)
    meta = {"kk_max_residual": kk_max}
    if curve is not None:
        meta["lcurve"] = curve
    return DrtResult(**{**result.__dict__, "kk_max_residual": kk_max, "meta": meta})
