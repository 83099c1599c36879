"""Equivalent-circuit model: structure, parameter trends, Warburg block, serialization.

The model is ``R_ohm`` in series with ``n_rc`` RC branches and a reflective
Warburg element. In the time domain the Warburg element is realized as its
intercalation capacitance ``C_D`` plus a ladder of RC branches with
``R_n = 6 R_D/(n^2 pi^2)`` and ``C_n = C_D/2``. In the frequency domain the
analytic Warburg impedance is used.

Every parameter except ``C_D`` is a polynomial in open-circuit voltage per
characterized temperature; ``C_D`` is a lookup table derived from dQ/dV of the
OCV curve. Between temperatures parameters are interpolated linearly, outside
the characterized interval they are refused.
"""
from __future__ import annotations

import warnings
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid

from .errors import (
    ConfigurationError,
    DrtEcmWarning,
    ExtrapolationError,
    RangeError,
    SchemaError,
    StructuralError,
    VersionError,
)
from .peaks import Attribution, RcElement

SCHEMA_VERSION = 1
DEFAULT_LADDER = 5
KIND_DEGREE = {"linear": 1, "quadratic": 2}
DEFAULT_TREND_KINDS = {"ohmic": "linear", "resistance": "auto", "capacitance": "auto", "diffusion": "quadratic"}


@dataclass(frozen=True, eq=False)
class ParameterTrend:
    """A parameter as a function of OCV: polynomial (ascending coefficients) or lookup table."""

    kind: str
    coefficients: tuple = ()
    voltage: np.ndarray | None = None
    value: np.ndarray | None = None
    temperature: float | None = None

    def __post_init__(self):
        if self.kind in KIND_DEGREE:
            object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))
            if len(self.coefficients) != KIND_DEGREE[self.kind] + 1:
                raise ConfigurationError(f"{self.kind} trend needs {KIND_DEGREE[self.kind] + 1} coefficients")
        elif self.kind == "lookup":
            v = np.asarray(self.voltage, dtype=float)
            y = np.asarray(self.value, dtype=float)
            if v.shape != y.shape or len(v) < 2:
                raise ConfigurationError("lookup trend needs matching voltage/value arrays of length >= 2")
            if np.any(np.diff(v) <= 0):
                raise ConfigurationError("lookup voltages must be strictly increasing")
            v.setflags(write=False)
            y.setflags(write=False)
            object.__setattr__(self, "voltage", v)
            object.__setattr__(self, "value", y)
        else:
            raise ConfigurationError(f"unknown trend kind {self.kind!r}")

    def __call__(self, ocv):
        if self.kind == "lookup":
            return np.interp(ocv, self.voltage, self.value)
        v = np.asarray(ocv, dtype=float)
        out = np.zeros_like(v) + self.coefficients[-1]
        for c in reversed(self.coefficients[:-1]):
            out = out * v + c
        return out if out.ndim else float(out)

    @property
    def vertex(self):
        """Stationary point of a quadratic trend."""
        if self.kind != "quadratic":
            raise ValueError("vertex only defined for quadratic trends")
        return -self.coefficients[1] / (2 * self.coefficients[2])

    def to_dict(self):
        if self.kind == "lookup":
            return {"kind": "lookup", "voltage": self.voltage.tolist(), "value": self.value.tolist()}
        return {"kind": self.kind, "coefficients": list(self.coefficients)}

    @classmethod
    def from_dict(cls, d, where="trend"):
        kind = _field(d, "kind", where)
        if kind == "lookup":
            return cls("lookup", voltage=_field(d, "voltage", where), value=_field(d, "value", where))
        return cls(kind, coefficients=_field(d, "coefficients", where))


def fit_trend(ocv, values, kind="auto", improvement=0.30):
    """Least-squares polynomial in OCV.

    ``auto`` picks a quadratic only when it cuts the residual sum of squares
    by more than ``improvement`` relative to a line, and only with at least
    four samples (a parabola through three points always fits exactly).
    """
    v = np.asarray(ocv, dtype=float)
    y = np.asarray(values, dtype=float)
    if kind not in ("linear", "quadratic", "auto"):
        raise ConfigurationError(f"unknown trend kind {kind!r}")
    need = 2 if kind in ("linear", "auto") else 3
    if len(v) < need:
        raise ValueError(f"{kind} trend needs at least {need} samples, got {len(v)}")

    def fit(deg):
        coef = np.polynomial.polynomial.polyfit(v, y, deg)
        r = y - np.polynomial.polynomial.polyval(v, coef)
        return coef, float(r @ r)

    if kind != "auto":
        return ParameterTrend(kind, fit(KIND_DEGREE[kind])[0])
    c1, rss1 = fit(1)
    if len(v) < 4 or rss1 <= 1e-20 * max(float(y @ y), 1e-300):
        return ParameterTrend("linear", c1)
    c2, rss2 = fit(2)
    if rss2 < (1 - improvement) * rss1:
        return ParameterTrend("quadratic", c2)
    return ParameterTrend("linear", c1)


def _smooth(charge, voltage, window):
    """Moving average over ``window`` (Ah), symmetric and shrinking at the ends."""
    h = 0.5 * window
    h_i = np.minimum(h, np.minimum(charge - charge[0], charge[-1] - charge))
    lo = np.searchsorted(charge, charge - h_i - 1e-12 * window, side="left")
    hi = np.searchsorted(charge, charge + h_i + 1e-12 * window, side="right")
    cs = np.concatenate([[0.0], np.cumsum(voltage)])
    return (cs[hi] - cs[lo]) / (hi - lo)


def smoothed_ocv(ocv, smoothing_window=0.01):
    return _smooth(ocv.charge, ocv.voltage, smoothing_window * ocv.capacity)


def intercalation_capacitance(ocv, smoothing_window=0.01, cap_factor=10.0):
    """``C_D(V) = |dQ/dV|`` of the smoothed OCV curve as a lookup trend keyed by voltage.

    ``smoothing_window`` is a SoC fraction. Values above ``cap_factor`` times
    the 99th percentile (flat plateaus) are capped with a warning.
    """
    v = smoothed_ocv(ocv, smoothing_window)
    q = ocv.charge * 3600.0
    with np.errstate(divide="ignore"):
        c = 1.0 / np.abs(np.gradient(v, q))
    finite = c[np.isfinite(c)]
    if len(finite) == 0:
        raise ValueError("OCV curve is flat everywhere; intercalation capacitance undefined")
    cap = cap_factor * np.percentile(finite, 99)
    if np.any(~np.isfinite(c) | (c > cap)):
        warnings.warn(f"dQ/dV capped at {cap:.4g} F on flat OCV segments", DrtEcmWarning, stacklevel=2)
        c = np.minimum(np.where(np.isfinite(c), c, cap), cap)
    order = np.argsort(v, kind="stable")
    vs, cs = v[order], c[order]
    uv, inv = np.unique(vs, return_inverse=True)
    cu = np.bincount(inv, weights=cs) / np.bincount(inv)
    return ParameterTrend("lookup", voltage=uv, value=cu, temperature=ocv.temperature)


def ocv_soc_table(ocv, smoothing_window=0.01):
    """Monotone (soc, ocv) table, both ascending, from the smoothed curve."""
    v = smoothed_ocv(ocv, smoothing_window)
    soc = (1.0 - ocv.charge / ocv.capacity)[::-1]
    v = v[::-1]
    if np.any(np.diff(v) <= 0):
        warnings.warn("smoothed OCV not strictly monotone; forcing monotone table", DrtEcmWarning, stacklevel=2)
        v = np.maximum.accumulate(v)
        bump = np.diff(v) <= 0
        v[1:][bump] += np.cumsum(bump)[bump] * 1e-9
    return soc, v


def warburg_ladder(r_d, c_d, n_branches=DEFAULT_LADDER):
    """RC branches of the truncated Foster expansion of the reflective Warburg element.

    Returns ``(branches, c_d)``; the series capacitor ``c_d`` is the element's
    low-frequency limit.
    """
    if n_branches < 1:
        raise ConfigurationError("ladder needs at least one branch")
    if not (r_d > 0 and c_d > 0):
        raise ValueError("r_d and c_d must be positive")
    n = np.arange(1, n_branches + 1)
    return [RcElement(float(6 * r_d / (k**2 * np.pi**2)), float(c_d / 2)) for k in n], float(c_d)


def ladder_impedance(r_d, c_d, omega, n_branches=DEFAULT_LADDER):
    branches, c = warburg_ladder(r_d, c_d, n_branches)
    w = np.asarray(omega, dtype=float)
    z = 1.0 / (1j * w * c)
    for b in branches:
        z = z + b.resistance / (1 + 1j * w * b.tau)
    return z


def warburg_impedance(r_d, c_d, omega):
    """``3 R_D coth(x)/x`` with ``x = sqrt(3 j w R_D C_D)`` (principal root)."""
    w = np.asarray(omega, dtype=float)
    if np.any(w <= 0):
        raise ValueError("omega must be positive")
    x = np.sqrt(3j * w * r_d * c_d)
    out = np.empty(x.shape, dtype=complex)
    big = x.real > 20
    small = np.abs(x) < 1e-3
    mid = ~(big | small)
    out[big] = 3 * r_d / x[big]
    xs = x[small]
    out[small] = 3 * r_d * (1 / xs**2 + 1 / 3 - xs**2 / 45)
    out[mid] = 3 * r_d / (x[mid] * np.tanh(x[mid]))
    return out if out.ndim else complex(out)


@dataclass(frozen=True, eq=False)
class TemperatureSet:
    temperature: float
    ohmic: ParameterTrend
    rc: tuple  # of (resistance trend, capacitance trend)
    r_diffusion: ParameterTrend
    c_d: ParameterTrend
    ocv_soc: tuple  # (soc ascending, ocv ascending)
    capacity: float


@dataclass(frozen=True, eq=False)
class EcmModel:
    sets: tuple
    attributions: tuple
    ladder_size: int = DEFAULT_LADDER
    voltage_limits: tuple = (3.0, 4.2)
    diagnostics: tuple = ()

    def __post_init__(self):
        sets = tuple(sorted(self.sets, key=lambda s: s.temperature))
        if not sets:
            raise StructuralError("model needs at least one temperature")
        n = {len(s.rc) for s in sets}
        if len(n) != 1 or n.pop() != len(self.attributions):
            raise StructuralError("all temperatures must share the same RC structure")
        object.__setattr__(self, "sets", sets)
        object.__setattr__(self, "attributions", tuple(Attribution(a) for a in self.attributions))

    @property
    def temperatures(self):
        return [s.temperature for s in self.sets]

    @property
    def n_rc(self):
        return len(self.attributions)

    @property
    def n_parameters(self):
        """Independent parameters: R_ohm, (R_i, C_i) per RC branch, R_D and C_D."""
        return 1 + 2 * self.n_rc + 2


@dataclass(frozen=True)
class ConcreteParameters:
    r_ohm: float
    rc: tuple  # of (R, C)
    r_d: float
    c_d: float
    ladder_size: int = DEFAULT_LADDER
    ocv: float | None = None
    temperature: float | None = None

    def branches(self):
        """All (R, C) branches in state order: RC elements then ladder."""
        ladder, _ = warburg_ladder(self.r_d, self.c_d, self.ladder_size)
        return list(self.rc) + [(b.resistance, b.capacitance) for b in ladder]


def _bracket(model, temperature):
    ts = model.temperatures
    if not ts[0] - 1e-9 <= temperature <= ts[-1] + 1e-9:
        raise ExtrapolationError(f"temperature {temperature} outside characterized range [{ts[0]}, {ts[-1]}]")
    for i, t in enumerate(ts):
        if temperature == t:
            return i, i, 0.0
    j = int(np.searchsorted(ts, temperature))
    return j - 1, j, (temperature - ts[j - 1]) / (ts[j] - ts[j - 1])


def _set_values(s, ocv):
    return ([float(s.ohmic(ocv))] + [float(x) for r, c in s.rc for x in (r(ocv), c(ocv))]
            + [float(s.r_diffusion(ocv)), float(s.c_d(ocv))])


def ocv_from_soc(model, soc, temperature):
    i, j, w = _bracket(model, temperature)
    a = np.interp(soc, *model.sets[i].ocv_soc)
    if w == 0.0:
        return float(a)
    b = np.interp(soc, *model.sets[j].ocv_soc)
    return float(a + w * (b - a))


def soc_from_ocv(model, v_oc, temperature):
    """Inverse OCV lookup, interpolated linearly between the bracketing temperatures."""
    i, j, w = _bracket(model, temperature)
    out = []
    for k in {i, j} if w else {i}:
        soc, ocv = model.sets[k].ocv_soc
        if not ocv[0] - 1e-12 <= v_oc <= ocv[-1] + 1e-12:
            raise RangeError(f"v_oc {v_oc} outside OCV table [{ocv[0]}, {ocv[-1]}] at {model.sets[k].temperature} C")
        out.append((k, float(np.interp(v_oc, ocv, soc))))
    vals = dict(out)
    if w == 0.0:
        return vals[i]
    return vals[i] + w * (vals[j] - vals[i])


def parameters_at(model, temperature, soc=None, ocv=None):
    """Concrete parameter set at (OCV or SoC, temperature)."""
    if (soc is None) == (ocv is None):
        raise ValueError("give exactly one of soc or ocv")
    i, j, w = _bracket(model, temperature)
    if ocv is None:
        ocv = ocv_from_soc(model, soc, temperature)
    lo, hi = model.voltage_limits
    if not lo - 1e-9 <= ocv <= hi + 1e-9:
        raise RangeError(f"OCV {ocv} outside voltage limits {model.voltage_limits}")
    vals = np.array(_set_values(model.sets[i], ocv))
    if w != 0.0:
        vals = vals + w * (np.array(_set_values(model.sets[j], ocv)) - vals)
    n = model.n_rc
    rc = tuple((float(vals[1 + 2 * k]), float(vals[2 + 2 * k])) for k in range(n))
    return ConcreteParameters(float(vals[0]), rc, float(vals[-2]), float(vals[-1]), model.ladder_size,
                              float(ocv), float(temperature))


def params_impedance(p, omega):
    w = np.asarray(omega, dtype=float)
    z = p.r_ohm + warburg_impedance(p.r_d, p.c_d, w)
    for r, c in p.rc:
        z = z + r / (1 + 1j * w * r * c)
    return z


def model_impedance(model, soc, temperature, omega):
    """``R_ohm + sum R_i/(1 + j w R_i C_i) + Z_W`` with the analytic Warburg element."""
    return params_impedance(parameters_at(model, temperature, soc=soc), omega)


@dataclass(frozen=True)
class ExtractedPoint:
    """Peaks and ohmic resistance extracted from the spectrum at one (soc, T)."""

    soc: float
    temperature: float
    r_ohmic: float
    peaks: tuple = field(default_factory=tuple)


def _band_signature(peaks):
    counts = defaultdict(int)
    for p in peaks:
        if p.attribution != Attribution.DIFFUSION:
            counts[p.attribution] += 1
    return tuple(counts[a] for a in (Attribution.CONTACT, Attribution.SEI, Attribution.CHARGE_TRANSFER))


def _ordered_rc_peaks(peaks):
    order = [Attribution.CONTACT, Attribution.SEI, Attribution.CHARGE_TRANSFER]
    rc = [p for p in peaks if p.attribution != Attribution.DIFFUSION]
    return sorted(rc, key=lambda p: (order.index(p.attribution), p.tau_peak))


def build_model(points, ocv_curves, trend_kinds=None, ladder_size=DEFAULT_LADDER, smoothing_window=0.01,
                cap_factor=10.0, voltage_limits=None):
    """Assemble an :class:`EcmModel` from per-(soc, T) extracted peaks.

    Peaks are matched across SoC by attribution band first and by rank in
    ``tau`` within a band second. Each (soc, T) must have exactly one
    diffusion peak and all must share the same per-band peak counts.
    """
    kinds = {**DEFAULT_TREND_KINDS, **(trend_kinds or {})}
    points = list(points)
    if not points:
        raise StructuralError("no extracted points")
    curves = {c.temperature: c for c in ocv_curves}

    missing_d = [(p.soc, p.temperature) for p in points
                 if sum(q.attribution == Attribution.DIFFUSION for q in p.peaks) != 1]
    if missing_d:
        raise StructuralError(f"need exactly one diffusion peak at each point; offending (soc, T): {missing_d}")
    sigs = defaultdict(list)
    for p in points:
        sigs[_band_signature(p.peaks)].append((p.soc, p.temperature))
    if len(sigs) > 1:
        ref = max(sigs, key=lambda k: len(sigs[k]))
        bad = sorted(x for k, v in sigs.items() if k != ref for x in v)
        raise StructuralError(f"inconsistent peak counts (expected per-band {ref}); offending (soc, T): {bad}")
    signature = next(iter(sigs))
    attributions = [p.attribution for p in _ordered_rc_peaks(points[0].peaks)]

    by_t = defaultdict(list)
    for p in points:
        by_t[p.temperature].append(p)
    sets, diagnostics = [], []
    for t, pts in sorted(by_t.items()):
        if t not in curves:
            raise StructuralError(f"no OCV curve at {t} C")
        curve = curves[t]
        pts.sort(key=lambda p: p.soc)
        soc_tab, ocv_tab = ocv_soc_table(curve, smoothing_window)
        v = np.interp([p.soc for p in pts], soc_tab, ocv_tab)
        rcs = [_ordered_rc_peaks(p.peaks) for p in pts]
        rc_trends = []
        for k in range(sum(signature)):
            r = np.array([row[k].area for row in rcs])
            c = np.array([row[k].tau_peak / row[k].area for row in rcs])
            rc_trends.append((fit_trend(v, r, kinds["resistance"]), fit_trend(v, c, kinds["capacitance"])))
            if attributions[k] == Attribution.CONTACT and len(r) > 1 and (r.max() - r.min()) / r.mean() > 0.2:
                msg = f"contact-interface peak {k} varies {((r.max() - r.min()) / r.mean()):.0%} across SoC at {t} C"
                diagnostics.append(msg)
                warnings.warn(msg, DrtEcmWarning, stacklevel=2)
        r_d = np.array([next(q for q in p.peaks if q.attribution == Attribution.DIFFUSION).area for p in pts])
        r_ohm = np.array([p.r_ohmic for p in pts])
        sets.append(TemperatureSet(
            temperature=float(t),
            ohmic=fit_trend(v, r_ohm, kinds["ohmic"]),
            rc=tuple(rc_trends),
            r_diffusion=fit_trend(v, r_d, kinds["diffusion"]),
            c_d=intercalation_capacitance(curve, smoothing_window, cap_factor),
            ocv_soc=(soc_tab, ocv_tab),
            capacity=float(curve.capacity),
        ))
    if voltage_limits is None:
        voltage_limits = (min(c.voltage_limits[0] for c in curves.values()),
                          max(c.voltage_limits[1] for c in curves.values()))
    return EcmModel(tuple(sets), tuple(attributions), ladder_size, tuple(voltage_limits), tuple(diagnostics))


# ---------------------------------------------------------------- serialization

def _field(d, name, where):
    if not isinstance(d, dict) or name not in d:
        raise SchemaError(f"missing field {name!r} in {where}")
    return d[name]


def model_to_dict(model):
    return {
        "schema_version": SCHEMA_VERSION,
        "temperatures": [s.temperature for s in model.sets],
        "structure": {"n_rc": model.n_rc, "ladder_size": model.ladder_size,
                      "attributions": [a.value for a in model.attributions]},
        "voltage_limits": list(model.voltage_limits),
        "trends": [
            {
                "temperature": s.temperature,
                "ohmic_trend": s.ohmic.to_dict(),
                "rc_trends": [{"resistance": r.to_dict(), "capacitance": c.to_dict()} for r, c in s.rc],
                "r_diffusion_trend": s.r_diffusion.to_dict(),
            }
            for s in model.sets
        ],
        "ocv_soc": [{"temperature": s.temperature, "soc": s.ocv_soc[0].tolist(), "ocv": s.ocv_soc[1].tolist()}
                    for s in model.sets],
        "c_d_table": [{"temperature": s.temperature, "voltage": s.c_d.voltage.tolist(),
                       "capacitance": s.c_d.value.tolist()} for s in model.sets],
        "capacity_ah": [s.capacity for s in model.sets],
        "diagnostics": list(model.diagnostics),
    }


def model_from_dict(d):
    version = _field(d, "schema_version", "model")
    if version != SCHEMA_VERSION:
        raise VersionError(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")
    temps = _field(d, "temperatures", "model")
    structure = _field(d, "structure", "model")
    n_rc = _field(structure, "n_rc", "structure")
    ladder = _field(structure, "ladder_size", "structure")
    attributions = structure.get("attributions") or [Attribution.CHARGE_TRANSFER.value] * n_rc
    trends = _field(d, "trends", "model")
    ocv = _field(d, "ocv_soc", "model")
    cd = _field(d, "c_d_table", "model")
    caps = _field(d, "capacity_ah", "model")
    if not (len(trends) == len(ocv) == len(cd) == len(caps) == len(temps)):
        raise SchemaError("per-temperature arrays must match 'temperatures' in length")
    sets = []
    for i, t in enumerate(temps):
        tr = trends[i]
        where = f"trends[{i}]"
        rc = []
        for j, item in enumerate(_field(tr, "rc_trends", where)):
            w = f"{where}.rc_trends[{j}]"
            rc.append((ParameterTrend.from_dict(_field(item, "resistance", w), w),
                       ParameterTrend.from_dict(_field(item, "capacitance", w), w)))
        if len(rc) != n_rc:
            raise SchemaError(f"{where}: {len(rc)} rc_trends but structure.n_rc = {n_rc}")
        table = ocv[i]
        c_tab = cd[i]
        sets.append(TemperatureSet(
            temperature=float(t),
            ohmic=ParameterTrend.from_dict(_field(tr, "ohmic_trend", where), where),
            rc=tuple(rc),
            r_diffusion=ParameterTrend.from_dict(_field(tr, "r_diffusion_trend", where), where),
            c_d=ParameterTrend("lookup", voltage=_field(c_tab, "voltage", f"c_d_table[{i}]"),
                               value=_field(c_tab, "capacitance", f"c_d_table[{i}]")),
            ocv_soc=(np.array(_field(table, "soc", f"ocv_soc[{i}]"), dtype=float),
                     np.array(_field(table, "ocv", f"ocv_soc[{i}]"), dtype=float)),
            capacity=float(caps[i]),
        ))
    return EcmModel(tuple(sets), tuple(attributions), int(ladder),
                    tuple(_field(d, "voltage_limits", "model")), tuple(d.get("diagnostics", [])))


# ------------------------------------------------------- flat arrays for kernels

def compile_model(model):
    """Flatten trends into arrays consumed by the state-space kernels.

    Parameter order per temperature: R_ohm, (R_i, C_i)..., R_D, C_D.
    ``kinds`` is 0 for polynomials (``coef`` holds 3 ascending coefficients)
    and 1 for lookups (``lut_off``/``lut_len`` index ``lut_v``/``lut_y``).
    """
    n_t = len(model.sets)
    n_p = 2 * model.n_rc + 3
    kinds = np.zeros((n_t, n_p), dtype=np.int32)
    coef = np.zeros((n_t, n_p, 3))
    off = np.zeros((n_t, n_p), dtype=np.int32)
    length = np.zeros((n_t, n_p), dtype=np.int32)
    lut_v, lut_y = [], []
    ocv_lo = np.zeros(n_t)
    ocv_hi = np.zeros(n_t)
    pos = 0
    for i, s in enumerate(model.sets):
        trends = [s.ohmic] + [x for pair in s.rc for x in pair] + [s.r_diffusion, s.c_d]
        for j, tr in enumerate(trends):
            if tr.kind == "lookup":
                kinds[i, j] = 1
                off[i, j] = pos
                length[i, j] = len(tr.voltage)
                lut_v.extend(tr.voltage.tolist())
                lut_y.extend(tr.value.tolist())
                pos += len(tr.voltage)
            else:
                coef[i, j, :len(tr.coefficients)] = tr.coefficients
        ocv_lo[i], ocv_hi[i] = s.ocv_soc[1][0], s.ocv_soc[1][-1]
    return {
        "t_knots": np.array(model.temperatures, dtype=float),
        "kinds": kinds,
        "coef": coef,
        "lut_off": off,
        "lut_len": length,
        "lut_v": np.array(lut_v if lut_v else [0.0]),
        "lut_y": np.array(lut_y if lut_y else [0.0]),
        "ocv_lo": ocv_lo,
        "ocv_hi": ocv_hi,
        "n_rc": model.n_rc,
        "ladder": model.ladder_size,
    }


def charge_from_capacitance(c_d_trend, v_lo, v_hi):
    """Integral of a C_D lookup over [v_lo, v_hi] in coulombs."""
    v = np.linspace(v_lo, v_hi, 20001)
    return float(trapezoid(c_d_trend(v), v))
