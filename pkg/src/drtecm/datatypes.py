"""Immutable domain records: spectra, OCV curves, current profiles.

Conventions used throughout the package:

* frequencies in Hz, angular frequency ``omega = 2*pi*f`` computed at use sites;
* impedance stored with its physical sign (capacitive ``z_imag < 0``,
  inductive ``z_imag > 0``); Nyquist plots show ``-z_imag``;
* current is positive when charging the cell;
* OCV charge axis is Ah discharged from the full cell.
"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InsufficientDataError, MetadataError, ValidationError

MIN_POINTS = 10
MIN_DECADES = 3.0


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ImpedanceSpectrum:
    """Complex impedance sampled on a descending frequency grid."""

    frequency: np.ndarray
    impedance: np.ndarray
    soc: float | None = None
    temperature: float | None = None
    cell_id: str = ""
    preprocessed: bool = False

    def __post_init__(self):
        f = np.asarray(self.frequency, dtype=float).ravel()
        z = np.asarray(self.impedance, dtype=complex).ravel()
        if f.shape != z.shape:
            raise ValidationError("frequency and impedance lengths differ")
        if len(f) < MIN_POINTS:
            raise InsufficientDataError(f"{len(f)} points, need at least {MIN_POINTS}")
        if not (np.all(np.isfinite(f)) and np.all(np.isfinite(z.real)) and np.all(np.isfinite(z.imag))):
            raise ValidationError("non-finite frequency or impedance value")
        if np.any(f <= 0):
            raise ValidationError("frequencies must be positive")
        order = np.argsort(-f, kind="stable")
        f, z = f[order], z[order]
        if np.any(np.diff(f) == 0):
            raise ValidationError(f"duplicate frequency {f[np.flatnonzero(np.diff(f) == 0)[0]]:g} Hz")
        decades = np.log10(f[0] / f[-1])
        if decades < MIN_DECADES - 1e-9:
            raise InsufficientDataError(f"spectrum spans {decades:.2f} decades, need {MIN_DECADES:g}")
        if self.soc is not None and not 0.0 <= self.soc <= 1.0:
            raise ValidationError(f"soc {self.soc} outside [0, 1]")
        object.__setattr__(self, "frequency", _frozen(f))
        object.__setattr__(self, "impedance", _frozen(z, complex))

    @property
    def omega(self):
        return 2 * np.pi * self.frequency

    @property
    def z_real(self):
        return self.impedance.real

    @property
    def z_imag(self):
        return self.impedance.imag

    @property
    def decades(self):
        return float(np.log10(self.frequency[0] / self.frequency[-1]))

    def __len__(self):
        return len(self.frequency)

    def with_impedance(self, impedance, **changes):
        return replace(self, impedance=impedance, **changes)

    def key(self):
        return (self.soc, self.temperature)

    def __eq__(self, other):
        if not isinstance(other, ImpedanceSpectrum):
            return NotImplemented
        return (
            np.array_equal(self.frequency, other.frequency)
            and np.array_equal(self.impedance, other.impedance)
            and (self.soc, self.temperature, self.cell_id, self.preprocessed)
            == (other.soc, other.temperature, other.cell_id, other.preprocessed)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class OcvCurve:
    """Open-circuit voltage vs cumulative discharged charge.

    The charge axis is shifted so it starts at 0; ``capacity`` defaults to the
    last charge value.
    """

    charge: np.ndarray
    voltage: np.ndarray
    temperature: float | None = None
    cell_id: str = ""
    capacity: float | None = None
    voltage_limits: tuple | None = None

    def __post_init__(self):
        q = np.asarray(self.charge, dtype=float).ravel()
        v = np.asarray(self.voltage, dtype=float).ravel()
        if q.shape != v.shape or len(q) < 2:
            raise ValidationError("OCV curve needs at least two (charge, voltage) samples")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(v))):
            raise ValidationError("non-finite OCV sample")
        if np.any(np.diff(q) <= 0):
            i = int(np.flatnonzero(np.diff(q) <= 0)[0])
            raise ValidationError(f"charge not strictly increasing at sample {i + 1}")
        q = q - q[0]
        capacity = float(q[-1]) if self.capacity is None else float(self.capacity)
        limits = self.voltage_limits
        if limits is None:
            limits = (float(v.min()), float(v.max()))
        limits = (float(limits[0]), float(limits[1]))
        if not limits[0] < limits[1]:
            raise ValidationError(f"invalid voltage limits {limits}")
        if v.min() < limits[0] - 1e-12 or v.max() > limits[1] + 1e-12:
            raise ValidationError(f"voltage outside limits {limits}")
        object.__setattr__(self, "charge", _frozen(q))
        object.__setattr__(self, "voltage", _frozen(v))
        object.__setattr__(self, "capacity", capacity)
        object.__setattr__(self, "voltage_limits", limits)

    @property
    def soc(self):
        """State of charge of each sample (1 at the start of discharge)."""
        return 1.0 - self.charge / self.capacity

    @property
    def is_monotone(self):
        """Raw monotonicity flag (voltage non-increasing with discharged charge)."""
        return bool(np.all(np.diff(self.voltage) <= 0))

    def voltage_at_soc(self, soc):
        s = self.soc[::-1]
        return np.interp(soc, s, self.voltage[::-1])

    def __eq__(self, other):
        if not isinstance(other, OcvCurve):
            return NotImplemented
        return (
            np.array_equal(self.charge, other.charge)
            and np.array_equal(self.voltage, other.voltage)
            and (self.temperature, self.cell_id, self.capacity, self.voltage_limits)
            == (other.temperature, other.cell_id, other.capacity, other.voltage_limits)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class CurrentProfile:
    """Piecewise-constant current: ``current[i]`` holds from ``time[i]`` to ``time[i+1]``.

    The last sample marks the end of the profile. ``temperature`` is either
    absent or given for every sample.
    """

    time: np.ndarray = field(default_factory=lambda: np.zeros(0))
    current: np.ndarray = field(default_factory=lambda: np.zeros(0))
    temperature: np.ndarray | None = None

    def __post_init__(self):
        t = np.asarray(self.time, dtype=float).ravel()
        i = np.asarray(self.current, dtype=float).ravel()
        if t.shape != i.shape:
            raise ValidationError("time and current lengths differ")
        if len(t):
            if t[0] != 0:
                raise ValidationError("profile time must start at 0")
            if np.any(np.diff(t) <= 0):
                raise ValidationError("profile time must be strictly increasing")
            if not (np.all(np.isfinite(t)) and np.all(np.isfinite(i))):
                raise ValidationError("non-finite profile sample")
        temp = self.temperature
        if temp is not None:
            temp = np.asarray(temp, dtype=float).ravel()
            if temp.shape != t.shape:
                raise ValidationError("temperature must be given for every sample or none")
            if np.any(np.isnan(temp)):
                raise ValidationError("temperature must be given for every sample or none")
            temp = _frozen(temp)
        object.__setattr__(self, "time", _frozen(t))
        object.__setattr__(self, "current", _frozen(i))
        object.__setattr__(self, "temperature", temp)

    def __len__(self):
        return len(self.time)

    @property
    def duration(self):
        return float(self.time[-1]) if len(self.time) else 0.0

    def __eq__(self, other):
        if not isinstance(other, CurrentProfile):
            return NotImplemented
        if (self.temperature is None) != (other.temperature is None):
            return False
        same_t = self.temperature is None or np.array_equal(self.temperature, other.temperature)
        return np.array_equal(self.time, other.time) and np.array_equal(self.current, other.current) and same_t

    __hash__ = None


@dataclass(frozen=True)
class CellDataset:
    """Spectra keyed by (soc, temperature, cell_id) and OCV curves by (temperature, cell_id)."""

    spectra: tuple
    ocv_curves: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "spectra", tuple(self.spectra))
        object.__setattr__(self, "ocv_curves", tuple(self.ocv_curves))
        seen = set()
        for s in self.spectra:
            if s.soc is None or s.temperature is None:
                raise MetadataError(f"spectrum of cell {s.cell_id!r} lacks soc/temperature metadata")
            k = (s.soc, s.temperature, s.cell_id)
            if k in seen:
                raise MetadataError(f"duplicate spectrum for {k}")
            seen.add(k)
        grid = {(s.soc, s.temperature) for s in self.spectra}
        for cell in self.cells:
            have = {(s.soc, s.temperature) for s in self.spectra if s.cell_id == cell}
            missing = sorted(grid - have)
            if missing:
                raise MetadataError(f"cell {cell!r} lacks spectra at {missing}")

    @property
    def cells(self):
        return sorted({s.cell_id for s in self.spectra})

    @property
    def temperatures(self):
        return sorted({s.temperature for s in self.spectra})

    @property
    def grid(self):
        return sorted({(s.soc, s.temperature) for s in self.spectra})

    def spectra_at(self, soc, temperature):
        return [s for s in self.spectra if s.soc == soc and s.temperature == temperature]

    def ocv_at(self, temperature):
        return [c for c in self.ocv_curves if c.temperature == temperature]

    def group_spectra(self):
        groups = defaultdict(list)
        for s in self.spectra:
            groups[(s.soc, s.temperature)].append(s)
        return dict(sorted(groups.items()))
