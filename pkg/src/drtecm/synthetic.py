"""Synthetic NMC-like cell used as a known ground truth.

Six DRT processes: contact (~2e-4 s), SEI (~2.5e-3 s), three charge-transfer
peaks (~0.015, 0.07, 0.3 s) and reflective diffusion (tau_1 = 3 R_D C_D/pi^2
between about 12 and 25 s), characterized at four temperatures and five
states of charge, 55 Ah between 3.0 and 4.2 V.
Resistances grow at low temperature and (for charge transfer and diffusion)
towards the ends of the voltage window; the diffusion resistance has its
minimum at 3.9 V.
"""
from __future__ import annotations

import warnings
from pathlib import Path

import numpy as np

from .datatypes import CellDataset, ImpedanceSpectrum, OcvCurve
from .ecm import EcmModel, ParameterTrend, TemperatureSet, intercalation_capacitance, model_impedance, ocv_soc_table
from .errors import DrtEcmWarning
from .io import format_eis_csv, format_ocv_csv, format_profile_csv
from .peaks import Attribution

TEMPERATURES = (-10.0, 5.0, 20.0, 35.0)
SOCS = (0.0, 0.25, 0.5, 0.75, 1.0)
CAPACITY = 55.0
V_MIN, V_MAX = 3.0, 4.2
OCV_WIGGLE = 0.3

F_OHM = {-10.0: 1.30, 5.0: 1.12, 20.0: 1.0, 35.0: 0.93}
F_CONTACT = {-10.0: 1.10, 5.0: 1.05, 20.0: 1.0, 35.0: 0.97}
F_SEI = {-10.0: 1.80, 5.0: 1.30, 20.0: 1.0, 35.0: 0.85}
F_CT = {-10.0: 2.00, 5.0: 1.40, 20.0: 1.0, 35.0: 0.80}
F_DIFF = {-10.0: 1.30, 5.0: 1.15, 20.0: 1.0, 35.0: 0.90}
F_CAPACITY = {-10.0: 0.90, 5.0: 0.96, 20.0: 1.0, 35.0: 1.02}

# base resistances (ohm) and time constants (s) at 20 C, 4.2 V
R_RC = (0.05e-3, 0.10e-3, 0.12e-3, 0.15e-3, 0.12e-3)
TAU_RC = (2e-4, 2.5e-3, 0.015, 0.07, 0.3)
# charge-transfer R = F_CT * r * (1 + K_CT (V - 4.2)^2); C falls where R rises and with
# F_CT**-C_TEMP_EXP, so the time constants drift less than the resistances
K_CT = (0.5, 0.5, 0.5)
KC_CT = 0.25
C_TEMP_EXP = 0.6
R_DIFF = 0.3e-3
K_DIFF = 1.0

CELL_OFFSETS = (-0.05, 0.0, 0.05)
CELL_CAPACITY = (0.99, 1.0, 1.01)


def frequencies(f_max=1e4, f_min=1e-2, per_decade=10):
    n = int(round(np.log10(f_max / f_min) * per_decade)) + 1
    return np.logspace(np.log10(f_max), np.log10(f_min), n)


def ocv_of_soc(soc):
    s = np.asarray(soc, dtype=float)
    return V_MIN + (V_MAX - V_MIN) * (s + OCV_WIGGLE * np.sin(2 * np.pi * s) / (2 * np.pi))


def ocv_curve(temperature, capacity_factor=1.0, cell_id="", n=501):
    cap = CAPACITY * F_CAPACITY[temperature] * capacity_factor
    q = np.linspace(0.0, cap, n)
    return OcvCurve(q, ocv_of_soc(1 - q / cap), temperature=temperature, cell_id=cell_id,
                    voltage_limits=(V_MIN, V_MAX))


def _lin(a, b):
    return ParameterTrend("linear", (a, b))


def _quad(scale, vertex, k):
    """``scale * (1 + k (V - vertex)^2)`` as ascending coefficients."""
    return ParameterTrend("quadratic", (scale * (1 + k * vertex**2), -2 * scale * k * vertex, scale * k))


def _scaled_lin(scale, v0, slope):
    """``scale * (1 + slope (V - v0))``."""
    return _lin(scale * (1 - slope * v0), scale * slope)


def reference_set(temperature):
    t = temperature
    curve = ocv_curve(t)
    r1, r2, r3, r4, r5 = R_RC
    ct_c = F_CT[t] ** -C_TEMP_EXP
    rc = (
        (_lin(F_CONTACT[t] * r1, 0.0), _lin(TAU_RC[0] / r1, 0.0)),
        (_scaled_lin(F_SEI[t] * r2, 3.6, 0.1), _lin(TAU_RC[1] / r2, 0.0)),
    ) + tuple(
        (_quad(F_CT[t] * r, 4.2, k), _quad(ct_c * tau / r, 4.2, -KC_CT))
        for r, tau, k in zip((r3, r4, r5), TAU_RC[2:], K_CT)
    )
    return TemperatureSet(
        temperature=t,
        ohmic=_lin(F_OHM[t] * (0.65e-3 + 0.05e-3 * V_MIN), -F_OHM[t] * 0.05e-3),
        rc=rc,
        r_diffusion=_quad(F_DIFF[t] * R_DIFF, 3.9, K_DIFF),
        c_d=intercalation_capacitance(curve),
        ocv_soc=ocv_soc_table(curve),
        capacity=curve.capacity,
    )


def reference_model(temperatures=TEMPERATURES):
    attributions = (Attribution.CONTACT, Attribution.SEI) + (Attribution.CHARGE_TRANSFER,) * 3
    return EcmModel(tuple(reference_set(t) for t in temperatures), attributions, 5, (V_MIN, V_MAX))


def rl_inductance(omega, inductance, r_parallel):
    jwl = 1j * omega * inductance
    return jwl if r_parallel is None else jwl * r_parallel / (r_parallel + jwl)


def spectrum(model, soc, temperature, freqs=None, scale=1.0, inductance=0.0, r_parallel=None, noise=0.0,
             rng=None, cell_id=""):
    """Forward spectrum at (soc, T), optionally scaled, with inductance and multiplicative noise."""
    f = frequencies() if freqs is None else np.asarray(freqs, dtype=float)
    w = 2 * np.pi * f
    z = scale * model_impedance(model, soc, temperature, w)
    if inductance:
        z = z + rl_inductance(w, inductance, r_parallel)
    if noise:
        rng = rng or np.random.default_rng(0)
        e = noise * rng.standard_normal((2, len(z)))
        z = z.real * (1 + e[0]) + 1j * z.imag * (1 + e[1])
    return ImpedanceSpectrum(f, z, soc=soc, temperature=temperature, cell_id=cell_id)


def dataset(model=None, socs=SOCS, temperatures=TEMPERATURES, offsets=CELL_OFFSETS, inductance=0.0,
            r_parallel=None, noise=0.0, seed=0):
    """Three-cell dataset: per-cell impedance scaled by ``1 + offset``, capacity by CELL_CAPACITY."""
    model = model or reference_model(temperatures)
    rng = np.random.default_rng(seed)
    spectra, curves = [], []
    for c, off in enumerate(offsets):
        cell = f"cell{c + 1}"
        for t in temperatures:
            for s in socs:
                spectra.append(spectrum(model, s, t, scale=1 + off, inductance=inductance, r_parallel=r_parallel,
                                        noise=noise, rng=rng, cell_id=cell))
            curves.append(ocv_curve(t, CELL_CAPACITY[c % len(CELL_CAPACITY)], cell_id=cell))
    return CellDataset(spectra, curves)


def validation_profiles():
    """Profiles used for the bundled reference traces, keyed by name."""
    from .profiles import generate_discharge_profile, generate_dynamic_profile

    out = {}
    for t in TEMPERATURES:
        rates = [0.1, 0.2, 0.5] if t == -10.0 else [0.1, 0.2, 0.5, 1.0]
        out[f"dynamic_{t:g}C"] = (generate_dynamic_profile(rates, capacity=CAPACITY, temperature=t), 0.6)
    out["discharge_C10_20C"] = (generate_discharge_profile(0.1, capacity=CAPACITY, temperature=20.0), 1.0)
    return out


def write_bundle(directory, inductance=20e-9, r_parallel=1e-3):
    """Write eis.csv, ocv.csv, profiles and reference voltage traces."""
    from .simulate import SimConfig, simulate

    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    model = reference_model()
    ds = dataset(model, inductance=inductance, r_parallel=r_parallel)
    (d / "eis.csv").write_text(format_eis_csv(ds.spectra))
    (d / "ocv.csv").write_text(format_ocv_csv(ds.ocv_curves))
    for name, (profile, soc0) in validation_profiles().items():
        (d / f"profile_{name}.csv").write_text(format_profile_csv(profile))
        with warnings.catch_warnings():
            # the contact time constant is far below 1 s; the exact exponential update handles it
            warnings.simplefilter("ignore", DrtEcmWarning)
            res = simulate(model, profile, SimConfig(soc0=soc0))
        rows = ["time_s,voltage_v"] + [f"{t!r},{v!r}" for t, v in zip(res.time.tolist(), res.terminal_voltage.tolist())]
        (d / f"reference_{name}.csv").write_text("\n".join(rows) + "\n")
        (d / f"profile_{name}.soc0").write_text(f"{soc0!r}\n")
    return d
