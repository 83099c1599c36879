import warnings

import numpy as np
import pytest

from drtecm import synthetic
from drtecm.datatypes import ImpedanceSpectrum
from drtecm.ecm import EcmModel, ParameterTrend, TemperatureSet
from drtecm.errors import DrtEcmWarning
from drtecm.peaks import Attribution


def rc_impedance(freqs, resistances, taus, r0=0.0):
    w = 2 * np.pi * np.asarray(freqs, dtype=float)
    z = np.full(len(w), r0, dtype=complex)
    for r, t in zip(resistances, taus):
        z = z + r / (1 + 1j * w * t)
    return z


def rc_spectrum(resistances, taus, r0=0.5e-3, freqs=None, noise=0.0, seed=0, **meta):
    f = synthetic.frequencies() if freqs is None else freqs
    z = rc_impedance(f, resistances, taus, r0)
    if noise:
        e = noise * np.random.default_rng(seed).standard_normal((2, len(z)))
        z = z.real * (1 + e[0]) + 1j * z.imag * (1 + e[1])
    return ImpedanceSpectrum(f, z, **meta)


CAPACITY = 55.0
C_D = CAPACITY * 3600 / 1.2  # linear 3.0-4.2 V OCV over 55 Ah


def constant_model(r0=1e-3, r1=2e-3, c1=5000.0, r_d=1e-3, c_d=C_D, temperatures=(20.0,)):
    """1 RC + Warburg with OCV-independent parameters and a linear OCV table."""
    const = lambda x: ParameterTrend("linear", (x, 0.0))  # noqa: E731
    soc = np.linspace(0, 1, 11)
    sets = [
        TemperatureSet(
            temperature=t,
            ohmic=const(r0),
            rc=((const(r1), const(c1)),),
            r_diffusion=const(r_d),
            c_d=ParameterTrend("lookup", voltage=[3.0, 4.2], value=[c_d, c_d]),
            ocv_soc=(soc, 3.0 + 1.2 * soc),
            capacity=CAPACITY,
        )
        for t in temperatures
    ]
    return EcmModel(tuple(sets), (Attribution.CHARGE_TRANSFER,))


def step_closed_form(t, current, r0, branches, c_d, v0):
    v = v0 + current * t / c_d + r0 * current
    for r, c in branches:
        v = v + r * current * (1 - np.exp(-t / (r * c)))
    return v


@pytest.fixture(scope="session")
def reference_model():
    return synthetic.reference_model()


@pytest.fixture
def quiet():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DrtEcmWarning)
        yield


ACCEPTANCE = []


def record_criterion(number, passed, detail):
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE.append((number, line))
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
