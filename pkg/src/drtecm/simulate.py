"""Discrete-time state-space simulation of the ECM.

State ``x = [v_oc, V_1, ..., V_n]`` with the ladder branches last. For a
current ``u`` held over one step ``T_s``:

    v_oc <- v_oc + T_s u / C_D
    V_i  <- V_i exp(-T_s/(R_i C_i)) + R_i (1 - exp(-T_s/(R_i C_i))) u
    y     = v_oc + sum V_i + R_ohm u

Parameters are re-evaluated at the previous step's OCV and the current
temperature (explicit update). The exponential update is exact for a
piecewise-constant current, so with frozen parameters the only time-step
dependence comes from resampling the input profile.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from . import kernels
from .ecm import _bracket, compile_model, ocv_from_soc, parameters_at, soc_from_ocv  # noqa: F401 (re-export)
from .errors import AlignmentError, ConfigurationError, DrtEcmWarning, ExtrapolationError

TERMINATION = {0: "completed", 1: "voltage-cutoff", 2: "soc-bound"}


@dataclass(frozen=True)
class SimState:
    v_oc: float
    branch_voltages: tuple
    soc: float | None = None
    time: float = 0.0


@dataclass(frozen=True)
class SimConfig:
    timestep: float = 1.0
    soc0: float | None = None
    v_oc0: float | None = None
    refresh_every: int = 1
    cutoffs: tuple | None = None
    constant_temperature: float | None = None
    kernel: str | None = None

    def __post_init__(self):
        if not self.timestep > 0:
            raise ConfigurationError("timestep must be positive")
        if self.refresh_every < 1:
            raise ConfigurationError("refresh_every must be >= 1")
        if (self.soc0 is None) == (self.v_oc0 is None):
            raise ConfigurationError("give exactly one of soc0 or v_oc0")


@dataclass(frozen=True, eq=False)
class SimulationResult:
    time: np.ndarray
    terminal_voltage: np.ndarray
    v_oc: np.ndarray
    soc: np.ndarray
    current: np.ndarray
    temperature: np.ndarray
    termination: str
    final_state: SimState
    rmse: tuple | None = None

    def __len__(self):
        return len(self.time)

    def with_rmse(self, value):
        return replace(self, rmse=value)


def terminal_voltage(state, u, params):
    return state.v_oc + float(np.sum(state.branch_voltages)) + params.r_ohm * u


def step(state, u, params, dt):
    """One exact zero-order-hold step with fixed parameters.

    ``soc`` is carried through unchanged; the simulator re-derives it from
    ``v_oc`` through the OCV table.
    """
    branches = params.branches()
    if len(branches) != len(state.branch_voltages):
        raise ConfigurationError("state and parameter set have different branch counts")
    new = []
    for v, (r, c) in zip(state.branch_voltages, branches):
        a = np.exp(-dt / (r * c))
        new.append(a * v + r * (1.0 - a) * u)
    return SimState(state.v_oc + dt * u / params.c_d, tuple(new), state.soc, state.time + dt)


def _zoh(times, values, t):
    idx = np.searchsorted(times, t * (1 + 1e-12) + 1e-12, side="right") - 1
    return np.asarray(values)[np.clip(idx, 0, len(times) - 1)]


def _soc_series(model, v_oc, temps):
    """Vectorized inverse OCV lookup (clamped to [0, 1]) per distinct temperature."""
    out = np.empty(len(v_oc))
    for t in np.unique(temps):
        sel = temps == t
        i, j, w = _bracket(model, float(t))
        soc = np.interp(v_oc[sel], model.sets[i].ocv_soc[1], model.sets[i].ocv_soc[0])
        if w:
            other = np.interp(v_oc[sel], model.sets[j].ocv_soc[1], model.sets[j].ocv_soc[0])
            soc = soc + w * (other - soc)
        out[sel] = soc
    return out


def simulate(model, profile, config):
    """Run ``profile`` through ``model`` with zero-order-hold resampling to ``config.timestep``."""
    dt = config.timestep
    if len(profile) == 0:
        raise ConfigurationError("empty profile")
    n_steps = int(np.floor(profile.duration / dt + 1e-9))
    t = np.arange(n_steps + 1) * dt
    t_prev = np.concatenate([[0.0], t[:-1]])
    current = _zoh(profile.time, profile.current, t_prev).astype(float)
    if config.constant_temperature is not None:
        temps = np.full(n_steps + 1, float(config.constant_temperature))
    elif profile.temperature is not None:
        temps = _zoh(profile.time, profile.temperature, t_prev).astype(float)
    elif len(model.temperatures) == 1:
        temps = np.full(n_steps + 1, float(model.temperatures[0]))
    else:
        raise ConfigurationError("profile has no temperature; set constant_temperature")
    if config.v_oc0 is not None:
        v0 = float(config.v_oc0)
    else:
        v0 = ocv_from_soc(model, config.soc0, float(temps[0]))
    p0 = parameters_at(model, float(temps[0]), ocv=v0)
    taus = [r * c for r, c in p0.branches()]
    if dt > min(taus) / 2:
        warnings.warn(f"timestep {dt:g} s exceeds half the smallest time constant ({min(taus):.3g} s)",
                      DrtEcmWarning, stacklevel=2)
    cut = config.cutoffs or model.voltage_limits
    arrays = compile_model(model)
    v_term = np.full(n_steps + 1, np.nan)
    v_oc = np.full(n_steps + 1, np.nan)
    branches = np.zeros(model.n_rc + model.ladder_size)
    run = kernels.get(config.kernel)
    last, code = run(
        np.ascontiguousarray(current), np.ascontiguousarray(temps), v0, branches, float(dt),
        int(config.refresh_every), float(cut[0]), float(cut[1]),
        arrays["t_knots"], arrays["kinds"], arrays["coef"], arrays["lut_off"], arrays["lut_len"],
        arrays["lut_v"], arrays["lut_y"], arrays["ocv_lo"], arrays["ocv_hi"],
        arrays["n_rc"], arrays["ladder"], v_term, v_oc,
    )
    if code == 3:
        raise ExtrapolationError(f"temperature {temps[last]} outside characterized range at t = {t[last]:g} s")
    n = last + 1
    soc = _soc_series(model, v_oc[:n], temps[:n])
    final = SimState(float(v_oc[last]), tuple(float(b) for b in branches), float(soc[-1]), float(t[last]))
    return SimulationResult(t[:n], v_term[:n], v_oc[:n], soc, current[:n], temps[:n], TERMINATION[code], final)


def rmse(reference, simulated, voltage_interval=1.2):
    """RMS voltage error in mV and as a percentage of ``voltage_interval``.

    ``reference`` is ``(times, voltages)``; it is linearly interpolated onto the
    simulation timestamps inside the overlapping time range.
    """
    t_ref, v_ref = (np.asarray(a, dtype=float) for a in reference)
    t_sim = np.asarray(simulated.time)
    lo, hi = max(t_ref[0], t_sim[0]), min(t_ref[-1], t_sim[-1])
    if not lo <= hi:
        raise AlignmentError("reference and simulation do not overlap in time")
    sel = (t_sim >= lo) & (t_sim <= hi)
    diff = np.asarray(simulated.terminal_voltage)[sel] - np.interp(t_sim[sel], t_ref, v_ref)
    return rmse_from_diff(diff, voltage_interval)


def rmse_from_diff(diff, voltage_interval=1.2):
    mv = float(np.sqrt(np.mean(np.square(diff)))) * 1e3
    return mv, rmse_percent(mv, voltage_interval)


def rmse_percent(mv, voltage_interval=1.2):
    return mv / (voltage_interval * 1e3) * 100.0
