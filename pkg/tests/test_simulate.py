import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drtecm import kernels, synthetic
from drtecm.datatypes import CurrentProfile
from drtecm.ecm import (
    ConcreteParameters,
    EcmModel,
    intercalation_capacitance,
    ocv_soc_table,
    warburg_ladder,
)
from drtecm.errors import (
    AlignmentError,
    ConfigurationError,
    DrtEcmWarning,
    ExtrapolationError,
    RangeError,
)
from drtecm.peaks import Attribution
from drtecm.profiles import generate_discharge_profile, generate_dynamic_profile
from drtecm.simulate import (
    SimConfig,
    SimState,
    ocv_from_soc,
    rmse,
    rmse_from_diff,
    rmse_percent,
    simulate,
    soc_from_ocv,
    step,
    terminal_voltage,
)

from conftest import C_D, CAPACITY, constant_model, step_closed_form

def params(r0=1e-3, rc=((2e-3, 5000.0),), r_d=1e-3, c_d=C_D):
    return ConcreteParameters(r0, rc, r_d, c_d)


@pytest.fixture(scope="module")
def rc_model():
    return constant_model()


class TestStep:
    def test_zero_input_decay(self):
        p = params()
        s = SimState(3.7, tuple(np.linspace(0.01, 0.05, 6)))
        out = step(s, 0.0, p, 0.5)
        assert out.v_oc == s.v_oc
        for v0, v1, (r, c) in zip(s.branch_voltages, out.branch_voltages, p.branches()):
            assert v1 == pytest.approx(v0 * math.exp(-0.5 / (r * c)), rel=1e-15)

    def test_steady_state(self):
        p = ConcreteParameters(1e-3, ((2e-3, 500.0),), 1e-3, C_D, ladder_size=1)
        s = SimState(3.7, (0.0, 0.0))
        for _ in range(2000):
            s = step(s, 10.0, p, 1.0)
        assert s.branch_voltages[0] == pytest.approx(10.0 * 2e-3, rel=1e-12)

    def test_ocv_integrates_exactly(self):
        p = params()
        s = SimState(3.5, (0.0,) * 6)
        k, dt, i = 100, 0.5, -12.0
        for _ in range(k):
            s = step(s, i, p, dt)
        assert s.v_oc == pytest.approx(3.5 + k * dt * i / C_D, rel=1e-14)
        assert s.time == pytest.approx(k * dt)

    def test_branch_count_mismatch(self):
        with pytest.raises(ConfigurationError):
            step(SimState(3.7, (0.0,)), 1.0, params(), 1.0)

    def test_terminal_voltage_row(self):
        p = params()
        s = SimState(3.7, (0.01, 0.02, 0.0, 0.0, 0.0, 0.003))
        assert terminal_voltage(s, -5.0, p) == pytest.approx(3.7 + 0.033 - 5e-3, abs=1e-15)


class TestSimulate:
    def test_rest_constant(self, rc_model):
        res = simulate(rc_model, CurrentProfile([0.0, 600.0], [0.0, 0.0]), SimConfig(soc0=0.6))
        v0 = 3.0 + 1.2 * 0.6
        assert np.all(res.terminal_voltage == res.terminal_voltage[0])
        assert res.terminal_voltage[0] == pytest.approx(v0, abs=1e-12)
        assert np.all(res.v_oc == res.v_oc[0])
        assert np.allclose(res.soc, 0.6, atol=1e-12)
        assert res.termination == "completed"
        assert len(res) == 601

    @pytest.mark.parametrize("fraction", [20, 40])
    def test_step_closed_form(self, rc_model, fraction):
        r0, r1, c1 = 1e-3, 2e-3, 5000.0
        tau = r1 * c1
        current = -30.0
        ts = tau / fraction
        res = simulate(rc_model, CurrentProfile([0.0, 600.0], [current, 0.0]), SimConfig(timestep=ts, soc0=0.8))
        ladder = [(b.resistance, b.capacitance) for b in warburg_ladder(1e-3, C_D)[0]]
        v0 = 3.0 + 1.2 * 0.8
        ref = step_closed_form(res.time, current, r0, [(r1, c1)] + ladder, C_D, v0)
        amplitude = abs(current) * (r0 + r1 + sum(r for r, _ in ladder))
        assert np.max(np.abs(res.terminal_voltage - ref)) <= 1e-3 * amplitude

    def test_c10_discharge_hits_cutoff(self, reference_model, quiet):
        prof = generate_discharge_profile(0.1, capacity=55.0)
        res = simulate(reference_model, prof, SimConfig(timestep=10.0, soc0=1.0, constant_temperature=20.0))
        assert res.termination == "voltage-cutoff"
        assert res.terminal_voltage[-1] < 3.0 <= res.terminal_voltage[-2]
        assert res.time[-1] < prof.duration

    def test_soc_bound(self, quiet):
        model = EcmModel(constant_model().sets, (Attribution.CHARGE_TRANSFER,), voltage_limits=(2.5, 4.5))
        res = simulate(model, CurrentProfile([0.0, 3600.0], [60.0, 0.0]), SimConfig(timestep=5.0, soc0=0.9))
        assert res.termination == "soc-bound"
        assert res.v_oc[-1] > 4.2

    def test_refresh_every_constant_params(self, rc_model):
        prof = generate_dynamic_profile([0.5], capacity=CAPACITY)
        a = simulate(rc_model, prof, SimConfig(soc0=0.5))
        b = simulate(rc_model, prof, SimConfig(soc0=0.5, refresh_every=7))
        assert np.array_equal(a.terminal_voltage, b.terminal_voltage)

    def test_v_oc0_equivalent_to_soc0(self, rc_model):
        prof = generate_dynamic_profile([0.2], capacity=CAPACITY)
        a = simulate(rc_model, prof, SimConfig(soc0=0.5))
        b = simulate(rc_model, prof, SimConfig(v_oc0=3.6))
        assert np.allclose(a.terminal_voltage, b.terminal_voltage, atol=1e-12)

    def test_temperature_extrapolation(self, rc_model):
        prof = CurrentProfile([0.0, 60.0], [1.0, 0.0])
        with pytest.raises(ExtrapolationError):
            simulate(rc_model, prof, SimConfig(soc0=0.5, constant_temperature=40.0))

    def test_extrapolation_mid_run_has_timestamp(self):
        model = constant_model(temperatures=(0.0, 20.0))
        prof = CurrentProfile([0.0, 100.0, 200.0], [1.0, 1.0, 0.0], [10.0, 25.0, 25.0])
        with pytest.raises(ExtrapolationError, match="t = 101"):
            simulate(model, prof, SimConfig(soc0=0.5))

    def test_missing_temperature(self):
        model = constant_model(temperatures=(0.0, 20.0))
        with pytest.raises(ConfigurationError):
            simulate(model, CurrentProfile([0.0, 10.0], [0.0, 0.0]), SimConfig(soc0=0.5))

    def test_timestep_warning(self, rc_model):
        prof = CurrentProfile([0.0, 60.0], [1.0, 0.0])
        with pytest.warns(DrtEcmWarning, match="timestep"):
            simulate(rc_model, prof, SimConfig(timestep=5.0, soc0=0.5))
        with warnings.catch_warnings():
            warnings.simplefilter("error", DrtEcmWarning)
            simulate(rc_model, prof, SimConfig(timestep=0.5, soc0=0.5))

    @pytest.mark.parametrize("kw", [{}, {"soc0": 0.5, "v_oc0": 3.6}, {"soc0": 0.5, "timestep": 0.0},
                                    {"soc0": 0.5, "refresh_every": 0}])
    def test_config_validation(self, kw):
        with pytest.raises(ConfigurationError):
            SimConfig(**kw)

    def test_empty_profile(self, rc_model):
        with pytest.raises(ConfigurationError):
            simulate(rc_model, CurrentProfile(), SimConfig(soc0=0.5))


class TestProperties:
    def test_charge_bookkeeping(self, rc_model):
        prof = generate_dynamic_profile([0.1, 0.5, 1.0], capacity=CAPACITY)
        res = simulate(rc_model, prof, SimConfig(soc0=0.5))
        charge = float(np.sum(res.current[1:]))
        # exact up to one rounding of v_oc per step
        bound = len(res) * np.finfo(float).eps * np.max(res.v_oc) * C_D
        assert abs((res.v_oc[-1] - res.v_oc[0]) * C_D - charge) <= bound

    def test_rest_convergence(self, rc_model):
        pulse = simulate(rc_model, CurrentProfile([0.0, 120.0], [-40.0, 0.0]), SimConfig(soc0=0.7))
        ladder = warburg_ladder(1e-3, C_D)[0]
        max_tau = max([2e-3 * 5000.0] + [b.resistance * b.capacitance for b in ladder])
        rest = 20 * max_tau
        prof = CurrentProfile([0.0, 120.0, 120.0 + rest], [-40.0, 0.0, 0.0])
        res = simulate(rc_model, prof, SimConfig(soc0=0.7))
        before = np.abs(pulse.final_state.branch_voltages)
        after = np.abs(res.final_state.branch_voltages)
        assert np.all(after <= 1e-6 * before)

    @settings(max_examples=25, deadline=None)
    @given(st.floats(0.1, 5.0))
    def test_linearity_zero_state(self, a):
        model = constant_model()
        prof = generate_dynamic_profile([0.2, 0.5], capacity=CAPACITY)
        scaled = CurrentProfile(prof.time, a * prof.current)
        base = simulate(model, prof, SimConfig(soc0=0.5, cutoffs=(0.0, 10.0)))
        out = simulate(model, scaled, SimConfig(soc0=0.5, cutoffs=(0.0, 10.0)))
        v0 = base.terminal_voltage[0] - 1e-3 * prof.current[0]
        assert np.allclose(out.terminal_voltage - v0, a * (base.terminal_voltage - v0), atol=1e-12, rtol=1e-10)

    def test_discretization_first_order_on_smooth_profile(self, reference_model, quiet):
        t = np.arange(0, 1200.0001, 0.01)
        prof = CurrentProfile(t, 30 * np.sin(2 * np.pi * t / 600))
        ys = {}
        for ts in (2.0, 1.0, 0.5):
            r = simulate(reference_model, prof, SimConfig(timestep=ts, soc0=0.5, constant_temperature=20.0))
            ys[ts] = r.terminal_voltage[:: int(round(2 / ts))]
        d1 = np.max(np.abs(ys[2.0] - ys[1.0]))
        d2 = np.max(np.abs(ys[1.0] - ys[0.5]))
        assert 1.5 <= d1 / d2 <= 2.5

    def test_determinism(self, reference_model, quiet):
        prof = generate_dynamic_profile([0.1, 0.2, 0.5, 1.0], capacity=55.0)
        cfg = SimConfig(soc0=0.5, constant_temperature=12.5)
        a = simulate(reference_model, prof, cfg)
        b = simulate(reference_model, prof, cfg)
        assert np.array_equal(a.terminal_voltage, b.terminal_voltage)
        assert np.array_equal(a.soc, b.soc)


@pytest.mark.skipif(kernels.IMPLEMENTATION != "cython", reason="compiled kernel not built")
class TestKernels:
    @pytest.mark.parametrize("temp", [20.0, 12.5, -10.0])
    def test_bit_identical(self, reference_model, temp, quiet):
        prof = generate_dynamic_profile([0.1, 0.2, 0.5, 1.0], capacity=55.0)
        runs = [simulate(reference_model, prof, SimConfig(soc0=0.6, constant_temperature=temp, kernel=k))
                for k in ("python", "cython")]
        assert np.array_equal(runs[0].terminal_voltage, runs[1].terminal_voltage)
        assert np.array_equal(runs[0].v_oc, runs[1].v_oc)
        assert runs[0].final_state == runs[1].final_state

    def test_cutoff_identical(self, reference_model, quiet):
        prof = generate_discharge_profile(1.0)
        runs = [simulate(reference_model, prof, SimConfig(soc0=1.0, constant_temperature=20.0, kernel=k))
                for k in ("python", "cython")]
        assert runs[0].termination == runs[1].termination == "voltage-cutoff"
        assert np.array_equal(runs[0].terminal_voltage, runs[1].terminal_voltage)


def test_unknown_kernel():
    with pytest.raises(ValueError):
        kernels.get("fortran")


class TestSocLookup:
    def test_endpoints(self, reference_model):
        soc, ocv = reference_model.sets[1].ocv_soc
        t = reference_model.sets[1].temperature
        assert soc_from_ocv(reference_model, float(ocv[-1]), t) == pytest.approx(1.0)
        assert soc_from_ocv(reference_model, float(ocv[0]), t) == pytest.approx(0.0, abs=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.floats(0.0, 1.0), st.sampled_from([-10.0, 0.0, 5.0, 20.0, 30.0, 35.0]))
    def test_round_trip(self, s, t):
        model = synthetic.reference_model()
        assert soc_from_ocv(model, ocv_from_soc(model, s, t), t) == pytest.approx(s, abs=1e-6)

    def test_out_of_range(self, reference_model):
        with pytest.raises(RangeError):
            soc_from_ocv(reference_model, 5.0, 20.0)

    def test_table_from_curve_monotone(self):
        curve = synthetic.ocv_curve(20.0)
        soc, ocv = ocv_soc_table(curve)
        assert np.all(np.diff(ocv) > 0)
        assert intercalation_capacitance(curve).kind == "lookup"


class TestRmse:
    def test_identical(self, rc_model):
        res = simulate(rc_model, generate_dynamic_profile([0.5], capacity=CAPACITY), SimConfig(soc0=0.5))
        assert rmse((res.time, res.terminal_voltage), res) == (0.0, 0.0)

    def test_constant_offset(self, rc_model):
        res = simulate(rc_model, generate_dynamic_profile([0.5], capacity=CAPACITY), SimConfig(soc0=0.5))
        mv, pct = rmse((res.time, res.terminal_voltage - 0.012), res)
        assert mv == pytest.approx(12.0, abs=1e-9)
        assert pct == pytest.approx(1.0, abs=1e-9)

    def test_reference_resampled(self, rc_model):
        res = simulate(rc_model, CurrentProfile([0.0, 100.0], [0.0, 0.0]), SimConfig(soc0=0.5))
        t_ref = np.arange(0, 101, 10.0)
        mv, _ = rmse((t_ref, np.full(len(t_ref), 3.6 + 0.005)), res)
        assert mv == pytest.approx(5.0, abs=1e-9)

    @pytest.mark.parametrize("mv, pct", [(17.54, 1.46), (61.68, 5.14)])
    def test_percent_mapping(self, mv, pct):
        assert round(rmse_percent(mv), 2) == pct
        assert round(rmse_from_diff(np.full(10, mv * 1e-3))[1], 2) == pct

    def test_no_overlap(self, rc_model):
        res = simulate(rc_model, CurrentProfile([0.0, 100.0], [0.0, 0.0]), SimConfig(soc0=0.5))
        with pytest.raises(AlignmentError):
            rmse(([200.0, 300.0], [3.6, 3.6]), res)
