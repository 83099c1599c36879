"""Acceptance criteria, one test per criterion at its stated tolerance.

Each test records a single pass/fail line that is echoed in the pytest
terminal summary under "acceptance criteria".
"""
import time
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drtecm import pipeline, synthetic
from drtecm.datatypes import CurrentProfile
from drtecm.drt import DrtConfig, compute_drt
from drtecm.ecm import ladder_impedance, parameters_at, warburg_impedance, warburg_ladder
from drtecm.errors import DrtEcmWarning, ExtrapolationError
from drtecm.kk import is_valid, kk_fit
from drtecm.peaks import BANDS, Attribution, attribute, detect_peaks, fit_gaussians
from drtecm.simulate import SimConfig, rmse_percent, simulate

from conftest import C_D, constant_model, rc_spectrum, record_criterion, step_closed_form

TARGET_LADDER_SUM = 0.89935


@pytest.fixture(scope="module")
def round_trip():
    """Pipeline functions on exact model spectra at 5 SoC x 4 temperatures."""
    truth = synthetic.reference_model()
    cfg = pipeline.PipelineConfig()
    start = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DrtEcmWarning)
        spectra = [synthetic.spectrum(truth, s, t) for t in synthetic.TEMPERATURES for s in synthetic.SOCS]
        curves = [synthetic.ocv_curve(t) for t in synthetic.TEMPERATURES]
        reports = pipeline.validate_spectra(spectra, cfg)
        corrected, _ = pipeline.preprocess_spectra(spectra, cfg)
        results, _ = pipeline.drt_spectra(corrected, curves, cfg)
        points = pipeline.extract_points([(s.soc, s.temperature, r) for s, r in zip(corrected, results)], cfg)
        model = pipeline.build(points, curves, cfg)
    elapsed = time.perf_counter() - start
    return truth, cfg, reports, points, model, elapsed


def test_criterion_1_pipeline_round_trip(round_trip):
    truth, cfg, reports, points, model, elapsed = round_trip
    half_cell = 0.5 / cfg.points_per_decade
    worst_r = worst_tau = worst_ohm = 0.0
    structure_ok = len(points) == 20
    for p in points:
        tp = parameters_at(truth, p.temperature, soc=p.soc)
        rc = sorted((q for q in p.peaks if q.attribution != Attribution.DIFFUSION), key=lambda q: q.tau_peak)
        diff = [q for q in p.peaks if q.attribution == Attribution.DIFFUSION]
        if len(rc) != len(tp.rc) or len(diff) != 1:
            structure_ok = False
            continue
        for q, (r, c) in zip(rc, tp.rc):
            worst_r = max(worst_r, abs(q.area / r - 1))
            worst_tau = max(worst_tau, abs(np.log10(q.tau_peak / (r * c))))
        tau_1 = 3 * tp.r_d * tp.c_d / np.pi**2
        worst_r = max(worst_r, abs(diff[0].area / tp.r_d - 1))
        worst_tau = max(worst_tau, abs(np.log10(diff[0].tau_peak / tau_1)))
        worst_ohm = max(worst_ohm, abs(p.r_ohmic / tp.r_ohm - 1))
    ok = (all(r.passed for r in reports) and structure_ok and worst_r <= 0.05 and worst_tau <= half_cell
          and worst_ohm <= 0.01 and elapsed < 60)
    record_criterion(1, ok, f"R_i err {worst_r:.2%} (<=5%), tau err {worst_tau:.3f} dec (<={half_cell:.2f}), "
                            f"R_ohm err {worst_ohm:.2%} (<=1%), {len(points)} points, {elapsed:.1f} s (<60)")
    assert ok


def _separated_rc_cases(n_cases=40, seed=7):
    """Sums of 1-4 RC elements with tau in [1e-5, 100] s, at least 1.5 decades apart."""
    rng = np.random.default_rng(seed)
    lo, hi = -5.0, 2.0
    for case in range(n_cases):
        k = int(rng.integers(1, 5))
        logs = [lo + rng.uniform(0, hi - lo - 1.5 * (k - 1))]
        for j in range(k - 1):
            logs.append(logs[-1] + 1.5 + rng.uniform(0, max(0.0, hi - logs[-1] - 1.5 * (k - 1 - j))))
        yield case, rng.uniform(0.1e-3, 1e-3, k), 10 ** np.asarray(logs)


def _covering_frequencies(tau, per_decade=10, min_decades=6):
    """10 points/decade from 10/(2 pi tau_min) down to 0.1/(2 pi tau_max), widened to min_decades."""
    f_hi, f_lo = 10 / (2 * np.pi * tau.min()), 0.1 / (2 * np.pi * tau.max())
    pad = max(0.0, (min_decades - np.log10(f_hi / f_lo)) / 2)
    f_hi, f_lo = f_hi * 10**pad, f_lo / 10**pad
    return np.logspace(np.log10(f_hi), np.log10(f_lo), int(round(np.log10(f_hi / f_lo) * per_decade)) + 1)


def test_criterion_2_area_identity():
    # every arc is resolved inside the band; see the ledger for RCs near f_max
    worst, nonneg, n = 0.0, True, 0
    for case, r, tau in _separated_rc_cases():
        assert np.all(np.diff(np.log10(tau)) >= 1.5 - 1e-12)
        spectrum = rc_spectrum(r, tau, freqs=_covering_frequencies(tau), noise=1e-3, seed=case)
        d = compute_drt(spectrum, DrtConfig(lam=1e-5))
        area = sum(p.area for p in fit_gaussians(d, k="detected"))
        worst = max(worst, abs(area / r.sum() - 1))
        nonneg &= bool(np.all(d.coefficients >= 0) and np.all(d.gamma >= 0))
        n += 1
    ok = worst <= 0.03 and nonneg
    record_criterion(2, ok, f"{n} cases K<=4, lambda 1e-5, 0.1% noise: worst area err {worst:.2%} (<=3%), "
                            f"gamma >= 0 exactly: {nonneg}")
    assert ok


def test_criterion_3_warburg_ladder():
    r_d, c_d = 1.0, 1.0
    wt = np.logspace(np.log10(0.06), np.log10(60), 400)
    w = wt / (r_d * c_d)
    zl, zw = ladder_impedance(r_d, c_d, w, 5), warburg_impedance(r_d, c_d, w)
    err = np.abs(zl - zw) / np.abs(zw)
    modulus_diff = np.abs(np.abs(zl) - np.abs(zw)) / np.abs(zw)
    branches, _ = warburg_ladder(r_d, c_d, 5)
    partial = sum(b.resistance for b in branches)
    modulus_ok = bool(np.max(err) <= 0.02)
    sum_ok = abs(partial - TARGET_LADDER_SUM * r_d) <= 1e-5
    detail = f"max |Z_l - Z_W|/|Z_W| {np.max(err):.1%} (<=2%)"
    if not modulus_ok:
        detail += f", above 2% from w*tau_D = {wt[np.argmax(err > 0.02)]:.3f}"
    detail += (f" (| |Z_l| - |Z_W| | max {np.max(modulus_diff):.1%}); "
               f"ladder sum {partial:.9f} R_D vs {TARGET_LADDER_SUM} +- 1e-5")
    record_criterion(3, modulus_ok and sum_ok, detail)
    assert modulus_ok and sum_ok


def _interior_three_rc(n=20, seed=2024):
    rng = np.random.default_rng(seed)
    for _ in range(n):
        yield rng.uniform(0.05e-3, 1e-3, 3), 10 ** rng.uniform(-4, 0, 3)


def _perturb(spectrum, seed):
    u = np.random.default_rng(seed).uniform(-1, 1, (2, len(spectrum)))
    return spectrum.with_impedance(spectrum.impedance * (1 + 0.02 * (u[0] + 1j * u[1])))


def test_criterion_4_kk_gate():
    spectra = [rc_spectrum([1e-4, 2e-4, 3e-4], [1e-3, 0.05, 2.0])]
    spectra += [rc_spectrum(r, tau) for r, tau in _interior_three_rc()]
    exact = [kk_fit(s) for s in spectra]
    perturbed = [kk_fit(_perturb(s, i)) for i, s in enumerate(spectra)]
    worst_exact = max(r.max_abs_residual for r in exact)
    least_perturbed = min(r.max_abs_residual for r in perturbed)
    ok = worst_exact < 1e-6 and all(is_valid(r) for r in exact) and not any(is_valid(r, 0.01) for r in perturbed)
    record_criterion(4, ok, f"{len(spectra)} exact RC spectra: max residual {worst_exact:.2e} (<1e-6); "
                            f"2% perturbed: min residual {least_perturbed:.2%}, all rejected at 1%")
    assert ok


def test_criterion_5_simulator_fidelity():
    model = constant_model()
    tau, current, v0 = 2e-3 * 5000.0, -30.0, 3.0 + 1.2 * 0.8
    ladder = [(b.resistance, b.capacitance) for b in warburg_ladder(1e-3, C_D)[0]]
    amplitude = abs(current) * (1e-3 + 2e-3 + sum(r for r, _ in ladder))
    errors = {}
    for fraction in (20, 40):
        res = simulate(model, CurrentProfile([0.0, 600.0], [current, 0.0]),
                       SimConfig(timestep=tau / fraction, soc0=0.8))
        ref = step_closed_form(res.time, current, 1e-3, [(2e-3, 5000.0)] + ladder, C_D, v0)
        errors[fraction] = float(np.max(np.abs(res.terminal_voltage - ref)))
    step_ok = errors[20] <= 1e-3 * amplitude
    ratio = errors[20] / errors[40] if errors[40] > 0 else np.inf
    ratio_ok = 1.5 <= ratio <= 2.5
    dyn = CurrentProfile(np.arange(0, 3601, 300.0), np.r_[np.tile([-40.0, 0.0, 25.0, 0.0], 3), 0.0])
    res = simulate(model, dyn, SimConfig(soc0=0.5))
    charge = float(np.sum(res.current[1:]))
    bound = len(res) * np.finfo(float).eps * np.max(res.v_oc) * C_D
    charge_err = abs((res.v_oc[-1] - res.v_oc[0]) * C_D - charge)
    charge_ok = charge_err <= bound
    ok = step_ok and ratio_ok and charge_ok
    record_criterion(5, ok, f"step err at tau/20 {errors[20] / amplitude:.1e} of amplitude (<=1e-3); "
                            f"halving ratio {ratio:.2f} (in [1.5, 2.5]); dV_oc*C_d - integral I dt = "
                            f"{charge_err:.1e} C (rounding bound {bound:.1e})")
    assert ok


def test_criterion_6_metric_arithmetic():
    pairs = [(17.54, 1.46), (61.68, 5.14)]
    got = [round(rmse_percent(mv, 1.2), 2) for mv, _ in pairs]
    ok = got == [p for _, p in pairs]
    record_criterion(6, ok, ", ".join(f"{mv} mV -> {g}% (expected {p}%)" for (mv, p), g in zip(pairs, got)))
    assert ok


def test_criterion_7_regularization():
    truth = synthetic.reference_model()
    rng = np.random.default_rng(0)
    monotone, stable, n = True, 0, 0
    unstable = []
    for t in synthetic.TEMPERATURES:
        cap_curve = synthetic.ocv_curve(t)
        for s in synthetic.SOCS:
            sp = synthetic.spectrum(truth, s, t, noise=1e-3, rng=rng)
            cap = pipeline.diffusion_capacitance(cap_curve, s)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", DrtEcmWarning)
                d = compute_drt(sp, DrtConfig(lam="lcurve", lambda_grid=tuple(np.logspace(-8, 0, 17))),
                                capacitance=cap)
            rho = np.array([c[0] for c in d.meta["lcurve"]])
            monotone &= bool(np.all(np.diff(rho) >= -1e-12))
            counts = [len(detect_peaks(d))] + [
                len(detect_peaks(compute_drt(sp, DrtConfig(lam=d.lam * f), capacitance=cap))) for f in (0.1, 10.0)]
            n += 1
            if len(set(counts)) == 1:
                stable += 1
            else:
                unstable.append(f"({s:g}, {t:g}) lam {d.lam:.1e} peaks {counts}")
    ok = monotone and stable == n
    record_criterion(7, ok, f"residual non-decreasing over 1e-8..1: {monotone}; L-curve peak count stable "
                            f"under lambda*10^+-1 on {stable}/{n} spectra"
                            + (f"; e.g. {unstable[0]}" if unstable else ""))
    assert ok


def test_criterion_8_attribution_partition():
    failures = []

    @settings(max_examples=500, deadline=None, database=None)
    @given(st.floats(min_value=5e-324, allow_nan=False, allow_infinity=False))
    def one_band(tau):
        hits = [name for lo, hi, name in BANDS if lo <= tau < hi]
        assert len(hits) == 1 and attribute(tau) is hits[0]

    try:
        one_band()
    except AssertionError as exc:
        failures.append(str(exc))
    edges = {1e-3: Attribution.SEI, 1e-2: Attribution.CHARGE_TRANSFER, 1e1: Attribution.DIFFUSION,
             np.nextafter(1e-3, 0): Attribution.CONTACT, np.nextafter(1e-2, 0): Attribution.SEI,
             np.nextafter(1e1, 0): Attribution.CHARGE_TRANSFER}
    edges_ok = all(attribute(t) is band for t, band in edges.items())
    ok = not failures and edges_ok
    record_criterion(8, ok, f"500 random tau map to exactly one band: {not failures}; boundaries at 1e-3, 1e-2, "
                            f"1e1 s open upward: {edges_ok}")
    assert ok


def test_criterion_9_model_structure(round_trip):
    *_, model, _ = round_trip
    refused = []
    for t in (-10.5, 35.5, -40.0, 60.0):
        try:
            parameters_at(model, t, soc=0.5)
        except ExtrapolationError:
            refused.append(t)
    sim_refused = False
    try:
        simulate(model, CurrentProfile([0.0, 10.0], [0.0, 0.0]), SimConfig(soc0=0.5, constant_temperature=36.0))
    except ExtrapolationError:
        sim_refused = True
    inside = all(parameters_at(model, t, soc=0.5) is not None for t in (-10.0, 12.5, 35.0))
    ok = model.n_parameters == 13 and len(refused) == 4 and sim_refused and inside
    record_criterion(9, ok, f"{model.n_parameters} independent parameters (13); temperatures {model.temperatures}; "
                            f"extrapolation refused at {refused} and in simulate: {sim_refused}; "
                            f"interior accepted: {inside}")
    assert ok
