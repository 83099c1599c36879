"""Stage functions behind the command line.

Each stage exists twice: an in-memory function working on domain objects
and a ``stage_*`` function that reads the previous stage's files, writes its
own outputs and a manifest. ``run_all`` calls the ``stage_*`` functions in
order on the same directory, so its outputs are those of the manual chain.

Stage outputs inside ``out_dir``:

    validate    kk/<key>.csv (freq_hz,res_re,res_im), kk_summary.json
    preprocess  preprocessed.csv (EIS schema, preprocessed=1), inductance.json
    drt         drt/<key>.csv (tau_s,gamma_ohm_per_logtau), drt/<key>.json, drt_summary.json
    extract     peaks.csv (soc,temp_c,peak_idx,tau_s,r_ohm,c_f,attribution,...)
    build       model.json
    simulate    sim_<name>.csv (time_s,v_term_v,v_oc_v,soc,current_a,temp_c)
    evaluate    rmse_report.csv (one row per simulation, replaced on re-run)
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import warnings
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from importlib import resources
from pathlib import Path
from types import SimpleNamespace

import numpy as np

from .config import PipelineConfig
from .drt import DrtResult, compute_drt
from .ecm import ExtractedPoint, build_model, intercalation_capacitance, ocv_soc_table
from .errors import ConfigurationError, DrtEcmWarning, PipelineError, ValidityError
from .io import (average_ocv, average_spectra, format_eis_csv, parse_eis_table, parse_ocv_table,
                 parse_profile_csv, parse_voltage_csv, read_model, write_model)
from .kk import kk_fit
from .peaks import SQRT2PI, Attribution, Peak, attribute_processes, fit_gaussians
from .preprocess import preprocess
from .simulate import SimConfig, rmse, simulate

THREADS_ENV = "EIS2MOD_THREADS"
PEAK_COLUMNS = ("soc", "temp_c", "peak_idx", "tau_s", "r_ohm", "c_f", "attribution", "width_ln_tau", "kind")
SIM_COLUMNS = ("time_s", "v_term_v", "v_oc_v", "soc", "current_a", "temp_c")
REPORT_COLUMNS = ("name", "rmse_mv", "rmse_percent", "n_samples")
OHMIC = "Ohmic"


def tool_version():
    from . import __version__

    return __version__


def bundled_dataset():
    """Directory of the shipped synthetic NMC-like dataset."""
    return Path(str(resources.files("drtecm").joinpath("data/synthetic_nmc")))


# ---------------------------------------------------------------- parallelism

def thread_cap():
    raw = os.environ.get(THREADS_ENV, "").strip()
    if not raw:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise ConfigurationError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigurationError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return n


def parallel_map(fn, items):
    """Ordered map over independent work items, capped by ``EIS2MOD_THREADS``."""
    items = list(items)
    workers = min(thread_cap(), len(items))
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


# ---------------------------------------------------------------- in-memory stages

def spectrum_key(s):
    key = f"T{s.temperature:g}_soc{s.soc:g}"
    if s.cell_id and s.cell_id != "averaged":
        key += f"_{s.cell_id}"
    return key


def _order(spectra):
    return sorted(spectra, key=lambda s: (s.temperature, s.soc, s.cell_id))


def validate_spectra(spectra, config=PipelineConfig()):
    return parallel_map(lambda s: kk_fit(s, config.kk_elements_per_decade, config.kk_threshold), spectra)


def preprocess_spectra(spectra, config=PipelineConfig(), average=True):
    """Inductance handling per spectrum, then the per-(soc, T) mean over cells."""
    done = parallel_map(lambda s: preprocess(s, config.inductance_mode, config.inductance_window), spectra)
    corrected = [c for c, _ in done]
    fits = [f for _, f in done]
    if average:
        groups = defaultdict(list)
        for s in corrected:
            groups[(s.soc, s.temperature)].append(s)
        corrected = [average_spectra(g) for _, g in sorted(groups.items())]
    return _order(corrected), fits


def averaged_ocv(curves):
    """One mean OCV curve per temperature."""
    by_t = defaultdict(list)
    for c in curves:
        by_t[c.temperature].append(c)
    return {t: average_ocv(g) for t, g in sorted(by_t.items(), key=lambda kv: (kv[0] is None, kv[0] or 0))}


def diffusion_capacitance(curve, soc, config=PipelineConfig()):
    """Intercalation capacitance ``dQ/dV`` of ``curve`` at ``soc``."""
    soc_tab, ocv_tab = ocv_soc_table(curve, config.smoothing_window)
    v = float(np.interp(soc, soc_tab, ocv_tab))
    return float(intercalation_capacitance(curve, config.smoothing_window, config.cap_factor)(v))


def drt_spectra(spectra, ocv_curves=None, config=PipelineConfig(), allow_raw=False):
    """DRT of each spectrum with the OCV-derived C_D subtracted (fitted if no OCV is known).

    Returns ``(results, capacitances)``.
    """
    raw = [spectrum_key(s) for s in spectra if not s.preprocessed]
    if raw and not allow_raw:
        raise PipelineError(f"spectra not preprocessed ({', '.join(raw[:3])}...); run preprocess or allow raw input")
    curves = averaged_ocv(ocv_curves or [])

    def one(s):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DrtEcmWarning)
            cap = diffusion_capacitance(curves[s.temperature], s.soc, config) if s.temperature in curves else "fit"
        return compute_drt(s, config.drt_config(), capacitance=cap), cap

    out = parallel_map(one, spectra)
    return [r for r, _ in out], [c for _, c in out]


def extract_point(soc, temperature, drt, config=PipelineConfig()):
    k = config.peak_count
    peaks = fit_gaussians(drt, k=k, prominence_fraction=config.prominence, diffusion=config.diffusion_model)
    return ExtractedPoint(soc, temperature, float(drt.r_ohmic), tuple(attribute_processes(peaks)))


def extract_points(items, config=PipelineConfig()):
    """``items`` are ``(soc, temperature, DrtResult)`` triples."""
    return parallel_map(lambda it: extract_point(*it, config=config), items)


def build(points, ocv_curves, config=PipelineConfig()):
    curves = list(averaged_ocv(ocv_curves).values())
    return build_model(points, curves, config.trend_kinds(), config.ladder_size, config.smoothing_window,
                       config.cap_factor)


def simulate_profile(model, profile, config=PipelineConfig(), soc0=None, v_oc0=None, temperature=None):
    sim = SimConfig(timestep=config.timestep, soc0=soc0, v_oc0=v_oc0, refresh_every=config.refresh_every,
                    constant_temperature=temperature)
    return simulate(model, profile, sim)


# ---------------------------------------------------------------- serialization

def _f(x):
    return "" if x is None else repr(float(x))


def _csv(header, rows):
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return out.getvalue()


def kk_csv(spectrum, report):
    return _csv(("freq_hz", "res_re", "res_im"),
                ([_f(f), _f(a), _f(b)] for f, a, b in zip(spectrum.frequency, report.residual_real,
                                                           report.residual_imag)))


def drt_csv(result):
    return _csv(("tau_s", "gamma_ohm_per_logtau"), ([_f(t), _f(g)] for t, g in zip(result.tau, result.gamma)))


def _floats(a):
    return [float(x) for x in np.asarray(a, dtype=float)]


def drt_to_dict(result, spectrum, capacitance):
    return {
        "soc": spectrum.soc,
        "temp_c": spectrum.temperature,
        "cell_id": spectrum.cell_id,
        "lambda": float(result.lam),
        "r_ohmic": float(result.r_ohmic),
        "r_pol": float(result.r_pol),
        "residual": float(result.residual_norm),
        "kk_max_residual": result.kk_max_residual,
        "rbf_shape": float(result.rbf_shape),
        "capacitance": capacitance if isinstance(capacitance, str) else float(capacitance),
        "series_capacitance": result.series_capacitance,
        "tau_s": _floats(result.tau),
        "gamma": _floats(result.gamma),
        "coefficients": _floats(result.coefficients),
        "frequency_hz": _floats(result.frequency),
        "reconstruction_re": _floats(np.real(result.reconstruction)),
        "reconstruction_im": _floats(np.imag(result.reconstruction)),
    }


def drt_from_dict(d):
    """Rebuild ``(soc, temperature, DrtResult)`` from :func:`drt_to_dict` output."""
    result = DrtResult(
        gamma=np.array(d["gamma"]),
        tau=np.array(d["tau_s"]),
        coefficients=np.array(d["coefficients"]),
        r_ohmic=d["r_ohmic"],
        r_pol=d["r_pol"],
        lam=d["lambda"],
        residual_norm=d["residual"],
        reconstruction=np.array(d["reconstruction_re"]) + 1j * np.array(d["reconstruction_im"]),
        frequency=np.array(d["frequency_hz"]),
        rbf_shape=d["rbf_shape"],
        series_capacitance=d.get("series_capacitance"),
        kk_max_residual=d.get("kk_max_residual"),
    )
    return d["soc"], d["temp_c"], result


def _diffusion_capacitance_from_peak(p):
    return np.pi**2 * p.tau_peak / (3.0 * p.area)


def peak_rows(point):
    """Rows of the extract table: an Ohmic row, then peaks in tau order.

    ``c_f`` is ``tau/R`` for RC peaks and ``pi^2 tau_1/(3 R_D)`` for the
    diffusion comb.
    """
    rows = [[_f(point.soc), _f(point.temperature), "0", "", _f(point.r_ohmic), "", OHMIC, "", ""]]
    for i, p in enumerate(sorted(point.peaks, key=lambda q: q.tau_peak), 1):
        c = _diffusion_capacitance_from_peak(p) if p.kind == "warburg" else p.tau_peak / p.area
        rows.append([_f(point.soc), _f(point.temperature), str(i), _f(p.tau_peak), _f(p.area), _f(c),
                     p.attribution.value, _f(p.width), p.kind])
    return rows


def peaks_csv(points):
    return _csv(PEAK_COLUMNS, (r for p in points for r in peak_rows(p)))


def parse_peaks_csv(text):
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ())[:7] != PEAK_COLUMNS[:7]:
        raise PipelineError(f"peak table must start with columns {','.join(PEAK_COLUMNS[:7])}")
    r_ohm = {}
    peaks = defaultdict(list)
    for row in reader:
        key = (float(row["soc"]), float(row["temp_c"]))
        if row["attribution"] == OHMIC:
            r_ohm[key] = float(row["r_ohm"])
            continue
        tau, area = float(row["tau_s"]), float(row["r_ohm"])
        width = float(row.get("width_ln_tau") or 1.0)
        kind = row.get("kind") or ("warburg" if row["attribution"] == Attribution.DIFFUSION.value else "gaussian")
        norm = 6.0 / np.pi**2 if kind == "warburg" else 1.0
        peaks[key].append(Peak(tau, area, width, norm * area / (width * SQRT2PI),
                               attribution=Attribution(row["attribution"]), kind=kind))
    missing = sorted(set(peaks) - set(r_ohm))
    if missing:
        raise PipelineError(f"peak table lacks Ohmic rows at {missing}")
    return [ExtractedPoint(s, t, r_ohm[(s, t)], tuple(peaks[(s, t)])) for s, t in sorted(r_ohm, key=lambda k: (k[1], k[0]))]


def sim_csv(res):
    cols = (res.time, res.terminal_voltage, res.v_oc, res.soc, res.current, res.temperature)
    return _csv(SIM_COLUMNS, ([_f(x) for x in row] for row in zip(*cols)))


def parse_sim_csv(text):
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ())[:2] != SIM_COLUMNS[:2]:
        raise PipelineError("simulation file must start with columns time_s,v_term_v")
    t, v = [], []
    for row in reader:
        t.append(float(row["time_s"]))
        v.append(float(row["v_term_v"]))
    return SimpleNamespace(time=np.array(t), terminal_voltage=np.array(v))


# ---------------------------------------------------------------- manifests

def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def digests(paths):
    out = {}
    for p in paths:
        p = Path(p)
        files = sorted(x for x in p.rglob("*") if x.is_file()) if p.is_dir() else [p]
        for f in files:
            name = f.relative_to(p.parent).as_posix()
            out[name] = sha256_file(f)
    return out


def write_manifest(out_dir, command, config, inputs, arguments=None):
    """``manifest_<command>.json``: config snapshot, input digests, tool version."""
    manifest = {
        "command": command,
        "tool_version": tool_version(),
        "config": config.snapshot(),
        "inputs": digests(inputs),
        "arguments": arguments or {},
    }
    path = Path(out_dir) / f"manifest_{command}.json"
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return path


def _write(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path


def _read(path):
    try:
        return Path(path).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise PipelineError(f"input not found: {path}") from None


def _dump(obj):
    return json.dumps(obj, indent=1) + "\n"


# ---------------------------------------------------------------- file stages

def stage_validate(eis_path, out_dir, config=PipelineConfig(), plot=False):
    """KK reports for every spectrum. Returns the summary; ``summary["passed"]`` is the gate."""
    out = Path(out_dir)
    spectra = _order(parse_eis_table(_read(eis_path)))
    reports = validate_spectra(spectra, config)
    rows = []
    for s, r in zip(spectra, reports):
        key = spectrum_key(s)
        _write(out / "kk" / f"{key}.csv", kk_csv(s, r))
        rows.append({"key": key, "soc": s.soc, "temp_c": s.temperature, "cell_id": s.cell_id,
                     "max_abs_residual": r.max_abs_residual, "rms_residual": r.rms_residual,
                     "passed": bool(r.passed)})
    summary = {"threshold": config.kk_threshold, "passed": all(r["passed"] for r in rows), "spectra": rows}
    _write(out / "kk_summary.json", _dump(summary))
    if plot:
        from .plotting import plot_kk

        plot_kk(spectra, reports, out / "kk.svg")
    write_manifest(out, "validate", config, [eis_path])
    return summary


def stage_preprocess(eis_path, out_dir, config=PipelineConfig(), average=True, plot=False):
    out = Path(out_dir)
    spectra = _order(parse_eis_table(_read(eis_path)))
    corrected, fits = preprocess_spectra(spectra, config, average)
    _write(out / "preprocessed.csv", format_eis_csv(corrected))
    info = [{"key": spectrum_key(s), "inductance_h": None if f is None else f.inductance,
             "parallel_resistance_ohm": None if f is None else f.parallel_resistance,
             "fit_residual": None if f is None else f.fit_residual}
            for s, f in zip(spectra, fits)]
    _write(out / "inductance.json", _dump({"mode": config.inductance_mode, "averaged": average, "fits": info}))
    if plot:
        from .plotting import plot_nyquist

        plot_nyquist(corrected, out / "nyquist.svg")
    write_manifest(out, "preprocess", config, [eis_path], {"average": average})
    return {"n_input": len(spectra), "n_output": len(corrected), "mode": config.inductance_mode}


def stage_drt(eis_path, out_dir, config=PipelineConfig(), ocv_path=None, allow_raw=False, plot=False):
    out = Path(out_dir)
    spectra = _order(parse_eis_table(_read(eis_path)))
    curves = parse_ocv_table(_read(ocv_path)) if ocv_path else []
    results, caps = drt_spectra(spectra, curves, config, allow_raw)
    rows = []
    for s, r, c in zip(spectra, results, caps):
        key = spectrum_key(s)
        _write(out / "drt" / f"{key}.csv", drt_csv(r))
        _write(out / "drt" / f"{key}.json", _dump(drt_to_dict(r, s, c)))
        rows.append({"key": key, "soc": s.soc, "temp_c": s.temperature, "lambda": float(r.lam),
                     "r_ohmic": float(r.r_ohmic), "r_pol": float(r.r_pol), "residual": float(r.residual_norm)})
    lams = sorted({row["lambda"] for row in rows})
    summary = {"lambda": lams[0] if len(lams) == 1 else lams, "lambda_rule": config.lam if isinstance(config.lam, str)
               else "fixed", "spectra": rows}
    _write(out / "drt_summary.json", _dump(summary))
    if plot:
        from .plotting import plot_drt

        plot_drt(results, [spectrum_key(s) for s in spectra], out / "drt.svg")
    write_manifest(out, "drt", config, [eis_path] + ([ocv_path] if ocv_path else []), {"allow_raw": allow_raw})
    return summary


def load_drt_dir(drt_dir):
    d = Path(drt_dir)
    files = sorted(d.glob("*.json"))
    if not files:
        raise PipelineError(f"no DRT results in {d}; run the drt stage first")
    items = [drt_from_dict(json.loads(f.read_text())) for f in files]
    return sorted(items, key=lambda it: (it[1], it[0]))


def stage_extract(drt_dir, out_dir, config=PipelineConfig()):
    out = Path(out_dir)
    items = load_drt_dir(drt_dir)
    points = extract_points(items, config)
    _write(out / "peaks.csv", peaks_csv(points))
    write_manifest(out, "extract", config, [drt_dir])
    counts = sorted({len(p.peaks) for p in points})
    return {"points": len(points), "peaks_per_point": counts}


def stage_build(peaks_path, ocv_path, model_path, config=PipelineConfig()):
    points = parse_peaks_csv(_read(peaks_path))
    curves = parse_ocv_table(_read(ocv_path))
    model = build(points, curves, config)
    _write(model_path, write_model(model))
    write_manifest(Path(model_path).parent, "build", config, [peaks_path, ocv_path])
    return {"model": str(model_path), "n_parameters": model.n_parameters, "n_rc": model.n_rc,
            "temperatures": model.temperatures, "diagnostics": list(model.diagnostics)}


def stage_simulate(model_path, profile_path, out_path, config=PipelineConfig(), soc0=None, v_oc0=None,
                   temperature=None, plot=False):
    model = read_model(_read(model_path))
    profile = parse_profile_csv(_read(profile_path))
    res = simulate_profile(model, profile, config, soc0, v_oc0, temperature)
    out_path = Path(out_path)
    _write(out_path, sim_csv(res))
    if plot:
        from .plotting import plot_voltage

        plot_voltage(res.time, res.terminal_voltage, out_path.with_suffix(".svg"))
    write_manifest(out_path.parent, f"simulate_{out_path.stem}", config, [model_path, profile_path],
                   {"soc0": soc0, "v_oc0": v_oc0, "temperature": temperature})
    return {"output": str(out_path), "samples": len(res), "termination": res.termination,
            "final_soc": float(res.soc[-1])}


def _upsert_report(path, row):
    path = Path(path)
    rows = []
    if path.exists():
        rows = [r for r in csv.DictReader(io.StringIO(path.read_text())) if r["name"] != row["name"]]
    rows.append(row)
    rows.sort(key=lambda r: r["name"])
    _write(path, _csv(REPORT_COLUMNS, ([r[c] for c in REPORT_COLUMNS] for r in rows)))


def stage_evaluate(sim_path, ref_path, config=PipelineConfig(), report_path=None, name=None, plot=False):
    """RMSE of a simulation against a reference trace; the row is upserted into ``report_path``."""
    sim = parse_sim_csv(_read(sim_path))
    ref = parse_voltage_csv(_read(ref_path))
    mv, pct = rmse(ref, sim, config.voltage_interval)
    name = name or Path(sim_path).stem
    row = {"name": name, "rmse_mv": repr(mv), "rmse_percent": repr(pct), "n_samples": str(len(sim.time))}
    if report_path is None:
        report_path = Path(sim_path).parent / "rmse_report.csv"
    _upsert_report(report_path, row)
    if plot:
        from .plotting import plot_voltage

        plot_voltage(sim.time, sim.terminal_voltage, Path(sim_path).with_suffix(".eval.svg"), reference=ref)
    write_manifest(Path(report_path).parent, f"evaluate_{name}", config, [sim_path, ref_path])
    return {"name": name, "rmse_mv": mv, "rmse_percent": pct, "voltage_interval": config.voltage_interval}


def discover_profiles(directory):
    """``profile_<name>.csv`` files with their ``.soc0`` sidecar and optional ``reference_<name>.csv``."""
    d = Path(directory)
    out = []
    for p in sorted(d.glob("profile_*.csv")):
        name = p.stem[len("profile_"):]
        side = p.with_suffix(".soc0")
        if not side.exists():
            raise PipelineError(f"profile {p.name} has no .soc0 sidecar")
        ref = d / f"reference_{name}.csv"
        out.append((name, p, float(side.read_text().strip()), ref if ref.exists() else None))
    return out


def run_all(eis_path, ocv_path, out_dir, config=PipelineConfig(), profiles_dir=None, plot=False):
    """validate, preprocess, drt, extract, build, then simulate/evaluate every profile found."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary = stage_validate(eis_path, out, config, plot=plot)
    if not summary["passed"]:
        bad = [r["key"] for r in summary["spectra"] if not r["passed"]]
        raise ValidityError(f"KK validation failed for {', '.join(bad)}")
    stage_preprocess(eis_path, out, config, plot=plot)
    stage_drt(out / "preprocessed.csv", out, config, ocv_path=ocv_path, plot=plot)
    stage_extract(out / "drt", out, config)
    built = stage_build(out / "peaks.csv", ocv_path, out / "model.json", config)
    evaluations = []
    for name, profile, soc0, ref in discover_profiles(profiles_dir) if profiles_dir else []:
        sim_path = out / f"sim_{name}.csv"
        sim = stage_simulate(out / "model.json", profile, sim_path, config, soc0=soc0, plot=plot)
        if ref is not None:
            ev = stage_evaluate(sim_path, ref, config, out / "rmse_report.csv", name=name, plot=plot)
            evaluations.append({**ev, "termination": sim["termination"]})
    report = {"model": "model.json", "n_parameters": built["n_parameters"], "temperatures": built["temperatures"],
              "validation": evaluations}
    _write(out / "report.json", _dump(report))
    write_manifest(out, "run-all", config, [eis_path, ocv_path] + ([profiles_dir] if profiles_dir else []))
    return report
