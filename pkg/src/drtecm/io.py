"""CSV ingestion/serialization and cross-cell averaging.

File formats (UTF-8, ``.`` decimal separator, header row mandatory):

* EIS:     ``freq_hz,z_re_ohm,z_im_ohm[,soc,temp_c,cell_id,preprocessed]``
* OCV:     ``capacity_ah,voltage_v[,temp_c,cell_id]``
* profile: ``time_s,current_a[,temp_c]`` (positive current charges the cell)
* model:   JSON with top-level ``schema_version``

Metadata may also be given as leading ``# key=value`` lines instead of columns.
"""
from __future__ import annotations

import csv
import io as _io
import json
from collections import defaultdict

import numpy as np

from .datatypes import CellDataset, CurrentProfile, ImpedanceSpectrum, OcvCurve
from .errors import GridMismatchError, MetadataError, ParseError

EIS_HEADER = ("freq_hz", "z_re_ohm", "z_im_ohm")
OCV_HEADER = ("capacity_ah", "voltage_v")
PROFILE_HEADER = ("time_s", "current_a")
META_KEYS = ("soc", "temp_c", "cell_id", "preprocessed")


def _text(source):
    if hasattr(source, "read"):
        return source.read()
    return source


def _read_table(source, required):
    """Return (sidecar metadata, header, rows with line numbers)."""
    lines = _text(source).splitlines()
    meta = {}
    start = None
    for n, line in enumerate(lines, 1):
        s = line.strip()
        if not s:
            continue
        if s.startswith("#"):
            body = s.lstrip("#").strip()
            if "=" in body:
                k, v = body.split("=", 1)
                meta[k.strip()] = v.strip()
            continue
        start = n
        break
    if start is None:
        raise ParseError("empty file", line=1)
    reader = csv.reader(lines[start - 1:])
    header = [h.strip() for h in next(reader)]
    if tuple(header[: len(required)]) != required:
        raise ParseError(f"expected header starting with {','.join(required)}, got {','.join(header)}", line=start)
    rows = []
    for offset, row in enumerate(reader, start + 1):
        if not row or all(not c.strip() for c in row) or row[0].lstrip().startswith("#"):
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", line=offset)
        rows.append((offset, [c.strip() for c in row]))
    return meta, header, rows


def _float(value, line, name):
    try:
        x = float(value)
    except ValueError:
        raise ParseError(f"{name}: cannot parse {value!r} as a number", line=line) from None
    if not np.isfinite(x):
        raise ParseError(f"{name}: non-finite value {value!r}", line=line)
    return x


def _meta_value(key, value):
    if value is None or value == "":
        return None
    if key == "cell_id":
        return value
    if key == "preprocessed":
        return value.lower() in ("1", "true", "yes")
    return float(value)


def _group_rows(meta, header, rows, numeric, keys):
    cols = {name: header.index(name) for name in keys if name in header}
    groups = defaultdict(list)
    for line, row in rows:
        values = [_float(row[header.index(h)], line, h) for h in numeric]
        try:
            key = tuple(_meta_value(k, row[cols[k]] if k in cols else meta.get(k)) for k in keys)
        except ValueError:
            raise ParseError("bad metadata value", line=line) from None
        groups[key].append(values)
    return groups


def _spectrum_from_rows(key, values):
    soc, temp, cell, pre = key
    a = np.array(values)
    return ImpedanceSpectrum(
        a[:, 0], a[:, 1] + 1j * a[:, 2], soc=soc, temperature=temp, cell_id=cell or "", preprocessed=bool(pre)
    )


def parse_eis_table(source):
    """Parse an EIS CSV that may hold several spectra distinguished by metadata columns."""
    meta, header, rows = _read_table(source, EIS_HEADER)
    if not rows:
        raise ParseError("no data rows")
    groups = _group_rows(meta, header, rows, EIS_HEADER, META_KEYS)
    return [_spectrum_from_rows(k, v) for k, v in groups.items()]


def parse_eis_csv(source):
    """Parse a single spectrum; raises if the metadata columns describe more than one."""
    spectra = parse_eis_table(source)
    if len(spectra) != 1:
        raise MetadataError(f"file holds {len(spectra)} spectra; use parse_eis_table")
    return spectra[0]


def _fmt(x):
    return repr(float(x))


def format_eis_csv(spectra):
    """Serialize one or several spectra (metadata as columns)."""
    if isinstance(spectra, ImpedanceSpectrum):
        spectra = [spectra]
    out = _io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(EIS_HEADER + META_KEYS)
    for s in spectra:
        soc = "" if s.soc is None else _fmt(s.soc)
        temp = "" if s.temperature is None else _fmt(s.temperature)
        for f, z in zip(s.frequency, s.impedance):
            w.writerow([_fmt(f), _fmt(z.real), _fmt(z.imag), soc, temp, s.cell_id, int(s.preprocessed)])
    return out.getvalue()


def parse_ocv_table(source):
    meta, header, rows = _read_table(source, OCV_HEADER)
    if not rows:
        raise ParseError("no data rows")
    groups = _group_rows(meta, header, rows, OCV_HEADER, ("temp_c", "cell_id"))
    curves = []
    for (temp, cell), values in groups.items():
        a = np.array(values)
        curves.append(OcvCurve(a[:, 0], a[:, 1], temperature=temp, cell_id=cell or ""))
    return curves


def parse_ocv_csv(source):
    curves = parse_ocv_table(source)
    if len(curves) != 1:
        raise MetadataError(f"file holds {len(curves)} OCV curves; use parse_ocv_table")
    return curves[0]


def format_ocv_csv(curves):
    if isinstance(curves, OcvCurve):
        curves = [curves]
    out = _io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(OCV_HEADER + ("temp_c", "cell_id"))
    for c in curves:
        temp = "" if c.temperature is None else _fmt(c.temperature)
        for q, v in zip(c.charge, c.voltage):
            w.writerow([_fmt(q), _fmt(v), temp, c.cell_id])
    return out.getvalue()


def parse_profile_csv(source):
    meta, header, rows = _read_table(source, PROFILE_HEADER)
    has_t = "temp_c" in header
    t, i, temp = [], [], []
    for line, row in rows:
        t.append(_float(row[0], line, "time_s"))
        i.append(_float(row[1], line, "current_a"))
        if has_t:
            temp.append(_float(row[header.index("temp_c")], line, "temp_c"))
    if not has_t and "temp_c" in meta:
        temp = [float(meta["temp_c"])] * len(t)
    return CurrentProfile(np.array(t), np.array(i), np.array(temp) if temp else None)


def format_profile_csv(profile):
    out = _io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    has_t = profile.temperature is not None
    w.writerow(PROFILE_HEADER + (("temp_c",) if has_t else ()))
    for k in range(len(profile)):
        row = [_fmt(profile.time[k]), _fmt(profile.current[k])]
        if has_t:
            row.append(_fmt(profile.temperature[k]))
        w.writerow(row)
    return out.getvalue()


def parse_voltage_csv(source):
    """Reference voltage trace ``time_s,voltage_v`` (also accepts ``v_term_v``)."""
    lines = _text(source)
    reader = csv.DictReader(_io.StringIO(lines))
    col = None
    for name in ("voltage_v", "v_term_v"):
        if reader.fieldnames and name in reader.fieldnames:
            col = name
    if col is None or "time_s" not in (reader.fieldnames or []):
        raise ParseError("expected columns time_s and voltage_v", line=1)
    t, v = [], []
    for n, row in enumerate(reader, 2):
        t.append(_float(row["time_s"], n, "time_s"))
        v.append(_float(row[col], n, col))
    return np.array(t), np.array(v)


def average_spectra(spectra, rtol=1e-3):
    """Per-frequency complex mean of spectra measured at the same (soc, temperature).

    Inputs are ordered by cell id before summation so the result does not
    depend on list order.
    """
    spectra = list(spectra)
    if not spectra:
        raise ValueError("average_spectra needs at least one spectrum")
    keys = {(s.soc, s.temperature) for s in spectra}
    if len(keys) > 1:
        raise MetadataError(f"spectra at different (soc, temperature): {sorted(keys, key=str)}")
    ref = spectra[0].frequency
    for s in spectra[1:]:
        if len(s) != len(ref) or np.max(np.abs(s.frequency / ref - 1)) > rtol:
            raise GridMismatchError(f"frequency grid of cell {s.cell_id!r} differs from {spectra[0].cell_id!r}")
    if len(spectra) == 1:
        return spectra[0].with_impedance(spectra[0].impedance, cell_id="averaged")
    spectra.sort(key=lambda s: (s.cell_id, s.impedance.real.tobytes(), s.impedance.imag.tobytes()))
    z = np.mean(np.stack([s.impedance for s in spectra]), axis=0)
    return ImpedanceSpectrum(
        spectra[0].frequency,
        z,
        soc=spectra[0].soc,
        temperature=spectra[0].temperature,
        cell_id="averaged",
        preprocessed=all(s.preprocessed for s in spectra),
    )


def average_ocv(curves, n_points=None):
    """Mean OCV curve on a common uniform SoC grid; capacity is the mean capacity."""
    curves = list(curves)
    if not curves:
        raise ValueError("average_ocv needs at least one curve")
    temps = {c.temperature for c in curves}
    if len(temps) > 1:
        raise MetadataError(f"OCV curves at different temperatures: {sorted(temps, key=str)}")
    if len(curves) == 1:
        return curves[0]
    curves.sort(key=lambda c: (c.cell_id, c.capacity))
    n = n_points or max(len(c.charge) for c in curves)
    soc = np.linspace(1.0, 0.0, n)
    v = np.mean([c.voltage_at_soc(soc) for c in curves], axis=0)
    cap = float(np.mean([c.capacity for c in curves]))
    lo = min(c.voltage_limits[0] for c in curves)
    hi = max(c.voltage_limits[1] for c in curves)
    return OcvCurve((1.0 - soc) * cap, v, temperature=curves[0].temperature, cell_id="averaged",
                    capacity=cap, voltage_limits=(lo, hi))


def average_dataset(dataset: CellDataset):
    """Average every (soc, T) group of spectra and every temperature group of OCV curves."""
    spectra = [average_spectra(g) for g in dataset.group_spectra().values()]
    by_t = defaultdict(list)
    for c in dataset.ocv_curves:
        by_t[c.temperature].append(c)
    curves = [average_ocv(g) for _, g in sorted(by_t.items())]
    return CellDataset(spectra, curves)


def write_model(model):
    """Serialize an :class:`~drtecm.ecm.EcmModel` to JSON text."""
    from .ecm import model_to_dict

    return json.dumps(model_to_dict(model), indent=1, sort_keys=False) + "\n"


def read_model(source):
    from .ecm import model_from_dict

    try:
        data = json.loads(_text(source))
    except json.JSONDecodeError as exc:
        raise ParseError(str(exc), line=exc.lineno) from None
    if not isinstance(data, dict):
        raise ParseError("model file must hold a JSON object")
    return model_from_dict(data)


def read_dataset(eis_source, ocv_source=None):
    spectra = parse_eis_table(eis_source)
    curves = parse_ocv_table(ocv_source) if ocv_source is not None else []
    return CellDataset(spectra, curves)
