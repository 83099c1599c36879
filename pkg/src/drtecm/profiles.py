"""Current-profile generators for validation runs.

All generators return a :class:`~drtecm.datatypes.CurrentProfile` whose last
sample marks the end time. Positive current charges the cell.
"""
from __future__ import annotations

import csv
import io
import re
from importlib import resources

import numpy as np

from .datatypes import CurrentProfile
from .errors import ConfigurationError, IterationCapError, ParseError


def _profile(blocks, temperature=None):
    """Build a profile from ``(duration_s, current_a)`` blocks."""
    t, i = [0.0], []
    for d, cur in blocks:
        i.append(float(cur))
        t.append(t[-1] + float(d))
    if not i:
        return CurrentProfile()
    i.append(0.0)
    temp = None
    if temperature is not None:
        temp = temperature(np.array(t)) if callable(temperature) else np.full(len(t), float(temperature))
    return CurrentProfile(np.array(t), np.array(i), temp)


def generate_dynamic_profile(rates, step_s=300.0, rest_s=300.0, capacity=55.0, temperature=None):
    """Rest, discharge, rest, charge at each C-rate in turn."""
    blocks = []
    for r in rates:
        if not r > 0:
            raise ConfigurationError("C-rates must be positive")
        cur = r * capacity
        blocks += [(rest_s, 0.0), (step_s, -cur), (rest_s, 0.0), (step_s, cur)]
    return _profile(blocks, temperature)


def generate_discharge_profile(rate, capacity=55.0, duration=None, temperature=None):
    """Constant discharge at ``rate`` C; long enough that the voltage cutoff ends it."""
    if not rate > 0:
        raise ConfigurationError("discharge rate must be positive")
    if duration is None:
        duration = 1.25 * 3600.0 / rate
    return _profile([(duration, -rate * capacity)], temperature)


def load_profile_shapes(source=None):
    """Read ``shape,duration_s,c_rate`` rows into ``{name: [(duration, c_rate), ...]}``."""
    if source is None:
        text = resources.files("drtecm").joinpath("data/driving_shapes.csv").read_text()
    elif hasattr(source, "read"):
        text = source.read()
    else:
        with open(source) as fh:
            text = fh.read()
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    shapes = {}
    for n, row in enumerate(csv.DictReader(io.StringIO("\n".join(lines))), 2):
        try:
            shapes.setdefault(row["shape"], []).append((float(row["duration_s"]), float(row["c_rate"])))
        except (KeyError, TypeError, ValueError):
            raise ParseError("expected columns shape,duration_s,c_rate", line=n) from None
    return shapes


_REPEAT_UNTIL = re.compile(r"^repeat\s+(\w+)\s+until\s+soc\s+([\d.]+)\s*(%?)$", re.I)
_REPEAT_N = re.compile(r"^(?:repeat\s+(\w+)\s+(\d+)|(\w+?)\s*x\s*(\d+))$", re.I)
_REST = re.compile(r"^rest\s+([\d.]+)\s*s?$", re.I)


def parse_blocks(spec):
    """Parse a block list such as ``"repeat A until soc 50%; rest 300; B; repeat A until soc 20%"``."""
    items = spec.split(";") if isinstance(spec, str) else list(spec)
    out = []
    for raw in items:
        s = raw.strip()
        if not s:
            continue
        if m := _REPEAT_UNTIL.match(s):
            target = float(m.group(2)) / (100.0 if m.group(3) else 1.0)
            out.append(("until", m.group(1), target))
        elif m := _REPEAT_N.match(s):
            out.append(("count", m.group(1) or m.group(3), int(m.group(2) or m.group(4))))
        elif m := _REST.match(s):
            out.append(("rest", None, float(m.group(1))))
        elif re.fullmatch(r"\w+", s):
            out.append(("count", s, 1))
        else:
            raise ConfigurationError(f"cannot parse profile block {s!r}")
    return out


def generate_driving_profile(n_fraction, blocks, capacity=55.0, shapes=None, soc0=1.0, max_repeats=10000,
                             temperature=None):
    """Concatenate scaled driving shapes according to ``blocks``.

    Shape currents are ``c_rate * capacity * n_fraction``. ``repeat X until
    soc S`` repeats whole shapes, tracking SoC by coulomb counting from
    ``soc0``, until SoC has crossed ``S``.
    """
    if not n_fraction > 0:
        raise ConfigurationError("N must be positive")
    shapes = load_profile_shapes() if shapes is None else shapes
    scale = capacity * n_fraction
    soc = float(soc0)
    out = []

    def emit(name):
        nonlocal soc
        if name not in shapes:
            raise ConfigurationError(f"unknown profile shape {name!r}")
        for d, c in shapes[name]:
            out.append((d, c * scale))
            soc += d * c * scale / (3600.0 * capacity)

    for kind, name, arg in parse_blocks(blocks):
        if kind == "rest":
            out.append((arg, 0.0))
        elif kind == "count":
            for _ in range(arg):
                emit(name)
        else:
            down = arg < soc
            reps = 0
            while (soc > arg) if down else (soc < arg):
                if reps >= max_repeats:
                    raise IterationCapError(f"SoC target {arg:g} not reached after {max_repeats} repetitions of {name}")
                emit(name)
                reps += 1
    return _profile(out, temperature)
