"""Pipeline configuration: documented defaults, flat key=value files, flag overrides.

A config file holds one ``key = value`` per line; ``#`` starts a comment and
no section header is needed. Keys are the :class:`PipelineConfig` field
names. Values given on the command line override the file.
"""
from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, fields, replace

from .drt import DrtConfig
from .errors import ConfigurationError

INDUCTANCE_MODES = ("subtract_rl", "subtract_l", "truncate")
TREND_KINDS = ("linear", "quadratic", "auto", "lookup")


@dataclass(frozen=True)
class PipelineConfig:
    """Every stage setting with its default.

    lam                   Tikhonov weight, a number or ``"lcurve"`` (default 1e-5)
    points_per_decade     tau-grid density (10)
    extension_decades     grid extension below/above the measured range, decades ((2, 2))
    fwhm_coefficient      RBF width rule: FWHM = coefficient x grid spacing (0.5)
    kk_threshold          KK gate on max |residual| relative to |Z| (0.01)
    kk_elements_per_decade  RC density of the KK test model (7)
    inductance_mode       subtract_rl, subtract_l or truncate (subtract_rl, the R||L correction)
    inductance_window     "full" (whole-spectrum separation) or "auto" (high-frequency window) ("full")
    peak_count            Gaussian count: an integer, "detected" or "auto" ("detected")
    diffusion_model       "comb" (full Warburg comb) or "gaussian" ("comb")
    prominence            peak detection prominence as a fraction of max gamma (0.02)
    ladder_size           Warburg ladder branches (5)
    trend_*               trend kind per parameter role
    smoothing_window      OCV smoothing window as a SoC fraction (0.01)
    cap_factor            dQ/dV cap relative to the 99th percentile (10)
    timestep              simulation step in seconds (1)
    refresh_every         parameter refresh period in steps (1)
    voltage_interval      RMSE percentage reference in volts (1.2)
    """

    lam: float | str = 1e-5
    points_per_decade: int = 10
    extension_decades: tuple = (2.0, 2.0)
    fwhm_coefficient: float = 0.5
    kk_threshold: float = 0.01
    kk_elements_per_decade: int = 7
    inductance_mode: str = "subtract_rl"
    inductance_window: str = "full"
    peak_count: int | str = "detected"
    diffusion_model: str = "comb"
    prominence: float = 0.02
    ladder_size: int = 5
    trend_ohmic: str = "linear"
    trend_resistance: str = "auto"
    trend_capacitance: str = "auto"
    trend_diffusion: str = "quadratic"
    smoothing_window: float = 0.01
    cap_factor: float = 10.0
    timestep: float = 1.0
    refresh_every: int = 1
    voltage_interval: float = 1.2

    def __post_init__(self):
        if isinstance(self.lam, str) and self.lam != "lcurve":
            raise ConfigurationError(f"lam must be a number or 'lcurve', got {self.lam!r}")
        if not isinstance(self.lam, str) and not self.lam > 0:
            raise ConfigurationError("lam must be positive")
        if self.inductance_mode not in INDUCTANCE_MODES:
            raise ConfigurationError(f"inductance_mode must be one of {INDUCTANCE_MODES}")
        if self.inductance_window not in ("full", "auto"):
            raise ConfigurationError("inductance_window must be 'full' or 'auto'")
        if self.diffusion_model not in ("comb", "gaussian"):
            raise ConfigurationError("diffusion_model must be 'comb' or 'gaussian'")
        if isinstance(self.peak_count, str) and self.peak_count not in ("auto", "detected"):
            raise ConfigurationError("peak_count must be an integer, 'auto' or 'detected'")
        for role in ("ohmic", "resistance", "capacitance", "diffusion"):
            if getattr(self, f"trend_{role}") not in TREND_KINDS:
                raise ConfigurationError(f"trend_{role} must be one of {TREND_KINDS}")
        if self.points_per_decade < 1 or self.ladder_size < 1 or self.refresh_every < 1:
            raise ConfigurationError("points_per_decade, ladder_size and refresh_every must be >= 1")
        if not (self.timestep > 0 and self.voltage_interval > 0 and self.kk_threshold > 0):
            raise ConfigurationError("timestep, voltage_interval and kk_threshold must be positive")

    def drt_config(self, capacitance=None):
        return DrtConfig(
            lam=self.lam,
            points_per_decade=self.points_per_decade,
            extension=tuple(self.extension_decades),
            fwhm_coefficient=self.fwhm_coefficient,
            kk_threshold=self.kk_threshold,
            kk_elements_per_decade=self.kk_elements_per_decade,
            capacitance=capacitance,
        )

    def trend_kinds(self):
        return {r: getattr(self, f"trend_{r}") for r in ("ohmic", "resistance", "capacitance", "diffusion")}

    def snapshot(self):
        d = asdict(self)
        d["extension_decades"] = list(self.extension_decades)
        return d


def coerce_value(name, text):
    text = text.strip()
    try:
        if name == "lam":
            return text if text == "lcurve" else float(text)
        if name == "peak_count":
            return text if text in ("auto", "detected") else int(text)
        if name == "extension_decades":
            parts = [float(x) for x in text.replace(",", " ").split()]
            if len(parts) == 1:
                parts *= 2
            if len(parts) != 2:
                raise ValueError
            return tuple(parts)
        default = PipelineConfig.__dataclass_fields__[name].default
        if isinstance(default, bool):
            return text.lower() in ("1", "true", "yes")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        return text
    except ValueError:
        raise ConfigurationError(f"bad value for {name}: {text!r}") from None


def parse_config_text(text):
    """Parse flat ``key = value`` text into a dict of typed overrides."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string("[pipeline]\n" + text)
    except configparser.Error as exc:
        raise ConfigurationError(f"cannot parse config: {exc}") from None
    known = {f.name for f in fields(PipelineConfig)}
    out = {}
    for key, value in parser.items("pipeline"):
        if key not in known:
            raise ConfigurationError(f"unknown config key {key!r}")
        out[key] = coerce_value(key, value)
    return out


def load_config(path=None, overrides=None):
    """Defaults, then the file at ``path``, then non-None ``overrides``."""
    values = {}
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            values.update(parse_config_text(fh.read()))
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return replace(PipelineConfig(), **values)
