"""Simple SVG line charts for ``--plot``. Needs matplotlib (the ``plot`` extra)."""
from __future__ import annotations

import numpy as np

from .errors import PipelineError


def _pyplot():
    try:
        import matplotlib
    except ImportError:
        raise PipelineError("--plot needs matplotlib; install the 'plot' extra") from None
    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "drtecm"
    import matplotlib.pyplot as plt

    return plt


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    import matplotlib.pyplot as plt

    plt.close(fig)
    return path


def plot_drt(results, labels, path):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(7, 4))
    for r, label in zip(results, labels):
        ax.plot(np.log10(r.tau), r.gamma, lw=1, label=label)
    ax.set_xlabel("log10 tau / s")
    ax.set_ylabel("gamma / ohm")
    if len(results) <= 10:
        ax.legend(fontsize=6)
    return _save(fig, path)


def plot_nyquist(spectra, path):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    for s in spectra:
        ax.plot(s.z_real * 1e3, -s.z_imag * 1e3, ".-", lw=0.8, ms=2)
    ax.set_xlabel("Re Z / mohm")
    ax.set_ylabel("-Im Z / mohm")
    ax.set_aspect("equal", adjustable="datalim")
    return _save(fig, path)


def plot_kk(spectra, reports, path):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(7, 4))
    for s, r in zip(spectra, reports):
        ax.semilogx(s.frequency, np.maximum(np.abs(r.residual_real), np.abs(r.residual_imag)) * 100, lw=0.8)
    ax.set_xlabel("f / Hz")
    ax.set_ylabel("max |KK residual| / %")
    return _save(fig, path)


def plot_voltage(time, voltage, path, reference=None):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(np.asarray(time) / 3600, voltage, lw=1, label="simulated")
    if reference is not None:
        ax.plot(np.asarray(reference[0]) / 3600, reference[1], lw=1, ls="--", label="reference")
        ax.legend()
    ax.set_xlabel("t / h")
    ax.set_ylabel("V / V")
    return _save(fig, path)
