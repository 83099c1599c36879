"""Kernel selection: compiled ``_statespace`` when importable, else the pure-Python twin.

Set ``DRTECM_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _statespace_py

IMPLEMENTATION = "python"
run = _statespace_py.run

if not os.environ.get("DRTECM_PURE_PYTHON"):
    try:
        from . import _statespace

        run = _statespace.run
        IMPLEMENTATION = "cython"
    except ImportError:  # extension not built
        pass


def get(name=None):
    """Return the ``run`` function of a named implementation (``"cython"`` or ``"python"``)."""
    if name in (None, IMPLEMENTATION):
        return run
    if name == "python":
        return _statespace_py.run
    if name == "cython":
        from . import _statespace

        return _statespace.run
    raise ValueError(f"unknown kernel {name!r}")
