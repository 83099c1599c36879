"""Build script: compiles the state-space kernel when Cython is available.

Without Cython (or a C compiler) the package installs pure-Python and
``drtecm.kernels`` falls back to ``drtecm._statespace_py``.
"""
import os

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    USE_CYTHON = os.environ.get("DRTECM_NO_EXT") is None
except ImportError:
    USE_CYTHON = False

ext_modules = []
if USE_CYTHON:
    ext_modules = cythonize(
        [Extension("drtecm._statespace", ["src/drtecm/_statespace.pyx"])],
        compiler_directives={"language_level": "3", "boundscheck": False, "wraparound": False, "cdivision": True},
    )

setup(ext_modules=ext_modules)
