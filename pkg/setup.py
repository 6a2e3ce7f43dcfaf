"""Build script: compiles the optional Cython kernel core.

The package works without the extension (pure-numpy fallback selected at
import time); building it just makes the hot loops faster.
"""

import os

from setuptools import setup

ext_modules = []
_pyx = os.path.join("src", "onfire", "_fastops.pyx")
try:
    import numpy
    from Cython.Build import cythonize

    if os.path.exists(_pyx):
        ext_modules = cythonize(
            _pyx, compiler_directives={"language_level": "3"})
        for ext in ext_modules:
            ext.include_dirs.append(numpy.get_include())
            ext.define_macros.append(("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION"))
except ImportError:
    # No Cython/numpy at build time: ship pure-Python only.
    ext_modules = []

setup(ext_modules=ext_modules)
