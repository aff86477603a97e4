"""Build script: compiles the optional Cython kernel extension.

The package works without the extension (a NumPy fallback is selected at
import time), so any failure here degrades to a pure-Python install.
"""

import numpy
from setuptools import setup

extensions = []
try:
    from Cython.Build import cythonize

    extensions = cythonize(
        "src/superfield/_kernels/_native.pyx",
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )
    for ext in extensions:
        ext.include_dirs.append(numpy.get_include())
except Exception as exc:  # pragma: no cover - build-env dependent
    import sys

    print(f"cython unavailable, building pure-python only: {exc}", file=sys.stderr)

setup(ext_modules=extensions)
