"""Build shim for the optional compiled evaluation kernel.

The package is pure Python except for obnn._evalcore, a small Cython
extension accelerating plaintext circuit evaluation.  The extension is
marked optional: when Cython or a C compiler is missing the install still
succeeds and obnn falls back to the interpreted kernel at import time.
"""

from setuptools import setup

ext_modules = []
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        ["src/obnn/_evalcore.pyx"],
        language_level=3,
    )
    for ext in ext_modules:
        ext.optional = True
except ImportError:
    pass

setup(ext_modules=ext_modules)
