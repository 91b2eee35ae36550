"""Build script.

The RK4 integrator has a Cython implementation that is compiled when Cython
and a C compiler are available; otherwise the pure-NumPy fallback is used at
runtime. Set ECGDENOISE_NO_EXTENSION=1 to skip the extension build entirely.
"""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("ECGDENOISE_NO_EXTENSION") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "ecgdenoise._kernels._mcsharry_cy",
                    ["src/ecgdenoise/_kernels/_mcsharry_cy.pyx"],
                    include_dirs=[np.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
