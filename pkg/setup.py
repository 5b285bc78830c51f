"""Build the optional Cython kernels.

The package works without them: ``pulsefilter._backend`` falls back to the
NumPy implementations when the extension cannot be imported.
"""
import os

import numpy as np
from setuptools import Extension, setup

ext_modules = []
if os.environ.get("PULSEFILTER_NO_EXT", "") != "1":
    try:
        from Cython.Build import cythonize
    except ImportError:  # pragma: no cover - build without Cython
        cythonize = None
    if cythonize is not None:
        ext_modules = cythonize(
            [
                Extension(
                    "pulsefilter._ckernels",
                    ["src/pulsefilter/_ckernels.pyx"],
                    include_dirs=[np.get_include()],
                    # plain complex arithmetic: skip the C99 inf/nan recovery in complex multiply
                    extra_compile_args=["-O3", "-fcx-limited-range"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={
                "language_level": "3",
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
                "initializedcheck": False,
            },
        )

setup(ext_modules=ext_modules)
