"""Build the optional compiled kernels.

The package works without them: ``atomreload.kernels`` falls back to the
numpy implementation when the extension is missing.
"""

import os
import sys

from setuptools import Extension, setup

CFLAGS = ["-O3", "-ffp-contract=off"]  # no -ffast-math: results must match the numpy fallback bit for bit


def extensions():
    if os.environ.get("ATOMRELOAD_NO_EXT"):
        return []
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:
        sys.stderr.write("Cython/numpy unavailable; skipping compiled kernels\n")
        return []
    ext = Extension(
        "atomreload._ckernels",
        ["src/atomreload/_ckernels.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=CFLAGS,
    )
    return cythonize(
        [ext],
        compiler_directives={
            "language_level": 3,
            "boundscheck": False,
            "wraparound": False,
            "initializedcheck": False,
            "cdivision": True,
        },
    )


setup(ext_modules=extensions())
