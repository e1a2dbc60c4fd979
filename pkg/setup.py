"""Builds the optional Cython kernel extension.

If Cython or a C compiler is unavailable the package installs without it and
``llmo.kernels`` falls back to the numpy implementation.
"""

import os

from setuptools import setup

ext_modules = []
if os.environ.get("LLMO_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "llmo._kernels",
                    ["src/llmo/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except Exception as exc:  # pragma: no cover - build environment dependent
        print(f"warning: skipping Cython kernels ({exc})")
        ext_modules = []

setup(ext_modules=ext_modules)
