"""Build script: compiles the optional Cython kernels.

The package works without the extension (a NumPy fallback is selected at
import time), so a failed compile only costs speed, never correctness.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "mbsent.kernels._fast",
                ["src/mbsent/kernels/_fast.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )
except Exception as exc:  # pragma: no cover - build-environment dependent
    print(f"mbsent: skipping Cython kernels ({exc}); NumPy fallback will be used")

setup(ext_modules=ext_modules)
