"""Build script for the optional compiled inference kernel.

The package works without the extension (a NumPy fallback is selected at
import time), so the build is marked optional and a failed compile only
costs speed.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

if cythonize is not None:
    ext_modules = cythonize(
        [
            Extension(
                "topicdistill._kernels._core",
                ["src/topicdistill/_kernels/_core.pyx"],
                extra_compile_args=["-O3"],
                optional=True,
            )
        ],
        language_level=3,
    )
else:
    ext_modules = []

setup(ext_modules=ext_modules)
