"""Builds the compiled packing kernels.

The package works without the extension (a numpy fallback is selected at
import time), so a failed build is not fatal for development installs:
run ``pip install -e . --no-build-isolation`` and check
``liquiform.backend.backend_name()``.
"""

import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "liquiform._kernels",
        sources=["src/liquiform/_kernels.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
]

setup(ext_modules=cythonize(extensions, language_level=3))
