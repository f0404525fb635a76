"""Builds the optional compiled kernel extension.

The package works without it (a numpy fallback is selected at import time),
so a failed extension build only costs speed, not functionality.
"""
import numpy
from setuptools import Extension, setup
from Cython.Build import cythonize

extensions = [
    Extension(
        "simcf.kernels._core",
        ["src/simcf/kernels/_core.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
]

setup(ext_modules=cythonize(extensions, language_level=3))
