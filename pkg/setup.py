import numpy
from setuptools import setup

# The convolution kernels compile to a C extension when Cython is available.
# The package falls back to the NumPy implementation at import time if the
# extension was never built, so a plain `pip install` without Cython works.
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        ["src/divsynth/kernels/_convkernels.pyx"],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules, include_dirs=[numpy.get_include()])
