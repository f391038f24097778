import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # numpy fallback only
    cythonize = None

ext_modules = []
if cythonize is not None and not os.environ.get("TDRESERVOIR_NO_EXT"):
    ext = Extension(
        "tdreservoir._kernel",
        ["src/tdreservoir/_kernel.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3", "-ffp-contract=off", "-fopenmp"],
        extra_link_args=["-fopenmp"],
    )
    ext_modules = cythonize([ext], language_level=3)

setup(ext_modules=ext_modules)
