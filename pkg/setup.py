import numpy as np
from setuptools import Extension, setup
from Cython.Build import cythonize

ext_modules = cythonize(
    [
        Extension(
            "msacm._filter_core",
            ["src/msacm/_filter_core.pyx"],
            include_dirs=[np.get_include()],
        )
    ],
    language_level=3,
)

setup(ext_modules=ext_modules)
