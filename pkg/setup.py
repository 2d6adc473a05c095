from setuptools import Extension, setup

import numpy as np

try:
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "histsum.kernels._speedups",
                ["src/histsum/kernels/_speedups.pyx"],
                include_dirs=[np.get_include()],
                optional=True,
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
