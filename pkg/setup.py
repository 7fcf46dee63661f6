import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "voxadapt.kernels._speedups",
                ["src/voxadapt/kernels/_speedups.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    # No Cython: install the pure-numpy package, kernels fall back at import.
    ext_modules = []

setup(ext_modules=ext_modules)
