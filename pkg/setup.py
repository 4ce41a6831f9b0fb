from setuptools import setup, Extension

# The compiled kernel is optional: when Cython (or a C toolchain) is missing
# the package falls back to the numpy implementation in dysec._kernels_py.
try:
    from Cython.Build import cythonize
    import numpy as np

    ext_modules = cythonize(
        [
            Extension(
                "dysec._kernels",
                ["src/dysec/_kernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
