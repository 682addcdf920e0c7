"""Build script for the compiled kernel extension.

The extension is optional: when Cython or a C compiler is unavailable the
install completes and the package falls back to the pure-numpy kernels.
"""

from setuptools import setup
from setuptools.extension import Extension

try:
    import numpy
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "gesim._core._native",
                ["src/gesim/_core/_native.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
                optional=True,
            )
        ],
        language_level="3",
    )
except ImportError:
    extensions = []

setup(ext_modules=extensions)
