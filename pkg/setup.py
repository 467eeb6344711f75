"""Builds the optional compiled fast path.

The package works without the extension (numpy fallback); the extension
speeds up the per-tick inference inside simulation episodes.
"""
from setuptools import Extension, setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "cfnsync._kernels._fastpath",
                ["src/cfnsync/_kernels/_fastpath.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3", "-march=native", "-funroll-loops", "-ffast-math"],
            )
        ],
        language_level="3",
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
