"""Build script for the optional compiled kernel core.

The package installs and runs without a compiler: every kernel has a pure
numpy fallback selected at import time. When Cython and a C toolchain are
present, the compiled core is built and picked up automatically.
"""

from setuptools import setup

ext_modules = []
try:
    import numpy
    from setuptools.extension import Extension
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "nsdehaze._kernels._core",
                sources=["src/nsdehaze/_kernels/_core.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
