"""Build script: compiles the optional Cython kernel extension.

The package works without the extension (adep.engine.kernels falls back to
the numpy backend); set ADEP_SKIP_EXT=1 to skip compilation entirely.
"""

import os

from setuptools import Extension, setup


def extensions():
    if os.environ.get("ADEP_SKIP_EXT"):
        return []
    try:
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "adep.engine._kernels",
        sources=["src/adep/engine/_kernels.pyx"],
        extra_compile_args=["-O3"],
    )
    return cythonize([ext], language_level=3)


setup(ext_modules=extensions())
