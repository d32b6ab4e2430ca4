"""Optional compiled kernels; the package works without them."""

import os

from setuptools import setup

ext_modules = []
if not os.environ.get("BRDFGRAD_NO_EXT"):
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension

        exts = [Extension(f"brdfgrad.{name}", [f"src/brdfgrad/{name}.pyx"],
                          include_dirs=[numpy.get_include()],
                          extra_compile_args=["-O3"])
                for name in ("_kernels", "_bvh") if os.path.exists(f"src/brdfgrad/{name}.pyx")]
        ext_modules = cythonize(exts, language_level=3, quiet=True)
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
