"""Build script: compiles the optional distance-kernel extension.

The package works without the extension (pure numpy fallback is selected at
import time), so any build failure here degrades to a source-only install.
Set ATTRSEARCH_SKIP_EXT=1 to skip the compile step explicitly.
"""

import os

from setuptools import setup


def _extensions():
    if os.environ.get("ATTRSEARCH_SKIP_EXT") == "1":
        return []
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        return []
    ext = Extension(
        "attrsearch.kernels._ckernels",
        sources=["src/attrsearch/kernels/_ckernels.pyx"],
        include_dirs=[numpy.get_include()],
        extra_compile_args=["-O3"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


setup(ext_modules=_extensions())
