"""Build script for the optional compiled kernel.

Set ``VORTEXFLOW_NO_EXT=1`` to skip the extension; the package then runs on
the numpy fallback in ``vortexflow._pykernels``.
"""
import os

from setuptools import setup


def extensions():
    if os.environ.get("VORTEXFLOW_NO_EXT"):
        return []
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:
        return []
    from setuptools import Extension

    ext = Extension(
        "vortexflow._ckernels",
        ["src/vortexflow/_ckernels.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
    return cythonize(
        [ext],
        compiler_directives={"language_level": "3", "boundscheck": False, "wraparound": False},
    )


setup(ext_modules=extensions())
