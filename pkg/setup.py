"""Build script: compiles the optional RK4 kernel extension.

If Cython or a C compiler is unavailable the package installs anyway and
falls back to the pure-Python kernels in obsmhe._kernels_py.
"""
from setuptools import setup

def _extensions():
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        return []
    ext = Extension(
        "obsmhe._kernels",
        sources=["src/obsmhe/_kernels.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize(
        [ext],
        compiler_directives={
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "language_level": "3",
        },
    )

setup(ext_modules=_extensions())
