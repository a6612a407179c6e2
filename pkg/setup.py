"""Optional compiled kernels; the package falls back to NumPy when the build is unavailable."""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("RKGFEM_NO_EXT", "") in ("", "0"):
    try:
        import numpy
        from Cython.Build import cythonize

        ext_modules = cythonize(
            "src/rkgfem/_kernels.pyx",
            compiler_directives={"language_level": 3},
            quiet=True,
        )
        for ext in ext_modules:
            ext.include_dirs.append(numpy.get_include())
            ext.define_macros.append(("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION"))
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
