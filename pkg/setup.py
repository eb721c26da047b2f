"""Build the optional Cython core.

The package works without it: ``rivercontrol._kernels`` falls back to the
numpy implementations when ``rivercontrol._core`` cannot be imported.
"""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("RIVERCONTROL_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "rivercontrol._core",
                    ["src/rivercontrol/_core.pyx"],
                    include_dirs=[np.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
