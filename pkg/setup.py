import os

from setuptools import setup

ext_modules = []
if not os.environ.get("TARD_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "tard._core._ckernels",
                    ["src/tard/_core/_ckernels.pyx"],
                    include_dirs=[np.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        # numpy fallback in tard._core._pykernels is used instead
        ext_modules = []

setup(ext_modules=ext_modules)
