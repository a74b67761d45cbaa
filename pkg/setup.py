"""Build script: compiles the optional Cython kernel core.

The package is fully functional without the extension (a numpy fallback
is selected at import time), so any build failure here is non-fatal for
pure-Python installs: run `QIPFSEG_SKIP_EXT=1 pip install ...`.
"""

import os

from setuptools import setup

ext_modules = []
if not os.environ.get("QIPFSEG_SKIP_EXT"):
    import numpy as np
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "qipfseg.kernels._core",
                ["src/qipfseg/kernels/_core.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
