import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pure-Python install; the forest falls back to numpy
    cythonize = None

extensions = []
if cythonize is not None and not os.environ.get("STREAMQOE_NO_EXT"):
    extensions = cythonize(
        [
            Extension(
                "streamqoe.learner._forest_core",
                ["src/streamqoe/learner/_forest_core.pyx"],
                include_dirs=[np.get_include()],
                language="c++",
                # no FMA contraction: the kernel must match the numpy fallback bit-for-bit
                extra_compile_args=["-O3", "-ffp-contract=off"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=extensions)
