import os

import numpy as np
from setuptools import Extension, setup

extensions = []
if not os.environ.get("ADSNET_NO_EXT"):
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "adsnet.kernels._nearest",
                ["src/adsnet/kernels/_nearest.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=extensions)
