import os

import numpy as np
from setuptools import Extension, setup

ext_modules = []
if os.environ.get("MGAN_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from Cython.Build import cythonize
    except ImportError:  # fall back to the NumPy kernels at runtime
        pass
    else:
        ext_modules = cythonize(
            [Extension("mgan._kernels", ["src/mgan/_kernels.pyx"],
                       include_dirs=[np.get_include()],
                       extra_compile_args=["-O3"])],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
