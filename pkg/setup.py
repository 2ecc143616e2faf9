from setuptools import setup, Extension

import numpy as np

try:
    from Cython.Build import cythonize
except ImportError:
    # Source checkout without Cython: the pure-python kernel is used instead.
    ext_modules = []
else:
    extensions = [
        Extension(
            "rotorengine.kernels._sde_cy",
            ["src/rotorengine/kernels/_sde_cy.pyx"],
            include_dirs=[np.get_include()],
            # fp-contract off: results must be bitwise identical to the
            # pure-python kernel (determinism contract), so no FMA fusing.
            extra_compile_args=["-O3", "-ffp-contract=off"],
            define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        )
    ]
    ext_modules = cythonize(extensions, language_level=3)

setup(ext_modules=ext_modules)
