import os

from setuptools import Extension, setup

# The compiled kernel core is optional: without it the package falls back to
# the pure-Python kernels in factorweights.kernels._pykern.  Set
# FACTORWEIGHTS_NO_EXT=1 to force a pure-Python install.
ext_modules = []
if not os.environ.get("FACTORWEIGHTS_NO_EXT"):
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "factorweights.kernels._ckern",
                    ["src/factorweights/kernels/_ckern.pyx"],
                    # -ffp-contract=off keeps results bit-identical to the
                    # pure-Python backend (no FMA contraction).
                    extra_compile_args=["-O3", "-ffp-contract=off"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
