"""Build the optional Cython kernels.

The package works without them: ``fairretrieval._accel`` falls back to the
pure-Python implementations when the extension is missing. Set
``FAIRRETRIEVAL_NO_EXT=1`` to skip compilation entirely.
"""
import os

from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("FAIRRETRIEVAL_NO_EXT"):
    try:
        from Cython.Build import cythonize
    except ImportError:
        cythonize = None
    if cythonize is not None:
        ext_modules = cythonize(
            [
                Extension(
                    "fairretrieval._speedups",
                    ["src/fairretrieval/_speedups.pyx"],
                    # no FMA contraction: scores must match the Python path bit for bit
                    extra_compile_args=["-O2", "-ffp-contract=off"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
