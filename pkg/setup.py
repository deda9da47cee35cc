import os

from setuptools import Extension, setup

# The compiled kernels are optional: the package falls back to the pure
# numpy implementations when the extension is absent (EQALLOC_NO_EXT=1
# skips the build entirely).
ext_modules = []
if os.environ.get("EQALLOC_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "eqalloc._kernels._ckernels",
                    ["src/eqalloc/_kernels/_ckernels.pyx"],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
