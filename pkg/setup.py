from setuptools import Extension, setup

# The compiled kernel is an optional speedup: if Cython or a C compiler is
# missing, the install still succeeds and the package falls back to the
# pure-numpy kernels at import time.
try:
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "sobolev_forge.kernels._core_c",
                ["src/sobolev_forge/kernels/_core_c.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except Exception:
    extensions = []

setup(ext_modules=extensions)
