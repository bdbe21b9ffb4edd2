"""Build hook: compile the optional Cython kernels, fall back to pure Python.

The package works without the extension; antroute.kernels selects the
compiled implementation when present and the reference one otherwise.
"""

from setuptools import setup

ext_modules = []
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        ["src/antroute/kernels/_fast.pyx"],
        language_level=3,
    )
except Exception as exc:  # no Cython / no compiler: install pure-Python only
    print(f"antroute: skipping compiled kernels ({exc!r})")

setup(ext_modules=ext_modules)
