"""Build the optional compiled kernels; the package works without them."""

import os

from setuptools import Extension, setup

SOURCE_BASE = os.path.join("src", "dnls_phase", "_kernels")

try:
    from Cython.Build import cythonize

    extensions = cythonize(
        [Extension("dnls_phase._kernels", [SOURCE_BASE + ".pyx"], extra_compile_args=["-O3", "-ffp-contract=off"])],
        compiler_directives={"language_level": 3},
    )
except ImportError:
    if os.path.exists(SOURCE_BASE + ".c"):
        extensions = [Extension("dnls_phase._kernels", [SOURCE_BASE + ".c"], extra_compile_args=["-O3", "-ffp-contract=off"])]
    else:
        extensions = []

setup(ext_modules=extensions)
