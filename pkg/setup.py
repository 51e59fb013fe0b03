"""Build script for the optional compiled kernel extension.

The package is fully functional without the extension (a numpy fallback is
selected at import time), so compilation failures are downgraded to warnings.
FP contraction is disabled so the compiled kernels produce bit-identical
results to the pure backend.
"""

import sys

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext

try:
    import numpy
    from Cython.Build import cythonize
except ImportError:
    numpy = None
    cythonize = None


class OptionalBuildExt(build_ext):
    """Skip the extension instead of failing the whole install."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # pragma: no cover - toolchain dependent
            print(f"warning: skipping compiled kernels ({exc})", file=sys.stderr)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # pragma: no cover - toolchain dependent
            print(f"warning: could not build {ext.name} ({exc}); "
                  "the pure-python kernels will be used", file=sys.stderr)


if cythonize is not None and numpy is not None:
    extensions = cythonize(
        [
            Extension(
                "amtamper._kernels._core",
                ["src/amtamper/_kernels/_core.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3", "-ffp-contract=off"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level="3",
    )
else:  # pragma: no cover - build environment without Cython
    extensions = []

setup(ext_modules=extensions, cmdclass={"build_ext": OptionalBuildExt})
