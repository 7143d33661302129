"""Build script for the compiled kernel extension.

The extension is optional: if compilation fails the package still installs
and falls back to the pure numpy kernels at import time.
"""

import logging

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext

log = logging.getLogger("artaug.setup")


class OptionalBuildExt(build_ext):
    """Build the extension if possible, warn and continue otherwise."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing, etc.
            log.warning("compiled kernels unavailable, using pure fallback: %s", exc)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            log.warning("failed to build %s, using pure fallback: %s", ext.name, exc)


def _extensions():
    try:
        import numpy
        from Cython.Build import cythonize
    except ImportError as exc:
        log.warning("Cython/numpy not available at build time: %s", exc)
        return []
    ext = Extension(
        "artaug._kernels._core",
        ["src/artaug/_kernels/_core.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize([ext], language_level="3")


setup(ext_modules=_extensions(), cmdclass={"build_ext": OptionalBuildExt})
