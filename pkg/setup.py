"""Build script: compiles the Cython packing kernel when a toolchain is available.

The compiled extension is optional.  If Cython or a C compiler is missing (or
TFMLAB_SKIP_EXT=1 is set) the package installs pure-Python only and the
simulator falls back to the interpreted kernel at import time.
"""

import os
import sys

from setuptools import setup
from setuptools.command.build_ext import build_ext
from setuptools.errors import CCompilerError, ExecError, PlatformError


def extensions():
    if os.environ.get("TFMLAB_SKIP_EXT") == "1":
        return []
    try:
        from Cython.Build import cythonize
    except ImportError:
        return []
    from setuptools import Extension

    ext = Extension(
        "tfmlab._packing_c",
        ["src/tfmlab/_packing_c.pyx"],
        # keep float arithmetic bit-identical with the pure-Python kernel
        extra_compile_args=["-O2", "-ffp-contract=off"],
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


class OptionalBuildExt(build_ext):
    """Skip the extension instead of failing the whole install."""

    def run(self):
        try:
            super().run()
        except (PlatformError, FileNotFoundError) as exc:
            self._warn(exc)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except (CCompilerError, ExecError, PlatformError, ValueError) as exc:
            self._warn(exc)

    @staticmethod
    def _warn(exc):
        print(f"WARNING: compiled kernel skipped ({exc}); "
              "tfmlab will use the pure-Python kernel", file=sys.stderr)


setup(ext_modules=extensions(), cmdclass={"build_ext": OptionalBuildExt})
