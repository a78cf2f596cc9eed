"""Build the optional Cython kernel.

The extension is optional: if Cython or a C compiler is missing the package
installs without it and ``wedas.kernels`` falls back to pure Python.
"""
import os

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # pragma: no cover - toolchain dependent
            print(f"warning: skipping compiled kernels ({exc})")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # pragma: no cover - toolchain dependent
            print(f"warning: failed to build {ext.name} ({exc})")


def _extensions():
    if os.environ.get("WEDAS_NO_EXT"):
        return []
    try:
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "wedas._lev",
        ["src/wedas/_lev.pyx"],
        extra_compile_args=["-O3"],
    )
    return cythonize(
        [ext],
        compiler_directives={"language_level": "3", "boundscheck": False, "wraparound": False},
    )


setup(ext_modules=_extensions(), cmdclass={"build_ext": OptionalBuildExt})
