"""Build the optional compiled LSTM kernel.

Without Cython or a C compiler the package still installs and falls back to
the numpy implementation at import time.
"""

from setuptools import setup

ext_modules = []
try:
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "sentipanel._lstm_ext",
                ["src/sentipanel/_lstm_ext.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
