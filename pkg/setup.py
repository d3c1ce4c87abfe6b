"""Build script for the optional compiled attention kernels.

The package is fully functional without the extension (a numpy fallback is
selected at import time); building it just makes the segment-correlation
inner loops available as tight C loops for benchmarking.
"""

import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

if cythonize is not None:
    extensions = cythonize(
        [
            Extension(
                "preformer.backends._sckern",
                ["src/preformer/backends/_sckern.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        language_level="3",
    )
else:
    extensions = []

setup(ext_modules=extensions)
