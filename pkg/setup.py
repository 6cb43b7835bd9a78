"""Build hook for the optional compiled checker kernel.

The package is fully functional without the extension (a pure-Python
kernel is selected at import time); compiling it speeds the constraint
checker up by roughly an order of magnitude.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [Extension("zkgrid._kernel", ["src/zkgrid/_kernel.pyx"])],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
