import numpy as np
from setuptools import setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        "src/palskit/_simcore.pyx",
        compiler_directives={"language_level": "3", "boundscheck": False,
                             "wraparound": False, "cdivision": True},
    )
except ImportError:
    # No Cython: the pure-Python loop in palskit._simloop is used instead.
    ext_modules = []

setup(ext_modules=ext_modules, include_dirs=[np.get_include()])
