"""Build the optional compiled flow kernel.

The package works without it (a pure numpy fallback is selected at import);
building the extension just makes Median Flow tracking faster.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "datkit.trackers._flow_cy",
                ["src/datkit/trackers/_flow_cy.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level="3",
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
