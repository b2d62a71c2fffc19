import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
    ext_modules = cythonize(
        [Extension(
            "cfmimo._socext",
            ["src/cfmimo/_socext.pyx"],
            include_dirs=[numpy.get_include()],
            extra_compile_args=["-O3"],
            define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            optional=True,
        )],
        language_level=3,
    )
except ImportError:
    ext_modules = []  # pure-numpy fallback is selected at import

setup(ext_modules=ext_modules)
