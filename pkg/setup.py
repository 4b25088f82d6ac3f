from setuptools import Extension, setup

ext_modules = []
try:
    from Cython.Build import cythonize
except ImportError:  # pure-Python install; rfrisk falls back to numpy kernels
    cythonize = None

if cythonize is not None:
    ext_modules = cythonize(
        [Extension("rfrisk._csums", ["src/rfrisk/_csums.pyx"],
                   extra_compile_args=["-O3"], optional=True)],
        language_level=3,
    )

setup(ext_modules=ext_modules)
