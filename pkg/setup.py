"""Build script.

The only compiled piece is ``pglab._kernels._trig``, a small Cython extension
for off-grid trigonometric sums (used when evaluating velocity fields at
Lagrangian particle positions).  The package is fully functional without it --
``pglab._kernels`` falls back to a vectorized numpy implementation -- so the
extension is marked optional and any build failure degrades to the fallback.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "pglab._kernels._trig",
                sources=["src/pglab/_kernels/_trig.pyx"],
                optional=True,
            )
        ],
        language_level=3,
    )
except ImportError:
    # No Cython available: install with the pure-numpy kernel only.
    pass

setup(ext_modules=ext_modules)
