"""Point-evaluation kernels: vectorized numpy default, optional compiled path.

``evaluate_modes`` computes trigonometric sums of Fourier modes at arbitrary
(off-grid) points.  Two interchangeable implementations exist: the numpy one
built on BLAS-backed tensor contractions, and a Cython extension with scalar
loops.  Benchmarks (``benchmarks/bench_interp.py``) show the BLAS path is the
faster of the two at every size we care about, so it is the default; set
``PGLAB_KERNEL=cython`` to force the compiled kernel (when built), or
``PGLAB_KERNEL=numpy`` to pin the fallback.  ``BACKEND`` records the active
choice, and the test suite asserts both agree to machine precision.
"""

import os

import numpy as np

from . import reference

try:  # pragma: no cover - depends on whether the extension was built
    from . import _trig as _compiled
except ImportError:  # pragma: no cover
    _compiled = None

_choice = os.environ.get("PGLAB_KERNEL", "numpy")
if _choice == "cython" and _compiled is not None:
    _impl = _compiled
    BACKEND = "cython"
else:
    _impl = reference
    BACKEND = "numpy"
COMPILED_AVAILABLE = _compiled is not None


def evaluate_modes(coef, k_axes, pts, impl=None):
    """Evaluate ``Re sum_k coef[c, k] exp(i k.x)`` at each point.

    Parameters
    ----------
    coef : complex array, shape (ncomp, n1, ..., nd)
        Fourier coefficients over the tensor-product wavenumber set, already
        carrying any normalization factors.
    k_axes : sequence of d float arrays
        Physical wavenumbers along each axis (lengths n1 ... nd).
    pts : float array, shape (npts, d)
        Evaluation points.
    impl : module, optional
        Force a specific backend (used by benchmarks/tests).

    Returns
    -------
    float array, shape (ncomp, npts)
    """
    if impl is None:
        impl = _impl
    coef = np.ascontiguousarray(coef, dtype=np.complex128)
    pts = np.ascontiguousarray(pts, dtype=np.float64)
    dim = len(k_axes)
    if coef.ndim != dim + 1:
        raise ValueError(
            f"coefficient block has {coef.ndim - 1} axes, expected {dim}"
        )
    if pts.ndim != 2 or pts.shape[1] != dim:
        raise ValueError(f"points must have shape (npts, {dim})")
    ks = [np.ascontiguousarray(k, dtype=np.float64) for k in k_axes]
    out = np.empty((coef.shape[0], pts.shape[0]), dtype=np.float64)
    if dim == 2:
        impl.eval2(coef, ks[0], ks[1], pts, out)
    elif dim == 3:
        impl.eval3(coef, ks[0], ks[1], ks[2], pts, out)
    else:
        raise ValueError(f"unsupported dimension {dim}")
    return out
