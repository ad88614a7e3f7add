"""Pure-numpy fallback for the trigonometric evaluation kernels.

Same contract as the compiled versions in ``_trig``: given a block of Fourier
coefficients ``coef[c, k]`` over a tensor-product wavenumber set and a list of
points, return ``Re sum_k coef[c, k] exp(i k . x)`` for every component and
point.  The contraction is done axis by axis with precomputed phase matrices;
points are processed in chunks to bound the size of intermediates.
"""

import numpy as np

_CHUNK = 512


def eval2(coef, k1, k2, pts, out):
    for lo in range(0, pts.shape[0], _CHUNK):
        sl = slice(lo, min(lo + _CHUNK, pts.shape[0]))
        ph1 = np.exp(1j * np.outer(pts[sl, 0], k1))
        ph2 = np.exp(1j * np.outer(pts[sl, 1], k2))
        t1 = np.tensordot(ph1, coef, axes=(1, 1))      # (m, c, n2)
        vals = np.einsum("mcb,mb->cm", t1, ph2)
        out[:, sl] = vals.real
    return out


def eval3(coef, k1, k2, k3, pts, out):
    for lo in range(0, pts.shape[0], _CHUNK):
        sl = slice(lo, min(lo + _CHUNK, pts.shape[0]))
        ph1 = np.exp(1j * np.outer(pts[sl, 0], k1))
        ph2 = np.exp(1j * np.outer(pts[sl, 1], k2))
        ph3 = np.exp(1j * np.outer(pts[sl, 2], k3))
        t1 = np.tensordot(ph1, coef, axes=(1, 1))      # (m, c, n2, n3)
        t2 = np.einsum("mcbg,mb->mcg", t1, ph2)
        vals = np.einsum("mcg,mg->cm", t2, ph3)
        out[:, sl] = vals.real
    return out
