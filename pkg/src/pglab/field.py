"""Periodic-torus grids, sampled fields, and spectral operators.

Everything downstream (norms, Besov blocks, heat solves, the coupled solver)
works on `Field` objects: real-valued functions sampled on a uniform N^d grid
over [0, L)^d with d = 2 or 3.  Differentiation is spectral (exact on resolved
modes), quadrature is the uniform-grid rule (spectrally accurate for periodic
functions), and nonlinear products are expected to be followed by the 2/3-rule
dealiasing mask.

Per-torus spectral machinery (wavenumber arrays, dealiasing masks, Parseval
weights for the half-spectrum layout) is cached in a small synchronized
registry keyed by (dim, N, L).
"""

from __future__ import annotations

import struct
import threading
from dataclasses import dataclass

import numpy as np
from scipy import fft as sfft

PGLF_MAGIC = b"PGLF"
PGLF_VERSION = 1
_HEADER = struct.Struct("<4sIIIdI")


class FieldError(ValueError):
    """Invalid field data (non-finite values, shape/torus mismatch...)."""


@dataclass(frozen=True)
class Torus:
    """Periodic box [0, L)^dim discretized with N points per axis."""

    dim: int
    side_length: float
    points_per_axis: int

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise FieldError(f"dim must be 2 or 3, got {self.dim}")
        N = self.points_per_axis
        if N < 8 or (N & (N - 1)) != 0:
            raise FieldError(f"points_per_axis must be a power of two >= 8, got {N}")
        if not (self.side_length > 0):
            raise FieldError(f"side_length must be positive, got {self.side_length}")

    @property
    def h(self) -> float:
        return self.side_length / self.points_per_axis

    @property
    def shape(self) -> tuple:
        return (self.points_per_axis,) * self.dim

    @property
    def npoints(self) -> int:
        return self.points_per_axis**self.dim

    @property
    def volume(self) -> float:
        return self.side_length**self.dim

    @property
    def cell_volume(self) -> float:
        return self.h**self.dim

    def axis_points(self) -> np.ndarray:
        return np.arange(self.points_per_axis) * self.h

    def grid(self) -> np.ndarray:
        """Coordinate arrays, shape (dim, N, ..., N)."""
        x = self.axis_points()
        return np.array(np.meshgrid(*([x] * self.dim), indexing="ij"))


class _Plan:
    """Cached spectral data for one torus (half-spectrum rfftn layout)."""

    def __init__(self, torus: Torus):
        d, N, L = torus.dim, torus.points_per_axis, torus.side_length
        scale = 2.0 * np.pi / L
        kint_full = np.fft.fftfreq(N, 1.0 / N)
        kint_half = np.arange(N // 2 + 1, dtype=np.float64)
        self.kint_axes = [kint_full] * (d - 1) + [kint_half]
        self.rshape = (N,) * (d - 1) + (N // 2 + 1,)

        def _bcast(a, axis):
            sh = [1] * d
            sh[axis] = len(a)
            return a.reshape(sh)

        self.k = [scale * _bcast(a, i) for i, a in enumerate(self.kint_axes)]
        self.k2 = sum(ki**2 for ki in self.k)
        self.kmag = np.sqrt(self.k2)
        # Integer-mode magnitude, used for band limits independent of L.
        self.kint_mag = np.sqrt(sum(_bcast(a, i) ** 2 for i, a in enumerate(self.kint_axes)))

        cut = N // 3
        keep = np.ones(self.rshape, dtype=bool)
        for i, a in enumerate(self.kint_axes):
            keep &= _bcast(np.abs(a) <= cut, i)
        self.dealias_mask = keep

        # Parseval weights: modes absent from the half spectrum count twice.
        w = np.full(N // 2 + 1, 2.0)
        w[0] = 1.0
        if N % 2 == 0:
            w[-1] = 1.0
        self.parseval_w = _bcast(w, d - 1)


_plans: dict = {}
_plans_lock = threading.Lock()


def spectral_plan(torus: Torus) -> _Plan:
    key = (torus.dim, torus.points_per_axis, torus.side_length)
    with _plans_lock:
        plan = _plans.get(key)
        if plan is None:
            plan = _Plan(torus)
            _plans[key] = plan
    return plan


class Field:
    """Real scalar/vector function on a torus grid.

    ``values`` has shape (ncomp, N, ..., N); scalars may be constructed from a
    bare (N, ..., N) array.  Fields are immutable by convention: operations
    return new instances, and the spectral representation (an rfftn over the
    spatial axes) is computed lazily and cached.
    """

    __slots__ = ("torus", "values", "_spec")

    def __init__(self, torus: Torus, values, _spec=None):
        values = np.asarray(values, dtype=np.float64)
        if values.ndim == torus.dim:
            values = values[np.newaxis]
        if values.ndim != torus.dim + 1 or values.shape[1:] != torus.shape:
            raise FieldError(
                f"values shape {values.shape} incompatible with torus grid {torus.shape}"
            )
        for c in range(values.shape[0]):
            if not np.all(np.isfinite(values[c])):
                raise FieldError(f"component {c} contains non-finite values")
        self.torus = torus
        self.values = values
        self._spec = _spec

    @property
    def ncomp(self) -> int:
        return self.values.shape[0]

    @property
    def spectral(self) -> np.ndarray:
        """Half-spectrum DFT of values, shape (ncomp, N, ..., N//2+1)."""
        if self._spec is None:
            self._spec = sfft.rfftn(self.values, axes=tuple(range(1, self.torus.dim + 1)))
        return self._spec

    @classmethod
    def from_spectral(cls, torus: Torus, spec) -> "Field":
        spec = np.asarray(spec, dtype=np.complex128)
        if spec.ndim == torus.dim:
            spec = spec[np.newaxis]
        axes = tuple(range(1, torus.dim + 1))
        values = sfft.irfftn(spec, s=torus.shape, axes=axes)
        return cls(torus, values, _spec=spec)

    def magnitude(self) -> np.ndarray:
        """Pointwise Euclidean magnitude across components."""
        if self.ncomp == 1:
            return np.abs(self.values[0])
        return np.sqrt(np.sum(self.values**2, axis=0))

    def component(self, i: int) -> "Field":
        return Field(self.torus, self.values[i])

    def means(self) -> np.ndarray:
        return self.values.reshape(self.ncomp, -1).mean(axis=1)

    def __add__(self, other):
        self._check_compatible(other)
        return Field(self.torus, self.values + other.values)

    def __sub__(self, other):
        self._check_compatible(other)
        return Field(self.torus, self.values - other.values)

    def __mul__(self, c):
        return Field(self.torus, self.values * float(c))

    __rmul__ = __mul__

    def _check_compatible(self, other):
        if not isinstance(other, Field) or other.torus != self.torus:
            raise FieldError("fields live on different tori")
        if other.ncomp != self.ncomp:
            raise FieldError(
                f"component mismatch: {self.ncomp} vs {other.ncomp}"
            )

    def __repr__(self):
        return (
            f"Field(dim={self.torus.dim}, N={self.torus.points_per_axis}, "
            f"ncomp={self.ncomp})"
        )


def _spatial_axes(torus):
    return tuple(range(1, torus.dim + 1))


def gradient(f: Field) -> Field:
    """Spectral gradient; for a c-component field returns the c*dim Jacobian.

    Output components are arranged component-major: entry i*dim + j holds
    the partial of component i along axis j.
    """
    plan = spectral_plan(f.torus)
    d = f.torus.dim
    spec = f.spectral
    out = np.empty((f.ncomp * d,) + plan.rshape, dtype=np.complex128)
    for i in range(f.ncomp):
        for j in range(d):
            out[i * d + j] = 1j * plan.k[j] * spec[i]
    return Field.from_spectral(f.torus, out)


def divergence(u: Field) -> Field:
    if u.ncomp != u.torus.dim:
        raise FieldError(f"divergence needs {u.torus.dim} components, got {u.ncomp}")
    plan = spectral_plan(u.torus)
    spec = u.spectral
    div = sum(1j * plan.k[j] * spec[j] for j in range(u.torus.dim))
    return Field.from_spectral(u.torus, div[np.newaxis])


def laplacian(f: Field) -> Field:
    plan = spectral_plan(f.torus)
    return Field.from_spectral(f.torus, -plan.k2 * f.spectral)


def dealias(f: Field) -> Field:
    """Project onto the 2/3-rule band (|k_i| <= N/3 per axis)."""
    plan = spectral_plan(f.torus)
    return Field.from_spectral(f.torus, f.spectral * plan.dealias_mask)


def lp_norm(f: Field, p: float) -> float:
    """Grid-quadrature L_p norm of the pointwise magnitude; p in [1, inf]."""
    if p != np.inf and not p >= 1:
        raise ValueError(f"p must be >= 1 or inf, got {p}")
    mag = f.magnitude()
    if p == np.inf:
        return float(mag.max())
    return float((f.torus.cell_volume * np.sum(mag**p)) ** (1.0 / p))


def helmholtz_spectral(torus: Torus, spec: np.ndarray):
    """Split a vector half-spectrum into (divergence-free, potential) parts.

    Q_hat = k (k . u_hat)/|k|^2 and P_hat = u_hat - Q_hat; the zero mode
    (where the projector is singular) is assigned to the P part.
    """
    plan = spectral_plan(torus)
    d = torus.dim
    if spec.shape[0] != d:
        raise FieldError(f"need {d} components, got {spec.shape[0]}")
    kdotu = sum(plan.k[j] * spec[j] for j in range(d))
    k2safe = np.where(plan.k2 > 0, plan.k2, 1.0)
    scale = np.where(plan.k2 > 0, kdotu / k2safe, 0.0)
    Q = np.stack([plan.k[j] * scale for j in range(d)])
    return spec - Q, Q


def random_band_limited(torus: Torus, rng, kmax: int, kmin: int = 1, ncomp: int = 1) -> Field:
    """Random real field with integer-mode magnitudes in [kmin, kmax].

    Built by band-masking white noise in spectral space, so a given generator
    state determines the field completely.  Values are rescaled to unit max
    magnitude.
    """
    plan = spectral_plan(torus)
    noise = rng.standard_normal((ncomp,) + torus.shape)
    spec = sfft.rfftn(noise, axes=tuple(range(1, torus.dim + 1)))
    band = (plan.kint_mag >= kmin) & (plan.kint_mag <= kmax) & plan.dealias_mask
    f = Field.from_spectral(torus, spec * band)
    top = f.magnitude().max()
    if top == 0:
        raise FieldError(f"empty band [{kmin}, {kmax}] for N={torus.points_per_axis}")
    return Field(torus, f.values / top)


# ---------------------------------------------------------------------------
# Time series

@dataclass(frozen=True)
class TimeSeries:
    """Scalar function of time sampled on an increasing partition.

    Step-function convention: the series takes the value ``samples[i]`` on
    [times[i], times[i+1]); the final sample marks the right endpoint and
    carries no measure.  This is the representation consumed by the Lorentz
    time norms and the interval-splitting search.
    """

    times: np.ndarray
    samples: np.ndarray

    def __init__(self, times, samples):
        times = np.asarray(times, dtype=np.float64)
        samples = np.asarray(samples, dtype=np.float64)
        if times.ndim != 1 or times.shape != samples.shape:
            raise ValueError("times and samples must be 1-d arrays of equal length")
        if times.size < 1:
            raise ValueError("empty time series")
        if times.size > 1 and not np.all(np.diff(times) > 0):
            raise ValueError("times must be strictly increasing")
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples contain non-finite values")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return self.times.size

    @property
    def t0(self) -> float:
        return float(self.times[0])

    @property
    def t1(self) -> float:
        return float(self.times[-1])

    def step_values(self) -> np.ndarray:
        return self.samples[:-1]

    def step_widths(self) -> np.ndarray:
        return np.diff(self.times)

    def restrict(self, a: float, b: float) -> "TimeSeries":
        """Step-function restriction to [a, b] (partial end intervals kept)."""
        if not (self.t0 <= a < b <= self.t1 + 1e-12):
            raise ValueError(
                f"restriction [{a}, {b}] outside series span [{self.t0}, {self.t1}]"
            )
        b = min(b, self.t1)
        inner = self.times[(self.times > a) & (self.times < b)]
        new_times = np.concatenate(([a], inner, [b]))
        idx = np.searchsorted(self.times, new_times[:-1], side="right") - 1
        new_samples = np.concatenate((self.samples[idx], [self.samples[idx[-1]]]))
        return TimeSeries(new_times, new_samples)

    def scaled(self, time_factor: float, value_factor: float) -> "TimeSeries":
        return TimeSeries(self.times * time_factor, self.samples * value_factor)

    def trapezoid(self) -> float:
        return float(np.trapezoid(self.samples, self.times))


# ---------------------------------------------------------------------------
# Binary snapshot I/O

def write_header(fh, torus: Torus, ncomp: int):
    fh.write(
        _HEADER.pack(
            PGLF_MAGIC,
            PGLF_VERSION,
            torus.dim,
            torus.points_per_axis,
            torus.side_length,
            ncomp,
        )
    )


def read_header(fh):
    magic, version, dim, N, L, ncomp = _HEADER.unpack(fh.read(_HEADER.size))
    if magic != PGLF_MAGIC:
        raise FieldError(f"bad magic {magic!r}, not a field snapshot")
    if version != PGLF_VERSION:
        raise FieldError(f"unsupported snapshot version {version}")
    return Torus(dim, L, N), ncomp


def save_field(path, f: Field):
    """Write a snapshot: PGLF header, then row-major little-endian f64."""
    with open(path, "wb") as fh:
        write_header(fh, f.torus, f.ncomp)
        fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())


def load_field(path) -> Field:
    with open(path, "rb") as fh:
        torus, ncomp = read_header(fh)
        count = ncomp * torus.npoints
        payload = np.frombuffer(fh.read(count * 8), dtype="<f8", count=count)
    return Field(torus, payload.reshape((ncomp,) + torus.shape).copy())
