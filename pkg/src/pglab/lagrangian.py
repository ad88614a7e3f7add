"""Particle trajectories and Lagrangian-frame diagnostics.

The flow map X(t,y) solves dX/dt = u(t, X) from grid labels y.  Positions are
advanced with the classical four-stage one-step method, the Jacobian DX rides
along via the variational equation d(DX)/dt = grad u(X) . DX, and velocities
at off-grid points come from exact trigonometric interpolation of the
dealiased spectrum -- so no interpolation order pollutes the flow's
smoothness.  Positions live in the universal cover (no wrapping) to keep DX
continuous; wrapped copies are derived on demand.

On top of the flow map sit the mass-transport identity rho(t, X(t,y)) J(t,y)
= rho0(y), the two-run uniqueness gap ||sqrt(rho0) (v - w)(t)||_{L2} measured
in Lagrangian frames, and the weighted gradient integrals that control both.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import fft as sfft

from ._kernels import evaluate_modes
from .field import (
    Field,
    TimeSeries,
    Torus,
    _HEADER,
    PGLF_MAGIC,
    PGLF_VERSION,
)
from .lorentz import LorentzExponents, lorentz_norm

_FLOW_MAGIC = b"FLOW"


class LagrangianError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Off-grid evaluation

def _band_coefficients(values, torus):
    """Fourier coefficients of a (ncomp, grid) array restricted to the
    dealiased band, plus the matching per-axis wavenumbers.

    Solver output is band-limited by construction, so the crop is lossless.
    """
    d = torus.dim
    N = torus.points_per_axis
    spec = sfft.fftn(values, axes=tuple(range(1, d + 1))) / torus.npoints
    kint = np.rint(sfft.fftfreq(N, 1.0 / N)).astype(int)
    keep = np.where(np.abs(kint) <= N // 3)[0]
    idx = np.ix_(np.arange(values.shape[0]), *([keep] * d))
    k = 2.0 * np.pi / torus.side_length * kint[keep]
    return np.ascontiguousarray(spec[idx]), [k] * d


def field_at_points(f: Field, pts) -> np.ndarray:
    """Evaluate a band-limited field at arbitrary points, shape (ncomp, npts)."""
    pts = np.ascontiguousarray(np.atleast_2d(pts), dtype=float)
    coef, kax = _band_coefficients(f.values, f.torus)
    return evaluate_modes(coef, kax, pts)


class _FrameEvaluator:
    """u and grad u at arbitrary points, from one velocity frame.

    The d + d^2 component spectra (velocity plus all first derivatives) are
    stacked into one coefficient block so a stage evaluation is a single
    kernel call.
    """

    def __init__(self, coef, k_axes, dim):
        self.coef = coef
        self.k_axes = k_axes
        self.dim = dim

    @classmethod
    def from_field(cls, u: Field):
        tor = u.torus
        d = tor.dim
        base, kax = _band_coefficients(u.values, tor)
        blocks = [base]
        for i in range(d):
            for j in range(d):
                shape = [1] * d
                shape[j] = -1
                kj = kax[j].reshape(shape)
                blocks.append((1j * kj * base[i])[None])
        return cls(np.ascontiguousarray(np.concatenate(blocks, axis=0)), kax, d)

    def blend(self, other: "_FrameEvaluator") -> "_FrameEvaluator":
        return _FrameEvaluator(
            np.ascontiguousarray(0.5 * (self.coef + other.coef)), self.k_axes, self.dim
        )

    def __call__(self, pts):
        d = self.dim
        vals = evaluate_modes(self.coef, self.k_axes, np.ascontiguousarray(pts))
        u = vals[:d]
        G = vals[d:].reshape(d, d, -1).transpose(2, 0, 1)
        return u, G


# ---------------------------------------------------------------------------
# Flow map

def _adjugate(M):
    """Explicit cofactor adjugate of (..., d, d) matrices, d in {2, 3}."""
    d = M.shape[-1]
    adj = np.empty_like(M)
    if d == 2:
        adj[..., 0, 0] = M[..., 1, 1]
        adj[..., 0, 1] = -M[..., 0, 1]
        adj[..., 1, 0] = -M[..., 1, 0]
        adj[..., 1, 1] = M[..., 0, 0]
        return adj
    for i in range(3):
        for j in range(3):
            r = [a for a in range(3) if a != j]
            c = [b for b in range(3) if b != i]
            minor = (
                M[..., r[0], c[0]] * M[..., r[1], c[1]]
                - M[..., r[0], c[1]] * M[..., r[1], c[0]]
            )
            adj[..., i, j] = (-1) ** (i + j) * minor
    return adj


@dataclass
class FlowMap:
    torus: Torus
    times: np.ndarray          # (nt,)
    labels: np.ndarray         # (npts, d) initial positions y
    X: np.ndarray              # (nt, npts, d), unwrapped
    DX: np.ndarray             # (nt, npts, d, d)
    J: np.ndarray              # (nt, npts) = det DX

    @property
    def npts(self) -> int:
        return self.labels.shape[0]

    def wrapped_positions(self) -> np.ndarray:
        return np.mod(self.X, self.torus.side_length)

    def A(self) -> np.ndarray:
        """Inverse Jacobians (DX)^{-1}."""
        return np.linalg.inv(self.DX)

    def adjugate(self) -> np.ndarray:
        """Cofactor adjugate of DX, computed independently of A and J."""
        return _adjugate(self.DX)

    def inverse_residual(self) -> float:
        eye = np.eye(self.torus.dim)
        return float(np.abs(self.A() @ self.DX - eye).max())

    def adjugate_residual(self) -> float:
        return float(np.abs(self.adjugate() - self.J[..., None, None] * self.A()).max())


def default_labels(torus: Torus, stride: Optional[int] = None) -> np.ndarray:
    """Grid-point labels, strided to keep 3D label counts desk-sized."""
    if stride is None:
        stride = 1 if torus.dim == 2 else max(1, torus.points_per_axis // 8)
    axes = [torus.axis_points()[::stride]] * torus.dim
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def _frames_of(traj):
    if getattr(traj, "velocity_frames", None) is None:
        raise LagrangianError(
            "trajectory has no stored velocity frames; rerun with store_velocity=True"
        )
    return traj.velocity_frames


def integrate_flow(traj, labels=None, stride: int = 1, check_orientation: bool = True) -> FlowMap:
    """Flow map from a trajectory's stored velocity frames.

    Positions and Jacobians advance jointly through the four-stage scheme;
    the half-step velocity is the average of the bracketing frames.  ``stride``
    subsamples the frame sequence (flow step = stride * solver dt).
    """
    frames = _frames_of(traj)
    tor = traj.initial.torus
    d = tor.dim
    if labels is None:
        labels = default_labels(tor)
    labels = np.ascontiguousarray(np.atleast_2d(labels), dtype=float)
    if labels.shape[1] != d:
        raise LagrangianError(f"labels must be (npts, {d})")
    nfr = len(frames)
    steps = (nfr - 1) // stride
    times = traj.times[:: stride][: steps + 1]

    npts = labels.shape[0]
    X = np.empty((steps + 1, npts, d))
    DX = np.empty((steps + 1, npts, d, d))
    X[0] = labels
    DX[0] = np.eye(d)

    ev_right = _FrameEvaluator.from_field(frames[0])
    for n in range(steps):
        h = float(times[n + 1] - times[n])
        e0 = ev_right
        e1 = _FrameEvaluator.from_field(frames[(n + 1) * stride])
        em = e0.blend(e1)
        ev_right = e1

        x, dx = X[n], DX[n]
        k1, G1 = e0(x)
        K1 = G1 @ dx
        k2, G2 = em(x + 0.5 * h * k1.T)
        K2 = G2 @ (dx + 0.5 * h * K1)
        k3, G3 = em(x + 0.5 * h * k2.T)
        K3 = G3 @ (dx + 0.5 * h * K2)
        k4, G4 = e1(x + h * k3.T)
        K4 = G4 @ (dx + h * K3)
        X[n + 1] = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4).T
        DX[n + 1] = dx + (h / 6.0) * (K1 + 2 * K2 + 2 * K3 + K4)
        if not np.all(np.isfinite(X[n + 1])):
            bad = int(np.argwhere(~np.isfinite(X[n + 1]))[0][0])
            raise LagrangianError(
                f"trajectory for label {bad} became non-finite at t={times[n + 1]:.6g}"
            )

    J = np.linalg.det(DX)
    if check_orientation and np.min(J) <= 0:
        t_bad, lab = np.unravel_index(np.argmin(J), J.shape)
        raise LagrangianError(
            f"orientation lost: J={J[t_bad, lab]:.3e} at label {lab}, "
            f"t={times[t_bad]:.6g}"
        )
    return FlowMap(torus=tor, times=np.asarray(times, dtype=float), labels=labels,
                   X=X, DX=DX, J=J)


def liouville_residual(flow: FlowMap, traj, stride: int = 1) -> float:
    """Max relative defect of dJ/dt = (div u)(X) J across flow steps."""
    frames = _frames_of(traj)
    tor = flow.torus
    worst = 0.0
    scale = float(np.abs(flow.J).max())
    for n in range(len(flow.times) - 1):
        h = flow.times[n + 1] - flow.times[n]
        f0, f1 = frames[n * stride], frames[(n + 1) * stride]
        mid_vals = 0.5 * (f0.values + f1.values)
        coef, kax = _band_coefficients(mid_vals, tor)
        div_coef = sum(
            1j * kax[j].reshape([1] + [-1 if a == j else 1 for a in range(tor.dim)])
            * coef[j : j + 1]
            for j in range(tor.dim)
        )
        xm = 0.5 * (flow.X[n] + flow.X[n + 1])
        div_mid = evaluate_modes(np.ascontiguousarray(div_coef), kax, xm)[0]
        jm = 0.5 * (flow.J[n] + flow.J[n + 1])
        resid = (flow.J[n + 1] - flow.J[n]) / h - div_mid * jm
        worst = max(worst, float(np.abs(resid).max()) * h / scale)
    return worst


# ---------------------------------------------------------------------------
# Mass transport and uniqueness

def mass_identity_check(flow: FlowMap, rho_frames, times, rho0: Optional[Field] = None) -> float:
    """Max over labels/times of |rho(t, X(t,y)) J(t,y) - rho0(y)| / ||rho0||_inf."""
    times = np.asarray(times, dtype=float)
    idx = np.searchsorted(times, flow.times)
    if idx.max() >= len(times) or np.abs(times[idx] - flow.times).max() > 1e-10:
        raise LagrangianError("flow and density snapshots use different time grids")
    if rho0 is None:
        rho0 = rho_frames[idx[0]]
    r0 = field_at_points(rho0, flow.labels)[0]
    scale = float(np.abs(rho0.values).max())
    worst = 0.0
    for n, i in enumerate(idx):
        r = field_at_points(rho_frames[i], flow.X[n])[0]
        worst = max(worst, float(np.abs(r * flow.J[n] - r0).max()))
    return worst / scale


@dataclass
class UniquenessReport:
    """Two-run Lagrangian comparison: the delta-v energy quantities plus the
    smallness monitors that gate the stability estimate."""

    times: np.ndarray
    gap: np.ndarray              # ||sqrt(rho0) (v - w)(t)||_{L2(labels)}
    grad_gap_sq_int: np.ndarray  # cumulative int ||grad_y dv||_{L2}^2
    grad_w_int: float            # int ||grad w||_inf dt
    half_weighted_grad_w: float  # ||t^{1/2} grad w||_{L2(0,T;L_inf)}

    @property
    def max_gap(self) -> float:
        return float(self.gap.max())

    def series(self) -> TimeSeries:
        return TimeSeries(self.times, self.gap)


def _lagrangian_velocity(traj, flow, stride):
    """v(t,y) = u(t, X(t,y)) and its label-gradient (grad u)(X) . DX."""
    frames = _frames_of(traj)
    d = flow.torus.dim
    nt, npts = len(flow.times), flow.npts
    v = np.empty((nt, d, npts))
    gv = np.empty((nt, npts, d, d))
    for n in range(nt):
        ev = _FrameEvaluator.from_field(frames[n * stride])
        u, G = ev(flow.X[n])
        v[n] = u
        gv[n] = G @ flow.DX[n]
    return v, gv


def uniqueness_gap(run_a, run_b, labels=None, data_tol: float = 1e-2) -> UniquenessReport:
    """Lagrangian-frame gap between two runs started from the same data.

    The runs may use different time steps (one grid must refine the other);
    comparison happens on the coarser grid.  Initial data differing by more
    than ``data_tol`` (relative, sup norm) is rejected -- small deliberate
    perturbations pass, so the diagnostic's sensitivity can be probed.
    """
    if run_a.initial.torus != run_b.initial.torus:
        raise LagrangianError("runs live on different tori")
    tor = run_a.initial.torus
    ua, ub = run_a.initial.u.values, run_b.initial.u.values
    scale = max(np.abs(ua).max(), np.abs(ub).max(), 1e-300)
    mismatch = float(np.abs(ua - ub).max()) / scale
    if mismatch > data_tol:
        raise LagrangianError(
            f"initial velocity fields differ by {mismatch:.3e} (> {data_tol}); "
            "uniqueness_gap compares runs from identical data"
        )
    if len(run_a.times) < len(run_b.times):
        run_a, run_b = run_b, run_a  # run_b is now the coarser ("w") run
    ratio = round(run_b.dt / run_a.dt)
    if ratio < 1 or abs(run_b.dt - ratio * run_a.dt) > 1e-12 * run_b.dt:
        raise LagrangianError("time grids are not nested")
    if labels is None:
        labels = default_labels(tor)

    flow_a = integrate_flow(run_a, labels=labels, stride=ratio)
    flow_b = integrate_flow(run_b, labels=labels)
    if len(flow_a.times) != len(flow_b.times):
        raise LagrangianError("runs cover different horizons")

    va, gva = _lagrangian_velocity(run_a, flow_a, ratio)
    vb, gvb = _lagrangian_velocity(run_b, flow_b, 1)

    r0 = field_at_points(run_a.initial.rho, labels)[0]
    w = (tor.side_length / round(len(labels) ** (1.0 / tor.dim))) ** tor.dim
    gap = np.sqrt(w * np.sum(r0[None, None, :] * (va - vb) ** 2, axis=(1, 2)))
    dgrad2 = w * np.sum((gva - gvb) ** 2, axis=(1, 2, 3))
    t = flow_b.times
    cum = np.concatenate(
        [[0.0], np.cumsum(0.5 * (dgrad2[1:] + dgrad2[:-1]) * np.diff(t))]
    )

    glinf = run_b.monitor("grad_u_Linf")
    grad_w_int = float(np.trapezoid(glinf, run_b.times))
    half_weighted = float(
        np.sqrt(np.trapezoid(run_b.times * glinf**2, run_b.times))
    )
    return UniquenessReport(
        times=t,
        gap=gap,
        grad_gap_sq_int=cum,
        grad_w_int=grad_w_int,
        half_weighted_grad_w=half_weighted,
    )


# ---------------------------------------------------------------------------
# Weighted gradient integrals

#: ||t^{-1/2}||_{L_{2,inf}(0,T)}: the distribution of t^{-1/2} on (0,T) is
#: min(T, v^{-2}), so sup_v v min(T, v^{-2})^{1/2} = 1 for every T > 0.
WEIGHT_CONSTANT = 1.0


@dataclass
class WeightedGradientNorms:
    I1: float            # int ||grad u||_inf dt
    I2: float            # int t ||grad u||_inf^2 dt
    rhs_product: float   # ||t grad^2 u||^{1/2}_{L_{4,1}(L_4)} ||grad^2 u||^{1/2}_{L_{4/3,1}(L_{4/3})}
    ratio: float         # I1 / rhs_product

    def __iter__(self):
        return iter((self.I1, self.I2))


def weighted_gradient_norms(traj) -> WeightedGradientNorms:
    t = traj.times
    glinf = traj.monitor("grad_u_Linf")
    I1 = float(np.trapezoid(glinf, t))
    I2 = float(np.trapezoid(t * glinf**2, t))
    h4 = lorentz_norm(TimeSeries(t, t * traj.monitor("hess_u_L4")), LorentzExponents(4.0, 1.0))
    h43 = lorentz_norm(
        TimeSeries(t, traj.monitor("hess_u_L4o3")), LorentzExponents(4.0 / 3.0, 1.0)
    )
    rhs = WEIGHT_CONSTANT * np.sqrt(h4) * np.sqrt(h43)
    if rhs == 0.0:
        ratio = 0.0 if I1 == 0.0 else float("inf")
    else:
        ratio = I1 / rhs
    return WeightedGradientNorms(I1=I1, I2=I2, rhs_product=float(rhs), ratio=float(ratio))


# ---------------------------------------------------------------------------
# Binary snapshots

def save_flow(path, flow: FlowMap) -> None:
    """Field-format header plus a FLOW section carrying times, labels, X, DX, J."""
    tor = flow.torus
    nt, npts = len(flow.times), flow.npts
    with open(path, "wb") as fh:
        fh.write(
            _HEADER.pack(
                PGLF_MAGIC, PGLF_VERSION, tor.dim, tor.points_per_axis,
                tor.side_length, tor.dim,
            )
        )
        fh.write(_FLOW_MAGIC)
        fh.write(struct.pack("<II", nt, npts))
        for arr in (flow.times, flow.labels, flow.X, flow.DX, flow.J):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_flow(path) -> FlowMap:
    with open(path, "rb") as fh:
        magic, version, dim, n, L, _ = _HEADER.unpack(fh.read(_HEADER.size))
        if magic != PGLF_MAGIC or version != PGLF_VERSION:
            raise LagrangianError(f"not a flow snapshot: {path}")
        if fh.read(4) != _FLOW_MAGIC:
            raise LagrangianError(f"missing FLOW section in {path}")
        nt, npts = struct.unpack("<II", fh.read(8))
        d = dim

        def rd(shape):
            count = int(np.prod(shape))
            return np.frombuffer(fh.read(8 * count), dtype="<f8").reshape(shape).copy()

        times = rd((nt,))
        labels = rd((npts, d))
        X = rd((nt, npts, d))
        DX = rd((nt, npts, d, d))
        J = rd((nt, npts))
    return FlowMap(torus=Torus(dim, L, n), times=times, labels=labels, X=X, DX=DX, J=J)
