"""Coupled pressureless viscous gas solver on the torus.

The system

    rho_t + div(rho u) = 0
    u_t = -(u . grad) u + (1/rho) (mu Lap u + mu' grad div u)

is advanced pseudospectrally.  The constant-coefficient viscous operator is
integrated exactly per mode on the Helmholtz split (divergence-free modes
decay with mu, potential modes with nu = mu + mu'), and everything else --
advection plus the (1/rho - 1) coupling left over from freezing the
coefficient -- is treated explicitly with a two-stage exponential
time-differencing scheme and 2/3-rule dealiasing after every product.  The
density is advanced conservatively in spectral form of div(rho u), which
makes total mass exact to roundoff.

Monitors are named scalar diagnostics sampled every step (norms of u and its
derivatives, Besov norms of the Helmholtz parts, the material time derivative
...).  Each monitor carries the power of mu by which its raw value must be
scaled to land in the unit-viscosity frame (u/mu sampled at time mu*t); the
post-processing layer uses those exponents to compare runs across
viscosities.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field as dfield
from fractions import Fraction
from typing import Optional

import numpy as np
from scipy import fft as sfft

from .besov import besov_norm_from, decompose
from .field import Field, FieldError, Torus, helmholtz_spectral, lp_norm, spectral_plan
from .heat import _duhamel_moments


class SolverError(RuntimeError):
    pass


class CFLError(SolverError):
    """Advective CFL condition dt <= 0.5 h / max|u| violated."""


class InvariantViolation(SolverError):
    """A conserved quantity drifted beyond tolerance (exit code 2 territory)."""


class SimulationAbort(SolverError):
    """Numerical breakdown: nonpositive density or non-finite values (exit 3)."""

    def __init__(self, message, step=None, time=None):
        super().__init__(message)
        self.step = step
        self.time = time


@dataclass
class State:
    t: float
    rho: Field
    u: Field
    mu: float
    mu_prime: float = 0.0

    def __post_init__(self):
        if self.rho.ncomp != 1:
            raise FieldError("density must be scalar")
        if self.u.ncomp != self.u.torus.dim:
            raise FieldError(
                f"velocity needs {self.u.torus.dim} components, got {self.u.ncomp}"
            )
        if self.rho.torus != self.u.torus:
            raise FieldError("rho and u live on different tori")
        if not self.mu > 0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if not self.mu + self.mu_prime > 0:
            raise ValueError("mu + mu' must be positive")
        if self.u.torus.dim == 3 and self.mu_prime != 0.0:
            raise ValueError("the 3D system carries no Lame viscosity (mu' = 0)")
        if np.min(self.rho.values) <= 0:
            raise SimulationAbort("density is not strictly positive", time=self.t)

    @property
    def torus(self) -> Torus:
        return self.u.torus

    @property
    def nu(self) -> float:
        return self.mu + self.mu_prime

    def mass(self) -> float:
        return float(self.torus.cell_volume * np.sum(self.rho.values))


@dataclass
class HelmholtzPair:
    P_part: Field
    Q_part: Field


def helmholtz(u: Field) -> HelmholtzPair:
    """Spectral Helmholtz decomposition; the mean mode goes to the P part."""
    P, Q = helmholtz_spectral(u.torus, u.spectral)
    return HelmholtzPair(
        Field.from_spectral(u.torus, P), Field.from_spectral(u.torus, Q)
    )


def energy(state: State):
    """(kinetic, dissipation_rate) = (1/2 int rho|u|^2, int mu|grad u|^2 + mu'(div u)^2).

    The dissipation integral is evaluated by Parseval on the half spectrum,
    so per-step energy tracking costs no extra transforms.
    """
    tor = state.torus
    kinetic = 0.5 * tor.cell_volume * float(
        np.sum(state.rho.values[0] * np.sum(state.u.values**2, axis=0))
    )
    plan = spectral_plan(tor)
    spec = state.u.spectral
    norm = tor.volume / tor.npoints**2
    grad2 = float(np.sum(plan.parseval_w * plan.k2 * np.abs(spec) ** 2))
    diss = state.mu * grad2
    if state.mu_prime != 0.0:
        kdotu = sum(plan.k[j] * spec[j] for j in range(tor.dim))
        diss += state.mu_prime * float(np.sum(plan.parseval_w * np.abs(kdotu) ** 2))
    return kinetic, norm * diss


# ---------------------------------------------------------------------------
# Time stepping

class _Stepper:
    """Cached exponential factors and scratch for one (torus, dt, mu, mu')."""

    def __init__(self, torus, dt, mu, mu_prime):
        self.torus = torus
        self.dt = dt
        self.mu = mu
        self.mu_prime = mu_prime
        self.plan = spectral_plan(torus)
        self.lame = mu_prime != 0.0
        self.EP, self.phi1P, self.phi2P = self._factors(mu)
        if self.lame:
            self.EQ, self.phi1Q, self.phi2Q = self._factors(mu + mu_prime)

    def _factors(self, visc):
        z = -visc * self.plan.k2 * self.dt
        i0, i1, _ = _duhamel_moments(z)
        return np.exp(z), i0, i1

    def apply(self, spec, which):
        """Multiply a vector spectrum by E/phi1/phi2, split by Helmholtz part."""
        if not self.lame:
            return getattr(self, which + "P") * spec
        P, Q = helmholtz_spectral(self.torus, spec)
        return getattr(self, which + "P") * P + getattr(self, which + "Q") * Q


_steppers: dict = {}
_steppers_lock = threading.Lock()


def _stepper(torus, dt, mu, mu_prime) -> _Stepper:
    key = (torus.dim, torus.points_per_axis, torus.side_length, dt, mu, mu_prime)
    with _steppers_lock:
        st = _steppers.get(key)
        if st is None:
            st = _Stepper(torus, dt, mu, mu_prime)
            _steppers[key] = st
    return st


def _ifft(torus, spec):
    return sfft.irfftn(spec, s=torus.shape, axes=tuple(range(1, torus.dim + 1)))


def _fft(vals):
    return sfft.rfftn(vals, axes=tuple(range(1, vals.ndim)))


def _nonlinear(st: _Stepper, u_spec, u_phys, rho_phys):
    """Dealiased spectrum of -(u.grad)u + (1/rho - 1) * (viscous terms)."""
    plan, tor = st.plan, st.torus
    d = tor.dim
    adv = np.zeros_like(u_phys)
    for i in range(d):
        for j in range(d):
            adv[i] += u_phys[j] * _ifft(tor, (1j * plan.k[j] * u_spec[i])[None])[0]
    visc_spec = -st.mu * plan.k2 * u_spec
    if st.lame:
        kdotu = sum(plan.k[j] * u_spec[j] for j in range(d))
        visc_spec = visc_spec - st.mu_prime * np.stack([plan.k[j] * kdotu for j in range(d)])
    visc_phys = _ifft(tor, visc_spec)
    N = -adv + (1.0 / rho_phys - 1.0) * visc_phys
    return _fft(N) * plan.dealias_mask, visc_spec


def _mass_flux(st: _Stepper, rho_phys, u_phys):
    """Dealiased spectrum of -div(rho u)."""
    plan = st.plan
    mhat = _fft(rho_phys * u_phys)
    return -sum(1j * plan.k[j] * mhat[j] for j in range(st.torus.dim)) * plan.dealias_mask


def step(state: State, dt: float) -> State:
    """One ETD2RK step; rejects CFL violations and kills off nonpositive density."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    tor = state.torus
    umax = float(state.u.magnitude().max())
    if umax > 0 and dt > 0.5 * tor.h / umax:
        raise CFLError(
            f"dt={dt} exceeds CFL bound {0.5 * tor.h / umax:.3e} at t={state.t}"
        )
    st = _stepper(tor, dt, state.mu, state.mu_prime)
    plan = st.plan

    u_spec = state.u.spectral * plan.dealias_mask
    rho_spec = state.rho.spectral * plan.dealias_mask
    u_phys = _ifft(tor, u_spec)
    rho_phys = _ifft(tor, rho_spec)[0]

    Nhat, _ = _nonlinear(st, u_spec, u_phys, rho_phys)
    Rhat = _mass_flux(st, rho_phys, u_phys)

    # predictor (exponential Euler / Heun stage)
    ua_spec = st.apply(u_spec, "E") + dt * st.apply(Nhat, "phi1")
    rhoa_spec = rho_spec + dt * Rhat
    ua_phys = _ifft(tor, ua_spec)
    rhoa_phys = _ifft(tor, rhoa_spec)[0]
    if np.min(rhoa_phys) <= 0:
        raise SimulationAbort(
            "density lost positivity in predictor stage", time=state.t
        )

    # corrector
    Nhat_a, _ = _nonlinear(st, ua_spec, ua_phys, rhoa_phys)
    Rhat_a = _mass_flux(st, rhoa_phys, ua_phys)
    u_new = ua_spec + dt * st.apply(Nhat_a - Nhat, "phi2")
    rho_new = rho_spec + 0.5 * dt * (Rhat + Rhat_a)

    try:
        rho_f = Field.from_spectral(tor, rho_new)
        u_f = Field.from_spectral(tor, u_new)
    except FieldError as exc:
        raise SimulationAbort(f"non-finite state after step: {exc}", time=state.t)
    if np.min(rho_f.values) <= 0:
        raise SimulationAbort("density lost positivity", time=state.t)
    return State(state.t + dt, rho_f, u_f, state.mu, state.mu_prime)


# ---------------------------------------------------------------------------
# Monitors

def _tag(x) -> str:
    fr = Fraction(x).limit_denominator(1000)
    return str(fr.numerator) if fr.denominator == 1 else f"{fr.numerator}o{fr.denominator}"


class Snapshot:
    """Lazy per-step view of a state; derived fields are computed on demand
    and shared between all monitors sampled at that step."""

    def __init__(self, state: State):
        self.state = state
        self._cache: dict = {}

    def _get(self, name, make):
        if name not in self._cache:
            self._cache[name] = make()
        return self._cache[name]

    @property
    def u(self):
        return self.state.u

    @property
    def rho(self):
        return self.state.rho

    @property
    def grad_u(self) -> Field:
        from .field import gradient

        return self._get("grad_u", lambda: gradient(self.state.u))

    @property
    def hess_u(self) -> Field:
        from .field import gradient

        return self._get("hess_u", lambda: gradient(self.grad_u))

    @property
    def div_u(self) -> Field:
        from .field import divergence

        return self._get("div_u", lambda: divergence(self.state.u))

    @property
    def graddiv_u(self) -> Field:
        from .field import gradient

        return self._get("graddiv_u", lambda: gradient(self.div_u))

    @property
    def pq(self) -> HelmholtzPair:
        return self._get("pq", lambda: helmholtz(self.state.u))

    @property
    def hess_Pu(self) -> Field:
        from .field import gradient

        return self._get("hess_Pu", lambda: gradient(gradient(self.pq.P_part)))

    @property
    def dec_u(self):
        return self._get("dec_u", lambda: decompose(self.state.u))

    @property
    def u_t(self) -> Field:
        """Material form of the momentum equation evaluated on this state."""

        def make():
            s = self.state
            tor = s.torus
            plan = spectral_plan(tor)
            d = tor.dim
            spec = s.u.spectral
            visc = -s.mu * plan.k2 * spec
            if s.mu_prime != 0.0:
                kdotu = sum(plan.k[j] * spec[j] for j in range(d))
                visc = visc - s.mu_prime * np.stack([plan.k[j] * kdotu for j in range(d)])
            visc_phys = _ifft(tor, visc)
            gu = self.grad_u.values
            adv = np.zeros_like(s.u.values)
            for i in range(d):
                for j in range(d):
                    adv[i] += s.u.values[j] * gu[i * d + j]
            return Field(tor, -adv + visc_phys / s.rho.values[0])

        return self._get("u_t", make)

    @property
    def tu_t(self) -> Field:
        """(t u)_t = u + t u_t."""
        s = self.state
        return self._get(
            "tu_t", lambda: Field(s.torus, s.u.values + s.t * self.u_t.values)
        )

    def energy(self):
        return self._get("energy", lambda: energy(self.state))


@dataclass(frozen=True)
class MonitorDef:
    func: object
    mu_power: float
    dims: tuple = (2, 3)


MONITORS: dict = {}


def _register(name, mu_power, dims=(2, 3)):
    def deco(fn):
        MONITORS[name] = MonitorDef(fn, mu_power, dims)
        return fn

    return deco


_register("kinetic", -2.0)(lambda s: s.energy()[0])
_register("dissipation_rate", -3.0)(lambda s: s.energy()[1])
_register("mass", 0.0)(lambda s: s.state.mass())
_register("rho_min", 0.0)(lambda s: float(np.min(s.rho.values)))
_register("rho_dev_Linf", 0.0)(lambda s: float(np.abs(s.rho.values - 1.0).max()))
_register("u_L2", -1.0)(lambda s: lp_norm(s.u, 2.0))
_register("u_L4", -1.0)(lambda s: lp_norm(s.u, 4.0))
_register("div_u_Linf", -1.0)(lambda s: lp_norm(s.div_u, np.inf))
_register("grad_u_Linf", -1.0)(lambda s: lp_norm(s.grad_u, np.inf))
_register("grad_u_L2", -1.0)(lambda s: lp_norm(s.grad_u, 2.0))

for _p in (4.0, 4.0 / 3.0, 2.5, 10.0 / 7.0, 10.0 / 3.0):
    _register(f"hess_u_L{_tag(_p)}", -1.0)(
        lambda s, p=_p: lp_norm(s.hess_u, p)
    )

_register("graddiv_u_L4", -1.0, dims=(2,))(lambda s: lp_norm(s.graddiv_u, 4.0))
_register("hess_Pu_L4", -1.0, dims=(2,))(lambda s: lp_norm(s.hess_Pu, 4.0))
_register("u_B1o2_4o3_1", -1.0, dims=(2,))(
    lambda s: besov_norm_from(s.dec_u, 0.5, 4.0 / 3.0, 1.0)
)
_register("Pu_B3o2_4_1", -1.0, dims=(2,))(
    lambda s: besov_norm_from(decompose(s.pq.P_part), 1.5, 4.0, 1.0)
)
_register("Qu_B3o2_4_1", -1.0, dims=(2,))(
    lambda s: besov_norm_from(decompose(s.pq.Q_part), 1.5, 4.0, 1.0)
)
_register("tut_L4", -1.0, dims=(2,))(lambda s: lp_norm(s.tu_t, 4.0))
_register("ut_L4o3", -2.0, dims=(2,))(lambda s: lp_norm(s.u_t, 4.0 / 3.0))

_register("u_B6o5_5o2_1", -1.0, dims=(3,))(
    lambda s: besov_norm_from(s.dec_u, 1.2, 2.5, 1.0)
)
_register("u_B3o5_10o7_1", -1.0, dims=(3,))(
    lambda s: besov_norm_from(s.dec_u, 0.6, 10.0 / 7.0, 1.0)
)
_register("u_B7o5_10o3_1", -1.0, dims=(3,))(
    lambda s: besov_norm_from(s.dec_u, 1.4, 10.0 / 3.0, 1.0)
)
_register("ut_L5o2", -2.0, dims=(3,))(lambda s: lp_norm(s.u_t, 2.5))
_register("ut_L10o7", -2.0, dims=(3,))(lambda s: lp_norm(s.u_t, 10.0 / 7.0))
_register("tut_L10o3", -1.0, dims=(3,))(lambda s: lp_norm(s.tu_t, 10.0 / 3.0))

CORE_MONITORS = ["kinetic", "dissipation_rate", "mass", "rho_min", "rho_dev_Linf"]

MONITORS_2D = CORE_MONITORS + [
    "u_L2", "u_L4", "div_u_Linf", "grad_u_Linf", "grad_u_L2",
    "hess_u_L4", "hess_u_L4o3", "graddiv_u_L4", "hess_Pu_L4",
    "u_B1o2_4o3_1", "Pu_B3o2_4_1", "Qu_B3o2_4_1", "tut_L4", "ut_L4o3",
]

MONITORS_3D = CORE_MONITORS + [
    "u_L2", "u_L4", "div_u_Linf", "grad_u_Linf", "grad_u_L2",
    "hess_u_L5o2", "hess_u_L10o7", "hess_u_L10o3",
    "u_B6o5_5o2_1", "u_B3o5_10o7_1", "u_B7o5_10o3_1",
    "ut_L5o2", "ut_L10o7", "tut_L10o3",
]


def default_monitors(dim: int) -> list:
    return list(MONITORS_2D if dim == 2 else MONITORS_3D)


@dataclass
class Trajectory:
    """Run output: per-step monitor samples plus optional stored frames."""

    initial: State
    final: State
    times: np.ndarray
    monitors: dict
    dt: float
    velocity_frames: Optional[list] = None
    density_frames: Optional[list] = None

    @property
    def mu(self) -> float:
        return self.initial.mu

    @property
    def mu_prime(self) -> float:
        return self.initial.mu_prime

    @property
    def nu(self) -> float:
        return self.mu + self.mu_prime

    @property
    def dim(self) -> int:
        return self.initial.torus.dim

    def monitor(self, name: str) -> np.ndarray:
        if name not in self.monitors:
            raise KeyError(f"monitor '{name}' was not recorded on this run")
        return self.monitors[name]

    def series(self, name: str):
        from .field import TimeSeries

        return TimeSeries(self.times, self.monitor(name))


def run(
    initial: State,
    T: float,
    dt: float,
    monitors=None,
    store_velocity: bool = False,
    store_density: bool = False,
    mass_tol: float = 1e-8,
) -> Trajectory:
    """Advance to T, sampling every requested monitor at every step.

    Mass conservation is enforced each step (relative drift above ``mass_tol``
    raises InvariantViolation); density positivity and finiteness failures
    surface as SimulationAbort with the offending step attached.
    """
    n = round(T / dt)
    if n < 1 or abs(T - n * dt) > 1e-9 * max(1.0, T):
        raise ValueError(f"T={T} is not an integer multiple of dt={dt}")
    dim = initial.torus.dim
    if monitors is None:
        monitors = default_monitors(dim)
    for name in monitors:
        if name not in MONITORS:
            raise KeyError(f"unknown monitor '{name}'")
        if dim not in MONITORS[name].dims:
            raise ValueError(f"monitor '{name}' is not defined in dimension {dim}")

    samples = {name: np.empty(n + 1) for name in monitors}
    vel = [] if store_velocity else None
    den = [] if store_density else None
    times = np.arange(n + 1) * dt + initial.t

    state = initial
    mass0 = state.mass()
    for i in range(n + 1):
        snap = Snapshot(state)
        for name in monitors:
            samples[name][i] = MONITORS[name].func(snap)
        if vel is not None:
            vel.append(state.u)
        if den is not None:
            den.append(state.rho)
        drift = abs(state.mass() - mass0) / abs(mass0) if mass0 else abs(state.mass())
        if drift > mass_tol:
            raise InvariantViolation(
                f"total mass drifted by {drift:.3e} (> {mass_tol}) at step {i}, "
                f"t={state.t:.6g}"
            )
        if i < n:
            try:
                state = step(state, dt)
            except SimulationAbort as exc:
                exc.step = i + 1
                raise
    return Trajectory(
        initial=initial,
        final=state,
        times=times,
        monitors=samples,
        dt=dt,
        velocity_frames=vel,
        density_frames=den,
    )
