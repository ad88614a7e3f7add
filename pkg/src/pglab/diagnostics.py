"""Estimate-side functionals assembled from run data.

This layer turns monitor time series into the quantities the a priori theory
is phrased in: interval splittings where a Lorentz-in-time norm is pinned to
a threshold eta, the two integer K formulas, the exponential density bound,
the 3D functionals Xi/Psi/Pi, and a named map of inequality ratios
(left-hand side over right-hand side, empirical constant included) for the
key estimates.

Ratios are evaluated in the unit-viscosity frame -- monitor values scaled by
the recorded power of mu, time dilated by mu -- so a run and its rescaled
twin produce identical ratios by construction, which is exactly the
scale-invariance the estimates claim.

Constants written C here are empirical calibration inputs, never asserted;
reports mark them as such.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field as dfield
from typing import Optional

import numpy as np
from scipy.integrate import cumulative_simpson

from .besov import besov_norm
from .field import Field, TimeSeries, lp_norm
from .lorentz import LorentzExponents, lorentz_norm
from .solver import MONITORS, Trajectory, helmholtz


class DiagnosticsError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Interval splitting

@dataclass(frozen=True)
class SplitResult:
    breakpoints: np.ndarray
    per_interval_norms: np.ndarray
    eta: float
    K: int


def split_intervals(U: TimeSeries, eta: float, q: float = 4.0, r: float = 1.0,
                    max_intervals: int = 100000) -> SplitResult:
    """Left-to-right splitting so each interval's L_{q,r}-in-time norm is eta.

    The norm of a nonnegative step function over (a, b) is continuous and
    nondecreasing in b, so each breakpoint is found by bisection.  All
    intervals except the last hit eta to high precision; the remainder
    carries whatever is left (<= eta).
    """
    if not eta > 0:
        raise ValueError(f"eta must be positive, got {eta}")
    exps = LorentzExponents(q, r)
    t0, t_end = float(U.times[0]), float(U.times[-1])
    tol = 1e-12 * max(1.0, eta)

    breakpoints = [t0]
    norms = []
    a = t0
    for _ in range(max_intervals):
        tail = lorentz_norm(U.restrict(a, t_end), exps)
        if tail <= eta + tol or a >= t_end:
            breakpoints.append(t_end)
            norms.append(tail)
            break
        lo, hi = a, t_end
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            val = lorentz_norm(U.restrict(a, mid), exps)
            if abs(val - eta) <= tol:
                lo = hi = mid
                break
            if val < eta:
                lo = mid
            else:
                hi = mid
        b = 0.5 * (lo + hi)
        breakpoints.append(b)
        norms.append(lorentz_norm(U.restrict(a, b), exps))
        a = b
    else:
        raise DiagnosticsError(f"splitting exceeded {max_intervals} intervals")
    return SplitResult(
        breakpoints=np.array(breakpoints),
        per_interval_norms=np.array(norms),
        eta=eta,
        K=len(breakpoints) - 1,
    )


def k_bounds(grad_energy: float, eta: float) -> int:
    """ceil(eta^{-2} * grad_energy), at least 1.

    ``grad_energy`` is the squared space-time L2 norm of the velocity
    gradient; the ceiling bounds how many eta-intervals the energy supports.
    """
    if grad_energy < 0:
        raise ValueError("grad_energy must be nonnegative")
    if not eta > 0:
        raise ValueError("eta must be positive")
    return max(1, math.ceil(grad_energy / eta**2))


def k_l41(pu0_norm: float, qu0_norm: float, nu: float, u0_l2: float, C: float) -> int:
    """floor(C (||Pu0||^4 + nu ||Qu0||^4) e^{C ||u0||_{L2}^2}) + 1.

    C is an empirical calibration constant, reported alongside the value.
    """
    if min(pu0_norm, qu0_norm, nu, u0_l2) < 0:
        raise ValueError("inputs must be nonnegative")
    return int(math.floor(C * (pu0_norm**4 + nu * qu0_norm**4)
                          * math.exp(C * u0_l2**2))) + 1


def gronwall_density_bound(div_u_int: float, a0_norm: float) -> float:
    """a0 e^I + e^I - 1 with I = int ||div u||_inf dt: the compression bound
    keeping the density near its reference value."""
    if div_u_int < 0 or a0_norm < 0:
        raise ValueError("inputs must be nonnegative")
    e = math.exp(div_u_int)
    return a0_norm * e + e - 1.0


# ---------------------------------------------------------------------------
# Normalized-frame access

def _normalized(traj: Trajectory, name: str):
    """(normalized times, normalized values) for one monitor: value scaled by
    mu**mu_power, time dilated by mu."""
    vals = traj.monitor(name)
    mu = traj.mu
    return traj.times * mu, vals * mu ** MONITORS[name].mu_power


def _time_norm(times, values, q, r):
    return lorentz_norm(TimeSeries(times, values), LorentzExponents(q, r))


def _initial_norms(traj: Trajectory):
    """Besov/L2 norms of the normalized initial velocity, split P/Q."""
    u0 = traj.initial.u
    mu = traj.mu
    u0n = Field(u0.torus, u0.values / mu)
    d = u0.torus.dim
    out = {"l2": lp_norm(u0n, 2.0)}
    if d == 2:
        pq = helmholtz(u0n)
        out["P_B1o2_4o3_1"] = besov_norm(pq.P_part, 0.5, 4.0 / 3.0, 1.0)
        out["Q_B1o2_4o3_1"] = besov_norm(pq.Q_part, 0.5, 4.0 / 3.0, 1.0)
    else:
        out["Xi0"] = besov_norm(u0n, 1.2, 2.5, 1.0)
        out["Psi0"] = besov_norm(u0n, 0.6, 10.0 / 7.0, 1.0)
    return out


def functionals_3d(traj: Trajectory):
    """(Xi, Psi, Pi): the three 3D regularity functionals, each a sup-in-time
    Besov part plus Lorentz-in-time norms of the Hessian and time derivative."""
    if traj.dim != 3:
        raise DiagnosticsError("functionals_3d needs a 3D trajectory")
    tau, b65 = _normalized(traj, "u_B6o5_5o2_1")
    _, h52 = _normalized(traj, "hess_u_L5o2")
    _, ut52 = _normalized(traj, "ut_L5o2")
    Xi = float(b65.max()) + _time_norm(tau, h52, 2.5, 1.0) + _time_norm(tau, ut52, 2.5, 1.0)

    _, b35 = _normalized(traj, "u_B3o5_10o7_1")
    _, h107 = _normalized(traj, "hess_u_L10o7")
    _, ut107 = _normalized(traj, "ut_L10o7")
    q = 10.0 / 7.0
    Psi = float(b35.max()) + _time_norm(tau, h107, q, 1.0) + _time_norm(tau, ut107, q, 1.0)

    _, b75 = _normalized(traj, "u_B7o5_10o3_1")
    _, h103 = _normalized(traj, "hess_u_L10o3")
    _, tut = _normalized(traj, "tut_L10o3")
    q = 10.0 / 3.0
    Pi = (float((tau * b75).max()) + _time_norm(tau, tau * h103, q, 1.0)
          + _time_norm(tau, tut, q, 1.0))
    return float(Xi), float(Psi), float(Pi)


# ---------------------------------------------------------------------------
# Inequality ratios

def _ratios_2d(traj: Trajectory, C: float, init):
    pn, qn, l2 = init["P_B1o2_4o3_1"], init["Q_B1o2_4o3_1"], init["l2"]
    nu_hat = traj.nu / traj.mu
    inner = math.exp(min(C * l2**2, 700.0))
    grow = math.exp(min(C * (pn**4 + nu_hat * qn**4) * inner, 700.0))

    tau, divn = _normalized(traj, "div_u_Linf")
    step4_lhs = nu_hat * float(np.trapezoid(divn, tau))
    step4_rhs = (math.sqrt(pn) + nu_hat**0.125 * math.sqrt(qn)) * grow
    if step4_rhs == 0.0:
        step4 = 0.0 if step4_lhs == 0.0 else float("inf")
    else:
        step4 = step4_lhs / step4_rhs

    _, pb = _normalized(traj, "Pu_B3o2_4_1")
    _, qb = _normalized(traj, "Qu_B3o2_4_1")
    _, hp = _normalized(traj, "hess_Pu_L4")
    _, tut = _normalized(traj, "tut_L4")
    _, gd = _normalized(traj, "graddiv_u_L4")
    w12_lhs = (float((tau * pb).max()) + nu_hat**0.25 * float((tau * qb).max())
               + _time_norm(tau, tau * hp, 4.0, 1.0)
               + _time_norm(tau, tut, 4.0, 1.0)
               + nu_hat * _time_norm(tau, tau * gd, 4.0, 1.0))
    w12_rhs = C * grow
    return {
        "step4": step4,
        "w12": w12_lhs / w12_rhs,
    }


def _ratios_3d(traj: Trajectory, init):
    Xi, Psi, Pi = functionals_3d(traj)
    Xi0, Psi0 = init["Xi0"], init["Psi0"]
    tau, glinf = _normalized(traj, "grad_u_Linf")
    I1 = float(np.trapezoid(glinf, tau))
    out = {}
    out["t9"] = Xi / Xi0 if Xi0 > 0 else 0.0
    out["t16"] = Pi / Psi0 if Psi0 > 0 else 0.0
    denom = Psi0 ** (2.0 / 3.0) * Xi0 ** (1.0 / 3.0)
    out["t18"] = I1 / denom if denom > 0 else 0.0
    return out


def x_k_sequence(traj: Trajectory, breakpoints):
    """Per-interval suprema X_k of the time-weighted split Besov norms, plus
    the smallest C making the recursion X_k <= C (eta + X_{k-1}) + X_0 <= C eta
    hold with eta replaced by the split threshold; purely descriptive."""
    tau, pb = _normalized(traj, "Pu_B3o2_4_1")
    _, qb = _normalized(traj, "Qu_B3o2_4_1")
    nu_hat = traj.nu / traj.mu
    series = tau * (pb + nu_hat**0.75 * qb)
    mu = traj.mu
    bp = np.asarray(breakpoints, dtype=float) * mu
    xs = []
    for a, b in zip(bp[:-1], bp[1:]):
        sel = (tau >= a - 1e-12) & (tau <= b + 1e-12)
        xs.append(float(series[sel].max()) if np.any(sel) else 0.0)
    return np.array(xs)


def fit_recursion_constant(x_k: np.ndarray, eta: float) -> float:
    """Smallest C with X_0 <= C eta and X_k <= C (eta + X_{k-1})."""
    if len(x_k) == 0 or eta <= 0:
        return 0.0
    c = x_k[0] / eta
    for k in range(1, len(x_k)):
        c = max(c, x_k[k] / (eta + x_k[k - 1]))
    return float(c)


# ---------------------------------------------------------------------------
# Report

@dataclass
class DiagnosticsConfig:
    C_cal: float = 1.0          # empirical constant for the K and ratio formulas
    eta_grad: Optional[float] = None   # Step-2 style splitting threshold
    eta_L4: Optional[float] = None     # Step-3 style splitting threshold
    k_target: int = 8           # sets the default eta_grad at desk scale


@dataclass
class DiagnosticsReport:
    dim: int
    mu: float
    mu_prime: float
    energy_budget_residual: float
    K_energy: int
    K_energy_bound: int
    K_L41: int
    K_L41_bound: int
    eta_grad: float
    eta_L4: float
    div_u_L1Linf: float
    grad_u_L1Linf: float
    rho_deviation_max: float
    gronwall_bound: float
    inequality_ratios: dict
    C_cal: float
    Xi: Optional[float] = None
    Psi: Optional[float] = None
    Pi: Optional[float] = None
    x_k: Optional[np.ndarray] = None
    x_k_fitted_C: Optional[float] = None

    def to_dict(self) -> dict:
        d = {
            "dim": self.dim,
            "mu": self.mu,
            "mu_prime": self.mu_prime,
            "energy_budget_residual": self.energy_budget_residual,
            "K_energy": self.K_energy,
            "K_energy_bound": self.K_energy_bound,
            "K_L41": self.K_L41,
            "K_L41_bound": self.K_L41_bound,
            "eta_grad": self.eta_grad,
            "eta_L4": self.eta_L4,
            "div_u_L1Linf": self.div_u_L1Linf,
            "grad_u_L1Linf": self.grad_u_L1Linf,
            "rho_deviation_max": self.rho_deviation_max,
            "gronwall_bound": self.gronwall_bound,
            "inequality_ratios": dict(self.inequality_ratios),
            "constants": {"C_cal": self.C_cal, "note": "empirical"},
        }
        if self.dim == 3:
            d.update(Xi=self.Xi, Psi=self.Psi, Pi=self.Pi)
        if self.x_k is not None:
            d["x_k"] = [float(x) for x in self.x_k]
            d["x_k_fitted_C"] = self.x_k_fitted_C
        return d

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    def csv_items(self):
        """Flat (column, value) pairs for the one-row-per-run summary table."""
        items = [
            ("dim", self.dim), ("mu", self.mu), ("mu_prime", self.mu_prime),
            ("energy_budget_residual", self.energy_budget_residual),
            ("K_energy", self.K_energy), ("K_energy_bound", self.K_energy_bound),
            ("K_L41", self.K_L41), ("K_L41_bound", self.K_L41_bound),
            ("eta_grad", self.eta_grad), ("eta_L4", self.eta_L4),
            ("div_u_L1Linf", self.div_u_L1Linf),
            ("grad_u_L1Linf", self.grad_u_L1Linf),
            ("rho_deviation_max", self.rho_deviation_max),
            ("gronwall_bound", self.gronwall_bound),
        ]
        for k in sorted(self.inequality_ratios):
            items.append((f"ratio_{k}", self.inequality_ratios[k]))
        if self.dim == 3:
            items += [("Xi", self.Xi), ("Psi", self.Psi), ("Pi", self.Pi)]
        return items


def energy_budget_residual(traj: Trajectory) -> float:
    """Relative defect of kinetic(t) - kinetic(0) + int dissipation dt at the
    final time, Simpson-accumulated."""
    kin = traj.monitor("kinetic")
    dis = traj.monitor("dissipation_rate")
    acc = cumulative_simpson(dis, x=traj.times, initial=0.0)
    scale = max(float(kin.max()), 1e-300)
    return float(abs(kin[-1] - kin[0] + acc[-1])) / scale


def diagnose(traj: Trajectory, config: Optional[DiagnosticsConfig] = None) -> DiagnosticsReport:
    cfg = config or DiagnosticsConfig()
    init = _initial_norms(traj)

    grad = TimeSeries(traj.times, traj.monitor("grad_u_L2"))
    grad_total = lorentz_norm(grad, LorentzExponents(2.0, 2.0))
    eta_grad = cfg.eta_grad
    if eta_grad is None:
        eta_grad = grad_total / math.sqrt(cfg.k_target) if grad_total > 0 else 1.0
    split_g = split_intervals(grad, eta_grad, q=2.0, r=2.0)

    u4 = TimeSeries(traj.times, traj.monitor("u_L4"))
    u4_total = lorentz_norm(u4, LorentzExponents(4.0, 1.0))
    eta_l4 = cfg.eta_L4
    if eta_l4 is None:
        # interval norms scale like (width)^{1/4}, so hitting ~k_target
        # intervals on a flat series needs eta ~ total * k_target^{-1/4}
        eta_l4 = u4_total * cfg.k_target**-0.25 if u4_total > 0 else 1.0
    split_4 = split_intervals(u4, eta_l4, q=4.0, r=1.0)

    div_int = float(np.trapezoid(traj.monitor("div_u_Linf"), traj.times))
    grad_int = float(np.trapezoid(traj.monitor("grad_u_Linf"), traj.times))
    rho_dev = traj.monitor("rho_dev_Linf")

    if traj.dim == 2:
        ratios = _ratios_2d(traj, cfg.C_cal, init)
        kl41_bound = k_l41(init["P_B1o2_4o3_1"], init["Q_B1o2_4o3_1"],
                           traj.nu / traj.mu, init["l2"], cfg.C_cal)
        xk = x_k_sequence(traj, split_4.breakpoints)
        xk_C = fit_recursion_constant(xk, eta_l4)
        Xi = Psi = Pi = None
    else:
        ratios = _ratios_3d(traj, init)
        kl41_bound = k_l41(init["Xi0"], 0.0, traj.nu / traj.mu, init["l2"], cfg.C_cal)
        xk, xk_C = None, None
        Xi, Psi, Pi = functionals_3d(traj)

    return DiagnosticsReport(
        dim=traj.dim,
        mu=traj.mu,
        mu_prime=traj.mu_prime,
        energy_budget_residual=energy_budget_residual(traj),
        K_energy=split_g.K,
        K_energy_bound=k_bounds(grad_total**2, eta_grad),
        K_L41=split_4.K,
        K_L41_bound=kl41_bound,
        eta_grad=float(eta_grad),
        eta_L4=float(eta_l4),
        div_u_L1Linf=div_int,
        grad_u_L1Linf=grad_int,
        rho_deviation_max=float(rho_dev.max()),
        gronwall_bound=gronwall_density_bound(div_int, float(rho_dev[0])),
        inequality_ratios=ratios,
        C_cal=cfg.C_cal,
        Xi=Xi, Psi=Psi, Pi=Pi,
        x_k=xk, x_k_fitted_C=xk_C,
    )
