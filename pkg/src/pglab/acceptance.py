"""Acceptance-criteria suite.

Each criterion is a function returning (passed, details); ``run_all`` prints
one [PASS]/[FAIL] line per criterion and returns a process exit code.  The
quick level covers the closed-form and light-run criteria in well under two
minutes; the full level runs everything, including the N=64 conservation
runs and the T=5 3D regime study.

Expensive corpora (scenario runs, heat corpora) live on an AcceptanceContext
and are computed once, then shared across criteria.

Empirical constants -- ratio bounds measured on the built-in scenarios at
desk scale -- are collected in RECORDED with the values they were calibrated
to; they are reported, never derived.
"""

from __future__ import annotations

import dataclasses
import math
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import diagnostics, harness, heat, lagrangian, solver
from .besov import besov_norm
from .field import Field, TimeSeries, Torus, lp_norm, random_band_limited
from .lorentz import (
    LorentzExponents,
    lorentz_norm,
    power_identity_check,
)

#: Empirically calibrated bounds (desk scale, built-in scenarios); reported
#: alongside measurements, never asserted as theory.
RECORDED = {
    "u1_constant": 1.0,        # I1 <= this * weighted Hessian product
    "xi_ratio_bound": 6.0,     # Xi <= this * Xi0 in the small-data regime
    "smallness_threshold": 1.5,  # Xi0^{1/3} Psi0^{2/3} gate for the regime
}


def _upsample(f: Field, N2: int) -> Field:
    """Zero-pad a band-limited field's spectrum onto a finer grid of the
    same torus (exact for fields inside the dealiased band)."""
    tor = f.torus
    d, N = tor.dim, tor.points_per_axis
    axes = tuple(range(1, d + 1))
    F = np.fft.fftshift(np.fft.fftn(f.values, axes=axes), axes=axes)
    G = np.zeros((f.ncomp,) + (N2,) * d, dtype=complex)
    pad = (N2 - N) // 2
    sl = (slice(None),) + (slice(pad, pad + N),) * d
    G[sl] = F
    vals = np.fft.ifftn(np.fft.ifftshift(G, axes=axes), axes=axes).real
    vals *= (N2 / N) ** d
    return Field(Torus(d, tor.side_length, N2), vals)


class AcceptanceContext:
    """Lazily built shared corpora for the criteria."""

    def __init__(self, level: str = "full"):
        if level not in ("quick", "full"):
            raise ValueError(f"level must be 'quick' or 'full', got {level!r}")
        self.level = level
        self._cache: dict = {}

    def _memo(self, key, make):
        if key not in self._cache:
            self._cache[key] = make()
        return self._cache[key]

    def _scenario(self, name, **overrides):
        def make():
            sc = harness.builtin_scenario(name)
            if overrides:
                sc = dataclasses.replace(sc, **overrides)
            return harness.run_scenario(sc, write_artifacts=False)

        return self._memo(("scenario", name, tuple(sorted(overrides.items()))), make)

    def calibration(self):
        return self._scenario("calibration-2d")

    def mass_transport(self):
        return self._scenario("mass-transport-2d")

    def rescale_pair(self):
        return self._scenario("rescale-pair")

    def nu_sweep(self):
        return self._scenario("nu-sweep")

    def small3d(self):
        return self._scenario("small-3d")

    def small3d_4x(self):
        sc = harness.builtin_scenario("small-3d")
        sc = dataclasses.replace(sc, name="small-3d-4x", u0_target=4 * sc.u0_target)
        return self._memo(("scenario", "small-3d-4x"), lambda: harness.run_scenario(sc, write_artifacts=False))

    def standard_results(self):
        """The corpus used by the 'on every completed run' criteria."""
        out = [self.calibration(), self.mass_transport()]
        if self.level == "full":
            out += [self.rescale_pair(), self.nu_sweep(), self.small3d()]
        return out

    def refinement_runs(self):
        """Mass-transport data at dt, dt/2, dt/4 on a fixed grid (for the
        uniqueness gap, which compares runs on one torus)."""
        def make():
            runs = []
            for k in range(3):
                sc = harness.builtin_scenario("mass-transport-2d")
                sc = dataclasses.replace(
                    sc, name=f"mt-ref{k}", dt=sc.dt / 2**k, flow=False,
                    store_density=True,
                )
                runs.append(harness.run_scenario(sc, write_artifacts=False))
            return runs

        return self._memo("refinement", make)

    def spatial_refinement_runs(self):
        """The same band-limited data advanced under simultaneous (dt, h)
        refinement: the coarse fields are upsampled spectrally, so every
        level solves from identical physical data."""
        def make():
            sc = harness.builtin_scenario("mass-transport-2d")
            rho0, u0 = harness.generate_initial_data(sc)
            runs = []
            levels = 2 if self.level == "quick" else 3
            for k in range(levels):
                N = sc.N * 2**k
                r, u = (rho0, u0) if k == 0 else (
                    _upsample(rho0, N), _upsample(u0, N)
                )
                st = solver.State(0.0, r, u, mu=sc.mu, mu_prime=sc.mu_prime)
                runs.append(solver.run(
                    st, T=sc.T, dt=sc.dt / 2**k, monitors=solver.CORE_MONITORS,
                    store_velocity=True, store_density=True,
                ))
            return runs

        return self._memo("spatial_refinement", make)


# ---------------------------------------------------------------------------
# Criterion 1: Lorentz calculus on a 200-function corpus

def _lorentz_corpus():
    rng = harness.make_rng(101)
    tor = Torus(2, 3.0, 16)
    funcs = []
    for _ in range(70):
        base = random_band_limited(tor, rng, 4, ncomp=1)
        thr = rng.uniform(0.2, 0.8)
        scale = rng.uniform(0.5, 3.0)
        funcs.append(Field(tor, scale * (np.abs(base.values) > thr).astype(float)))
    for _ in range(70):
        base = random_band_limited(tor, rng, 5, ncomp=1)
        levels = rng.integers(2, 7)
        funcs.append(Field(tor, np.round(levels * np.abs(base.values)) / levels))
    for _ in range(60):
        base = random_band_limited(tor, rng, 6, ncomp=1)
        funcs.append(Field(tor, np.abs(base.values) * rng.uniform(0.3, 2.0)))
    return funcs


def criterion_1(ctx):
    funcs = _lorentz_corpus()
    ps = [4.0 / 3.0, 2.0, 2.5, 10.0 / 3.0, 4.0]
    worst_pp = 0.0
    worst_pow = 0.0
    for f in funcs:
        for p in ps:
            ref = lp_norm(f, p)
            if ref == 0.0:
                continue
            got = lorentz_norm(f, LorentzExponents(p, p))
            worst_pp = max(worst_pp, abs(got - ref) / ref)
        for alpha, p, r in ((2.0, 2.0, 2.0), (0.5, 4.0, 2.0)):
            lhs, rhs = power_identity_check(f, alpha, p, r)
            if max(lhs, rhs) > 0:
                worst_pow = max(worst_pow, abs(lhs - rhs) / max(lhs, rhs))

    # indicator closed forms on sets of exact cell measure
    tor = Torus(2, 8.0, 16)   # cell area 0.25 -> 64 cells give measure 16
    vals = np.zeros(tor.shape)
    vals.flat[:64] = 1.0
    ind16 = Field(tor, vals)
    cf1 = abs(lorentz_norm(ind16, LorentzExponents(4.0, 1.0)) - 8.0)
    tor2 = Torus(2, 16.0, 32)  # cell area 0.25 again, room for 324 cells
    vals2 = np.zeros(tor2.shape)
    vals2.flat[: 81 * 4] = 1.0   # measure 81
    ind81 = Field(tor2, vals2)
    cf2 = abs(lorentz_norm(ind81, LorentzExponents(4.0 / 3.0, 1.0)) - 36.0)
    cf3 = abs(lorentz_norm(ind16, LorentzExponents(1.0, 1.0)) - 16.0)
    cf4 = abs(lorentz_norm(ind16, LorentzExponents(np.inf, np.inf)) - 1.0)
    closed = max(cf1, cf2, cf3, cf4)

    ok = worst_pp <= 1e-10 and worst_pow <= 1e-10 and closed <= 1e-12
    return ok, (f"L_pp vs L_p {worst_pp:.2e} (<=1e-10), power identity "
                f"{worst_pow:.2e} (<=1e-10), indicator closed forms {closed:.2e} (<=1e-12) "
                f"on {len(funcs)} functions")


# ---------------------------------------------------------------------------
# Criterion 2: spectral operator identities

def criterion_2(ctx):
    from .field import divergence, gradient, laplacian

    worst_eig = 0.0
    for dim in (2, 3):
        tor = Torus(dim, 2.0 * np.pi, 16)
        X = tor.grid()
        kvec = (2, 1) if dim == 2 else (1, 2, 1)
        phase = sum(k * x for k, x in zip(kvec, X))
        f = Field(tor, np.sin(phase)[None])
        g = gradient(f)
        for j, k in enumerate(kvec):
            err = np.abs(g.values[j] - k * np.cos(phase)).max()
            worst_eig = max(worst_eig, err)
        lap = laplacian(f)
        k2 = sum(k**2 for k in kvec)
        worst_eig = max(worst_eig, np.abs(lap.values[0] + k2 * np.sin(phase)).max())

    rng = harness.make_rng(202)
    worst_dg = 0.0
    for i in range(50):
        dim = 2 if i % 2 == 0 else 3
        tor = Torus(dim, 2.0 * np.pi, 16)
        f = random_band_limited(tor, rng, 4, ncomp=1)
        lhs = divergence(gradient(f))
        rhs = laplacian(f)
        scale = max(np.abs(rhs.values).max(), 1e-300)
        worst_dg = max(worst_dg, float(np.abs(lhs.values - rhs.values).max()) / scale)

    ok = worst_eig <= 1e-12 and worst_dg <= 1e-10
    return ok, (f"eigen-relations {worst_eig:.2e} (<=1e-12), "
                f"div(grad) vs laplacian {worst_dg:.2e} (<=1e-10) on 50 fields")


# ---------------------------------------------------------------------------
# Criterion 3: heat solves and maximal-regularity stability

def _heat_corpus_problem(seed, mu, forced):
    tor = Torus(2, 2.0 * np.pi, 16)
    rng = harness.make_rng(400 + seed)
    u0 = random_band_limited(tor, rng, 2, ncomp=1)
    forcing = None
    if forced:
        shape = random_band_limited(tor, rng, 2, ncomp=1)
        forcing = heat.SeparableForcing(lambda t: math.exp(-0.5 * t), shape)
    return heat.HeatProblem(tor, mu, u0, T=16.0, dt=0.005, forcing=forcing)


def criterion_3(ctx):
    tor = Torus(2, 2.0 * np.pi, 32)
    X = tor.grid()
    mu = 0.7

    # single-mode decay against the exact exponential
    u0 = Field(tor, np.sin(2 * X[0])[None])
    sol = heat.heat_solve(heat.HeatProblem(tor, mu, u0, T=1.0, dt=0.01))
    exact = math.exp(-mu * 4.0) * u0.values
    decay_err = float(np.abs(sol.fields[-1].values - exact).max())

    # forced scalar mode against the closed-form Duhamel integral
    lam = mu * 4.0
    a = 0.5
    forcing = heat.SeparableForcing(lambda t: math.exp(-a * t), u0)
    solf = heat.heat_solve(heat.HeatProblem(tor, mu, u0, T=1.0, dt=0.001, forcing=forcing))
    amp = math.exp(-lam) + (math.exp(-a) - math.exp(-lam)) / (lam - a)
    ode_err = float(np.abs(solf.fields[-1].values - amp * u0.values).max())

    # amplitude invariance of the regularity ratio
    prob = _heat_corpus_problem(0, 1.0, forced=False)
    r1 = heat.maxreg_ratio(prob, 4.0 / 3.0, 4.0 / 3.0, 1.0)
    big = dataclasses.replace(prob, u0=Field(prob.torus, 3.0 * prob.u0.values))
    r3 = heat.maxreg_ratio(big, 4.0 / 3.0, 4.0 / 3.0, 1.0)
    amp_drift = abs(r1.ratio - r3.ratio) / r1.ratio

    # mu-stability of the corpus-wide maximum ratio (the empirical constant);
    # individual problems may drift more since only the bound is viscosity-free
    max_a = max_b = 0.0
    for seed in range(30):
        forced = seed % 3 == 0
        ra = heat.maxreg_ratio(_heat_corpus_problem(seed, 1.0, forced),
                               4.0 / 3.0, 4.0 / 3.0, 1.0)
        rb = heat.maxreg_ratio(_heat_corpus_problem(seed, 4.0, forced),
                               4.0 / 3.0, 4.0 / 3.0, 1.0)
        max_a = max(max_a, ra.ratio)
        max_b = max(max_b, rb.ratio)
    mu_shift = abs(max_b - max_a) / max(max_a, max_b)

    ok = (decay_err <= 1e-12 and ode_err <= 1e-8
          and amp_drift <= 1e-12 and mu_shift <= 0.10)
    return ok, (f"mode decay {decay_err:.2e} (<=1e-12), forced oracle {ode_err:.2e} "
                f"(<=1e-8), amplitude drift {amp_drift:.2e} (<=1e-12), "
                f"max-ratio mu shift {mu_shift:.2%} (<=10%) over 30 problems "
                f"({max_a:.3f} vs {max_b:.3f})")


# ---------------------------------------------------------------------------
# Criterion 4: exponent admissibility triples

def criterion_4(ctx):
    triples = [
        (2, 4.0 / 3.0, 4.0 / 3.0, 4.0),
        (3, 5.0 / 3.0, 5.0 / 3.0, 5.0),
        (3, 10.0 / 7.0, 10.0 / 7.0, 10.0 / 3.0),
    ]
    worst = 0.0
    for d, p, q, expect in triples:
        s, m = heat.exponent_scale(q, p, d)
        worst = max(worst, abs(s - expect), abs(m - expect),
                    abs(d / (2 * m) + 1 / s - (1 / q + d / (2 * p) - 1)))
    ok = worst <= 1e-12
    return ok, f"three diagonal triples, worst defect {worst:.2e} (<=1e-12)"


# ---------------------------------------------------------------------------
# Criterion 5: solver conservation and linear decay rates

def _conservation_run(dim):
    N = 64
    tor = Torus(dim, 2.0 * np.pi, N)
    rng = harness.make_rng(500 + dim)
    raw = random_band_limited(tor, rng, 2, ncomp=dim)
    m = np.max(np.sqrt(np.sum(raw.values**2, axis=0)))
    u0 = Field(tor, 0.3 * raw.values / m)
    rho0 = Field(tor, 1.0 + 0.1 * random_band_limited(tor, rng, 2, ncomp=1).values[0])
    mu_prime = 0.5 if dim == 2 else 0.0
    st = solver.State(0.0, rho0, u0, mu=0.5, mu_prime=mu_prime)
    return solver.run(st, T=1.0, dt=1e-3, monitors=solver.CORE_MONITORS)


def _decay_rate(dim, potential, mu, mu_prime):
    tor = Torus(dim, 2.0 * np.pi, 64)
    X = tor.grid()
    amp = 1e-4
    vals = np.zeros((dim,) + tor.shape)
    if potential:
        vals[0] = -amp * np.sin(X[0])      # gradient of amp*cos(x1)
    else:
        vals[0] = amp * np.sin(X[1])       # divergence-free shear
    st = solver.State(0.0, Field(tor, np.ones(tor.shape)), Field(tor, vals),
                      mu=mu, mu_prime=mu_prime)
    n0 = lp_norm(st.u, 2.0)
    T, dt = 0.05, 1e-3
    for _ in range(round(T / dt)):
        st = solver.step(st, dt)
    return math.log(n0 / lp_norm(st.u, 2.0)) / T


def criterion_5(ctx):
    worst_mass = 0.0
    worst_energy = 0.0
    from scipy.integrate import cumulative_simpson

    for dim in (2, 3):
        traj = _conservation_run(dim)
        mass = traj.monitors["mass"]
        worst_mass = max(worst_mass, float(np.abs(mass - mass[0]).max()) / mass[0])
        kin = traj.monitors["kinetic"]
        acc = cumulative_simpson(traj.monitors["dissipation_rate"], x=traj.times,
                                 initial=0.0)
        worst_energy = max(
            worst_energy, float(abs(kin[-1] - kin[0] + acc[-1])) / kin.max()
        )

    mu, mup = 0.4, 0.3
    rate_p2 = _decay_rate(2, False, mu, mup)
    rate_q2 = _decay_rate(2, True, mu, mup)
    rate_p3 = _decay_rate(3, False, mu, 0.0)
    err_p2 = abs(rate_p2 - mu) / mu
    err_q2 = abs(rate_q2 - (mu + mup)) / (mu + mup)
    err_p3 = abs(rate_p3 - mu) / mu
    worst_rate = max(err_p2, err_q2, err_p3)

    ok = worst_mass <= 1e-8 and worst_energy <= 1e-6 and worst_rate <= 1e-4
    return ok, (f"mass drift {worst_mass:.2e} (<=1e-8), energy budget "
                f"{worst_energy:.2e} (<=1e-6) at N=64 dt=1e-3 both dims; "
                f"decay-rate errors P2 {err_p2:.2e}, Q2 {err_q2:.2e}, "
                f"P3 {err_p3:.2e} (<=1e-4)")


# ---------------------------------------------------------------------------
# Criterion 6: viscosity rescaling invariance

def criterion_6(ctx):
    res = ctx.rescale_pair()
    mon = res.extras.get("rescale_monitor_mismatch", math.inf)
    rat = res.extras.get("rescale_ratio_mismatch", math.inf)
    ok = res.exit_code == 0 and mon <= 1e-6 and rat <= 1e-6
    return ok, (f"paired mu=1/mu=4 runs: monitor mismatch {mon:.2e}, "
                f"ratio mismatch {rat:.2e} (both <=1e-6)")


# ---------------------------------------------------------------------------
# Criterion 7: interval splitting

def criterion_7(ctx):
    U = TimeSeries(np.array([0.0, 32.0]), np.array([1.0, 1.0]))
    res = diagnostics.split_intervals(U, 8.0, q=4.0, r=1.0)
    closed = max(
        abs(res.K - 2),
        float(np.abs(res.breakpoints - np.array([0.0, 16.0, 32.0])).max()),
        float(np.abs(res.per_interval_norms - 8.0).max()),
    )

    bound_ok = True
    checked = 0
    for sres in ctx.standard_results():
        for rep in sres.reports:
            if rep.dim != 2:
                continue
            checked += 1
            if rep.K_energy > rep.K_energy_bound:
                bound_ok = False
    ok = closed <= 1e-8 and bound_ok and checked > 0
    return ok, (f"constant-series closed form defect {closed:.2e} (<=1e-8); "
                f"split K <= energy bound on {checked} 2D runs: {bound_ok}")


# ---------------------------------------------------------------------------
# Criterion 8: density control

def criterion_8(ctx):
    worst_slack = -math.inf
    nruns = 0
    for sres in ctx.standard_results():
        for rep in sres.reports:
            nruns += 1
            worst_slack = max(worst_slack, rep.rho_deviation_max - rep.gronwall_bound)
    gron_ok = worst_slack <= 1e-6

    if ctx.level == "full":
        sweep = ctx.nu_sweep()
        ints = sweep.extras.get("div_u_integrals", [])
        mono_ok = sweep.exit_code == 0 and all(
            b <= a * (1 + 1e-9) for a, b in zip(ints, ints[1:])
        )
        sweep_txt = ("div-u integrals " + ", ".join(f"{x:.4f}" for x in ints)
                     + f" nonincreasing: {mono_ok}")
    else:
        mono_ok = True
        sweep_txt = "nu-sweep skipped at quick level"
    ok = gron_ok and mono_ok
    return ok, (f"rho deviation within Gronwall bound on {nruns} runs "
                f"(worst slack {worst_slack:.2e} <= 1e-6); {sweep_txt}")


# ---------------------------------------------------------------------------
# Criterion 9: Lagrangian flows

def criterion_9(ctx):
    tor = Torus(2, 2.0 * np.pi, 32)
    X = tor.grid()
    one = Field(tor, np.ones(tor.shape))

    def steady_traj(u_field, nsteps, dt):
        st = solver.State(0.0, one, u_field, mu=1.0)
        return solver.Trajectory(
            initial=st, final=st, times=np.arange(nsteps + 1) * dt, monitors={},
            dt=dt, velocity_frames=[u_field] * (nsteps + 1),
        )

    c = np.array([0.4, -0.9])
    trans = Field(tor, np.stack([np.full(tor.shape, ci) for ci in c]))
    fl = lagrangian.integrate_flow(steady_traj(trans, 20, 0.05))
    exact = fl.labels[None] + fl.times[:, None, None] * c
    trans_err = float(np.abs(fl.X - exact).max())

    shear_vals = np.zeros((2,) + tor.shape)
    shear_vals[0] = 0.8 * np.sin(X[1])
    shear = Field(tor, shear_vals)
    fl = lagrangian.integrate_flow(steady_traj(shear, 40, 0.025))
    ex1 = fl.labels[:, 0][None] + fl.times[:, None] * 0.8 * np.sin(fl.labels[:, 1])[None]
    shear_err = max(
        float(np.abs(fl.X[..., 0] - ex1).max()),
        float(np.abs(fl.X[..., 1] - fl.labels[:, 1][None]).max()),
        float(np.abs(fl.J - 1.0).max()),
    )
    adj_err = max(fl.adjugate_residual(), fl.inverse_residual())

    back = lagrangian.integrate_flow(
        steady_traj(Field(tor, -shear_vals), 40, 0.025), labels=fl.X[-1]
    )
    fb_err = float(np.abs(back.X[-1] - fl.labels).max())

    resids = []
    for traj in ctx.spatial_refinement_runs():
        flow = lagrangian.integrate_flow(traj, labels=lagrangian.default_labels(
            traj.initial.torus, stride=max(1, traj.initial.torus.points_per_axis // 32)))
        resids.append(
            lagrangian.mass_identity_check(flow, traj.density_frames, traj.times)
        )
    base_ok = resids[0] <= 1e-3
    halving = all(b <= 0.6 * a for a, b in zip(resids, resids[1:]))

    ok = (trans_err <= 1e-8 and shear_err <= 1e-8 and fb_err <= 1e-7
          and adj_err <= 1e-10 and base_ok and halving)
    return ok, (f"translation {trans_err:.2e}, shear {shear_err:.2e} (<=1e-8); "
                f"forward-backward {fb_err:.2e} (<=1e-7); adjugate {adj_err:.2e} "
                f"(<=1e-10); mass identity {', '.join(f'{r:.2e}' for r in resids)} "
                f"(<=1e-3, halving under refinement: {halving})")


# ---------------------------------------------------------------------------
# Criterion 10: uniqueness diagnostic

def criterion_10(ctx):
    runs = ctx.refinement_runs()
    t0, t1, t2 = (r.trajectories[0] for r in runs)
    labels = lagrangian.default_labels(t0.initial.torus, stride=2)

    zero = lagrangian.uniqueness_gap(t0, t0, labels=labels)
    gap01 = lagrangian.uniqueness_gap(t0, t1, labels=labels)
    gap12 = lagrangian.uniqueness_gap(t1, t2, labels=labels)
    shrink = gap12.max_gap <= 0.5 * gap01.max_gap

    worst_ratio = 0.0
    finite = True
    for sres in ctx.standard_results():
        for traj in sres.trajectories:
            if traj.dim != 2:
                continue
            wg = lagrangian.weighted_gradient_norms(traj)
            if not (math.isfinite(wg.I1) and math.isfinite(wg.I2)):
                finite = False
            if wg.rhs_product > 0:
                worst_ratio = max(worst_ratio, wg.ratio)
    bound_ok = worst_ratio <= RECORDED["u1_constant"]

    ok = (zero.max_gap == 0.0 and shrink and finite and bound_ok)
    return ok, (f"identical-run gap {zero.max_gap:.1e} (=0); dt-halving gap "
                f"{gap01.max_gap:.2e} -> {gap12.max_gap:.2e} (>=2x shrink: {shrink}); "
                f"I1/I2 finite: {finite}; worst I1/product ratio {worst_ratio:.3f} "
                f"<= recorded {RECORDED['u1_constant']}")


# ---------------------------------------------------------------------------
# Criterion 11: 3D small-data regime with negative control

def criterion_11(ctx):
    res = ctx.small3d()
    traj = res.trajectories[0]
    rep = res.reports[0]
    u0 = traj.initial.u
    xi0 = besov_norm(u0, 1.2, 2.5, 1.0)
    psi0 = besov_norm(u0, 0.6, 10.0 / 7.0, 1.0)
    product = xi0 ** (1.0 / 3.0) * psi0 ** (2.0 / 3.0)
    in_regime = product < RECORDED["smallness_threshold"]
    ratio = rep.Xi / xi0
    ratio_ok = ratio <= RECORDED["xi_ratio_bound"]
    rho0_dev = float(traj.monitors["rho_dev_Linf"][0])
    rho_ok = rep.rho_deviation_max <= 2.0 * rho0_dev

    ctrl = ctx.small3d_4x()
    if ctrl.exit_code != 0:
        ctrl_txt = f"4x control broke down (exit {ctrl.exit_code})"
        ctrl_degraded = True
    else:
        crep = ctrl.reports[0]
        ctraj = ctrl.trajectories[0]
        c_rho0 = float(ctraj.monitors["rho_dev_Linf"][0])
        c_ratio = crep.Xi / besov_norm(ctraj.initial.u, 1.2, 2.5, 1.0)
        rho_broken = crep.rho_deviation_max > 2.0 * c_rho0
        ratio_broken = c_ratio > RECORDED["xi_ratio_bound"]
        ctrl_degraded = rho_broken or ratio_broken
        ctrl_txt = (f"4x control: rho dev {crep.rho_deviation_max:.3f} vs bound "
                    f"{2 * c_rho0:.3f} broken={rho_broken}, Xi ratio {c_ratio:.2f} "
                    f"broken={ratio_broken}")

    ok = (res.exit_code == 0 and in_regime and ratio_ok and rho_ok and ctrl_degraded)
    return ok, (f"smallness product {product:.3f} < {RECORDED['smallness_threshold']}; "
                f"run to T=5 complete; Xi/Xi0 {ratio:.2f} <= "
                f"{RECORDED['xi_ratio_bound']}; rho dev {rep.rho_deviation_max:.3f} "
                f"<= {2 * rho0_dev:.3f}; {ctrl_txt}")


# ---------------------------------------------------------------------------
# Criterion 12: determinism

def criterion_12(ctx):
    sc = harness.builtin_scenario("calibration-2d")
    sc = dataclasses.replace(sc, N=16, T=0.2) if ctx.level == "quick" else sc
    with tempfile.TemporaryDirectory() as tmp:
        ra = harness.run_scenario(sc, output_dir=Path(tmp) / "a")
        rb = harness.run_scenario(sc, output_dir=Path(tmp) / "b")
        csv_a = (ra.output_dir / "summary.csv").read_bytes()
        csv_b = (rb.output_dir / "summary.csv").read_bytes()
    ok = csv_a == csv_b and ra.exit_code == 0
    return ok, (f"two runs of the same scenario+seed produced "
                f"{'bitwise-identical' if ok else 'DIFFERING'} CSV "
                f"({len(csv_a)} bytes)")


# ---------------------------------------------------------------------------
# Driver

CRITERIA = {
    1: ("lorentz-calculus", criterion_1),
    2: ("spectral-operators", criterion_2),
    3: ("heat-solves", criterion_3),
    4: ("exponent-admissibility", criterion_4),
    5: ("solver-conservation", criterion_5),
    6: ("scaling-invariance", criterion_6),
    7: ("interval-splitting", criterion_7),
    8: ("density-control", criterion_8),
    9: ("lagrangian-flows", criterion_9),
    10: ("uniqueness-diagnostic", criterion_10),
    11: ("small-data-3d", criterion_11),
    12: ("determinism", criterion_12),
}

QUICK_SET = (1, 2, 4, 7, 8, 9, 12)


def run_criterion(number: int, ctx: AcceptanceContext):
    name, fn = CRITERIA[number]
    start = time.perf_counter()
    passed, details = fn(ctx)
    return name, passed, details, time.perf_counter() - start


def run_all(level: str = "full", stream=None) -> int:
    stream = stream or sys.stdout
    ctx = AcceptanceContext(level)
    numbers = QUICK_SET if level == "quick" else sorted(CRITERIA)
    failures = 0
    for n in numbers:
        name, passed, details, elapsed = run_criterion(n, ctx)
        tag = "PASS" if passed else "FAIL"
        print(f"[{tag}] criterion {n:2d} {name}: {details} ({elapsed:.1f}s)",
              file=stream)
        if not passed:
            failures += 1
    if failures:
        print(f"{failures} criterion(s) failed", file=stream)
    return 1 if failures else 0
