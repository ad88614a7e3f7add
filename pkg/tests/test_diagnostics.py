"""Diagnostics tests: interval splitting against closed forms, the integer-K
and density bounds, report invariants on real runs, ratio invariance across a
rescaled pair, and the 3D functionals against quadrature oracles."""

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pglab import diagnostics, solver
from pglab.diagnostics import (
    DiagnosticsConfig,
    DiagnosticsError,
    SplitResult,
    diagnose,
    fit_recursion_constant,
    functionals_3d,
    gronwall_density_bound,
    k_bounds,
    k_l41,
    split_intervals,
    x_k_sequence,
)
from pglab.field import Field, TimeSeries, Torus, random_band_limited
from pglab.harness import make_rng
from pglab.solver import State

import oracles

TOR = Torus(2, 2.0 * np.pi, 32)


def flat_series(value, t_end, n=129):
    times = np.linspace(0.0, t_end, n)
    return TimeSeries(times, np.full(n, float(value)))


# ---------------------------------------------------------------------------
# Interval splitting

def test_split_flat_series_closed_form():
    # L_{4,1} of the constant 1 on width W is 4 W^{1/4}; eta = 8 pins the
    # first breakpoint at W = 16, and the remainder has norm exactly 8 too.
    res = split_intervals(flat_series(1.0, 32.0), eta=8.0)
    assert res.K == 2
    assert np.abs(res.breakpoints - np.array([0.0, 16.0, 32.0])).max() <= 1e-8
    assert np.abs(res.per_interval_norms - 8.0).max() <= 1e-8


def test_split_zero_series_is_single_interval():
    res = split_intervals(flat_series(0.0, 10.0), eta=1.0)
    assert res.K == 1
    assert res.per_interval_norms[0] == 0.0
    assert res.breakpoints[0] == 0.0 and res.breakpoints[-1] == 10.0


def test_split_generous_eta_is_single_interval():
    res = split_intervals(flat_series(1.0, 16.0), eta=100.0)
    assert res.K == 1
    assert res.per_interval_norms[0] == pytest.approx(8.0, rel=1e-12)


def test_split_rejects_nonpositive_eta():
    with pytest.raises(ValueError, match="eta"):
        split_intervals(flat_series(1.0, 1.0), eta=0.0)


@settings(max_examples=40, deadline=None)
@given(
    vals=st.lists(st.floats(0.0, 2.0), min_size=6, max_size=24),
    widths=st.lists(st.floats(0.01, 1.0), min_size=23, max_size=23),
    frac=st.floats(0.35, 1.3),
)
def test_split_invariants_on_random_steps(vals, widths, frac):
    from pglab.lorentz import LorentzExponents, lorentz_norm

    n = len(vals)
    times = np.concatenate([[0.0], np.cumsum(widths[: n - 1])])
    series = TimeSeries(times, np.array(vals))
    # eta scales with the total norm: interval count grows like (total/eta)^4,
    # so an absolute eta would explode the splitting on tall series
    total = lorentz_norm(series, LorentzExponents(4.0, 1.0))
    eta = max(frac * total, 1e-6)
    res = split_intervals(series, eta=eta)
    bp = res.breakpoints
    assert isinstance(res, SplitResult)
    assert res.K == len(bp) - 1 == len(res.per_interval_norms)
    assert bp[0] == times[0] and bp[-1] == pytest.approx(times[-1])
    assert np.all(np.diff(bp) >= 0)
    assert np.all(res.per_interval_norms <= eta * (1.0 + 1e-6) + 1e-9)
    # every interval but the remainder is pinned to eta
    assert np.all(np.abs(res.per_interval_norms[:-1] - eta) <= 1e-6 * eta)


# ---------------------------------------------------------------------------
# Closed-form bounds

def test_k_bounds_values():
    assert k_bounds(10.0, 2.0) == 3
    assert k_bounds(0.0, 1.0) == 1
    assert k_bounds(4.0, 2.0) == 1
    with pytest.raises(ValueError):
        k_bounds(-1.0, 1.0)
    with pytest.raises(ValueError):
        k_bounds(1.0, 0.0)


def test_k_l41_values():
    assert k_l41(1.0, 1.0, 1.0, 0.0, 1.0) == 3
    assert k_l41(0.0, 0.0, 1.0, 0.0, 1.0) == 1
    assert k_l41(1.0, 0.0, 5.0, 1.0, 2.0) == math.floor(2.0 * math.e**2) + 1
    with pytest.raises(ValueError):
        k_l41(-1.0, 0.0, 1.0, 0.0, 1.0)


def test_gronwall_density_bound_values():
    assert gronwall_density_bound(0.0, 0.3) == pytest.approx(0.3)
    assert gronwall_density_bound(math.log(1.1), 0.05) == pytest.approx(0.155)
    # monotone in both arguments
    assert gronwall_density_bound(0.5, 0.1) < gronwall_density_bound(0.6, 0.1)
    assert gronwall_density_bound(0.5, 0.1) < gronwall_density_bound(0.5, 0.2)
    # small-threshold regime: I, a0 <= c keeps the bound ~ 2c
    c = 0.01
    assert gronwall_density_bound(c, c) <= 2.1 * c
    with pytest.raises(ValueError):
        gronwall_density_bound(-0.1, 0.0)


def test_fit_recursion_constant():
    assert fit_recursion_constant(np.array([]), 1.0) == 0.0
    assert fit_recursion_constant(np.array([2.0, 3.0]), 1.0) == pytest.approx(2.0)
    assert fit_recursion_constant(np.array([0.5, 4.5]), 1.0) == pytest.approx(3.0)


# ---------------------------------------------------------------------------
# Reports on real runs

def compressive_state(torus=TOR, mu=0.5):
    x = torus.grid()
    rho = Field(torus, (1.0 + 0.08 * np.cos(x[0]))[None])
    u = Field(
        torus,
        np.stack(
            [0.35 * np.sin(x[0]) + 0.1 * np.cos(x[1]), 0.2 * np.sin(x[0] + x[1])]
        ),
    )
    return State(0.0, rho, u, mu)


@pytest.fixture(scope="module")
def quick_run():
    return solver.run(compressive_state(), 0.2, 4e-3)


def test_report_invariants_2d(quick_run):
    rep = diagnose(quick_run)
    assert rep.dim == 2 and rep.mu == 0.5 and rep.mu_prime == 0.0
    assert rep.energy_budget_residual <= 1e-5
    assert 1 <= rep.K_energy <= rep.K_energy_bound
    assert rep.K_L41 >= 1
    assert rep.rho_deviation_max <= rep.gronwall_bound + 1e-6
    assert set(rep.inequality_ratios) == {"step4", "w12"}
    for v in rep.inequality_ratios.values():
        assert np.isfinite(v) and v >= 0.0
    assert rep.x_k is not None and len(rep.x_k) == rep.K_L41
    assert rep.x_k_fitted_C >= 0.0
    assert rep.Xi is None and rep.Psi is None and rep.Pi is None


def test_report_default_thresholds_follow_k_target(quick_run):
    from pglab.lorentz import LorentzExponents, lorentz_norm

    rep = diagnose(quick_run, DiagnosticsConfig(k_target=8))
    grad_total = lorentz_norm(
        TimeSeries(quick_run.times, quick_run.monitor("grad_u_L2")),
        LorentzExponents(2.0, 2.0),
    )
    u4_total = lorentz_norm(
        TimeSeries(quick_run.times, quick_run.monitor("u_L4")),
        LorentzExponents(4.0, 1.0),
    )
    assert rep.eta_grad == pytest.approx(grad_total / math.sqrt(8.0), rel=1e-12)
    assert rep.eta_L4 == pytest.approx(u4_total * 8.0**-0.25, rel=1e-12)


def test_report_honors_config_overrides(quick_run):
    cfg = DiagnosticsConfig(C_cal=2.5, eta_grad=0.321, eta_L4=0.654)
    rep = diagnose(quick_run, cfg)
    assert rep.C_cal == 2.5
    assert rep.eta_grad == 0.321 and rep.eta_L4 == 0.654


def test_report_serialization(quick_run):
    rep = diagnose(quick_run)
    d = json.loads(rep.to_json())
    assert d["constants"] == {"C_cal": 1.0, "note": "empirical"}
    assert len(d["x_k"]) == rep.K_L41
    assert "Xi" not in d
    cols = [k for k, _ in rep.csv_items()]
    assert len(cols) == len(set(cols))
    assert "ratio_step4" in cols and "ratio_w12" in cols and "Xi" not in cols


def test_x_k_sequence_matches_report(quick_run):
    rep = diagnose(quick_run)
    split = split_intervals(
        TimeSeries(quick_run.times, quick_run.monitor("u_L4")), rep.eta_L4
    )
    xk = x_k_sequence(quick_run, split.breakpoints)
    assert np.allclose(xk, rep.x_k, rtol=1e-12)
    assert np.all(xk >= 0.0)


def test_ratios_identical_across_rescaled_pair():
    """A run and its exactly rescaled twin (power-of-two factor) produce the
    same inequality ratios because everything is computed in the
    unit-viscosity frame."""
    lam = 4.0
    tor = Torus(2, 2.0 * np.pi, 16)
    base_state = compressive_state(tor, mu=1.0)
    twin_state = State(
        0.0,
        base_state.rho,
        Field(tor, lam * base_state.u.values),
        lam,
    )
    T, dt = 0.2, 5e-3
    base = solver.run(base_state, T, dt)
    twin = solver.run(twin_state, T / lam, dt / lam)
    ra = diagnose(base).inequality_ratios
    rb = diagnose(twin).inequality_ratios
    assert set(ra) == set(rb)
    for k in ra:
        assert abs(ra[k] - rb[k]) <= 1e-9 * max(abs(ra[k]), abs(rb[k]), 1e-300), k


# ---------------------------------------------------------------------------
# 3D functionals

TOR3 = Torus(3, 2.0 * np.pi, 8)


def fake_3d_trajectory(times, monitors):
    u = Field(TOR3, np.zeros((3,) + TOR3.shape))
    rho = Field(TOR3, np.ones((1,) + TOR3.shape))
    st = State(0.0, rho, u, 1.0)
    return solver.Trajectory(
        initial=st, final=st, times=times, monitors=monitors,
        dt=float(times[1] - times[0]),
    )


def test_functionals_3d_rejects_2d(quick_run):
    with pytest.raises(DiagnosticsError, match="3D"):
        functionals_3d(quick_run)


def test_functionals_3d_zero_run():
    dt = 0.02
    st = State(
        0.0,
        Field(TOR3, np.ones((1,) + TOR3.shape)),
        Field(TOR3, np.zeros((3,) + TOR3.shape)),
        1.0,
    )
    traj = solver.run(st, 0.04, dt)
    assert functionals_3d(traj) == (0.0, 0.0, 0.0)


def test_functionals_3d_against_oracles():
    """Feed analytically known exponential monitor series through the 3D
    functional assembly and compare with (a) the quadrature oracle on the
    same step data and (b) the continuum incomplete-gamma closed form."""
    dt = 1e-3
    times = np.arange(0.0, 1.0 + dt / 2, dt)
    spec = {
        "u_B6o5_5o2_1": (1.3, 0.8),
        "hess_u_L5o2": (0.7, 1.1),
        "ut_L5o2": (0.4, 0.9),
        "u_B3o5_10o7_1": (0.9, 0.6),
        "hess_u_L10o7": (0.5, 1.3),
        "ut_L10o7": (0.3, 0.7),
        "u_B7o5_10o3_1": (1.1, 0.8),
        "hess_u_L10o3": (0.6, 1.2),
        "ut_L10o3": (0.2, 1.0),
        "tut_L10o3": (0.2, 1.0),
    }
    monitors = {k: a * np.exp(-lam * times) for k, (a, lam) in spec.items()}
    traj = fake_3d_trajectory(times, monitors)
    Xi, Psi, Pi = functionals_3d(traj)

    def quad_tn(name, q):
        return oracles.lorentz_norm_quad(TimeSeries(times, monitors[name]), q, 1.0)

    Xi_quad = monitors["u_B6o5_5o2_1"].max() + quad_tn("hess_u_L5o2", 2.5) + quad_tn("ut_L5o2", 2.5)
    Psi_quad = (monitors["u_B3o5_10o7_1"].max() + quad_tn("hess_u_L10o7", 10.0 / 7.0)
                + quad_tn("ut_L10o7", 10.0 / 7.0))
    assert Xi == pytest.approx(Xi_quad, rel=1e-9)
    assert Psi == pytest.approx(Psi_quad, rel=1e-9)

    def gamma_tn(name, q):
        a, lam = spec[name]
        return oracles.exp_decay_time_norm(a, lam, 1.0, q)

    Xi_cont = 1.3 + gamma_tn("hess_u_L5o2", 2.5) + gamma_tn("ut_L5o2", 2.5)
    Psi_cont = 0.9 + gamma_tn("hess_u_L10o7", 10.0 / 7.0) + gamma_tn("ut_L10o7", 10.0 / 7.0)
    assert Xi == pytest.approx(Xi_cont, rel=2e-3)
    assert Psi == pytest.approx(Psi_cont, rel=2e-3)

    # Pi uses the time-weighted series; check it against the oracle assembly
    t_b75 = TimeSeries(times, times * monitors["u_B7o5_10o3_1"])
    t_h103 = TimeSeries(times, times * monitors["hess_u_L10o3"])
    Pi_quad = (float((times * monitors["u_B7o5_10o3_1"]).max())
               + oracles.lorentz_norm_quad(t_h103, 10.0 / 3.0, 1.0)
               + oracles.lorentz_norm_quad(TimeSeries(times, monitors["tut_L10o3"]), 10.0 / 3.0, 1.0))
    assert Pi == pytest.approx(Pi_quad, rel=1e-9)
    assert t_b75.samples.max() > 0  # weighted series genuinely nonzero


def test_diagnose_3d_quick_run():
    u0 = random_band_limited(TOR3, make_rng(31), kmax=2, ncomp=3)
    st = State(0.0, Field(TOR3, np.ones((1,) + TOR3.shape)), u0, 1.0)
    traj = solver.run(st, 0.04, 0.02)
    rep = diagnose(traj)
    assert rep.dim == 3
    assert rep.Xi is not None and rep.Xi > 0.0
    assert rep.Psi is not None and rep.Pi is not None
    assert rep.x_k is None and rep.x_k_fitted_C is None
    assert set(rep.inequality_ratios) == {"t9", "t16", "t18"}
    d = rep.to_dict()
    assert d["Xi"] == rep.Xi
    cols = [k for k, _ in rep.csv_items()]
    assert "Xi" in cols and "Psi" in cols and "Pi" in cols
