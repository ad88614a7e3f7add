import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pglab.field import Field, TimeSeries, Torus, lp_norm, random_band_limited
from pglab.harness import make_rng
from pglab.lorentz import (
    DistributionFunction,
    LorentzExponents,
    distribution,
    embedding_constant,
    holder_check,
    lorentz_norm,
    power_identity_check,
)

from oracles import lorentz_norm_quad

TOR = Torus(2, 8.0, 16)  # cell measure 0.25, volume 64


def indicator(measure):
    """Indicator of a set of the requested measure on TOR (measure in units of
    whole cells)."""
    ncells = round(measure / TOR.cell_volume)
    vals = np.zeros(TOR.npoints)
    vals[:ncells] = 1.0
    return Field(TOR, vals.reshape(TOR.shape))


def step_series(samples):
    t = np.arange(len(samples) + 1, dtype=float)
    return TimeSeries(t, np.concatenate([samples, [samples[-1]]]))


# ---------------------------------------------------------------------------
# Exponent admissibility

@pytest.mark.parametrize("p,r", [(1.0, 1.0), (np.inf, np.inf), (2.0, 1.0),
                                 (4.0 / 3.0, 1.0), (2.0, np.inf)])
def test_admissible_exponents(p, r):
    LorentzExponents(p, r)


@pytest.mark.parametrize("p,r", [(1.0, 2.0), (np.inf, 2.0), (0.5, 1.0), (2.0, 0.5)])
def test_inadmissible_exponents(p, r):
    with pytest.raises(ValueError):
        LorentzExponents(p, r)


# ---------------------------------------------------------------------------
# Distribution function

def test_distribution_indicator():
    d = distribution(indicator(16.0))
    np.testing.assert_allclose(d.thresholds, [1.0])
    np.testing.assert_allclose(d.measures, [16.0])
    assert d.total_measure == 64.0


def test_distribution_three_levels():
    # values 1, 2, 3 each on measure 1: |{|f|>s}| = 3, 2, 1 below each level
    vals = np.zeros(TOR.npoints)
    vals[0:4] = 1.0
    vals[4:8] = 2.0
    vals[8:12] = 3.0
    d = distribution(Field(TOR, vals.reshape(TOR.shape)))
    np.testing.assert_allclose(d.thresholds, [1.0, 2.0, 3.0])
    np.testing.assert_allclose(d.measures, [3.0, 2.0, 1.0])


def test_distribution_zero_field():
    d = distribution(Field(TOR, np.zeros(TOR.shape)))
    assert d.thresholds.size == 0
    assert lorentz_norm(Field(TOR, np.zeros(TOR.shape)), (2.0, 1.0)) == 0.0


def test_distribution_invariants_enforced():
    with pytest.raises(ValueError):
        DistributionFunction(np.array([2.0, 1.0]), np.array([2.0, 1.0]), 10.0)
    with pytest.raises(ValueError):
        DistributionFunction(np.array([1.0, 2.0]), np.array([1.0, 2.0]), 10.0)
    with pytest.raises(ValueError):
        DistributionFunction(np.array([1.0]), np.array([20.0]), 10.0)


def test_distribution_rejects_unknown_type():
    with pytest.raises(TypeError):
        distribution([1, 2, 3])


# ---------------------------------------------------------------------------
# Closed forms: indicator norms are (p/r)^{1/r} |A|^{1/p}

@pytest.mark.parametrize("p,r,expected", [
    (4.0, 1.0, 8.0),                       # 4 * 16^{1/4}
    (1.0, 1.0, 16.0),                      # plain L1
    (np.inf, np.inf, 1.0),
    (2.0, 1.0, 8.0),                       # 2 * 16^{1/2}
    (4.0 / 3.0, 1.0, (4.0 / 3.0) * 16.0 ** 0.75),
])
def test_indicator_closed_forms(p, r, expected):
    assert abs(lorentz_norm(indicator(16.0), (p, r)) - expected) <= 1e-12 * expected


def test_generic_indicator_formula():
    f = indicator(9.0)
    for p, r in [(2.5, 1.5), (4.0, 2.0), (10.0 / 3.0, 1.0)]:
        expected = (p / r) ** (1.0 / r) * 9.0 ** (1.0 / p)
        assert abs(lorentz_norm(f, (p, r)) - expected) <= 1e-12 * expected


# ---------------------------------------------------------------------------
# Property tests

@settings(max_examples=40, deadline=None)
@given(
    samples=st.lists(st.floats(0.0, 8.0), min_size=1, max_size=24),
    p=st.sampled_from([4.0 / 3.0, 2.0, 2.5, 10.0 / 3.0, 4.0]),
)
def test_lpp_equals_lp_on_step_functions(samples, p):
    ts = step_series(np.array(samples))
    lp = (np.sum(np.abs(ts.step_values()) ** p * ts.step_widths())) ** (1.0 / p)
    got = lorentz_norm(ts, (p, p))
    assert abs(got - lp) <= 1e-10 * max(lp, 1e-30)


@pytest.mark.parametrize("p", [4.0 / 3.0, 2.0, 2.5, 10.0 / 3.0, 4.0])
def test_lpp_equals_lp_on_fields(p):
    f = random_band_limited(TOR, make_rng(5), kmax=5)
    assert abs(lorentz_norm(f, (p, p)) - lp_norm(f, p)) <= 1e-10 * lp_norm(f, p)


@settings(max_examples=40, deadline=None)
@given(
    samples=st.lists(st.floats(0.0, 4.0), min_size=1, max_size=16),
    c=st.floats(0.25, 64.0),
)
def test_quasi_norm_scaling(samples, c):
    ts = step_series(np.array(samples))
    base = lorentz_norm(ts, (2.0, 1.0))
    scaled = lorentz_norm(ts.scaled(1.0, c), (2.0, 1.0))
    assert abs(scaled - c * base) <= 1e-12 * max(c * base, 1e-30)


@settings(max_examples=30, deadline=None)
@given(
    samples=st.lists(st.floats(0.0, 4.0), min_size=1, max_size=16),
    exps=st.sampled_from([
        (4.0, 1.0, 2.0), (4.0, 2.0, 4.0), (4.0, 1.0, np.inf),
        (2.5, 1.0, 2.0), (2.0, 1.0, 2.0), (2.0, 2.0, np.inf),
    ]),
)
def test_r_monotone_in_regime_r1_below_p(samples, exps):
    # ||f||_{p,r2} <= ||f||_{p,r1} whenever r1 <= r2 and r1 <= p: the sharp
    # embedding constant (r1/p)^{1/r1-1/r2} is <= 1 exactly in that regime
    p, r1, r2 = exps
    ts = step_series(np.array(samples))
    n1 = lorentz_norm(ts, (p, r1))
    n2 = lorentz_norm(ts, (p, r2))
    assert n2 <= n1 + 1e-10
    assert n2 <= embedding_constant(p, r1, r2) * n1 + 1e-10


def test_embedding_constant_edges():
    assert embedding_constant(4.0, 2.0, 2.0) == 1.0
    assert embedding_constant(4.0, np.inf, np.inf) == 1.0
    assert embedding_constant(4.0, 1.0, np.inf) == 0.25
    with pytest.raises(ValueError):
        embedding_constant(4.0, 2.0, 1.0)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), alpha=st.sampled_from([2.0, 3.0, 0.5]))
def test_power_identity(seed, alpha):
    f = random_band_limited(TOR, make_rng(seed), kmax=5)
    f = Field(TOR, np.abs(f.values[0]))
    p, r = (2.0, 2.0) if alpha >= 1 else (4.0, 2.0)
    lhs, rhs = power_identity_check(f, alpha, p, r)
    assert abs(lhs - rhs) <= 1e-10 * max(lhs, 1e-30)


def test_power_identity_alpha_one_and_rejections():
    f = indicator(16.0)
    lhs, rhs = power_identity_check(f, 1.0, 2.0, 1.0)
    assert lhs == rhs
    with pytest.raises(ValueError):
        power_identity_check(Field(TOR, -np.ones(TOR.shape)), 2.0, 2.0, 1.0)
    with pytest.raises(ValueError):
        power_identity_check(f, -1.0, 2.0, 1.0)


def test_power_identity_indicator_closed_form():
    lhs, rhs = power_identity_check(indicator(16.0), 2.0, 2.0, 1.0)
    assert abs(lhs - 8.0) <= 1e-12
    assert abs(rhs - 8.0) <= 1e-12


# ---------------------------------------------------------------------------
# Quadrature oracle

@pytest.mark.parametrize("p,r", [(4.0, 1.0), (4.0 / 3.0, 1.0), (2.0, 2.0),
                                 (2.5, 1.5), (3.0, np.inf)])
def test_against_quadrature_oracle_field(p, r):
    f = random_band_limited(TOR, make_rng(11), kmax=6)
    ref = lorentz_norm_quad(f, p, r)
    assert abs(lorentz_norm(f, (p, r)) - ref) <= 1e-9 * max(ref, 1e-30)


@pytest.mark.parametrize("p,r", [(4.0, 1.0), (2.0, 1.0), (10.0 / 3.0, 2.0)])
def test_against_quadrature_oracle_series(p, r):
    rng = make_rng(13)
    t = np.concatenate([[0.0], np.cumsum(rng.uniform(0.05, 0.4, 25))])
    s = rng.uniform(0.0, 3.0, 26)
    ts = TimeSeries(t, s)
    ref = lorentz_norm_quad(ts, p, r)
    assert abs(lorentz_norm(ts, (p, r)) - ref) <= 1e-9 * max(ref, 1e-30)


def test_constant_series_closed_form():
    # U == c on [0, T]: L_{4,1} norm is 4 c T^{1/4}
    ts = TimeSeries([0.0, 16.0], [3.0, 3.0])
    assert abs(lorentz_norm(ts, (4.0, 1.0)) - 4.0 * 3.0 * 2.0) <= 1e-12


def test_rinf_is_sup_form():
    f = indicator(16.0)
    assert abs(lorentz_norm(f, (4.0, np.inf)) - 16.0 ** 0.25) <= 1e-12


# ---------------------------------------------------------------------------
# Hoelder

def test_holder_indicator_unit_ratio():
    f = indicator(16.0)
    ratio = holder_check(f, f, 2.0, 4.0, 4.0, 1.0, 2.0, 2.0)
    assert abs(ratio - 1.0) <= 1e-12


def test_holder_with_constant_multiplier():
    f = indicator(16.0)
    g = Field(TOR, np.ones(TOR.shape))
    ratio = holder_check(f, g, 4.0, 4.0, np.inf, 1.0, 1.0, np.inf)
    assert abs(ratio - 1.0) <= 1e-12


def test_holder_rejects_bad_exponents():
    f = indicator(16.0)
    with pytest.raises(ValueError):
        holder_check(f, f, 2.0, 4.0, 3.0, 1.0, 2.0, 2.0)
    with pytest.raises(ValueError):
        holder_check(f, f, 2.0, 4.0, 4.0, 1.0, 2.0, 3.0)


def test_holder_zero_input():
    z = Field(TOR, np.zeros(TOR.shape))
    assert holder_check(z, z, 2.0, 4.0, 4.0, 1.0, 2.0, 2.0) == 0.0


def test_holder_corpus_bounded():
    # the implicit constant is not known a priori; record the corpus max and
    # keep a generous sanity ceiling so a broken implementation still trips
    rng = make_rng(17)
    worst = 0.0
    for _ in range(20):
        f = random_band_limited(TOR, rng, kmax=6)
        g = random_band_limited(TOR, rng, kmax=4)
        worst = max(worst, holder_check(f, g, 2.0, 4.0, 4.0, 1.0, 2.0, 2.0))
    assert np.isfinite(worst)
    assert worst < 10.0, f"Hoelder corpus ratio blew up: {worst}"
