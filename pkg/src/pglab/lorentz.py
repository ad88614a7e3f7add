"""Lorentz quasi-norms for fields (in space) and time series (in time).

The L_{p,r} quasi-norm is computed from the empirical distribution function,
which for grid fields and step-function time series is piecewise constant.
The layer-cake integral

    ||f||_{p,r} = p^{1/r} ( int_0^inf (s |{|f|>s}|^{1/p})^r ds/s )^{1/r}

then has a closed form: with distinct values v_1 < ... < v_n and
M_i = measure{|f| >= v_i},

    ||f||^r = (p/r) * sum_i M_i^{r/p} (v_i^r - v_{i-1}^r),    v_0 = 0,

and the r = inf norm is sup_i v_i M_i^{1/p}.  No quadrature error enters, so
tight tolerances in the calculus checks (Hoelder, power identity, L_{p,p} =
L_p) are meaningful.  Boundary exponents follow the usual convention: (1,1)
and (inf,inf) are the only admissible pairs with p on the boundary.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .field import Field, TimeSeries


@dataclass(frozen=True)
class LorentzExponents:
    p: float
    r: float

    def __post_init__(self):
        p, r = self.p, self.r
        if not (p >= 1):
            raise ValueError(f"p must be >= 1 or inf, got {p}")
        if not (r >= 1):
            raise ValueError(f"r must be >= 1 or inf, got {r}")
        if p == 1 and r != 1:
            raise ValueError(f"p=1 admits only r=1, got r={r}")
        if np.isinf(p) and not np.isinf(r):
            raise ValueError(f"p=inf admits only r=inf, got r={r}")


def as_exponents(e) -> LorentzExponents:
    if isinstance(e, LorentzExponents):
        return e
    p, r = e
    return LorentzExponents(float(p), float(r))


@dataclass(frozen=True)
class DistributionFunction:
    """Empirical distribution of |f|.

    ``thresholds`` holds the distinct positive values v_i in increasing
    order; ``measures[i]`` is measure{|f| >= v_i}, i.e. the value of
    |{|f| > s}| for s just below v_i.  A function vanishing a.e. has empty
    arrays.
    """

    thresholds: np.ndarray
    measures: np.ndarray
    total_measure: float

    def __post_init__(self):
        if np.any(np.diff(self.thresholds) <= 0):
            raise ValueError("thresholds must be strictly increasing")
        if np.any(np.diff(self.measures) > 0):
            raise ValueError("measures must be nonincreasing")
        if self.measures.size and self.measures[0] > self.total_measure * (1 + 1e-12):
            raise ValueError("measures exceed total domain measure")


def _dist_from_values(values, weights, total) -> DistributionFunction:
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size == 0:
        raise ValueError("empty input: nothing to take a distribution of")
    pos = values > 0
    values = values[pos]
    if np.isscalar(weights):
        v, counts = np.unique(values, return_counts=True)
        w = counts * float(weights)
    else:
        weights = np.asarray(weights, dtype=np.float64).ravel()[pos]
        v, inverse = np.unique(values, return_inverse=True)
        w = np.bincount(inverse, weights=weights, minlength=v.size)
    # tail-sum the aggregated weights: M_i = sum_{j >= i} w_j
    M = np.cumsum(w[::-1])[::-1]
    return DistributionFunction(v, M, float(total))


def distribution(f) -> DistributionFunction:
    """Empirical distribution of a Field (cell measure) or TimeSeries (step widths)."""
    if isinstance(f, Field):
        return _dist_from_values(f.magnitude(), f.torus.cell_volume, f.torus.volume)
    if isinstance(f, TimeSeries):
        if len(f) < 2:
            raise ValueError("time series needs at least two sample times")
        return _dist_from_values(
            np.abs(f.step_values()), f.step_widths(), f.t1 - f.t0
        )
    raise TypeError(f"cannot take a distribution of {type(f).__name__}")


def _norm_from_dist(dist: DistributionFunction, e: LorentzExponents) -> float:
    v, M = dist.thresholds, dist.measures
    if v.size == 0:
        return 0.0
    p, r = e.p, e.r
    if np.isinf(p):
        return float(v[-1])
    if np.isinf(r):
        return float(np.max(v * M ** (1.0 / p)))
    vr = v**r
    prev = np.concatenate(([0.0], vr[:-1]))
    return float(((p / r) * np.sum(M ** (r / p) * (vr - prev))) ** (1.0 / r))


def lorentz_norm(f, e) -> float:
    """L_{p,r} quasi-norm of a Field or TimeSeries."""
    return _norm_from_dist(distribution(f), as_exponents(e))


def embedding_constant(p: float, r1: float, r2: float) -> float:
    """Constant in ||f||_{p,r2} <= c(p,r1,r2) ||f||_{p,r1} for r1 <= r2.

    With the p^{1/r} normalization the constant is (r1/p)^{1/r1 - 1/r2};
    it is <= 1 whenever r1 <= p, in which regime the embedding is genuinely
    monotone.
    """
    if r1 > r2:
        raise ValueError(f"embedding needs r1 <= r2, got {r1} > {r2}")
    if np.isinf(r1):
        return 1.0
    inv2 = 0.0 if np.isinf(r2) else 1.0 / r2
    return float((r1 / p) ** (1.0 / r1 - inv2))


def _inv(x: float) -> float:
    return 0.0 if np.isinf(x) else 1.0 / x


def holder_check(f: Field, g: Field, p, p1, p2, r, r1, r2) -> float:
    """Ratio ||fg||_{p,r} / (||f||_{p1,r1} ||g||_{p2,r2}).

    The exponent relations 1/p = 1/p1 + 1/p2 and 1/r = 1/r1 + 1/r2 are
    required to 1e-12.  The product is taken between pointwise magnitudes,
    which for scalar fields coincides with |f g|.  Returns 0 for zero input
    (the inequality is vacuous there).
    """
    if abs(_inv(p) - _inv(p1) - _inv(p2)) > 1e-12:
        raise ValueError(f"1/{p} != 1/{p1} + 1/{p2}")
    if abs(_inv(r) - _inv(r1) - _inv(r2)) > 1e-12:
        raise ValueError(f"1/{r} != 1/{r1} + 1/{r2}")
    if g.torus != f.torus:
        raise ValueError("fields live on different tori")
    prod = Field(f.torus, f.magnitude() * g.magnitude())
    denom = lorentz_norm(f, (p1, r1)) * lorentz_norm(g, (p2, r2))
    if denom == 0:
        return 0.0
    return lorentz_norm(prod, (p, r)) / denom


def power_identity_check(f: Field, alpha: float, p, r):
    """Both sides of ||f^alpha||_{p,r} = ||f||^alpha_{p*alpha, r*alpha}.

    Requires a nonnegative scalar field and admissible exponents on both
    sides; returns the pair (lhs, rhs).
    """
    if f.ncomp != 1:
        raise ValueError("power identity is for scalar fields")
    if np.any(f.values < 0):
        raise ValueError("f must be nonnegative")
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    as_exponents((p, r))
    as_exponents((p * alpha, r * alpha))
    lhs = lorentz_norm(Field(f.torus, f.values[0] ** alpha), (p, r))
    rhs = lorentz_norm(f, (p * alpha, r * alpha)) ** alpha
    return lhs, rhs
