import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from fdsynth import DiscretizationParams, ModelError, build_kernel
from fdsynth.embedded import objective_values
from fdsynth.polynomial import (
    ScaledPoly,
    build_objective_poly,
    derivative_poly,
    isolate_rational,
    isolate_roots,
    isolate_unit,
    sturm_count,
)


def from_roots(roots, lam=1.0, lead=1):
    """Scaled-basis coefficients (exact) of lead * prod(tau - r)."""
    c = [Fraction(lead)]
    for r in roots:
        r = Fraction(r)
        c = [Fraction(0)] + c
        for i in range(len(c) - 1):
            c[i] -= r * c[i + 1]
    lam_q = Fraction(lam)
    return np.array([v * math.factorial(i) / lam_q**i for i, v in enumerate(c)], dtype=object)


def test_scaled_poly_evaluation():
    # p = 2 + 3 (lam t) + 4 (lam t)^2 / 2
    p = ScaledPoly(np.array([2.0, 3.0, 4.0]), 0.5)
    t = 1.7
    u = 0.5 * t
    assert p(t) == pytest.approx(2 + 3 * u + 2 * u * u)
    assert p.expo(t) == pytest.approx(math.exp(-u) * (2 + 3 * u + 2 * u * u))
    assert p.degree == 2


def test_derivative_matches_finite_difference():
    rng = np.random.default_rng(3)
    p = ScaledPoly(rng.normal(size=12), 1.3)
    q = derivative_poly(p)
    for t in [0.1, 1.0, 4.0, 9.0]:
        h = 1e-6
        fd = (p.expo(t + h) - p.expo(t - h)) / (2 * h)
        assert q.expo(t) == pytest.approx(fd, rel=1e-5, abs=1e-8)


def test_objective_poly_identity(dpm2_c):
    c, cls = dpm2_c
    k = build_kernel(c, DiscretizationParams.from_epsilon(1e-3, 0.01, 3.0), cls)
    x = np.random.default_rng(0).uniform(0, 5, c.n)
    for s in cls.s_set:
        p = build_objective_poly(k, s, x)
        taus = np.array([0.01, 0.7, 2.2, 3.0])
        np.testing.assert_allclose(p.expo(taus), objective_values(k, s, x, taus), rtol=1e-10)


def test_objective_poly_rejects_bad_values(proto1_c):
    c, cls = proto1_c
    k = build_kernel(c, DiscretizationParams.from_epsilon(1e-2, 0.1, 3.0), cls)
    with pytest.raises(ModelError):
        build_objective_poly(k, "A", np.full(c.n, -1.0))


def test_isolate_unit_simple():
    # (3t - 1)(3t - 2) = 9t^2 - 9t + 2
    got = isolate_unit([2, -9, 9], Fraction(1, 10**6))
    assert [float(r) for r in got] == pytest.approx([1 / 3, 2 / 3], abs=1e-6)


def test_isolate_unit_endpoints_and_double_root():
    # t (t - 1) (2t - 1)^2
    poly = np.polynomial.polynomial.polymul(
        np.polynomial.polynomial.polymul([0, 1], [-1, 1]), [1, -4, 4]
    )
    got = [float(r) for r in isolate_unit([int(v) for v in poly], Fraction(1, 1000))]
    assert got[0] == 0 and got[-1] == 1
    assert any(abs(r - 0.5) <= 1e-3 for r in got)


def test_isolate_roots_double_coefficients():
    roots = [0.37, 1.9, 4.25, 7.0]
    coeffs = np.array([float(v) for v in from_roots(roots, lam=2.0)])
    rs = isolate_roots(ScaledPoly(coeffs, 2.0), (0.01, 10.0), 0.005)
    assert len(rs.roots) == 4
    np.testing.assert_allclose(rs.roots, roots, atol=0.005)


def test_isolate_roots_zero_poly():
    rs = isolate_roots(ScaledPoly(np.zeros(5), 1.0), (0.1, 1.0), 0.01)
    assert rs.is_zero_poly and rs.roots == ()


def test_isolate_roots_rejects_bad_interval():
    with pytest.raises(ModelError):
        isolate_roots(ScaledPoly(np.ones(3), 1.0), (1.0, 1.0), 0.01)


def test_isolate_roots_ignores_roots_outside():
    coeffs = from_roots([-1.0, 0.5, 30.0])
    rs = isolate_roots(ScaledPoly(coeffs, 1.0), (0.01, 20.0), 0.005)
    assert rs.roots == pytest.approx((0.5,), abs=0.005)


def test_isolate_rational():
    got = isolate_rational([Fraction(-6), Fraction(11), Fraction(-6), Fraction(1)], (0, 10), Fraction(1, 1000))
    assert [float(r) for r in got] == pytest.approx([1, 2, 3], abs=1e-3)


@settings(max_examples=40, deadline=None)
@given(
    st.lists(st.floats(-5, 5, allow_nan=False).map(lambda v: round(v, 3)), min_size=2, max_size=7),
    st.floats(0.2, 3.0),
)
def test_root_count_matches_sturm(coeffs, lam):
    p = ScaledPoly(np.array(coeffs), lam)
    assume(not p.is_zero and p.degree >= 1)
    lo, hi = 0.01, 5.0
    # skip polynomials with a root too close to either end or to another root
    pts = np.linspace(lo, hi, 20001)
    vals = p(pts)
    assume(np.all(np.abs(vals[[0, -1]]) > 1e-6))
    rs = isolate_roots(p, (lo, hi), 1e-7)
    n = sturm_count(p, (lo, hi))
    assert len(rs.roots) == n
    for r in rs.roots:
        assert abs(p(r)) <= 1e-4 * max(1.0, np.max(np.abs(vals)))


def test_sturm_count_known():
    # (t - 1)(t - 2) in monomials with lam = 1: 2 - 3t + t^2 -> scaled [2, -3, 2]
    p = ScaledPoly(np.array([2.0, -3.0, 2.0]), 1.0)
    assert sturm_count(p, (0, 1.5)) == 1
    assert sturm_count(p, (0, 3)) == 2
