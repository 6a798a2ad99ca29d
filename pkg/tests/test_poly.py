import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from framewave.poly import GaussPoly, Poly, RadPoly, measure_order, random_poly


def test_basic_arithmetic_and_diff():
    t, x1 = Poly.var(0), Poly.var(1)
    p = t * x1
    assert p.diff(0) == x1
    assert p.diff(1) == t
    assert (p - p).is_zero()
    assert (p * 0).is_zero()
    assert p.degree() == 2
    q = (t + 1) * (t - 1)
    assert q == t * t - 1


def test_eval_matches_horner(rng):
    p = random_poly(rng, degree=3, nterms=6)
    pts = rng.uniform(-2, 2, size=(50, 4))
    vals = p.eval_many(pts)
    for k in range(50):
        expected = sum(
            float(c) * np.prod([pts[k, a] ** e for a, e in enumerate(key)])
            for key, c in p.c.items()
        )
        assert vals[k] == pytest.approx(expected, rel=1e-13, abs=1e-13)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), mu=st.integers(0, 3), nu=st.integers(0, 3))
def test_mixed_partials_commute_exactly(seed, mu, nu):
    p = random_poly(np.random.default_rng(seed), degree=4, nterms=6)
    assert (p.diff(mu).diff(nu) - p.diff(nu).diff(mu)).is_zero()


def test_radpoly_radial_derivatives(rng):
    # d_i (x_j / r) against high-accuracy finite differences
    pts = rng.uniform(0.5, 2.0, size=(20, 4))
    for j in (1, 2, 3):
        f = RadPoly({(1, 0, 0): Poly.var(j)})
        for i in (1, 2, 3):
            df = f.diff(i)
            h = 1e-5
            for pt in pts:
                up, dn = pt.copy(), pt.copy()
                up[i] += h
                dn[i] -= h
                fd = (f(up) - f(dn)) / (2 * h)
                assert df(pt) == pytest.approx(fd, rel=1e-7, abs=1e-9)


def test_radpoly_ring_closure(rng):
    a = RadPoly({(1, 1, 0): random_poly(rng, degree=2, nterms=3)})
    b = RadPoly({(0, 1, 1): random_poly(rng, degree=1, nterms=2)})
    prod = a * b
    assert set(prod.terms) <= {(1, 2, 1)}
    s = a + b
    pts = rng.uniform(0.6, 2.0, size=(10, 4))
    assert np.allclose(s.eval_many(pts), a.eval_many(pts) + b.eval_many(pts))
    d = prod.diff(2)
    h = 1e-5
    pt = np.array([1.0, 1.1, 0.9, 1.3])
    up, dn = pt.copy(), pt.copy()
    up[2] += h
    dn[2] -= h
    assert d(pt) == pytest.approx((prod(up) - prod(dn)) / (2 * h), rel=1e-6)


def test_gausspoly_closed_under_diff():
    g = GaussPoly(Poly.var(0) + 2, center=(0.5, 0.0, -0.5), sigma=1.3)
    h = 1e-5
    pt = np.array([0.7, 0.4, -0.2, 0.3])
    for mu in range(4):
        up, dn = pt.copy(), pt.copy()
        up[mu] += h
        dn[mu] -= h
        fd = (g(up) - g(dn)) / (2 * h)
        assert g.diff(mu)(pt) == pytest.approx(fd, rel=1e-8, abs=1e-10)


def test_gausspoly_envelope_mismatch_rejected():
    a = GaussPoly(Poly.var(1), sigma=1.0)
    b = GaussPoly(Poly.var(1), sigma=2.0)
    with pytest.raises(ValueError):
        a + b


def test_measure_order():
    hs = [0.1, 0.05, 0.025]
    errs = [h ** 2 for h in hs]
    assert measure_order(hs, errs) == pytest.approx(2.0, abs=1e-10)
