import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from enscond import geometry as g
from enscond.errors import OutsideCone, WrongSector
from enscond.spectrum import build_spectrum


def test_locate_sector(S8):
    assert g.locate_sector(S8, (1.5, 1)).label() == "D2"
    assert g.locate_sector(S8, (3, 1)).label() == "R3"
    assert g.locate_sector(S8, (0, 0)).label() == "apex"
    with pytest.raises(OutsideCone):
        g.locate_sector(S8, (5, 1))
    with pytest.raises(OutsideCone):
        g.locate_sector(S8, (0.5, 1))


def test_vertex_set_five_pairs(S10):
    vs = g.vertex_set(S10, (3.5, 1))
    got = {(vx.kind, vx.indices) for vx in vs.vertices}
    assert got == {("t1", (4,)), ("t1", (5,)), ("t2", (4,)), ("t2", (5,)), ("sigma", (3, 4)), ("sigma", (3, 5))}
    assert vs.t1[4] == pytest.approx(10 / 3)
    assert vs.alpha[(3, 4)] == pytest.approx(1.5)
    assert vs.beta[(4, 3)] == pytest.approx(2.0)
    # every vertex saturates the constraints it claims
    mf = np.array(S10.mu[2:])
    for vx in vs.vertices:
        p = vx.point
        assert np.all(p >= -1e-12)
        if "l1" in vx.active:
            assert p @ (1 - 1 / mf) == pytest.approx(3.5 - 1)
        if "l2" in vx.active:
            assert p @ (1 - 2 / mf) == pytest.approx(3.5 - 2)


def test_vertex_set_needs_upper_sector(S8):
    with pytest.raises(WrongSector):
        g.vertex_set(S8, (1.5, 1))
    with pytest.raises(WrongSector):
        g.vertex_set(S8, (3, 1))


@pytest.mark.parametrize("w, want", [((1.5, 1), 0.25), ((2.5, 1), 1.5), ((1, 1), 0.0), ((0, 0), 0.0)])
def test_closed_form_values(S8, w, want):
    assert g.volume_closed_form(S8, w).value == pytest.approx(want, abs=1e-15)


def test_closed_form_rejects_upper_sectors(S8):
    with pytest.raises(WrongSector):
        g.volume_closed_form(S8, (3.5, 1))


def test_lawrence_matches_closed_form(S8, S16):
    assert g.volume_lawrence(S8, (2.5, 1)).value == pytest.approx(1.5, rel=1e-12)
    for s in (S8, S16):
        for x in np.linspace(1.01, s.mu[2] - 0.01, 7):
            cf = g.volume_closed_form(s, (x, 1)).value
            vs = g.volume_lawrence(s, (x, 1), dispatch=False)
            assert vs.method == "lawrence"
            assert vs.value == pytest.approx(cf, rel=1e-8)


@pytest.mark.parametrize("mu", [[1, 2, 3, 4, 5], [1, 2, 3, 4, 5, 6, 7, 8], [1, 1.3, 2.2, 2.5, 4, 7.5]])
def test_lawrence_independent_of_functional(mu):
    s = build_spectrum({"mu": mu})
    for x in np.linspace(1.05, s.lam_max - 0.05, 9):
        a = g.volume_lawrence(s, (x, 1), f_seed=0, dispatch=False).value
        b = g.volume_lawrence(s, (x, 1), f_seed=7, dispatch=False).value
        assert a == pytest.approx(b, rel=1e-9)


def test_rejection_mc(S8, S10):
    est = g.volume_mc(S8, (1.5, 1), 10**6, seed=1)
    assert abs(est.value - 0.25) <= 3 * est.stderr
    assert g.volume_mc(S8, (1, 1), 1000).value == 0.0
    est = g.volume_mc(S10, (3.5, 1), 10**6, seed=2)
    assert abs(est.value - g.volume(S10, (3.5, 1))) <= 3 * est.stderr


def test_reduced_volumes(S8):
    assert g.reduced_volume(S8, 3, (1.5, 1)).value == pytest.approx(2 / 3)
    assert g.reduced_volume(S8, 4, (1.5, 1)).value == pytest.approx(0.75)
    assert g.reduced_volume(S8, 3, (2, 2)).value == 0.0


def test_slicing_recovers_volume(S10, S16):
    for s in (S10, S16):
        for x in np.linspace(1.1, s.lam_max - 0.1, 6):
            V = g.volume(s, (x, 1))
            for i0 in range(3, s.n + 1):
                assert g.slice_integral(s, i0, (x, 1)) == pytest.approx(V, rel=1e-10)


def test_barycenter_on_lowest_sector(S8, S16):
    for s in (S8, S16):
        mu = np.asarray(s.mu[2:])
        for x in (1.2, 1.5, 1.9):
            want = (x - 1) / ((s.n - 1) * (1 - 1 / mu))
            np.testing.assert_allclose(g.barycenter(s, (x, 1)), want, rtol=1e-10)


def test_barycenter_against_sampling(S10):
    mean, se, hits = g.barycenter_mc(S10, (3.5, 1), 10**6, seed=3)
    exact = g.barycenter(S10, (3.5, 1))
    assert hits > 10**4
    assert np.all(np.abs(mean - exact) <= 3 * se)


def test_simplex_formula_matches_quadrature(S10, S16):
    for s in (S10, S16):
        lo, hi = s.mu[-2], s.mu[-1]
        for x in np.linspace(lo + 0.01, hi - 0.01, 5):
            np.testing.assert_allclose(g.simplex_barycenter(s, (x, 1)), g.barycenter(s, (x, 1)), rtol=1e-9, atol=1e-13)


def test_barycenter_continuous_across_ray(S8):
    eps = 1e-7
    lo = g.barycenter(S8, (3 - eps, 1))
    hi = g.barycenter(S8, (3 + eps, 1))
    np.testing.assert_allclose(lo, hi, atol=1e-6)
    np.testing.assert_allclose(g.barycenter(S8, (3, 1)), lo, atol=1e-6)


@settings(max_examples=40, deadline=None)
@given(x=st.floats(1.001, 7.999), t=st.floats(0.05, 20.0))
def test_volume_homogeneous(S16, x, t):
    V1 = g.volume(S16, (x, 1.0))
    Vt = g.volume(S16, (t * x, t))
    assert Vt == pytest.approx(t ** (S16.n - 2) * V1, rel=1e-9, abs=1e-300)


@settings(max_examples=40, deadline=None)
@given(x=st.floats(1.001, 4.999), t=st.floats(0.05, 20.0))
def test_barycenter_homogeneous(S10, x, t):
    np.testing.assert_allclose(g.barycenter(S10, (t * x, t)), t * g.barycenter(S10, (x, 1.0)), rtol=1e-9)


def test_volume_monotone_in_ratio(S16):
    xs = np.linspace(1.0, 8.0, 200)
    vals = np.array([g.volume(S16, (x, 1)) for x in xs])
    # rises from zero on u = v and falls back to zero on the top face
    assert vals[0] == 0.0 and vals[-1] == pytest.approx(0.0, abs=1e-14)
    assert np.all(vals[1:-1] > 0)
    assert math.isfinite(vals.max())
