import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from enscond import qfun
from enscond.errors import IndexOutOfRange, InsufficientEffectiveSamples, OutsideCone
from enscond.geometry import barycenter_mc
from enscond.spectrum import s8


def test_s8_lowest_sector_values(S8):
    q = qfun.qhat_eval(S8, (1.5, 1)).qhat
    np.testing.assert_allclose(q, [25 / 36, 1 / 3, 1 / 4, 2 / 9], rtol=1e-14)
    assert q.sum() == pytest.approx(1.5)
    assert (q / S8.mu_arr).sum() == pytest.approx(1.0)


def test_single_mode_values(S8):
    assert qfun.q_ell(S8, (1.5, 1), 1) == pytest.approx(25 / 72)
    assert qfun.q_ell(S8, (1.5, 1), 5) == pytest.approx(0.125)
    assert qfun.q_ell(S8, (2.0, 2.0), 1) == pytest.approx(1.0)
    qv = qfun.qhat_eval(S8, (2.5, 1))
    np.testing.assert_array_equal(qv.q_modes[0::2], qv.q_modes[1::2])
    for bad in (0, 9):
        with pytest.raises(IndexOutOfRange):
            qfun.q_ell(S8, (1.5, 1), bad)


@pytest.mark.parametrize("u", [0.3, 1.0, 7.0])
def test_boundary_faces(S16, u):
    q = qfun.qhat_eval(S16, (u, u)).qhat
    np.testing.assert_array_equal(q, [u] + [0.0] * 7)
    q = qfun.qhat_eval(S16, (u, u / 8)).qhat
    np.testing.assert_array_equal(q, [0.0] * 7 + [u])
    np.testing.assert_array_equal(qfun.qhat_eval(S16, (0, 0)).qhat, np.zeros(8))


def test_outside_cone(S8):
    with pytest.raises(OutsideCone):
        qfun.qhat_eval(S8, (5, 1))


def test_ray_limit(S8):
    # on u = mu_i v the free value is mu_i v / (n - 1)
    for eps in (-1e-7, 0.0, 1e-7):
        assert qfun.qhat_eval(S8, (3 + eps, 1)).qhat[2] == pytest.approx(1.0, abs=1e-6)
    q = qfun.qhat_eval(S8, (3, 1)).qhat
    np.testing.assert_allclose(q, [1 / 9, 1 / 3, 1, 14 / 9], rtol=1e-10)


def test_identity_residuals(S8, S10):
    assert max(map(abs, qfun.identity_residuals(S8, qfun.qhat_eval(S8, (1.5, 1)), (1.5, 1)))) <= 1e-12
    assert qfun.identity_residuals(S8, qfun.qhat_eval(S8, (2, 2)), (2, 2)) == (0.0, 0.0)
    q = qfun.qhat_eval(S10, (3.5, 1))
    assert max(map(abs, qfun.identity_residuals(S10, q, (3.5, 1)))) <= 1e-9
    assert abs(qfun.weighted_residual(S10, q, (3.5, 1))) <= 1e-9


def test_positive_in_interior(S16):
    rng = np.random.default_rng(0)
    for x in rng.uniform(1.0001, 7.9999, 50):
        assert np.all(qfun.qhat_eval(S16, (x, 1)).qhat > 0)


def test_monotonicity_and_bound(S8, S10):
    np.testing.assert_allclose(qfun.monotonicity_gaps(S8, (1.5, 1)), [0, 0], atol=1e-15)
    np.testing.assert_array_equal(qfun.monotonicity_gaps(S8, (1, 1)), [0, 0])
    assert np.all(qfun.monotonicity_gaps(S10, (3.5, 1)) >= -1e-9)
    assert qfun.upper_bound_slack(S8, (1.5, 1), 2) == pytest.approx(0.0, abs=1e-15)
    assert qfun.upper_bound_slack(S8, (4, 1), 4) == pytest.approx(0.0, abs=1e-15)
    assert qfun.upper_bound_slack(S10, (3.5, 1), 3) >= 0
    with pytest.raises(IndexOutOfRange):
        qfun.upper_bound_slack(S8, (1.5, 1), 1)


def test_free_values_match_uniform_sampling(S10):
    mean, se, _ = barycenter_mc(S10, (3.5, 1), 10**6, seed=11)
    free = qfun.qhat_eval(S10, (3.5, 1)).qhat[2:]
    assert np.all(np.abs(free - mean) <= 3 * se)


def test_slope_on_lowest_sector(S8):
    h = 1e-6
    d = (qfun.qhat_eval(S8, (1.5 + h, 1)).qhat[2] - qfun.qhat_eval(S8, (1.5 - h, 1)).qhat[2]) / (2 * h)
    # (1/(n-1)) / (1 - 1/mu_3)
    assert d == pytest.approx(0.5, rel=1e-8)


@pytest.mark.parametrize("mu", [[1, 2, 3, 4], [1, 2, 3, 4, 5], [1, 2, 3, 4, 5, 6, 7, 8], [1, 1.5, 4, 4.5, 9]])
def test_table_matches_exact(mu):
    from enscond.spectrum import build_spectrum

    s = build_spectrum({"mu": mu})
    t = qfun.QTable(s)
    rng = np.random.default_rng(5)
    x = np.concatenate([rng.uniform(1.0, s.lam_max, 300), s.mu_arr[1:-1]])
    v = rng.uniform(0.1, 3.0, len(x))
    got = t.qhat(x * v, v)
    want = np.array([qfun.qhat_eval(s, (a, b)).qhat for a, b in zip(x * v, v)])
    assert np.all(np.abs(got - want) <= 1e-10 * np.maximum(x * v, 1.0)[:, None])


def test_lipschitz_refinement(S10):
    coarse = qfun.lipschitz_probe(S10, 100)
    fine = qfun.lipschitz_probe(S10, 200)
    assert fine / coarse <= 1.1
    assert np.isfinite(fine)


def test_oracle_single_point(S8):
    est = qfun.mc_conditional_oracle(S8, (1.5, 1), samples=2 * 10**6, seed=4)
    exact = qfun.qhat_eval(S8, (1.5, 1)).qhat
    assert est.ess >= 100
    assert np.all(np.abs(est.qhat - exact) <= np.maximum(3 * est.stderr, 0.02 * exact))


def test_oracle_independent_of_amplitude():
    w = (1.5, 1)
    # the a = 4 law puts roughly 1% as much mass near w, hence the larger draw
    a1 = qfun.mc_conditional_oracle(s8(), w, samples=2 * 10**6, seed=6)
    a4 = qfun.mc_conditional_oracle(s8(a=4.0), w, samples=10**7, seed=6)
    se = np.hypot(a1.stderr, a4.stderr)
    assert np.all(np.abs(a1.qhat - a4.qhat) <= np.maximum(3 * se, 0.02 * a1.qhat))
    assert abs(a4.qhat.sum() - 1.5) <= 0.02 * 1.5


def test_oracle_needs_samples(S8):
    with pytest.raises(InsufficientEffectiveSamples):
        qfun.mc_conditional_oracle(S8, (1.5, 1), samples=1000, seed=0)


@settings(max_examples=30, deadline=None)
@given(x=st.floats(1.0, 8.0), t=st.floats(0.01, 50.0))
def test_homogeneous_degree_one(S16, x, t):
    a = qfun.qhat_eval(S16, (x, 1.0)).qhat
    b = qfun.qhat_eval(S16, (t * x, t)).qhat
    np.testing.assert_allclose(b, t * a, rtol=1e-9, atol=1e-12 * t)


@settings(max_examples=30, deadline=None)
@given(x=st.floats(1.0, 4.0), v=st.floats(0.01, 10.0), a=st.floats(0.01, 100.0))
def test_independent_of_amplitude(x, v, a):
    np.testing.assert_array_equal(qfun.qhat_eval(s8(), (x * v, v)).qhat, qfun.qhat_eval(s8(a=a), (x * v, v)).qhat)
