import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from grcattn import baselines as bl
from grcattn import numerics as nx
from grcattn.numerics import ContractError


def test_window_bounds_clamped():
    assert bl.window_bounds(1, 3, 10) == (1, 3)
    assert bl.window_bounds(9, 3, 10) == (9, 10)
    assert bl.window_bounds(0, 2, 10) == (1, 2)
    with pytest.raises(ContractError):
        bl.window_bounds(1, 0, 10)


def test_windowed_weights_mass_inside_window():
    e = np.array([5.0, 0.0, 0.0, 1.0, 9.0])
    a = bl.windowed_weights(e, 2, 3)
    assert a[0] == 0.0 and a[4] == 0.0
    np.testing.assert_allclose(a[1:4], np.exp([0, 0, 1]) / np.exp([0, 0, 1]).sum())


def test_windowed_attend():
    h = np.arange(5.0)
    c, a = bl.windowed_attend(np.zeros(2), h, 4, 3)
    np.testing.assert_allclose(a, [0, 0, 0, 0.5, 0.5])
    assert c[0] == 3.5
    with pytest.raises(ContractError):
        bl.windowed_attend(np.zeros(1), h, 1, 3)


def test_window_start_ties_take_first():
    assert bl.window_start([0.1, 0.4, 0.4, 0.1]) == 2


def oracle_alpha(p, prev):
    # double sum form: alpha_t = p_t sum_k prev_k prod_{l=k}^{t-1} (1 - p_l)
    T = len(p)
    return np.array([
        p[t] * sum(prev[k] * np.prod([1 - p[l] for l in range(k, t)]) for k in range(t + 1))
        for t in range(T)
    ])


def test_mocha_train_alpha(rng):
    p = rng.uniform(0.1, 0.9, size=6)
    prev = rng.dirichlet(np.ones(6))
    np.testing.assert_allclose(bl.mocha_train_alpha(p, prev), oracle_alpha(p, prev), rtol=1e-12)
    first = bl.mocha_train_alpha(p)
    np.testing.assert_allclose(first, oracle_alpha(p, bl.first_step_prior(6)), rtol=1e-12)
    assert first[0] == p[0]


def test_mocha_alpha_clamps_probabilities():
    a = bl.mocha_train_alpha(np.array([0.0, 1.0, 1.0]))
    assert a[0] == bl.PROB_EPS
    assert np.all(np.isfinite(a))


def test_stopping_probs_clamped():
    p = bl.stopping_probs(np.array([-800.0, 0.0, 800.0]))
    np.testing.assert_allclose(p, [bl.PROB_EPS, 0.5, 1 - bl.PROB_EPS])


@given(st.integers(1, 64), st.integers(1, 10), st.integers(0, 2**32 - 1))
def test_mocha_beta_conserves_mass(T, w, seed):
    rng = np.random.default_rng(seed)
    alpha = rng.uniform(size=T)
    alpha *= rng.uniform(0.05, 1) / alpha.sum()
    beta = bl.mocha_train_beta(alpha, rng.normal(scale=4, size=T), w)
    assert abs(beta.sum() - alpha.sum()) <= 1e-9
    assert np.all(beta >= 0)


def test_mocha_beta_window_one_is_identity(rng):
    alpha = rng.dirichlet(np.ones(7))
    np.testing.assert_allclose(bl.mocha_train_beta(alpha, rng.normal(size=7), 1), alpha, rtol=1e-15)


def test_mocha_gradients(rng):
    T = 6
    w = rng.normal(size=T)
    prev = rng.dirichlet(np.ones(T))

    def f(P):
        p = bl.stopping_probs(P["m"])
        a = bl.mocha_train_alpha(p, prev)
        return nx.total(nx.mul(bl.mocha_train_beta(a, P["e"], 3), w))

    assert nx.grad_check(f, {"m": rng.uniform(-2, 2, T), "e": rng.uniform(-2, 2, T)}) < 1e-6


def test_smocha_examples():
    np.testing.assert_allclose(bl.smocha_alpha([0.5, 0.5, 0.5]), [0.5, 0.25, 0.125])
    np.testing.assert_allclose(bl.smocha_via_dual([0.5, 0.5, 0.5]), [0.5, 0.25, 0.125])
    np.testing.assert_array_equal(bl.smocha_alpha([1.0, 0.3]), [1.0, 0.0])


@given(arrays(np.float64, st.integers(1, 64), elements=st.floats(0, 1)))
def test_smocha_matches_dual_construction(p):
    assert np.max(np.abs(bl.smocha_alpha(p) - bl.smocha_via_dual(p))) <= 1e-12


def test_mocha_infer_scans_from_previous_endpoint():
    h = np.arange(6.0)
    e_mono = np.array([5.0, -5.0, -5.0, 5.0, -5.0, 5.0])
    e_chunk = np.zeros(6)
    state = bl.MonotonicState(tau_prev=2)
    c, state = bl.mocha_infer(e_mono, e_chunk, h, state, 2)
    assert state.tau_prev == 4 and state.fired
    np.testing.assert_allclose(state.chunk_weights, [0, 0, 0.5, 0.5, 0, 0])
    assert c[0] == 2.5
    # endpoint sticks when the stopping probability is still high
    c, state = bl.mocha_infer(e_mono, e_chunk, h, state, 2)
    assert state.tau_prev == 4


def test_mocha_infer_fallback():
    h = np.ones((4, 2))
    c, state = bl.mocha_infer(np.full(4, -3.0), np.zeros(4), h, bl.MonotonicState(), 2)
    np.testing.assert_array_equal(c, [0.0, 0.0])
    assert state.tau_prev == 4 and not state.fired


def test_mocha_infer_threshold_is_inclusive():
    _, state = bl.mocha_infer(np.zeros(3), np.zeros(3), np.ones(3), bl.MonotonicState(), 1)
    assert state.tau_prev == 1


def test_mocha_infer_contract():
    with pytest.raises(ContractError):
        bl.mocha_infer(np.zeros(3), np.zeros(3), np.ones(3), bl.MonotonicState(tau_prev=5), 1)
