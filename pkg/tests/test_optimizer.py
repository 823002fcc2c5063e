import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from msae.optimizer import AdamConfig, adam_converged, adam_init, adam_step


def scalar_adam_oracle(grads, alpha=0.001, phi1=0.9, phi2=0.999, eps=1e-8, theta0=0.0):
    """Plain-float re-implementation of the update loop, step by step."""
    theta, m, v, t = theta0, 0.0, 0.0, 0
    history = []
    for g in grads:
        t += 1
        m = phi1 * m + (1.0 - phi1) * g
        v = phi2 * v + (1.0 - phi2) * g * g
        m_hat = m / (1.0 - phi1 ** t)
        v_hat = v / (1.0 - phi2 ** t)
        theta = theta - alpha * m_hat / (math.sqrt(v_hat) + eps)
        history.append(theta)
    return history


class TestInit:
    def test_moments_zero(self):
        params = {"a": np.ones((2, 3)), "b": np.zeros(4)}
        state = adam_init(params)
        for name in params:
            assert not state.m[name].any() and not state.v[name].any()
            assert state.m[name].shape == params[name].shape
        assert state.t == 0

    def test_invalid_decay_rejected(self):
        with pytest.raises(ValueError, match="decay"):
            adam_init({"a": np.ones(1)}, phi1=1.0)
        with pytest.raises(ValueError, match="decay"):
            adam_init({"a": np.ones(1)}, phi2=-0.1)

    def test_invalid_alpha_epsilon_rejected(self):
        with pytest.raises(ValueError, match="step size"):
            adam_init({"a": np.ones(1)}, alpha=0.0)
        with pytest.raises(ValueError, match="epsilon"):
            adam_init({"a": np.ones(1)}, epsilon=0.0)


class TestStep:
    def test_zero_gradient_leaves_params(self):
        params = {"a": np.full(3, 1.5)}
        state = adam_init(params)
        new = adam_step(state, params, {"a": np.zeros(3)})
        np.testing.assert_array_equal(new["a"], params["a"])
        assert state.t == 1

    def test_first_step_hand_value(self):
        # theta0=0, g=1, defaults: m=0.1, v=0.001, m_hat=1, v_hat=1,
        # theta1 = -0.001/(1+1e-8)
        params = {"w": np.zeros(1)}
        state = adam_init(params)
        new = adam_step(state, params, {"w": np.ones(1)})
        expected = -0.001 / (1.0 + 1e-8)
        assert abs(new["w"][0] - expected) <= 1e-12

    def test_two_steps_match_scalar_oracle(self):
        params = {"w": np.zeros(1)}
        state = adam_init(params)
        for i, expected in enumerate(scalar_adam_oracle([1.0, 1.0])):
            params = adam_step(state, params, {"w": np.ones(1)})
            assert abs(params["w"][0] - expected) <= 1e-15

    def test_hundred_step_trajectory_matches_oracle(self):
        grads = [math.cos(0.1 * t) + 0.3 for t in range(100)]
        params = {"w": np.zeros(1)}
        state = adam_init(params)
        for g, expected in zip(grads, scalar_adam_oracle(grads)):
            params = adam_step(state, params, {"w": np.array([g])})
            assert abs(params["w"][0] - expected) <= 1e-12

    def test_first_update_magnitude(self):
        # for scalar g != 0 the first update is alpha*|g|/(|g|+eps)
        for g in (0.5, -2.0, 1e-3):
            params = {"w": np.zeros(1)}
            state = adam_init(params)
            new = adam_step(state, params, {"w": np.array([g])})
            expected = 0.001 * abs(g) / (abs(g) + 1e-8)
            assert abs(abs(new["w"][0]) - expected) <= 1e-12
            assert np.sign(new["w"][0]) == -np.sign(g)

    def test_shape_mismatch_rejected(self):
        params = {"a": np.zeros(3)}
        state = adam_init(params)
        with pytest.raises(ValueError, match="shape"):
            adam_step(state, params, {"a": np.zeros(4)})

    def test_name_mismatch_rejected(self):
        params = {"a": np.zeros(3)}
        state = adam_init(params)
        with pytest.raises(ValueError, match="align"):
            adam_step(state, params, {"b": np.zeros(3)})

    def test_second_moment_nonnegative_and_finite(self):
        rng = np.random.default_rng(0)
        params = {"a": rng.standard_normal(8)}
        state = adam_init(params)
        for _ in range(25):
            params = adam_step(state, params, {"a": rng.standard_normal(8) * 100})
        assert (state.v["a"] >= 0).all()
        assert np.isfinite(state.m["a"]).all() and np.isfinite(params["a"]).all()

    def test_elementwise_permutation_equivariance(self):
        rng = np.random.default_rng(1)
        p = rng.standard_normal(6)
        g = rng.standard_normal(6)
        perm = rng.permutation(6)
        s1 = adam_init({"a": p})
        out = adam_step(s1, {"a": p}, {"a": g})["a"]
        s2 = adam_init({"a": p[perm]})
        out_perm = adam_step(s2, {"a": p[perm]}, {"a": g[perm]})["a"]
        np.testing.assert_array_equal(out[perm], out_perm)

    def test_deterministic(self):
        rng = np.random.default_rng(2)
        p = rng.standard_normal(5)
        g = rng.standard_normal(5)
        outs = []
        for _ in range(2):
            state = adam_init({"a": p.copy()})
            outs.append(adam_step(state, {"a": p.copy()}, {"a": g.copy()})["a"])
        np.testing.assert_array_equal(outs[0], outs[1])


class TestConverged:
    def test_zero_update_converges(self):
        state = adam_init({"a": np.ones(2)})
        state.t = 1
        assert adam_converged(state, {"a": np.zeros(2)}, tol=1e-12)

    def test_huge_update_not_converged(self):
        state = adam_init({"a": np.ones(2)})
        state.t = 1
        assert not adam_converged(state, {"a": np.full(2, 5.0)}, tol=1e-8)

    def test_before_first_step_not_converged(self):
        state = adam_init({"a": np.ones(2)})
        assert not adam_converged(state, {"a": np.zeros(2)}, tol=1.0)

    @given(st.floats(min_value=1e-10, max_value=1e-2))
    def test_tolerance_monotone(self, tol):
        state = adam_init({"a": np.ones(1)})
        state.t = 1
        delta = {"a": np.array([1e-6])}
        if adam_converged(state, delta, tol):
            assert adam_converged(state, delta, tol * 10.0)


def test_adam_config_defaults():
    cfg = AdamConfig()
    assert (cfg.alpha, cfg.phi1, cfg.phi2, cfg.epsilon) == (0.001, 0.9, 0.999, 1e-8)
